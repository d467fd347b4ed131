use crate::dsp::SAMPLE_RATE;
use crate::error::Result;

use super::{Point, RoomScene, MIN_DISTANCE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageSource {
    pub position: Point,
    pub order: u32,
    pub amplitude: f64,
}

/// Mirrored coordinate for lattice index `i` along an axis of length `len`.
fn mirror(i: i64, len: f64, c: f64) -> f64 {
    if i % 2 == 0 {
        i as f64 * len + c
    } else {
        (i + 1) as f64 * len - c
    }
}

/// All images with `|p| + |q| ≤ scene.order`, ordered by `(p, q)`.
pub fn image_sources(scene: &RoomScene, source: Point) -> Result<Vec<ImageSource>> {
    scene.check_inside(source, "source")?;
    let n = scene.order as i64;
    let mut out = Vec::with_capacity((2 * n * n + 2 * n + 1) as usize);
    for p in -n..=n {
        let rest = n - p.abs();
        for q in -rest..=rest {
            let order = (p.abs() + q.abs()) as u32;
            out.push(ImageSource {
                position: Point::new(mirror(p, scene.width, source.x), mirror(q, scene.depth, source.y)),
                order,
                amplitude: (1.0 - scene.absorption).powi(order as i32),
            });
        }
    }
    Ok(out)
}

/// Room impulse response at 16 kHz between two points.
#[derive(Clone, Debug, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub source: Point,
    pub mic: Point,
}

impl Rir {
    /// Non-zero taps as `(delay, amplitude)`, in delay order.
    pub fn sparse(&self) -> Vec<(usize, f64)> {
        self.taps
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(d, &a)| (d, a))
            .collect()
    }
}

pub(crate) fn delay_samples(distance: f64, speed: f64) -> usize {
    (distance / speed * SAMPLE_RATE as f64).round() as usize
}

/// Each image adds `(1 − α)^order / max(r, 0.1)` at the nearest-sample delay.
pub fn rir(scene: &RoomScene, source: Point, mic: Point) -> Result<Rir> {
    scene.check_inside(mic, "mic")?;
    let images = image_sources(scene, source)?;
    let placed: Vec<(usize, f64)> = images
        .iter()
        .map(|im| {
            let r = im.position.distance(mic);
            (delay_samples(r, scene.speed_of_sound), im.amplitude / r.max(MIN_DISTANCE))
        })
        .collect();
    let len = placed.iter().map(|&(d, _)| d).max().unwrap_or(0) + 1;
    let mut taps = vec![0.0; len];
    for (d, a) in placed {
        taps[d] += a;
    }
    Ok(Rir { taps, source, mic })
}

/// Samples needed to accumulate `fraction` of the total energy, counted from
/// sample 0.
pub fn effective_length(taps: &[f64], fraction: f64) -> usize {
    let total: f64 = taps.iter().map(|v| v * v).sum();
    let mut acc = 0.0;
    for (i, v) in taps.iter().enumerate() {
        acc += v * v;
        if acc >= fraction * total {
            return i + 1;
        }
    }
    taps.len()
}
