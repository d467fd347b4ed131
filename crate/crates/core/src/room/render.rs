use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{check_permutation, normalize_unit_variance, random_permutation, snr_gain};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::exec;

use super::{rir, Point, RoomScene};

/// Per-mic signals rendered from one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct RoomRender {
    pub scene_id: u64,
    pub channels: Vec<Waveform>,
}

/// Adds `Σ a·x[n − d]` for `n` in `lo..hi`, scaled by `weight(n)`.
fn convolve_into(x: &[f64], taps: &[(usize, f64)], out: &mut [f64], lo: usize, hi: usize, weight: impl Fn(usize) -> f64) {
    for (n, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
        let mut acc = 0.0;
        for &(d, a) in taps {
            if d > n {
                break;
            }
            if let Some(v) = x.get(n - d) {
                acc += a * v;
            }
        }
        *o += weight(n) * acc;
    }
}

/// Convolution of `dry` with the RIR from `source` to every mic, truncated to
/// the length of `dry`.
pub fn render_static_source(scene: &RoomScene, source: Point, dry: &Waveform) -> Result<RoomRender> {
    scene.validate()?;
    let channels = exec::map(&scene.mics, |&mic| -> Result<Waveform> {
        let taps = rir(scene, source, mic)?.sparse();
        let mut out = vec![0.0; dry.len()];
        convolve_into(&dry.samples, &taps, &mut out, 0, dry.len(), |_| 1.0);
        Ok(Waveform::new(out, dry.sample_rate))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(RoomRender {
        scene_id: scene.id,
        channels,
    })
}

/// Cross-fade weights for `segments` equal segments of an `n`-sample signal.
///
/// Segment boundaries sit at `s·n / segments`; around each one a linear ramp
/// of `fade` samples hands over from one segment to the next. The weights sum
/// to one at every sample.
#[derive(Clone, Debug)]
pub(crate) struct Crossfade {
    bounds: Vec<usize>,
    fade: usize,
    n: usize,
}

impl Crossfade {
    pub(crate) fn new(n: usize, segments: usize, fade: usize) -> Result<Self> {
        let bounds: Vec<usize> = (0..=segments).map(|s| s * n / segments).collect();
        if bounds.windows(2).any(|w| w[1] - w[0] < fade) {
            return Err(Error::Input(format!(
                "{segments} segments over {n} samples are shorter than the {fade}-sample cross-fade"
            )));
        }
        Ok(Self { bounds, fade, n })
    }

    fn segments(&self) -> usize {
        self.bounds.len() - 1
    }

    /// Share of the segment after boundary `b` at sample `i`.
    fn rise(&self, b: usize, i: usize) -> f64 {
        let start = self.bounds[b] as f64 - (self.fade / 2) as f64;
        if self.fade == 0 {
            return if i >= self.bounds[b] { 1.0 } else { 0.0 };
        }
        ((i as f64 - start + 0.5) / self.fade as f64).clamp(0.0, 1.0)
    }

    pub(crate) fn weight(&self, s: usize, i: usize) -> f64 {
        let up = if s == 0 { 1.0 } else { self.rise(s, i) };
        let down = if s + 1 == self.segments() { 0.0 } else { self.rise(s + 1, i) };
        up - down
    }

    /// Samples where segment `s` has non-zero weight.
    pub(crate) fn support(&self, s: usize) -> (usize, usize) {
        let half = self.fade / 2;
        let lo = if s == 0 { 0 } else { self.bounds[s].saturating_sub(half) };
        let hi = if s + 1 == self.segments() {
            self.n
        } else {
            (self.bounds[s + 1] - half + self.fade).min(self.n)
        };
        (lo, hi)
    }
}

/// Renders `dry` emitted from the scene's moving speech source.
///
/// Each path segment is convolved with its own static RIR, and the
/// per-segment outputs are cross-faded in output time.
pub fn render_moving_source(scene: &RoomScene, dry: &Waveform) -> Result<RoomRender> {
    scene.validate()?;
    let fade = Crossfade::new(dry.len(), scene.path.segments(), scene.crossfade)?;
    let channels = exec::map(&scene.mics, |&mic| -> Result<Waveform> {
        let mut out = vec![0.0; dry.len()];
        for (s, &pos) in scene.path.waypoints.iter().enumerate() {
            let taps = rir(scene, pos, mic)?.sparse();
            let (lo, hi) = fade.support(s);
            convolve_into(&dry.samples, &taps, &mut out, lo, hi, |i| fade.weight(s, i));
        }
        Ok(Waveform::new(out, dry.sample_rate))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(RoomRender {
        scene_id: scene.id,
        channels,
    })
}

/// Adds independent white Gaussian noise of variance `10^(level_db/10)` to
/// each signal. `-inf` dB leaves the signals untouched and draws nothing.
pub fn add_diffuse_noise(signals: &[Waveform], level_db: f64, rng: &mut impl Rng) -> Vec<Waveform> {
    if level_db == f64::NEG_INFINITY {
        return signals.to_vec();
    }
    let normal = Normal::new(0.0, 10f64.powf(level_db / 20.0)).expect("finite level");
    signals
        .iter()
        .map(|w| {
            let samples = w.samples.iter().map(|v| v + normal.sample(rng)).collect();
            Waveform::new(samples, w.sample_rate)
        })
        .collect()
}

/// Noise field at each mic: the grid-placed source rendered and normalised per
/// mic, plus diffuse noise at the scene's level.
pub fn render_noise_field(scene: &RoomScene, dry: &Waveform, rng: &mut impl Rng) -> Result<RoomRender> {
    let direct = render_static_source(scene, scene.noise_source, dry)?;
    let normalised = direct
        .channels
        .iter()
        .map(normalize_unit_variance)
        .collect::<Result<Vec<_>>>()?;
    Ok(RoomRender {
        scene_id: scene.id,
        channels: add_diffuse_noise(&normalised, scene.diffuse_db, rng),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomMixture {
    pub channels: Vec<Waveform>,
    /// Channel `i` is mic `permutation[i]` at `snr_db[permutation[i]]`.
    pub permutation: Vec<usize>,
}

/// Mixes separately rendered speech and noise with a random channel order.
pub fn compose_room_mixture(
    speech: &RoomRender,
    noise: &RoomRender,
    snr_db: &[f64],
    rng: &mut impl Rng,
) -> Result<RoomMixture> {
    let permutation = random_permutation(snr_db.len(), rng);
    let channels = compose_with_permutation(speech, noise, snr_db, &permutation)?;
    Ok(RoomMixture { channels, permutation })
}

/// Per channel: both renders normalised to unit variance, then mixed so the
/// speech-to-noise power ratio over the whole clip equals the scheduled SNR.
/// A silent speech render leaves the channel as pure noise.
pub fn compose_with_permutation(
    speech: &RoomRender,
    noise: &RoomRender,
    snr_db: &[f64],
    permutation: &[usize],
) -> Result<Vec<Waveform>> {
    if speech.scene_id != noise.scene_id {
        return Err(Error::Input(format!(
            "speech render is from scene {} but noise render from scene {}",
            speech.scene_id, noise.scene_id
        )));
    }
    let k = speech.channels.len();
    if noise.channels.len() != k || snr_db.len() != k {
        return Err(Error::Input(format!(
            "{k} speech channels, {} noise channels, {} SNRs",
            noise.channels.len(),
            snr_db.len()
        )));
    }
    check_permutation(permutation, k)?;
    permutation
        .iter()
        .map(|&mic| {
            let n = normalize_unit_variance(&noise.channels[mic])?;
            let s = match normalize_unit_variance(&speech.channels[mic]) {
                Ok(s) => s,
                Err(Error::Degenerate(_)) => Waveform::new(vec![0.0; n.len()], n.sample_rate),
                Err(e) => return Err(e),
            };
            if s.len() != n.len() {
                return Err(Error::Input(format!(
                    "speech render has {} samples, noise render {}",
                    s.len(),
                    n.len()
                )));
            }
            let g = snr_gain(&s.samples, &n.samples, 0..n.len(), snr_db[mic]);
            let samples = n.samples.iter().zip(&s.samples).map(|(a, b)| a + g * b).collect();
            Ok(Waveform::new(samples, n.sample_rate))
        })
        .collect()
}
