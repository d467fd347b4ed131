//! Two-dimensional shoebox-room simulation.
//!
//! Rooms are rectangles `[0, width] × [0, depth]`. Reverberation comes from
//! the image-source method up to a fixed reflection order ([`image_sources`],
//! [`rir`]). A speech source moves along a jittered corner-to-corner path and
//! is rendered segment by segment with output-side cross-fades
//! ([`render_moving_source`]); the noise source is static
//! ([`render_static_source`]). Speech and noise are rendered separately and
//! mixed afterwards ([`compose_room_mixture`]), so one scene can be reused at
//! any SNR schedule.

mod ism;
mod render;
mod scene;

pub use ism::{effective_length, image_sources, rir, ImageSource, Rir};
pub use render::{
    add_diffuse_noise, compose_room_mixture, compose_with_permutation, render_moving_source,
    render_noise_field, render_static_source, RoomMixture, RoomRender,
};
pub use scene::{scene_sample, SceneConfig, SCENE_VERSION};

use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Distances below this are clamped in the spreading law.
pub const MIN_DISTANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

/// Speech-source trajectory. `waypoints` holds the realised (jittered)
/// position of each segment; rendering uses only those.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePath {
    pub start: Point,
    pub end: Point,
    pub jitter: f64,
    pub waypoints: Vec<Point>,
}

impl SourcePath {
    /// Straight path without jitter, `segments` waypoints from `start`
    /// towards `end`. A single segment sits at `start`.
    pub fn straight(start: Point, end: Point, segments: usize) -> Self {
        let waypoints = (0..segments)
            .map(|s| {
                let t = if segments > 1 { s as f64 / (segments - 1) as f64 } else { 0.0 };
                start.lerp(end, t)
            })
            .collect();
        Self {
            start,
            end,
            jitter: 0.0,
            waypoints,
        }
    }

    pub fn segments(&self) -> usize {
        self.waypoints.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoomScene {
    pub id: u64,
    pub width: f64,
    pub depth: f64,
    /// Wall absorption α; each reflection scales amplitude by `1 − α`.
    pub absorption: f64,
    pub order: u32,
    pub speed_of_sound: f64,
    pub mics: Vec<Point>,
    pub noise_source: Point,
    pub path: SourcePath,
    /// Diffuse noise level in dB relative to unit variance; `-inf` disables it.
    pub diffuse_db: f64,
    /// Cross-fade length between path segments, in samples.
    pub crossfade: usize,
}

impl RoomScene {
    pub fn contains(&self, p: Point) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.depth
    }

    pub(crate) fn check_inside(&self, p: Point, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "{what} ({}, {}) is not strictly inside the {}×{} room",
                p.x, p.y, self.width, self.depth
            )))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0 && self.width.is_finite() && self.depth.is_finite()) {
            return Err(Error::Input(format!("room size {}×{}", self.width, self.depth)));
        }
        if !(self.absorption > 0.0 && self.absorption < 1.0) {
            return Err(Error::Input(format!("absorption {} not in (0, 1)", self.absorption)));
        }
        if !(self.speed_of_sound > 0.0 && self.speed_of_sound.is_finite()) {
            return Err(Error::Input(format!("speed of sound {}", self.speed_of_sound)));
        }
        if self.diffuse_db.is_nan() || self.diffuse_db == f64::INFINITY {
            return Err(Error::Input(format!("diffuse level {} dB", self.diffuse_db)));
        }
        if self.mics.is_empty() {
            return Err(Error::Input("scene has no microphones".into()));
        }
        if self.path.waypoints.is_empty() {
            return Err(Error::Input("source path has no segments".into()));
        }
        for (i, &m) in self.mics.iter().enumerate() {
            self.check_inside(m, &format!("mic {i}"))?;
        }
        self.check_inside(self.noise_source, "noise source")?;
        for (i, &w) in self.path.waypoints.iter().enumerate() {
            self.check_inside(w, &format!("path waypoint {i}"))?;
        }
        Ok(())
    }
}
