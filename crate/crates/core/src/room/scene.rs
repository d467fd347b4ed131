//! Scene sampling and the scene text format.
//!
//! ```text
//! version=1
//! id=17
//! width=20
//! ...
//! mics=3.5,4.25;12,9.75
//! path.waypoints=1,1;1.9,2.2;...
//! ```
//!
//! One `key=value` per line, reals in shortest round-trip form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

use super::{Point, RoomScene, SourcePath, SPEED_OF_SOUND};

pub const SCENE_VERSION: u32 = 1;

/// Ranges and constants for [`scene_sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub width: f64,
    pub depth: f64,
    pub absorption: f64,
    pub order: u32,
    /// Minimum distance from any wall for mics and path corners.
    pub margin: f64,
    /// Noise-source grid resolution per axis.
    pub grid: usize,
    pub segments: usize,
    pub jitter: f64,
    pub diffuse_db: f64,
    pub crossfade: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 20.0,
            depth: 20.0,
            absorption: 0.1,
            order: 4,
            margin: 1.0,
            grid: 10,
            segments: 16,
            jitter: 0.25,
            diffuse_db: -20.0,
            crossfade: 512,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && 2.0 * self.margin < self.width.min(self.depth)) {
            return Err(Error::Input(format!("margin {} does not fit the room", self.margin)));
        }
        if self.grid == 0 || self.segments == 0 {
            return Err(Error::Input("grid and segment counts must be positive".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Input(format!("jitter {}", self.jitter)));
        }
        Ok(())
    }
}

/// Samples a scene with `k` mics.
///
/// Mics are uniform in the inset rectangle, the noise source sits on the
/// centre of a random `grid × grid` cell, and the speech path runs between two
/// distinct inset corners with isotropic Gaussian jitter per waypoint
/// (clamped to the inset rectangle).
pub fn scene_sample(id: u64, k: usize, cfg: &SceneConfig, rng: &mut impl Rng) -> Result<RoomScene> {
    if !(2..=30).contains(&k) {
        return Err(Error::Input(format!("scene mic count {k} not in 2..=30")));
    }
    cfg.validate()?;
    let (w, d, m) = (cfg.width, cfg.depth, cfg.margin);
    let mics = (0..k)
        .map(|_| Point::new(rng.random_range(m..w - m), rng.random_range(m..d - m)))
        .collect();
    let cell = |i: usize, len: f64| (i as f64 + 0.5) * len / cfg.grid as f64;
    let noise_source = Point::new(cell(rng.random_range(0..cfg.grid), w), cell(rng.random_range(0..cfg.grid), d));
    let corners = [Point::new(m, m), Point::new(w - m, m), Point::new(m, d - m), Point::new(w - m, d - m)];
    let a = rng.random_range(0..4);
    let b = (a + rng.random_range(1..4)) % 4;
    let mut path = SourcePath::straight(corners[a], corners[b], cfg.segments);
    path.jitter = cfg.jitter;
    if cfg.jitter > 0.0 {
        let normal = Normal::new(0.0, cfg.jitter).expect("finite jitter");
        for p in &mut path.waypoints {
            p.x = (p.x + normal.sample(rng)).clamp(m, w - m);
            p.y = (p.y + normal.sample(rng)).clamp(m, d - m);
        }
    }
    let scene = RoomScene {
        id,
        width: w,
        depth: d,
        absorption: cfg.absorption,
        order: cfg.order,
        speed_of_sound: SPEED_OF_SOUND,
        mics,
        noise_source,
        path,
        diffuse_db: cfg.diffuse_db,
        crossfade: cfg.crossfade,
    };
    scene.validate()?;
    Ok(scene)
}

fn points(ps: &[Point]) -> String {
    ps.iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>().join(";")
}

fn parse_point(s: &str) -> Option<Point> {
    let (x, y) = s.split_once(',')?;
    Some(Point::new(x.parse().ok()?, y.parse().ok()?))
}

impl RoomScene {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("version", SCENE_VERSION.to_string());
        kv("id", self.id.to_string());
        kv("width", self.width.to_string());
        kv("depth", self.depth.to_string());
        kv("absorption", self.absorption.to_string());
        kv("order", self.order.to_string());
        kv("speed_of_sound", self.speed_of_sound.to_string());
        kv("diffuse_db", self.diffuse_db.to_string());
        kv("crossfade", self.crossfade.to_string());
        kv("noise_source", points(&[self.noise_source]));
        kv("mics", points(&self.mics));
        kv("path.start", points(&[self.path.start]));
        kv("path.end", points(&[self.path.end]));
        kv("path.jitter", self.path.jitter.to_string());
        kv("path.waypoints", points(&self.path.waypoints));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("scene line {}: expected key=value", i + 1)))?;
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Parse(format!("scene line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let mut take = |k: &str| {
            map.remove(k)
                .ok_or_else(|| Error::Parse(format!("scene lacks `{k}`")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Parse(format!("scene `{k}` = `{v}` is malformed")))
        }
        fn pts(k: &str, v: String) -> Result<Vec<Point>> {
            v.split(';')
                .map(|p| parse_point(p).ok_or_else(|| Error::Parse(format!("scene `{k}` has bad point `{p}`"))))
                .collect()
        }
        fn one(k: &str, v: String) -> Result<Point> {
            let mut p = pts(k, v)?;
            if p.len() != 1 {
                return Err(Error::Parse(format!("scene `{k}` must hold one point")));
            }
            Ok(p.remove(0))
        }
        let version: u32 = num("version", take("version")?)?;
        if version != SCENE_VERSION {
            return Err(Error::Parse(format!("unsupported scene version {version}")));
        }
        let scene = RoomScene {
            id: num("id", take("id")?)?,
            width: num("width", take("width")?)?,
            depth: num("depth", take("depth")?)?,
            absorption: num("absorption", take("absorption")?)?,
            order: num("order", take("order")?)?,
            speed_of_sound: num("speed_of_sound", take("speed_of_sound")?)?,
            diffuse_db: num("diffuse_db", take("diffuse_db")?)?,
            crossfade: num("crossfade", take("crossfade")?)?,
            noise_source: one("noise_source", take("noise_source")?)?,
            mics: pts("mics", take("mics")?)?,
            path: SourcePath {
                start: one("path.start", take("path.start")?)?,
                end: one("path.end", take("path.end")?)?,
                jitter: num("path.jitter", take("path.jitter")?)?,
                waypoints: pts("path.waypoints", take("path.waypoints")?)?,
            },
        };
        if let Some(k) = map.keys().next() {
            return Err(Error::Parse(format!("scene has unknown key `{k}`")));
        }
        scene.validate()?;
        Ok(scene)
    }
}
