//! Run configuration: a versioned TOML file, `--set key=value` overrides,
//! and the fully resolved copy written next to every command's outputs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use mvn_core::data::{load_corpus, BankSpec, ClipBank, Scheme, SnrSchedule};
use mvn_core::models::{CellKind, Handoff, ModelKind};
use mvn_core::numerics::{AdamConfig, LrSchedule};
use mvn_core::pipeline::{ExampleFactory, Experiment, Split, TrainConfig};
use mvn_core::room::SceneConfig;

use crate::failure::Failure;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    /// `simple` or `room`.
    pub experiment: String,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    pub bank: BankSection,
    pub room: RoomSection,
    pub data: DataSection,
    pub simulate: SimulateSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BankSection {
    /// Directories of 16 kHz mono WAVs; the synthetic bank is used when unset.
    pub speech_dir: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    /// Held-out clips for evaluation; defaults to the training directories.
    pub test_speech_dir: Option<PathBuf>,
    pub test_noise_dir: Option<PathBuf>,
    pub synthetic_seed: u64,
    pub synthetic_speech: usize,
    pub synthetic_noise: usize,
    pub label_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomSection {
    pub width: f64,
    pub depth: f64,
    pub absorption: f64,
    pub order: u32,
    pub margin: f64,
    pub grid: usize,
    pub segments: usize,
    pub jitter: f64,
    pub diffuse_db: f64,
    pub crossfade: usize,
    pub scene_pool: u64,
    pub scene_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub mixtures: usize,
    pub validation_mixtures: usize,
    pub channels: usize,
    pub scheme: String,
    /// Used by the `explicit` scheme only.
    pub snr_values: Vec<f64>,
    /// `train` or `test`; selects room scene ids.
    pub split: String,
    pub per_frame_shuffle: Option<bool>,
    pub write_wavs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenes: usize,
    pub first_id: u64,
    pub mics: usize,
    pub render_wavs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub model: String,
    pub cell: String,
    pub handoff: String,
    pub hidden: usize,
    pub input_scale: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub channels: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_period: usize,
    pub validation_size: usize,
    pub per_frame_shuffle: Option<bool>,
    pub resample_each_epoch: bool,
    /// Train from `gen-data` manifests instead of generating on the fly.
    pub train_manifest: Option<PathBuf>,
    pub validation_manifest: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub schemes: Vec<String>,
    pub ks: Vec<usize>,
    pub runs: usize,
    pub mixtures: usize,
    pub per_frame_shuffle: Option<bool>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            experiment: "simple".into(),
            jobs: 0,
            bank: BankSection::default(),
            room: RoomSection::default(),
            data: DataSection::default(),
            simulate: SimulateSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for BankSection {
    fn default() -> Self {
        Self {
            speech_dir: None,
            noise_dir: None,
            test_speech_dir: None,
            test_noise_dir: None,
            synthetic_seed: 1,
            synthetic_speech: 100,
            synthetic_noise: 50,
            label_threshold: 0.5,
        }
    }
}

impl Default for RoomSection {
    fn default() -> Self {
        let s = SceneConfig::default();
        Self {
            width: s.width,
            depth: s.depth,
            absorption: s.absorption,
            order: s.order,
            margin: s.margin,
            grid: s.grid,
            segments: s.segments,
            jitter: s.jitter,
            diffuse_db: s.diffuse_db,
            crossfade: s.crossfade,
            scene_pool: 1000,
            scene_seed: 0,
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            mixtures: 2000,
            validation_mixtures: 100,
            channels: 4,
            scheme: "training_grid".into(),
            snr_values: Vec::new(),
            split: "train".into(),
            per_frame_shuffle: None,
            write_wavs: false,
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scenes: 3,
            first_id: 0,
            mics: 4,
            render_wavs: false,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::desk(ModelKind::Mvn);
        Self {
            model: d.kind.name().into(),
            cell: d.cell.name().into(),
            handoff: d.handoff.name().into(),
            hidden: d.hidden,
            input_scale: d.input_scale,
            epochs: d.epochs,
            batches_per_epoch: d.batches_per_epoch,
            batch_size: d.batch_size,
            channels: d.channels,
            snr_min: d.snr_range.0,
            snr_max: d.snr_range.1,
            lr: d.lr.initial,
            lr_factor: d.lr.factor,
            lr_period: d.lr.period,
            validation_size: d.validation_size,
            per_frame_shuffle: None,
            resample_each_epoch: d.resample_each_epoch,
            train_manifest: None,
            validation_manifest: None,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            schemes: vec!["decreasing".into(), "increasing".into()],
            ks: (2..=30).collect(),
            runs: 5,
            mixtures: 100,
            per_frame_shuffle: None,
        }
    }
}

fn invalid(field: &str, why: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{field}: {why}"))
}

fn positive(field: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        return Err(invalid(field, "must be positive"));
    }
    Ok(())
}

fn finite(field: &str, v: f64) -> Result<(), Failure> {
    if !v.is_finite() {
        return Err(invalid(field, format!("{v} is not finite")));
    }
    Ok(())
}

fn parse_field<T>(field: &str, r: mvn_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| invalid(field, e))
}

/// Sets `dotted.key` in `table`, parsing `raw` as a TOML value and falling
/// back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("--set expects key=value, got `{assignment}`")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Failure::usage(format!("empty key in `{assignment}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::usage(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Reads `path` (if any), applies overrides in order, and validates.
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, Failure> {
        let loaded = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::new("io", format!("cannot read config {}: {e}", p.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e: toml::de::Error| Failure::config(format!("{}: {}", p.display(), one_line(&e.to_string()))))?;
                match table.get("version") {
                    None => return Err(invalid("version", format!("missing (expected {CONFIG_VERSION})"))),
                    Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
                    Some(v) => return Err(invalid("version", format!("{v} is not supported (expected {CONFIG_VERSION})"))),
                }
                // Deserializing the text itself keeps line numbers on type errors.
                if let Err(e) = toml::from_str::<RunConfig>(&text) {
                    return Err(Failure::config(format!("{}: {}", p.display(), one_line(&e.to_string()))));
                }
                Some((table, text))
            }
            None => None,
        };
        let (mut table, text) = match loaded {
            Some((t, text)) => (t, Some(text)),
            None => (toml::Table::new(), None),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if let Some(s) = seed {
            table.insert("seed".into(), toml::Value::Integer(s as i64));
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::config(one_line(&e.to_string())))?;
        if let Err(mut f) = cfg.validate() {
            let field = f.message.split(':').next().unwrap_or_default().to_string();
            if let (Some(text), Some(p)) = (&text, path) {
                if let Some(line) = locate(text, &field) {
                    f.message = format!("{} line {line}: {}", p.display(), f.message);
                }
            }
            return Err(f);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<(), Failure> {
        crate::write_file(&dir.join("resolved_config.toml"), self.to_toml().as_bytes())
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("{} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        self.experiment()?;
        self.scene_config()?;
        self.split()?;
        self.train_config()?;
        self.data_schedule()?;
        let b = &self.bank;
        if b.speech_dir.is_some() != b.noise_dir.is_some() {
            return Err(invalid("bank.speech_dir", "speech_dir and noise_dir must be set together"));
        }
        if b.test_speech_dir.is_some() != b.test_noise_dir.is_some() {
            return Err(invalid("bank.test_speech_dir", "test_speech_dir and test_noise_dir must be set together"));
        }
        if b.speech_dir.is_none() {
            positive("bank.synthetic_speech", b.synthetic_speech)?;
            positive("bank.synthetic_noise", b.synthetic_noise)?;
        }
        if !(0.0..=1.0).contains(&b.label_threshold) {
            return Err(invalid("bank.label_threshold", format!("{} is outside [0, 1]", b.label_threshold)));
        }
        positive("data.mixtures", self.data.mixtures)?;
        positive("simulate.scenes", self.simulate.scenes)?;
        if !(2..=30).contains(&self.simulate.mics) {
            return Err(invalid("simulate.mics", format!("{} is outside 2..=30", self.simulate.mics)));
        }
        positive("eval.runs", self.eval.runs)?;
        positive("eval.mixtures", self.eval.mixtures)?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(invalid("eval.ks", "must be a non-empty list of positive channel counts"));
        }
        if self.eval.schemes.is_empty() {
            return Err(invalid("eval.schemes", "must not be empty"));
        }
        self.eval_schemes()?;
        if self.train.train_manifest.is_some() != self.train.validation_manifest.is_some() {
            return Err(invalid("train.train_manifest", "train_manifest and validation_manifest must be set together"));
        }
        Ok(())
    }

    pub fn experiment(&self) -> Result<Experiment, Failure> {
        parse_field("experiment", Experiment::parse(&self.experiment))
    }

    /// Per-frame shuffle applies to simple mixtures unless set explicitly.
    fn shuffle_default(&self, explicit: Option<bool>) -> Result<bool, Failure> {
        Ok(explicit.unwrap_or(self.experiment()? == Experiment::Simple))
    }

    pub fn split(&self) -> Result<Split, Failure> {
        match self.data.split.as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            s => Err(invalid("data.split", format!("`{s}` (expected train or test)"))),
        }
    }

    pub fn scene_config(&self) -> Result<SceneConfig, Failure> {
        let r = &self.room;
        for (f, v) in [
            ("room.width", r.width),
            ("room.depth", r.depth),
            ("room.absorption", r.absorption),
            ("room.margin", r.margin),
            ("room.jitter", r.jitter),
        ] {
            finite(f, v)?;
        }
        if !(r.width > 0.0 && r.depth > 0.0) {
            return Err(invalid("room.width", "room dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&r.absorption) {
            return Err(invalid("room.absorption", format!("{} is outside [0, 1)", r.absorption)));
        }
        if r.diffuse_db.is_nan() {
            return Err(invalid("room.diffuse_db", "is NaN"));
        }
        positive("room.crossfade", r.crossfade)?;
        if r.scene_pool < 10 {
            return Err(invalid("room.scene_pool", "needs at least 10 ids so the test split is non-empty"));
        }
        let s = SceneConfig {
            width: r.width,
            depth: r.depth,
            absorption: r.absorption,
            order: r.order,
            margin: r.margin,
            grid: r.grid,
            segments: r.segments,
            jitter: r.jitter,
            diffuse_db: r.diffuse_db,
            crossfade: r.crossfade,
        };
        s.validate().map_err(|e| invalid("room", e))?;
        Ok(s)
    }

    pub fn train_config(&self) -> Result<TrainConfig, Failure> {
        let t = &self.train;
        let kind = parse_field("train.model", ModelKind::parse(&t.model))?;
        for (f, v) in [
            ("train.hidden", t.hidden),
            ("train.epochs", t.epochs),
            ("train.batches_per_epoch", t.batches_per_epoch),
            ("train.batch_size", t.batch_size),
            ("train.channels", t.channels),
            ("train.validation_size", t.validation_size),
            ("train.lr_period", t.lr_period),
        ] {
            positive(f, v)?;
        }
        for (f, v) in [
            ("train.snr_min", t.snr_min),
            ("train.snr_max", t.snr_max),
            ("train.lr", t.lr),
            ("train.lr_factor", t.lr_factor),
            ("train.input_scale", t.input_scale),
        ] {
            finite(f, v)?;
        }
        if t.snr_min > t.snr_max {
            return Err(invalid("train.snr_min", format!("{} exceeds snr_max {}", t.snr_min, t.snr_max)));
        }
        for (f, v) in [("train.lr", t.lr), ("train.lr_factor", t.lr_factor), ("train.input_scale", t.input_scale)] {
            if v <= 0.0 {
                return Err(invalid(f, "must be positive"));
            }
        }
        let cfg = TrainConfig {
            kind,
            cell: parse_field("train.cell", CellKind::parse(&t.cell))?,
            handoff: parse_field("train.handoff", Handoff::parse(&t.handoff))?,
            hidden: t.hidden,
            input_scale: t.input_scale,
            epochs: t.epochs,
            batches_per_epoch: t.batches_per_epoch,
            batch_size: t.batch_size,
            channels: t.channels,
            snr_range: (t.snr_min, t.snr_max),
            lr: LrSchedule {
                initial: t.lr,
                factor: t.lr_factor,
                period: t.lr_period,
            },
            adam: AdamConfig::default(),
            seed: self.seed,
            per_frame_shuffle: self.shuffle_default(t.per_frame_shuffle)?,
            validation_size: t.validation_size,
            resample_each_epoch: t.resample_each_epoch,
        };
        cfg.validate().map_err(|e| invalid("train", e))?;
        Ok(cfg)
    }

    /// Schedule for `gen-data`.
    pub fn data_schedule(&self) -> Result<SnrSchedule, Failure> {
        let d = &self.data;
        positive("data.channels", d.channels)?;
        let scheme = parse_field("data.scheme", Scheme::parse(&d.scheme))?;
        match scheme {
            Scheme::Explicit => {
                if d.snr_values.len() != d.channels {
                    return Err(invalid(
                        "data.snr_values",
                        format!("{} values for {} channels", d.snr_values.len(), d.channels),
                    ));
                }
                if let Some(v) = d.snr_values.iter().find(|v| !v.is_finite()) {
                    return Err(invalid("data.snr_values", format!("{v} is not finite")));
                }
                Ok(SnrSchedule::explicit(d.snr_values.clone()))
            }
            Scheme::TrainingGrid => Ok(SnrSchedule::training_grid(d.channels, self.train.snr_min, self.train.snr_max)),
            s => parse_field("data.scheme", mvn_core::data::snr_schedule(s, d.channels)),
        }
    }

    pub fn data_shuffle(&self) -> Result<bool, Failure> {
        self.shuffle_default(self.data.per_frame_shuffle)
    }

    pub fn eval_shuffle(&self) -> Result<bool, Failure> {
        self.shuffle_default(self.eval.per_frame_shuffle)
    }

    pub fn eval_schemes(&self) -> Result<Vec<Scheme>, Failure> {
        self.eval
            .schemes
            .iter()
            .map(|s| {
                let scheme = parse_field("eval.schemes", Scheme::parse(s))?;
                if scheme == Scheme::Explicit {
                    return Err(invalid("eval.schemes", "`explicit` cannot be swept"));
                }
                Ok(scheme)
            })
            .collect()
    }

    fn bank_from(&self, dirs: Option<(&Path, &Path)>, held_out: bool) -> Result<ClipBank, Failure> {
        match dirs {
            Some((speech, noise)) => Ok(load_corpus(speech, noise)?),
            None => {
                let spec = BankSpec {
                    seed: self.bank.synthetic_seed,
                    speech: self.bank.synthetic_speech,
                    noise: self.bank.synthetic_noise,
                };
                Ok(if held_out { spec.held_out() } else { spec }.build())
            }
        }
    }

    fn factory_for(&self, bank: ClipBank) -> Result<ExampleFactory, Failure> {
        let mut f = ExampleFactory::new(Arc::new(bank), self.experiment()?)?;
        f.scene = self.scene_config()?;
        f.scene_pool = self.room.scene_pool;
        f.scene_seed = self.room.scene_seed;
        f.label_threshold = self.bank.label_threshold;
        Ok(f)
    }

    /// Factory over the training clips.
    pub fn train_factory(&self) -> Result<ExampleFactory, Failure> {
        let b = &self.bank;
        let dirs = b.speech_dir.as_deref().zip(b.noise_dir.as_deref());
        self.factory_for(self.bank_from(dirs, false)?)
    }

    /// Factory over held-out clips: the test directories, the training
    /// directories when those are unset, or the held-out synthetic bank.
    pub fn test_factory(&self) -> Result<ExampleFactory, Failure> {
        let b = &self.bank;
        let dirs = b
            .test_speech_dir
            .as_deref()
            .zip(b.test_noise_dir.as_deref())
            .or(b.speech_dir.as_deref().zip(b.noise_dir.as_deref()));
        self.factory_for(self.bank_from(dirs, true)?)
    }
}

/// 1-based line of `section.key` (or a top-level `key`) in TOML text.
fn locate(text: &str, field: &str) -> Option<usize> {
    let (section, key) = field.rsplit_once('.').unwrap_or(("", field));
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
        } else if current == section && t.split('=').next().map(str::trim) == Some(key) && t.contains('=') {
            return Some(i + 1);
        }
    }
    None
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
