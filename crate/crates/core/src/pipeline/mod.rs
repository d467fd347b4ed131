//! Training with validation-based selection, channel-count sweeps, and
//! reports.

mod eval;
mod factory;
mod source;
mod train;

pub use eval::{
    aggregate, evaluate_sweep, frame_accuracy, AggregateRow, CoinFlip, EvalReport, EvalRow, FrameClassifier,
    Oracle, SweepSpec,
};
pub use factory::{ExampleFactory, Experiment, Split};
pub use source::{DataSource, GeneratedData, ManifestData};
pub use train::{curve_csv, parse_curve_csv, train, CurveRow, TrainOutcome, TrainState};

use crate::data::{SnrSchedule, TRAIN_SNR_RANGE};
use crate::error::{Error, Result};
use crate::models::{CellKind, Handoff, ModelKind};
use crate::numerics::{AdamConfig, LrSchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub cell: CellKind,
    pub handoff: Handoff,
    pub hidden: usize,
    /// Multiplier applied to magnitude spectra before the input projection.
    pub input_scale: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Channels per training mixture.
    pub channels: usize,
    /// Training SNR grid end points, dB.
    pub snr_range: (f64, f64),
    pub lr: LrSchedule,
    pub adam: AdamConfig,
    pub seed: u64,
    pub per_frame_shuffle: bool,
    pub validation_size: usize,
    /// Fresh mixtures every epoch; otherwise every epoch reuses epoch 0's.
    pub resample_each_epoch: bool,
}

impl TrainConfig {
    /// Laptop-scale settings: 2000 training mixtures in total.
    pub fn desk(kind: ModelKind) -> Self {
        Self {
            kind,
            cell: CellKind::Gru,
            handoff: Handoff::Serpentine,
            hidden: 32,
            input_scale: 0.1,
            epochs: 10,
            batches_per_epoch: 25,
            batch_size: 8,
            channels: 4,
            snr_range: TRAIN_SNR_RANGE,
            lr: LrSchedule::default(),
            adam: AdamConfig::default(),
            seed: 0,
            per_frame_shuffle: true,
            validation_size: 100,
            resample_each_epoch: true,
        }
    }

    /// Full scale: 100 epochs of 250 batches of 40, 512 hidden units.
    pub fn full(kind: ModelKind) -> Self {
        Self {
            hidden: 512,
            epochs: 100,
            batches_per_epoch: 250,
            batch_size: 40,
            validation_size: 500,
            ..Self::desk(kind)
        }
    }

    pub fn schedule(&self) -> SnrSchedule {
        SnrSchedule::training_grid(self.channels, self.snr_range.0, self.snr_range.1)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("batch_size", self.batch_size),
            ("channels", self.channels),
            ("validation_size", self.validation_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Input(format!("{name} must be positive")));
            }
        }
        if !(self.snr_range.0 <= self.snr_range.1 && self.snr_range.0.is_finite() && self.snr_range.1.is_finite()) {
            return Err(Error::Input(format!("SNR range {:?}", self.snr_range)));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return Err(Error::Input(format!("input_scale {}", self.input_scale)));
        }
        if !(self.lr.initial > 0.0 && self.lr.factor > 0.0 && self.lr.period > 0) {
            return Err(Error::Input("learning-rate schedule must be positive".into()));
        }
        Ok(())
    }
}
