//! The multi-view network and three channel-fusion baselines over one
//! recurrent backbone.
//!
//! | kind         | fusion                                                   |
//! |--------------|----------------------------------------------------------|
//! | `mvn`        | channels scanned inside each frame, state carried across |
//! | `avg_input`  | mean magnitude spectrum, then the single-channel path    |
//! | `avg_output` | mean of per-channel probability rows                     |
//! | `max_output` | most confident (channel, class) pair                     |
//!
//! `avg_output` and `max_output` share one network trained per channel, so a
//! checkpoint of either can be evaluated as the other.

mod backbone;
mod fusion;
mod graph;

pub use backbone::{gru_cell, head, rnn_time_forward, BackboneParams, CellKind, CLASSES};
pub use graph::{cell_vjp, head_nll_grad, StepGradients};
pub use fusion::{
    avg_input_forward, avg_output_forward, channel_probs, fuse_average, fuse_max, max_output_forward,
    mvn_forward, mvn_states, single_channel_forward, FramePrediction, Handoff,
};

use crate::dsp::SpectraGrid;
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, Matrix, Precision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Mvn,
    AvgInput,
    AvgOutput,
    MaxOutput,
}

/// What a model kind is trained as.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Mvn,
    AvgInput,
    /// One single-channel network applied to every channel.
    PerChannel,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Mvn, ModelKind::AvgInput, ModelKind::AvgOutput, ModelKind::MaxOutput];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mvn => "mvn",
            ModelKind::AvgInput => "avg_input",
            ModelKind::AvgOutput => "avg_output",
            ModelKind::MaxOutput => "max_output",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown model kind `{s}` (expected mvn, avg_input, avg_output or max_output)")))
    }

    pub fn family(self) -> Family {
        match self {
            ModelKind::Mvn => Family::Mvn,
            ModelKind::AvgInput => Family::AvgInput,
            ModelKind::AvgOutput | ModelKind::MaxOutput => Family::PerChannel,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub handoff: Handoff,
    pub params: BackboneParams,
}

impl Model {
    pub fn new(kind: ModelKind, params: BackboneParams) -> Self {
        Self {
            kind,
            handoff: Handoff::Serpentine,
            params,
        }
    }

    /// The same network under another fusion rule of its family.
    pub fn as_kind(&self, kind: ModelKind) -> Result<Model> {
        if kind.family() != self.kind.family() {
            return Err(Error::Contract(format!("a {} network cannot be evaluated as {}", self.kind, kind)));
        }
        Ok(Model { kind, ..self.clone() })
    }

    pub fn predict(&self, grid: &SpectraGrid) -> Result<FramePrediction> {
        match self.kind {
            ModelKind::Mvn => mvn_forward(grid, &self.params, self.handoff),
            ModelKind::AvgInput => avg_input_forward(grid, &self.params),
            ModelKind::AvgOutput => avg_output_forward(grid, &self.params),
            ModelKind::MaxOutput => max_output_forward(grid, &self.params),
        }
    }

    /// Training loss (mean cross-entropy per frame) and per-tensor gradients.
    pub fn loss_and_gradients(&self, grid: &SpectraGrid, labels: &[u8]) -> Result<(f64, Vec<Matrix>)> {
        graph::loss_and_gradients(&self.params, self.kind.family(), self.handoff, grid, labels)
    }

    /// Loss of the trained objective without gradients.
    pub fn loss(&self, grid: &SpectraGrid, labels: &[u8]) -> Result<f64> {
        if labels.len() != grid.frames() {
            return Err(Error::Shape(format!("{} labels for {} frames", labels.len(), grid.frames())));
        }
        let ce = |probs: &Matrix| -> f64 {
            labels
                .iter()
                .enumerate()
                .map(|(t, &l)| -probs.get(t, l as usize).ln())
                .sum::<f64>()
                / labels.len() as f64
        };
        Ok(match self.kind.family() {
            Family::Mvn | Family::AvgInput => ce(&self.predict(grid)?.probs),
            Family::PerChannel => {
                let per = channel_probs(grid, &self.params)?;
                per.iter().map(ce).sum::<f64>() / per.len() as f64
            }
        })
    }

    pub fn write_checkpoint(&self, ckpt: &mut Checkpoint, prefix: &str) {
        let p = &self.params;
        ckpt.set_meta(format!("{prefix}model"), self.kind.name());
        ckpt.set_meta(format!("{prefix}handoff"), self.handoff.name());
        ckpt.set_meta(format!("{prefix}cell"), p.cell.name());
        ckpt.set_meta(format!("{prefix}input_dim"), p.input_dim);
        ckpt.set_meta(format!("{prefix}hidden"), p.hidden);
        ckpt.set_meta(format!("{prefix}input_scale"), p.input_scale);
        for (name, t) in p.names().iter().zip(&p.tensors) {
            ckpt.push(format!("{prefix}{name}"), t.clone(), Precision::F64);
        }
    }

    pub fn read_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let key = |k: &str| format!("{prefix}{k}");
        let kind = ModelKind::parse(ckpt.meta(&key("model"))?)?;
        let handoff = Handoff::parse(ckpt.meta(&key("handoff"))?)?;
        let cell = CellKind::parse(ckpt.meta(&key("cell"))?)?;
        let input_dim = ckpt.meta_parse(&key("input_dim"))?;
        let hidden = ckpt.meta_parse(&key("hidden"))?;
        let input_scale = ckpt.meta_parse(&key("input_scale"))?;
        let tensors = cell
            .tensor_names()
            .iter()
            .map(|n| ckpt.block(&key(n)).cloned())
            .collect::<Result<Vec<_>>>()?;
        let params = BackboneParams {
            cell,
            input_dim,
            hidden,
            input_scale,
            tensors,
        };
        params.validate()?;
        Ok(Model { kind, handoff, params })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        self.write_checkpoint(&mut c, "");
        c
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Self::read_checkpoint(ckpt, "")
    }
}

#[cfg(test)]
mod tests;
