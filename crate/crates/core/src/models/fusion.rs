use crate::dsp::SpectraGrid;
use crate::error::{shape_err, Result};
use crate::numerics::{softmax, Matrix};

use super::backbone::{rnn_time_forward, BackboneParams, CLASSES};

/// Per-frame class probabilities and decisions.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePrediction {
    /// `T × 2`: `(P(noise), P(speech))` per frame.
    pub probs: Matrix,
    pub labels: Vec<u8>,
}

impl FramePrediction {
    /// Decisions by per-row argmax, ties to class 0.
    pub fn from_probs(probs: Matrix) -> Self {
        let labels = (0..probs.rows()).map(|t| argmax(probs.row(t))).collect();
        Self { probs, labels }
    }

    pub fn frames(&self) -> usize {
        self.probs.rows()
    }
}

pub(crate) fn argmax(row: &[f64]) -> u8 {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best as u8
}

/// How the first channel of a frame receives its state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Handoff {
    /// From the last channel of the previous frame.
    Serpentine,
    /// From the first channel of the previous frame.
    Literal,
}

impl Handoff {
    pub fn name(self) -> &'static str {
        match self {
            Handoff::Serpentine => "serpentine",
            Handoff::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> crate::Result<Self> {
        match s {
            "serpentine" => Ok(Handoff::Serpentine),
            "literal" => Ok(Handoff::Literal),
            _ => Err(crate::Error::Parse(format!("unknown hand-off `{s}`"))),
        }
    }
}

fn check_grid(grid: &SpectraGrid) -> Result<()> {
    if grid.channels() == 0 || grid.frames() == 0 {
        return shape_err(format!("grid with {} channels and {} frames", grid.channels(), grid.frames()));
    }
    Ok(())
}

fn head_rows(hidden: &Matrix, p: &BackboneParams) -> Matrix {
    let mut probs = Matrix::zeros(hidden.rows(), CLASSES);
    for t in 0..hidden.rows() {
        let s = softmax(&p.logits(hidden.row(t)));
        probs.row_mut(t).copy_from_slice(&s);
    }
    probs
}

/// Time unroll plus head on one `T × F` slab.
pub fn single_channel_forward(slab: &Matrix, p: &BackboneParams) -> Result<FramePrediction> {
    let h = rnn_time_forward(slab, p)?;
    Ok(FramePrediction::from_probs(head_rows(&h, p)))
}

/// Hidden state after the last channel of every frame, `T × d_h`.
pub fn mvn_states(grid: &SpectraGrid, p: &BackboneParams, handoff: Handoff) -> Result<Matrix> {
    check_grid(grid)?;
    let (k, frames) = (grid.channels(), grid.frames());
    let proj = (0..k).map(|c| p.project(&grid.channel(c))).collect::<Result<Vec<_>>>()?;
    let mut out = Matrix::zeros(frames, p.hidden);
    let zero = vec![0.0; p.hidden];
    let mut last = zero.clone();
    let mut first = zero;
    for t in 0..frames {
        let mut h = match handoff {
            Handoff::Serpentine => p.step(proj[0].row(t), &last),
            Handoff::Literal => p.step(proj[0].row(t), &first),
        };
        first.clone_from(&h);
        for z in &proj[1..] {
            h = p.step(z.row(t), &h);
        }
        out.row_mut(t).copy_from_slice(&h);
        last = h;
    }
    Ok(out)
}

/// Multi-view network: channels are scanned within each frame and the
/// prediction for frame `t` reads the state after its last channel.
pub fn mvn_forward(grid: &SpectraGrid, p: &BackboneParams, handoff: Handoff) -> Result<FramePrediction> {
    let h = mvn_states(grid, p, handoff)?;
    Ok(FramePrediction::from_probs(head_rows(&h, p)))
}

/// Channel-mean spectra through the single-channel path.
pub fn avg_input_forward(grid: &SpectraGrid, p: &BackboneParams) -> Result<FramePrediction> {
    check_grid(grid)?;
    single_channel_forward(&grid.channel_mean(), p)
}

/// Per-channel probability rows, one `T × 2` matrix per channel.
pub fn channel_probs(grid: &SpectraGrid, p: &BackboneParams) -> Result<Vec<Matrix>> {
    check_grid(grid)?;
    (0..grid.channels())
        .map(|c| single_channel_forward(&grid.channel(c), p).map(|f| f.probs))
        .collect()
}

/// Frame-wise mean of per-channel probability rows.
pub fn fuse_average(per_channel: &[Matrix]) -> Result<FramePrediction> {
    let Some(first) = per_channel.first() else {
        return shape_err("no channels to fuse");
    };
    let mut acc = Matrix::zeros(first.rows(), first.cols());
    for m in per_channel {
        acc.add_assign(m)?;
    }
    acc.scale(1.0 / per_channel.len() as f64);
    Ok(FramePrediction::from_probs(acc))
}

/// Per frame, the channel holding the single most confident class
/// probability decides; ties go to the lower channel, then the lower class.
/// The reported row is the winning channel's distribution.
pub fn fuse_max(per_channel: &[Matrix]) -> Result<FramePrediction> {
    let Some(first) = per_channel.first() else {
        return shape_err("no channels to fuse");
    };
    let (frames, classes) = first.shape();
    for m in per_channel {
        if m.shape() != (frames, classes) {
            return shape_err("channel probability shapes differ");
        }
    }
    let mut probs = Matrix::zeros(frames, classes);
    let mut labels = Vec::with_capacity(frames);
    for t in 0..frames {
        let (mut best_k, mut best_c) = (0, 0);
        for (k, m) in per_channel.iter().enumerate() {
            for (c, &v) in m.row(t).iter().enumerate() {
                if v > per_channel[best_k].get(t, best_c) {
                    (best_k, best_c) = (k, c);
                }
            }
        }
        probs.row_mut(t).copy_from_slice(per_channel[best_k].row(t));
        labels.push(best_c as u8);
    }
    Ok(FramePrediction { probs, labels })
}

pub fn avg_output_forward(grid: &SpectraGrid, p: &BackboneParams) -> Result<FramePrediction> {
    fuse_average(&channel_probs(grid, p)?)
}

pub fn max_output_forward(grid: &SpectraGrid, p: &BackboneParams) -> Result<FramePrediction> {
    fuse_max(&channel_probs(grid, p)?)
}
