use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::numerics::{sigmoid, softmax, Matrix};

pub const CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellKind {
    /// Update gate `z`, reset gate `r` applied before the candidate's
    /// recurrent product: `c = tanh(x·W_c + (r ⊙ h)·U_c + b_c)`,
    /// `h' = h + z ⊙ (c − h)`.
    Gru,
    /// `h' = tanh(x·W + h·U + b)`.
    Vanilla,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Vanilla => "vanilla",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CellKind::Gru),
            "vanilla" => Ok(CellKind::Vanilla),
            _ => Err(Error::Parse(format!("unknown cell kind `{s}`"))),
        }
    }

    /// Blocks of `hidden` columns in the input projection.
    pub fn blocks(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Vanilla => 1,
        }
    }

    pub fn tensor_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Gru => &["cell.w_in", "cell.u_gates", "cell.u_cand", "cell.bias", "head.w", "head.b"],
            CellKind::Vanilla => &["cell.w_in", "cell.u_cand", "cell.bias", "head.w", "head.b"],
        }
    }
}

/// Recurrent cell plus softmax head, shared by every model kind.
///
/// `tensors` follows [`CellKind::tensor_names`]. Input frames are multiplied
/// by `input_scale` before the projection; the scale is fixed, not trained.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneParams {
    pub cell: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub input_scale: f64,
    pub tensors: Vec<Matrix>,
}

/// Positions of each tensor in [`BackboneParams::tensors`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub w_in: usize,
    pub u_gates: Option<usize>,
    pub u_cand: usize,
    pub bias: usize,
    pub head_w: usize,
    pub head_b: usize,
}

impl Layout {
    pub fn of(cell: CellKind) -> Self {
        match cell {
            CellKind::Gru => Layout { w_in: 0, u_gates: Some(1), u_cand: 2, bias: 3, head_w: 4, head_b: 5 },
            CellKind::Vanilla => Layout { w_in: 0, u_gates: None, u_cand: 1, bias: 2, head_w: 3, head_b: 4 },
        }
    }
}

impl BackboneParams {
    pub fn shapes(cell: CellKind, input_dim: usize, hidden: usize) -> Vec<(usize, usize)> {
        let g = cell.blocks() * hidden;
        match cell {
            CellKind::Gru => vec![
                (input_dim, g),
                (hidden, 2 * hidden),
                (hidden, hidden),
                (1, g),
                (hidden, CLASSES),
                (1, CLASSES),
            ],
            CellKind::Vanilla => vec![(input_dim, g), (hidden, hidden), (1, g), (hidden, CLASSES), (1, CLASSES)],
        }
    }

    pub fn zeros(cell: CellKind, input_dim: usize, hidden: usize) -> Self {
        Self {
            cell,
            input_dim,
            hidden,
            input_scale: 1.0,
            tensors: Self::shapes(cell, input_dim, hidden)
                .into_iter()
                .map(|(r, c)| Matrix::zeros(r, c))
                .collect(),
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(cell: CellKind, input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(cell, input_dim, hidden);
        let names = cell.tensor_names();
        for (t, name) in p.tensors.iter_mut().zip(names) {
            if name.ends_with(".b") || name.ends_with(".bias") {
                continue;
            }
            let bound = 1.0 / (t.rows() as f64).sqrt();
            for v in t.data_mut() {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn with_input_scale(mut self, scale: f64) -> Self {
        self.input_scale = scale;
        self
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.cell.tensor_names()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::of(self.cell)
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.names()
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
            .ok_or_else(|| Error::Index(format!("no tensor `{name}` in a {} backbone", self.cell.name())))
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = Self::shapes(self.cell, self.input_dim, self.hidden);
        if self.tensors.len() != shapes.len() {
            return shape_err(format!("{} tensors, expected {}", self.tensors.len(), shapes.len()));
        }
        for ((t, s), name) in self.tensors.iter().zip(&shapes).zip(self.names()) {
            if t.shape() != *s {
                return shape_err(format!("{name} is {}x{}, expected {}x{}", t.rows(), t.cols(), s.0, s.1));
            }
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::Input(format!("input scale {}", self.input_scale)));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub(crate) fn check_slab(&self, slab: &Matrix) -> Result<()> {
        if slab.cols() != self.input_dim {
            return shape_err(format!("frames have {} bins, model expects {}", slab.cols(), self.input_dim));
        }
        if !slab.is_finite() {
            return Err(Error::NonFinite("input frames".into()));
        }
        Ok(())
    }

    /// Scaled frames, as fed to the projection.
    pub(crate) fn scaled(&self, slab: &Matrix) -> Matrix {
        if self.input_scale == 1.0 {
            slab.clone()
        } else {
            slab.map(|v| v * self.input_scale)
        }
    }

    /// `scaled(slab)·W_in + bias`, one row per frame.
    pub fn project(&self, slab: &Matrix) -> Result<Matrix> {
        self.check_slab(slab)?;
        let l = self.layout();
        let mut z = self.scaled(slab).matmul(&self.tensors[l.w_in])?;
        let b = self.tensors[l.bias].data();
        for r in 0..z.rows() {
            for (o, bv) in z.row_mut(r).iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(z)
    }

    /// One cell update from a projected input row.
    pub fn step(&self, zrow: &[f64], h: &[f64]) -> Vec<f64> {
        let l = self.layout();
        let n = self.hidden;
        match self.cell {
            CellKind::Gru => {
                let hu = row_times(h, &self.tensors[l.u_gates.expect("gru layout")]);
                let zr: Vec<f64> = zrow[..2 * n].iter().zip(&hu).map(|(a, b)| sigmoid(a + b)).collect();
                let (z, r) = zr.split_at(n);
                let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
                let ru = row_times(&rh, &self.tensors[l.u_cand]);
                (0..n)
                    .map(|j| {
                        let c = (zrow[2 * n + j] + ru[j]).tanh();
                        h[j] + z[j] * (c - h[j])
                    })
                    .collect()
            }
            CellKind::Vanilla => {
                let hu = row_times(h, &self.tensors[l.u_cand]);
                zrow.iter().zip(&hu).map(|(a, b)| (a + b).tanh()).collect()
            }
        }
    }

    /// Head logits `h·W_head + b_head`.
    pub fn logits(&self, h: &[f64]) -> [f64; CLASSES] {
        let l = self.layout();
        let v = row_times(h, &self.tensors[l.head_w]);
        let b = self.tensors[l.head_b].data();
        [v[0] + b[0], v[1] + b[1]]
    }
}

/// `v[1×n]·m[n×c]` with the same accumulation order as [`Matrix::matmul`].
fn row_times(v: &[f64], m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (p, &a) in v.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (o, &b) in out.iter_mut().zip(m.row(p)) {
            *o += a * b;
        }
    }
    out
}

/// Full cell update for one raw input frame.
pub fn gru_cell(x: &[f64], h: &[f64], p: &BackboneParams) -> Result<Vec<f64>> {
    if h.len() != p.hidden {
        return shape_err(format!("state of {} for hidden size {}", h.len(), p.hidden));
    }
    let z = p.project(&Matrix::row_vector(x)?)?;
    Ok(p.step(z.row(0), h))
}

/// `softmax(h·W_head + b_head)` as `(P(noise), P(speech))`.
pub fn head(h: &[f64], p: &BackboneParams) -> Result<[f64; CLASSES]> {
    if h.len() != p.hidden {
        return shape_err(format!("state of {} for hidden size {}", h.len(), p.hidden));
    }
    let s = softmax(&p.logits(h));
    Ok([s[0], s[1]])
}

/// Plain time unroll from a zero state; one hidden row per frame.
pub fn rnn_time_forward(slab: &Matrix, p: &BackboneParams) -> Result<Matrix> {
    let z = p.project(slab)?;
    let mut out = Matrix::zeros(slab.rows(), p.hidden);
    let mut h = vec![0.0; p.hidden];
    for t in 0..slab.rows() {
        h = p.step(z.row(t), &h);
        out.row_mut(t).copy_from_slice(&h);
    }
    Ok(out)
}
