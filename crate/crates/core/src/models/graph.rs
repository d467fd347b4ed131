//! Recorded forward passes for training. Values match the inference paths in
//! [`super::fusion`] operation for operation.

use crate::dsp::SpectraGrid;
use crate::error::{shape_err, Result};
use crate::numerics::{Graph, Matrix, Var};

use super::backbone::{BackboneParams, CellKind};
use super::fusion::Handoff;
use super::Family;

pub(crate) struct Bound<'a> {
    pub p: &'a BackboneParams,
    pub vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    pub fn new(g: &mut Graph, p: &'a BackboneParams) -> Self {
        let vars = p.tensors.iter().map(|t| g.param(t.clone())).collect();
        Self { p, vars }
    }

    fn var(&self, i: usize) -> Var {
        self.vars[i]
    }

    pub fn project(&self, g: &mut Graph, slab: &Matrix) -> Result<Var> {
        self.p.check_slab(slab)?;
        let l = self.p.layout();
        let x = g.constant(self.p.scaled(slab));
        let xw = g.matmul(x, self.var(l.w_in))?;
        g.add_row(xw, self.var(l.bias))
    }

    pub fn step(&self, g: &mut Graph, zrow: Var, h: Var) -> Result<Var> {
        let l = self.p.layout();
        let n = self.p.hidden;
        match self.p.cell {
            CellKind::Gru => {
                let ug = self.var(l.u_gates.expect("gru layout"));
                let xg = g.slice_cols(zrow, 0, 2 * n)?;
                let hu = g.matmul(h, ug)?;
                let pre = g.add(xg, hu)?;
                let zr = g.sigmoid(pre);
                let z = g.slice_cols(zr, 0, n)?;
                let r = g.slice_cols(zr, n, n)?;
                let rh = g.mul(r, h)?;
                let ru = g.matmul(rh, self.var(l.u_cand))?;
                let xc = g.slice_cols(zrow, 2 * n, n)?;
                let cpre = g.add(xc, ru)?;
                let c = g.tanh(cpre);
                let diff = g.sub(c, h)?;
                let upd = g.mul(z, diff)?;
                g.add(h, upd)
            }
            CellKind::Vanilla => {
                let hu = g.matmul(h, self.var(l.u_cand))?;
                let pre = g.add(zrow, hu)?;
                Ok(g.tanh(pre))
            }
        }
    }

    pub fn zero_state(&self, g: &mut Graph) -> Var {
        g.constant(Matrix::zeros(1, self.p.hidden))
    }

    /// Logits for stacked states `[T × d_h]`.
    pub fn logits(&self, g: &mut Graph, states: Var) -> Result<Var> {
        let l = self.p.layout();
        let hw = g.matmul(states, self.var(l.head_w))?;
        g.add_row(hw, self.var(l.head_b))
    }

    /// Time unroll of one slab; returns the stacked states.
    pub fn unroll(&self, g: &mut Graph, slab: &Matrix) -> Result<Var> {
        let z = self.project(g, slab)?;
        let mut h = self.zero_state(g);
        let mut states = Vec::with_capacity(slab.rows());
        for t in 0..slab.rows() {
            let zr = g.slice_row(z, t)?;
            h = self.step(g, zr, h)?;
            states.push(h);
        }
        g.concat_rows(&states)
    }

    pub fn mvn_states(&self, g: &mut Graph, grid: &SpectraGrid, handoff: Handoff) -> Result<Var> {
        let proj = (0..grid.channels())
            .map(|c| self.project(g, &grid.channel(c)))
            .collect::<Result<Vec<_>>>()?;
        let zero = self.zero_state(g);
        let (mut last, mut first) = (zero, zero);
        let mut states = Vec::with_capacity(grid.frames());
        for t in 0..grid.frames() {
            let zr = g.slice_row(proj[0], t)?;
            let prev = match handoff {
                Handoff::Serpentine => last,
                Handoff::Literal => first,
            };
            let mut h = self.step(g, zr, prev)?;
            first = h;
            for &z in &proj[1..] {
                let zr = g.slice_row(z, t)?;
                h = self.step(g, zr, h)?;
            }
            states.push(h);
            last = h;
        }
        g.concat_rows(&states)
    }
}

/// Gradients of a scalar objective of one cell step or one head evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGradients {
    /// With respect to the raw input frame; empty for the head.
    pub input: Vec<f64>,
    pub state: Vec<f64>,
    /// One per parameter tensor, zero where the objective does not reach.
    pub params: Vec<Matrix>,
}

fn collect(g: &Graph, b: &Bound, input: Option<Var>, state: Var, root: Var) -> Result<(f64, StepGradients)> {
    let mut grads = g.backward(root)?;
    let params = b
        .vars
        .iter()
        .zip(&b.p.tensors)
        .map(|(v, t)| grads.take_or_zeros(*v, t.shape()))
        .collect();
    Ok((
        g.value(root).get(0, 0),
        StepGradients {
            input: input.map_or_else(Vec::new, |x| grads.take_or_zeros(x, g.shape(x)).into_data()),
            state: grads.take_or_zeros(state, (1, b.p.hidden)).into_data(),
            params,
        },
    ))
}

/// `upstream · gru_cell(x, h, p)` and its gradients.
pub fn cell_vjp(x: &[f64], h: &[f64], p: &BackboneParams, upstream: &[f64]) -> Result<(f64, StepGradients)> {
    if h.len() != p.hidden || upstream.len() != p.hidden || x.len() != p.input_dim {
        return shape_err(format!(
            "cell_vjp: input {}, state {}, upstream {} for a {}→{} cell",
            x.len(),
            h.len(),
            upstream.len(),
            p.input_dim,
            p.hidden
        ));
    }
    let mut g = Graph::new();
    let b = Bound::new(&mut g, p);
    let l = p.layout();
    let xv = g.param(Matrix::row_vector(x)?);
    let xs = g.affine(xv, p.input_scale, 0.0);
    let xw = g.matmul(xs, b.vars[l.w_in])?;
    let z = g.add_row(xw, b.vars[l.bias])?;
    let hv = g.param(Matrix::row_vector(h)?);
    let out = b.step(&mut g, z, hv)?;
    let w = g.constant(Matrix::row_vector(upstream)?);
    let prod = g.mul(out, w)?;
    let root = g.sum(prod);
    collect(&g, &b, Some(xv), hv, root)
}

/// `−ln head(h, p)[label]` and its gradients.
pub fn head_nll_grad(h: &[f64], p: &BackboneParams, label: usize) -> Result<(f64, StepGradients)> {
    if h.len() != p.hidden {
        return shape_err(format!("state of {} for hidden size {}", h.len(), p.hidden));
    }
    let mut g = Graph::new();
    let b = Bound::new(&mut g, p);
    let hv = g.param(Matrix::row_vector(h)?);
    let lg = b.logits(&mut g, hv)?;
    let root = g.softmax_ce(lg, &[label])?;
    collect(&g, &b, None, hv, root)
}

/// Mean per-frame cross-entropy of the trained objective and its gradient
/// for every backbone tensor.
///
/// Per-channel training averages the single-channel losses of all channels.
pub(crate) fn loss_and_gradients(
    p: &BackboneParams,
    family: Family,
    handoff: Handoff,
    grid: &SpectraGrid,
    labels: &[u8],
) -> Result<(f64, Vec<Matrix>)> {
    if labels.len() != grid.frames() {
        return shape_err(format!("{} labels for {} frames", labels.len(), grid.frames()));
    }
    if grid.channels() == 0 || grid.frames() == 0 {
        return shape_err("empty grid");
    }
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let mut g = Graph::new();
    let b = Bound::new(&mut g, p);
    let loss = match family {
        Family::Mvn => {
            let s = b.mvn_states(&mut g, grid, handoff)?;
            let lg = b.logits(&mut g, s)?;
            g.softmax_ce(lg, &labels)?
        }
        Family::AvgInput => {
            let s = b.unroll(&mut g, &grid.channel_mean())?;
            let lg = b.logits(&mut g, s)?;
            g.softmax_ce(lg, &labels)?
        }
        Family::PerChannel => {
            let mut total = None;
            for c in 0..grid.channels() {
                let s = b.unroll(&mut g, &grid.channel(c))?;
                let lg = b.logits(&mut g, s)?;
                let ce = g.softmax_ce(lg, &labels)?;
                total = Some(match total {
                    None => ce,
                    Some(acc) => g.add(acc, ce)?,
                });
            }
            let total = total.expect("at least one channel");
            g.affine(total, 1.0 / grid.channels() as f64, 0.0)
        }
    };
    let value = g.value(loss).get(0, 0);
    let mut grads = g.backward(loss)?;
    let out = b
        .vars
        .iter()
        .zip(&p.tensors)
        .map(|(&v, t)| grads.take_or_zeros(v, t.shape()))
        .collect();
    Ok((value, out))
}
