use super::*;
use crate::dsp::stack_channels;
use crate::numerics::gradcheck::{assert_grad_close, numeric_grad};
use crate::numerics::{softmax, Graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(cell: CellKind, f: usize, h: usize, seed: u64) -> BackboneParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = BackboneParams::init(cell, f, h, &mut rng);
    // Non-zero biases so every tensor is exercised.
    for (t, name) in p.tensors.iter_mut().zip(cell.tensor_names()) {
        if name.ends_with("bias") || name.ends_with(".b") {
            for v in t.data_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
    }
    p
}

fn slab(t: usize, f: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(t, f, (0..t * f).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap()
}

fn grid(k: usize, t: usize, f: usize, seed: u64) -> SpectraGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slabs: Vec<Matrix> = (0..k).map(|_| slab(t, f, &mut rng)).collect();
    stack_channels(&slabs).unwrap()
}

#[test]
fn zero_head_is_uniform() {
    let p = BackboneParams::zeros(CellKind::Gru, 5, 4);
    assert_eq!(head(&[0.3, -1.0, 2.0, 0.5], &p).unwrap(), [0.5, 0.5]);
}

#[test]
fn head_matches_manual_softmax() {
    let p = params(CellKind::Gru, 5, 6, 1);
    let h = [0.1, -0.4, 0.9, 0.0, -0.2, 0.7];
    let got = head(&h, &p).unwrap();
    let w = p.tensor("head.w").unwrap();
    let b = p.tensor("head.b").unwrap();
    let logit = |c: usize| (0..6).map(|j| h[j] * w.get(j, c)).sum::<f64>() + b.get(0, c);
    let (a, bb) = (logit(0), logit(1));
    let m = a.max(bb);
    let z = (a - m).exp() + (bb - m).exp();
    assert!((got[0] - (a - m).exp() / z).abs() < 1e-12);
    assert!((got[1] - (bb - m).exp() / z).abs() < 1e-12);
    assert!((got[0] + got[1] - 1.0).abs() < 1e-12);
    assert!(head(&h[..5], &p).is_err());
}

#[test]
fn single_step_unroll() {
    let p = params(CellKind::Gru, 7, 5, 2);
    let x = slab(1, 7, &mut ChaCha8Rng::seed_from_u64(3));
    let h = rnn_time_forward(&x, &p).unwrap();
    assert_eq!(h.row(0), &gru_cell(x.row(0), &[0.0; 5], &p).unwrap()[..]);
}

#[test]
fn zero_parameters_keep_zero_state() {
    for cell in [CellKind::Gru, CellKind::Vanilla] {
        let p = BackboneParams::zeros(cell, 4, 3);
        let x = slab(6, 4, &mut ChaCha8Rng::seed_from_u64(4));
        assert!(rnn_time_forward(&x, &p).unwrap().data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn three_step_unroll_matches_manual_calls() {
    for cell in [CellKind::Gru, CellKind::Vanilla] {
        let p = params(cell, 6, 4, 5);
        let x = slab(3, 6, &mut ChaCha8Rng::seed_from_u64(6));
        let h1 = gru_cell(x.row(0), &[0.0; 4], &p).unwrap();
        let h2 = gru_cell(x.row(1), &h1, &p).unwrap();
        let h3 = gru_cell(x.row(2), &h2, &p).unwrap();
        let h = rnn_time_forward(&x, &p).unwrap();
        assert_eq!(h.data(), [h1, h2, h3].concat().as_slice());
    }
}

#[test]
fn shape_errors() {
    let p = params(CellKind::Gru, 6, 4, 7);
    assert!(matches!(rnn_time_forward(&Matrix::zeros(3, 5), &p), Err(Error::Shape(_))));
    assert!(gru_cell(&[0.0; 6], &[0.0; 3], &p).is_err());
    let m = Model::new(ModelKind::Mvn, p);
    assert!(m.predict(&grid(2, 3, 5, 1)).is_err());
    assert!(m.loss_and_gradients(&grid(2, 3, 6, 1), &[0, 1]).is_err());
}

/// Finite differences of `loss(params)` for every tensor.
fn numeric_tensor_grads(p: &BackboneParams, loss: impl Fn(&BackboneParams) -> f64) -> Vec<Matrix> {
    (0..p.tensors.len())
        .map(|i| {
            numeric_grad(&p.tensors[i], 1e-6, |m| {
                let mut q = p.clone();
                q.tensors[i] = m.clone();
                loss(&q)
            })
        })
        .collect()
}

#[test]
fn gru_cell_gradients() {
    for cell in [CellKind::Gru, CellKind::Vanilla] {
        let p = params(cell, 6, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = slab(1, 6, &mut rng);
        let h0 = Matrix::from_vec(1, 8, (0..8).map(|_| rng.random_range(-0.9..0.9)).collect()).unwrap();
        let wts = Matrix::from_vec(1, 8, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let objective = |x: &Matrix, h: &Matrix, p: &BackboneParams| -> f64 {
            let out = gru_cell(x.row(0), h.row(0), p).unwrap();
            out.iter().zip(wts.data()).map(|(a, b)| a * b).sum()
        };

        let mut g = Graph::new();
        let b = graph::Bound::new(&mut g, &p);
        let l = p.layout();
        let xv = g.param(x.clone());
        let xw = g.matmul(xv, b.vars[l.w_in]).unwrap();
        let z = g.add_row(xw, b.vars[l.bias]).unwrap();
        let hv = g.param(h0.clone());
        let out = b.step(&mut g, z, hv).unwrap();
        let wv = g.constant(wts.clone());
        let prod = g.mul(out, wv).unwrap();
        let root = g.sum(prod);
        assert!((g.value(root).get(0, 0) - objective(&x, &h0, &p)).abs() < 1e-14);
        let grads = g.backward(root).unwrap();

        assert_grad_close(grads.get(xv).unwrap(), &numeric_grad(&x, 1e-6, |m| objective(m, &h0, &p)), 1e-4);
        assert_grad_close(grads.get(hv).unwrap(), &numeric_grad(&h0, 1e-6, |m| objective(&x, m, &p)), 1e-4);
        let numeric = numeric_tensor_grads(&p, |q| objective(&x, &h0, q));
        for (i, name) in p.names().iter().enumerate() {
            if name.starts_with("head") {
                assert!(grads.get(b.vars[i]).is_none());
                continue;
            }
            assert_grad_close(grads.get(b.vars[i]).unwrap(), &numeric[i], 1e-4);
        }
    }
}

#[test]
fn head_gradients() {
    let p = params(CellKind::Gru, 3, 8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h0 = Matrix::from_vec(1, 8, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let objective = |h: &Matrix, p: &BackboneParams| -head(h.row(0), p).unwrap()[1].ln();
    let mut g = Graph::new();
    let b = graph::Bound::new(&mut g, &p);
    let hv = g.param(h0.clone());
    let lg = b.logits(&mut g, hv).unwrap();
    let root = g.softmax_ce(lg, &[1]).unwrap();
    assert!((g.value(root).get(0, 0) - objective(&h0, &p)).abs() < 1e-12);
    let grads = g.backward(root).unwrap();
    assert_grad_close(grads.get(hv).unwrap(), &numeric_grad(&h0, 1e-6, |m| objective(m, &p)), 1e-4);
    let numeric = numeric_tensor_grads(&p, |q| objective(&h0, q));
    let l = p.layout();
    for i in [l.head_w, l.head_b] {
        assert_grad_close(grads.get(b.vars[i]).unwrap(), &numeric[i], 1e-4);
    }
}

#[test]
fn full_model_gradients() {
    let gr = grid(3, 4, 6, 12);
    let y = vec![0, 1, 1, 0];
    for kind in [ModelKind::Mvn, ModelKind::AvgInput, ModelKind::AvgOutput] {
        for cell in [CellKind::Gru, CellKind::Vanilla] {
            for handoff in [Handoff::Serpentine, Handoff::Literal] {
                let mut m = Model::new(kind, params(cell, 6, 8, 13).with_input_scale(0.7));
                m.handoff = handoff;
                let (loss, grads) = m.loss_and_gradients(&gr, &y).unwrap();
                assert!((loss - m.loss(&gr, &y).unwrap()).abs() < 1e-12);
                let numeric = numeric_tensor_grads(&m.params, |q| {
                    Model { params: q.clone(), ..m.clone() }.loss(&gr, &y).unwrap()
                });
                for (a, n) in grads.iter().zip(&numeric) {
                    assert_grad_close(a, n, 1e-4);
                }
            }
        }
    }
}

/// Flattened single-sequence oracle: time unroll over the serpentine order,
/// reading every K-th state.
fn serpentine_oracle(gr: &SpectraGrid, p: &BackboneParams) -> Matrix {
    let k = gr.channels();
    let h = rnn_time_forward(&gr.serpentine(), p).unwrap();
    let mut probs = Matrix::zeros(gr.frames(), 2);
    for t in 0..gr.frames() {
        probs.row_mut(t).copy_from_slice(&softmax(&p.logits(h.row(t * k + k - 1))));
    }
    probs
}

#[test]
fn serpentine_equivalence_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..50 {
        let (k, t) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let cell = if case % 5 == 4 { CellKind::Vanilla } else { CellKind::Gru };
        let p = params(cell, 9, 6, case);
        let gr = grid(k, t, 9, 100 + case);
        let pred = mvn_forward(&gr, &p, Handoff::Serpentine).unwrap();
        let oracle = serpentine_oracle(&gr, &p);
        assert_eq!(pred.probs, oracle, "K={k} T={t}");
        assert_eq!(pred, FramePrediction::from_probs(oracle));
    }
}

#[test]
fn one_channel_reduces_to_time_unroll() {
    let p = params(CellKind::Gru, 8, 5, 15);
    let gr = grid(1, 7, 8, 16);
    let single = single_channel_forward(&gr.channel(0), &p).unwrap();
    for handoff in [Handoff::Serpentine, Handoff::Literal] {
        assert_eq!(mvn_forward(&gr, &p, handoff).unwrap(), single);
    }
}

#[test]
fn literal_handoff_matches_manual_recurrence() {
    let p = params(CellKind::Gru, 5, 4, 17);
    let gr = grid(3, 5, 5, 18);
    let mut first = vec![0.0; 4];
    let mut expect = Vec::new();
    for t in 0..5 {
        let mut h = gru_cell(gr.frame(0, t), &first, &p).unwrap();
        first.clone_from(&h);
        for k in 1..3 {
            h = gru_cell(gr.frame(k, t), &h, &p).unwrap();
        }
        expect.extend(h);
    }
    assert_eq!(mvn_states(&gr, &p, Handoff::Literal).unwrap().data(), &expect[..]);
    assert_ne!(
        mvn_states(&gr, &p, Handoff::Serpentine).unwrap(),
        mvn_states(&gr, &p, Handoff::Literal).unwrap()
    );
}

#[test]
fn any_channel_count_gives_t_by_two() {
    let p = params(CellKind::Gru, 10, 6, 19);
    for k in [1, 4, 30] {
        let gr = grid(k, 5, 10, k as u64);
        for kind in ModelKind::ALL {
            let pred = Model::new(kind, p.clone()).predict(&gr).unwrap();
            assert_eq!(pred.probs.shape(), (5, 2));
            assert_eq!(pred.labels.len(), 5);
            for t in 0..5 {
                assert!((pred.probs.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn baselines_with_identical_channels_match_single_channel() {
    let p = params(CellKind::Gru, 8, 6, 20);
    let base = grid(1, 6, 8, 21);
    let single = single_channel_forward(&base.channel(0), &p).unwrap();
    for k in [1, 2, 5, 13] {
        let copies = vec![base.channel(0); k];
        let gr = stack_channels(&copies).unwrap();
        for kind in [ModelKind::AvgInput, ModelKind::AvgOutput, ModelKind::MaxOutput] {
            let pred = Model::new(kind, p.clone()).predict(&gr).unwrap();
            assert_eq!(pred.labels, single.labels, "{kind} K={k}");
            for (a, b) in pred.probs.data().iter().zip(single.probs.data()) {
                assert!((a - b).abs() < 1e-9, "{kind} K={k}");
            }
        }
    }
}

#[test]
fn averaging_input_composes_by_hand() {
    let p = params(CellKind::Gru, 7, 5, 22);
    let gr = grid(2, 6, 7, 23);
    let (a, b) = (gr.channel(0), gr.channel(1));
    let mean = Matrix::from_vec(6, 7, a.data().iter().zip(b.data()).map(|(x, y)| (x + y) / 2.0).collect()).unwrap();
    let oracle = single_channel_forward(&mean, &p).unwrap();
    let got = avg_input_forward(&gr, &p).unwrap();
    for (x, y) in got.probs.data().iter().zip(oracle.probs.data()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn output_fusion_arithmetic() {
    let a = Matrix::from_rows(&[&[0.9, 0.1]]).unwrap();
    let b = Matrix::from_rows(&[&[0.2, 0.8]]).unwrap();
    let avg = fuse_average(&[a.clone(), b.clone()]).unwrap();
    assert!((avg.probs.get(0, 0) - 0.55).abs() < 1e-15 && (avg.probs.get(0, 1) - 0.45).abs() < 1e-15);
    assert_eq!(avg.labels, vec![0]);
    let max = fuse_max(&[a.clone(), b]).unwrap();
    assert_eq!(max.labels, vec![0]);
    assert_eq!(max.probs, a);
    // A confident second channel wins; equal maxima go to the lower channel.
    let c = Matrix::from_rows(&[&[0.05, 0.95]]).unwrap();
    assert_eq!(fuse_max(&[a.clone(), c]).unwrap().labels, vec![1]);
    let d = Matrix::from_rows(&[&[0.1, 0.9]]).unwrap();
    assert_eq!(fuse_max(&[a.clone(), d.clone()]).unwrap().probs, a);
    assert_eq!(fuse_max(&[d.clone(), a]).unwrap().probs, d);
    let tie = Matrix::from_rows(&[&[0.5, 0.5]]).unwrap();
    assert_eq!(fuse_max(std::slice::from_ref(&tie)).unwrap().labels, vec![0]);
    assert_eq!(FramePrediction::from_probs(tie).labels, vec![0]);
}

#[test]
fn max_and_average_agree_for_one_channel() {
    let p = params(CellKind::Gru, 6, 5, 24);
    let gr = grid(1, 8, 6, 25);
    assert_eq!(avg_output_forward(&gr, &p).unwrap(), max_output_forward(&gr, &p).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn averaged_rows_stay_distributions(k in 1usize..6, t in 1usize..5, seed in any::<u64>()) {
        let p = params(CellKind::Gru, 4, 3, seed);
        let pred = avg_output_forward(&grid(k, t, 4, seed ^ 7), &p).unwrap();
        for r in 0..t {
            prop_assert!((pred.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn checkpoint_round_trip_and_family_switch() {
    let mut m = Model::new(ModelKind::AvgOutput, params(CellKind::Vanilla, 6, 4, 26).with_input_scale(0.05));
    m.handoff = Handoff::Literal;
    let bytes = m.to_checkpoint().to_bytes();
    let back = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.as_kind(ModelKind::MaxOutput).unwrap().kind, ModelKind::MaxOutput);
    assert!(back.as_kind(ModelKind::Mvn).is_err());
    let mut c = m.to_checkpoint();
    c.set_meta("cell", "gru");
    assert!(Model::from_checkpoint(&c).is_err());
}

#[test]
fn init_is_bounded_and_deterministic() {
    let a = BackboneParams::init(CellKind::Gru, 513, 32, &mut ChaCha8Rng::seed_from_u64(1));
    let b = BackboneParams::init(CellKind::Gru, 513, 32, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(a, b);
    let bound = 1.0 / 513f64.sqrt();
    assert!(a.tensors[0].data().iter().all(|v| v.abs() < bound));
    assert!(a.tensor("cell.bias").unwrap().data().iter().all(|&v| v == 0.0));
    assert_eq!(a.parameter_count(), 513 * 96 + 32 * 64 + 32 * 32 + 96 + 64 + 2);
}

#[test]
fn public_step_gradients_match_finite_differences() {
    let p = params(CellKind::Gru, 6, 8, 30).with_input_scale(0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = slab(1, 6, &mut rng);
    let h = Matrix::from_vec(1, 8, (0..8).map(|_| rng.random_range(-0.9..0.9)).collect()).unwrap();
    let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let objective = |x: &Matrix, h: &Matrix, p: &BackboneParams| -> f64 {
        gru_cell(x.row(0), h.row(0), p).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let (value, g) = cell_vjp(x.row(0), h.row(0), &p, &w).unwrap();
    assert!((value - objective(&x, &h, &p)).abs() < 1e-14);
    let row = |v: &[f64]| Matrix::row_vector(v).unwrap();
    assert_grad_close(&row(&g.input), &numeric_grad(&x, 1e-6, |m| objective(m, &h, &p)), 1e-4);
    assert_grad_close(&row(&g.state), &numeric_grad(&h, 1e-6, |m| objective(&x, m, &p)), 1e-4);
    for (a, n) in g.params.iter().zip(numeric_tensor_grads(&p, |q| objective(&x, &h, q))) {
        assert_grad_close(a, &n, 1e-4);
    }

    let (nll, g) = head_nll_grad(h.row(0), &p, 0).unwrap();
    assert!((nll + head(h.row(0), &p).unwrap()[0].ln()).abs() < 1e-12);
    assert!(g.input.is_empty());
    let numeric = numeric_tensor_grads(&p, |q| -head(h.row(0), q).unwrap()[0].ln());
    for (a, n) in g.params.iter().zip(&numeric) {
        assert_grad_close(a, n, 1e-4);
    }
    assert!(cell_vjp(x.row(0), &[0.0; 3], &p, &w).is_err());
}
