use crate::error::{Error, Result};
use crate::exec;
use crate::models::{BackboneParams, Model};
use crate::numerics::{AdamConfig, AdamState, Checkpoint, Matrix, Precision};
use crate::seed::{self, tag};

use super::{DataSource, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    /// Mean of the epoch's batch losses.
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

const CURVE_HEADER: &str = "epoch,train_loss,val_loss,lr";

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = format!("{CURVE_HEADER}\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
    }
    s
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        _ => return Err(Error::Parse(format!("curve CSV must start with `{CURVE_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("curve CSV line {}: `{line}`", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push(CurveRow {
            epoch: f[0].parse().map_err(|_| bad())?,
            train_loss: f[1].parse().map_err(|_| bad())?,
            val_loss: f[2].parse().map_err(|_| bad())?,
            lr: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// Everything needed to continue a run: current weights, optimizer moments,
/// the best snapshot so far and the curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: AdamState,
    /// Epochs completed.
    pub epoch: usize,
    pub best: Model,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub curve: Vec<CurveRow>,
}

impl TrainState {
    /// Freshly initialized weights for `cfg`.
    pub fn init(cfg: &TrainConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(cfg.seed, &[tag::INIT]);
        let params = BackboneParams::init(cfg.cell, input_dim, cfg.hidden, &mut rng).with_input_scale(cfg.input_scale);
        let mut model = Model::new(cfg.kind, params);
        model.handoff = cfg.handoff;
        Ok(Self {
            adam: AdamState::new(&model.params.tensors, cfg.adam),
            best: model.clone(),
            model,
            epoch: 0,
            best_epoch: None,
            best_val: f64::INFINITY,
            curve: Vec::new(),
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        self.model.write_checkpoint(&mut c, "");
        self.best.write_checkpoint(&mut c, "best.");
        c.set_meta("epoch", self.epoch);
        c.set_meta("best_epoch", self.best_epoch.map_or("none".to_string(), |e| e.to_string()));
        c.set_meta("best_val", self.best_val);
        c.set_meta("adam.step", self.adam.step);
        c.set_meta("adam.beta1", self.adam.config.beta1);
        c.set_meta("adam.beta2", self.adam.config.beta2);
        c.set_meta("adam.eps", self.adam.config.eps);
        for (i, name) in self.model.params.names().iter().enumerate() {
            c.push(format!("adam.m.{name}"), self.adam.m[i].clone(), Precision::F64);
            c.push(format!("adam.v.{name}"), self.adam.v[i].clone(), Precision::F64);
        }
        let mut curve = Matrix::zeros(self.curve.len(), 4);
        for (i, r) in self.curve.iter().enumerate() {
            curve.row_mut(i).copy_from_slice(&[r.epoch as f64, r.train_loss, r.val_loss, r.lr]);
        }
        c.push("curve", curve, Precision::F64);
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let model = Model::read_checkpoint(c, "")?;
        let best = Model::read_checkpoint(c, "best.")?;
        let names = model.params.names();
        let moments = |kind: &str| -> Result<Vec<Matrix>> {
            names.iter().map(|n| c.block(&format!("adam.{kind}.{n}")).cloned()).collect()
        };
        let adam = AdamState {
            config: AdamConfig {
                beta1: c.meta_parse("adam.beta1")?,
                beta2: c.meta_parse("adam.beta2")?,
                eps: c.meta_parse("adam.eps")?,
            },
            m: moments("m")?,
            v: moments("v")?,
            step: c.meta_parse("adam.step")?,
        };
        for (p, m) in model.params.tensors.iter().zip(&adam.m) {
            p.check_same(m, "adam moment")?;
        }
        let best_epoch = match c.meta("best_epoch")? {
            "none" => None,
            s => Some(s.parse().map_err(|_| Error::Parse(format!("best_epoch `{s}`")))?),
        };
        let curve_m = c.block("curve")?;
        if curve_m.cols() != 4 && curve_m.rows() > 0 {
            return Err(Error::Parse("curve block must have 4 columns".into()));
        }
        let curve = (0..curve_m.rows())
            .map(|i| {
                let r = curve_m.row(i);
                CurveRow {
                    epoch: r[0] as usize,
                    train_loss: r[1],
                    val_loss: r[2],
                    lr: r[3],
                }
            })
            .collect();
        Ok(Self {
            model,
            adam,
            epoch: c.meta_parse("epoch")?,
            best,
            best_epoch,
            best_val: c.meta_parse("best_val")?,
            curve,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub best: Model,
    pub best_epoch: usize,
    pub state: TrainState,
}

fn grad_norms(state: &TrainState, grads: &[Matrix]) -> String {
    state
        .model
        .params
        .names()
        .iter()
        .zip(grads)
        .map(|(n, g)| format!("{n}={:.3e}", g.norm_sq().sqrt()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs Adam over `cfg.epochs` epochs, scoring the validation set after each
/// and keeping the best snapshot. `hook` sees the state after every epoch.
pub fn train(
    cfg: &TrainConfig,
    data: &dyn DataSource,
    input_dim: usize,
    resume: Option<TrainState>,
    hook: &mut dyn FnMut(&TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut state = match resume {
        Some(s) => s,
        None => TrainState::init(cfg, input_dim)?,
    };
    if state.model.kind.family() != cfg.kind.family() || state.model.params.input_dim != input_dim {
        return Err(Error::Contract(format!(
            "resumed {} network with {} inputs does not match a {} run with {} inputs",
            state.model.kind, state.model.params.input_dim, cfg.kind, input_dim
        )));
    }
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let lr = cfg.lr.lr_at(epoch);
        let mut epoch_loss = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let batch = data.train_batch(epoch, b)?;
            if batch.is_empty() {
                return Err(Error::Input(format!("epoch {epoch} batch {b} is empty")));
            }
            let model = &state.model;
            let results = exec::map(&batch, |e| model.loss_and_gradients(&e.grid, &e.labels));
            let mut loss = 0.0;
            let mut grads: Option<Vec<Matrix>> = None;
            for r in results {
                let (l, g) = r?;
                loss += l;
                match grads.as_mut() {
                    None => grads = Some(g),
                    Some(acc) => {
                        for (a, gi) in acc.iter_mut().zip(&g) {
                            a.add_assign(gi)?;
                        }
                    }
                }
            }
            let mut grads = grads.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            loss *= inv;
            for g in &mut grads {
                g.scale(inv);
            }
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(format!(
                    "epoch {epoch} batch {b}: loss {loss}; grad norms {}",
                    grad_norms(&state, &grads)
                )));
            }
            state.adam.step(&mut state.model.params.tensors, &grads, lr)?;
            epoch_loss += loss;
        }
        let val_loss = data.validation_loss(&state.model, epoch)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("epoch {epoch}: validation loss {val_loss}")));
        }
        if val_loss < state.best_val {
            state.best_val = val_loss;
            state.best_epoch = Some(epoch);
            state.best = state.model.clone();
        }
        state.curve.push(CurveRow {
            epoch,
            train_loss: epoch_loss / cfg.batches_per_epoch as f64,
            val_loss,
            lr,
        });
        state.epoch += 1;
        hook(&state)?;
    }
    let best_epoch = state
        .best_epoch
        .ok_or_else(|| Error::Contract("no epoch was run".into()))?;
    Ok(TrainOutcome {
        best: state.best.clone(),
        best_epoch,
        state,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::{BankSpec, LabeledExample};
    use crate::models::ModelKind;
    use crate::pipeline::{ExampleFactory, Experiment, GeneratedData};

    fn tiny(kind: ModelKind) -> TrainConfig {
        TrainConfig {
            hidden: 8,
            epochs: 3,
            batches_per_epoch: 4,
            batch_size: 4,
            channels: 2,
            validation_size: 8,
            ..TrainConfig::desk(kind)
        }
    }

    fn factory() -> Arc<ExampleFactory> {
        let bank = Arc::new(BankSpec { seed: 5, speech: 6, noise: 4 }.build());
        Arc::new(ExampleFactory::new(bank, Experiment::Simple).unwrap())
    }

    /// Serves real batches but reports a scripted validation loss.
    struct Scripted<'a> {
        inner: &'a GeneratedData,
        val: Vec<f64>,
    }

    impl DataSource for Scripted<'_> {
        fn train_batch(&self, epoch: usize, batch: usize) -> Result<Vec<LabeledExample>> {
            self.inner.train_batch(epoch, batch)
        }

        fn validation_loss(&self, _: &Model, epoch: usize) -> Result<f64> {
            Ok(self.val[epoch])
        }
    }

    #[test]
    fn curve_csv_round_trips() {
        let rows = vec![
            CurveRow { epoch: 0, train_loss: 0.693, val_loss: 0.61, lr: 1e-3 },
            CurveRow { epoch: 1, train_loss: 0.1 + 0.2, val_loss: 1.0 / 3.0, lr: 2.5e-4 },
        ];
        let text = curve_csv(&rows);
        assert!(text.starts_with("epoch,train_loss,val_loss,lr\n"));
        assert_eq!(parse_curve_csv(&text).unwrap(), rows);
        assert!(parse_curve_csv("epoch,loss\n").is_err());
        assert!(parse_curve_csv("epoch,train_loss,val_loss,lr\n1,2,x,4\n").is_err());
    }

    #[test]
    fn validation_picks_the_lowest_epoch() {
        let f = factory();
        let cfg = TrainConfig { epochs: 5, ..tiny(ModelKind::Mvn) };
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let scripted = Scripted { inner: &data, val: vec![0.9, 0.5, 0.3, 0.4, 0.35] };
        let mut snapshots = Vec::new();
        let out = train(&cfg, &scripted, f.input_dim(), None, &mut |s| {
            snapshots.push(s.model.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(out.best_epoch, 2);
        assert_eq!(out.best, snapshots[2]);
        assert_ne!(out.best, out.state.model);
        assert_eq!(out.state.curve.iter().map(|r| r.val_loss).collect::<Vec<_>>(), scripted.val);
    }

    #[test]
    fn ties_keep_the_earlier_epoch() {
        let f = factory();
        let cfg = tiny(ModelKind::AvgInput);
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let scripted = Scripted { inner: &data, val: vec![0.5, 0.5, 0.7] };
        let out = train(&cfg, &scripted, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        assert_eq!(out.best_epoch, 0);
    }

    #[test]
    fn lr_follows_the_step_schedule() {
        let f = factory();
        let mut cfg = tiny(ModelKind::Mvn);
        cfg.lr.period = 1;
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let out = train(&cfg, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        let lrs: Vec<f64> = out.state.curve.iter().map(|r| r.lr).collect();
        assert_eq!(lrs, vec![1e-3, 2.5e-4, 6.25e-5]);
    }

    #[test]
    fn state_checkpoint_round_trips() {
        let f = factory();
        let cfg = TrainConfig { epochs: 1, ..tiny(ModelKind::MaxOutput) };
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let out = train(&cfg, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        let bytes = out.state.to_checkpoint().to_bytes();
        let back = TrainState::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, out.state);
        let fresh = TrainState::init(&cfg, f.input_dim()).unwrap();
        let back = TrainState::from_checkpoint(&fresh.to_checkpoint()).unwrap();
        assert_eq!(back, fresh);
    }

    #[test]
    fn resume_matches_an_uninterrupted_run() {
        let f = factory();
        let cfg = tiny(ModelKind::Mvn);
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let full = train(&cfg, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        let first = TrainConfig { epochs: 1, ..cfg.clone() };
        let part = train(&first, &data, f.input_dim(), None, &mut |_| Ok(())).unwrap();
        let saved = TrainState::from_checkpoint(&Checkpoint::from_bytes(&part.state.to_checkpoint().to_bytes()).unwrap())
            .unwrap();
        let resumed = train(&cfg, &data, f.input_dim(), Some(saved), &mut |_| Ok(())).unwrap();
        assert_eq!(resumed.state, full.state);
    }

    #[test]
    fn mismatched_resume_is_rejected() {
        let f = factory();
        let cfg = tiny(ModelKind::Mvn);
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let other = TrainState::init(&tiny(ModelKind::AvgOutput), f.input_dim()).unwrap();
        assert!(matches!(
            train(&cfg, &data, f.input_dim(), Some(other), &mut |_| Ok(())),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_loss_reports_where() {
        let f = factory();
        let cfg = tiny(ModelKind::Mvn);
        let data = GeneratedData::new(f.clone(), &cfg).unwrap();
        let mut state = TrainState::init(&cfg, f.input_dim()).unwrap();
        state.model.params.tensors[0].data_mut()[0] = f64::NAN;
        match train(&cfg, &data, f.input_dim(), Some(state), &mut |_| Ok(())) {
            Err(Error::Diverged(msg)) => {
                assert!(msg.contains("epoch 0 batch 0"), "{msg}");
                assert!(msg.contains("cell.w_in="), "{msg}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
