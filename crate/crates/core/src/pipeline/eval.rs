use rand::Rng;

use crate::data::{snr_schedule, LabeledExample, Scheme};
use crate::error::{Error, Result};
use crate::exec;
use crate::models::Model;
use crate::seed::{self, tag};

use super::{ExampleFactory, Split};

/// Anything that labels the frames of a mixture.
pub trait FrameClassifier: Sync {
    fn name(&self) -> String;
    fn classify(&self, example: &LabeledExample) -> Result<Vec<u8>>;
}

impl FrameClassifier for Model {
    fn name(&self) -> String {
        self.kind.name().to_string()
    }

    fn classify(&self, example: &LabeledExample) -> Result<Vec<u8>> {
        Ok(self.predict(&example.grid)?.labels)
    }
}

/// Reads the reference labels.
pub struct Oracle;

impl FrameClassifier for Oracle {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn classify(&self, example: &LabeledExample) -> Result<Vec<u8>> {
        Ok(example.labels.clone())
    }
}

/// Fair coin per frame, seeded from the recipe so reruns agree.
pub struct CoinFlip {
    pub seed: u64,
}

impl FrameClassifier for CoinFlip {
    fn name(&self) -> String {
        "coin_flip".into()
    }

    fn classify(&self, example: &LabeledExample) -> Result<Vec<u8>> {
        let r = &example.recipe;
        let mut rng = seed::rng(
            self.seed,
            &[r.speech_clip as u64, r.noise_clip as u64, r.speech_start as u64, r.offset as u64, r.speech_len as u64],
        );
        Ok((0..example.labels.len()).map(|_| rng.random_range(0..2u8)).collect())
    }
}

pub fn frame_accuracy(pred: &[u8], truth: &[u8]) -> Result<f64> {
    Ok(count_matches(pred, truth)? as f64 / truth.len() as f64)
}

fn count_matches(pred: &[u8], truth: &[u8]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predicted labels for {} frames", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Degenerate("no frames to score".into()));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count())
}

/// Rounds to the six decimals reports carry, so aggregates computed here
/// and from a reread CSV agree.
fn quantize(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub scheme: Scheme,
    pub ks: Vec<usize>,
    pub runs: usize,
    /// Test mixtures per (K, run).
    pub mixtures: usize,
    pub seed: u64,
    /// On by default; room sweeps turn it off.
    pub per_frame_shuffle: bool,
    pub split: Split,
}

impl SweepSpec {
    pub fn new(scheme: Scheme, ks: Vec<usize>, runs: usize, mixtures: usize, seed: u64) -> Self {
        Self {
            scheme,
            ks,
            runs,
            mixtures,
            seed,
            per_frame_shuffle: true,
            split: Split::Test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Input(format!("channel counts {:?} must be non-empty and positive", self.ks)));
        }
        if self.runs == 0 || self.mixtures == 0 {
            return Err(Error::Input("runs and mixtures must be positive".into()));
        }
        if self.scheme == Scheme::Explicit {
            return Err(Error::Input("a sweep needs a generated scheme, not explicit".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub scheme: String,
    pub k: usize,
    pub run: usize,
    /// Frame accuracy pooled over the run's mixtures, six decimals.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub model: String,
    pub scheme: String,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and sample standard deviation per (model, scheme, K), in order of
/// first appearance.
pub fn aggregate(rows: &[EvalRow]) -> Result<Vec<AggregateRow>> {
    if rows.is_empty() {
        return Err(Error::Degenerate("no rows to aggregate".into()));
    }
    let mut groups: Vec<(&str, &str, usize, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|g| g.0 == r.model && g.1 == r.scheme && g.2 == r.k)
        {
            Some(g) => g.3.push(r.accuracy),
            None => groups.push((&r.model, &r.scheme, r.k, vec![r.accuracy])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(model, scheme, k, xs)| {
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                model: model.to_string(),
                scheme: scheme.to_string(),
                k,
                mean,
                std,
                n,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Result<Self> {
        for r in &rows {
            if !(0.0..=1.0).contains(&r.accuracy) {
                return Err(Error::Contract(format!("accuracy {} outside [0, 1]", r.accuracy)));
            }
        }
        Ok(Self {
            aggregates: aggregate(&rows)?,
            rows,
        })
    }

    /// Concatenates reports, e.g. one per model.
    pub fn merge(reports: Vec<EvalReport>) -> Result<Self> {
        Self::from_rows(reports.into_iter().flat_map(|r| r.rows).collect())
    }

    /// `scheme,K,run,accuracy`, with a leading `model` column when asked.
    pub fn raw_csv(&self, with_model: bool) -> String {
        let mut s = String::from(if with_model { "model,scheme,K,run,accuracy\n" } else { "scheme,K,run,accuracy\n" });
        for r in &self.rows {
            if with_model {
                s.push_str(&format!("{},", r.model));
            }
            s.push_str(&format!("{},{},{},{:.6}\n", r.scheme, r.k, r.run, r.accuracy));
        }
        s
    }

    /// `scheme,K,mean,std`, with a leading `model` column when asked.
    pub fn aggregate_csv(&self, with_model: bool) -> String {
        let mut s = String::from(if with_model { "model,scheme,K,mean,std\n" } else { "scheme,K,mean,std\n" });
        for a in &self.aggregates {
            if with_model {
                s.push_str(&format!("{},", a.model));
            }
            s.push_str(&format!("{},{},{:.6},{:.6}\n", a.scheme, a.k, a.mean, a.std));
        }
        s
    }

    /// Reads a raw CSV written by [`EvalReport::raw_csv`]. Without a model
    /// column, rows get `default_model`.
    pub fn parse_raw_csv(text: &str, default_model: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let with_model = match lines.next().map(|(_, h)| h.trim()) {
            Some("model,scheme,K,run,accuracy") => true,
            Some("scheme,K,run,accuracy") => false,
            Some(h) => return Err(Error::Parse(format!("unexpected report header `{h}`"))),
            None => return Err(Error::Parse("empty report CSV".into())),
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let bad = || Error::Parse(format!("report CSV line {}: `{line}`", i + 1));
            let mut f: Vec<&str> = line.split(',').map(str::trim).collect();
            let model = if with_model {
                if f.is_empty() {
                    return Err(bad());
                }
                f.remove(0).to_string()
            } else {
                default_model.to_string()
            };
            if f.len() != 4 {
                return Err(bad());
            }
            rows.push(EvalRow {
                model,
                scheme: f[0].to_string(),
                k: f[1].parse().map_err(|_| bad())?,
                run: f[2].parse().map_err(|_| bad())?,
                accuracy: f[3].parse().map_err(|_| bad())?,
            });
        }
        if rows.is_empty() {
            return Err(Error::Parse("report CSV has a header but no rows".into()));
        }
        Self::from_rows(rows)
    }

    /// Reads an aggregate CSV written by [`EvalReport::aggregate_csv`].
    pub fn parse_aggregate_csv(text: &str, default_model: &str) -> Result<Vec<AggregateRow>> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let with_model = match lines.next().map(|(_, h)| h.trim()) {
            Some("model,scheme,K,mean,std") => true,
            Some("scheme,K,mean,std") => false,
            Some(h) => return Err(Error::Parse(format!("unexpected aggregate header `{h}`"))),
            None => return Err(Error::Parse("empty aggregate CSV".into())),
        };
        let mut out = Vec::new();
        for (i, line) in lines {
            let bad = || Error::Parse(format!("aggregate CSV line {}: `{line}`", i + 1));
            let mut f: Vec<&str> = line.split(',').map(str::trim).collect();
            let model = if with_model && !f.is_empty() { f.remove(0).to_string() } else { default_model.to_string() };
            if f.len() != 4 {
                return Err(bad());
            }
            let mean: f64 = f[2].parse().map_err(|_| bad())?;
            let std: f64 = f[3].parse().map_err(|_| bad())?;
            if !mean.is_finite() || !std.is_finite() {
                return Err(bad());
            }
            out.push(AggregateRow {
                model,
                scheme: f[0].to_string(),
                k: f[1].parse().map_err(|_| bad())?,
                mean,
                std,
                n: 0,
            });
        }
        if out.is_empty() {
            return Err(Error::Parse("aggregate CSV has a header but no rows".into()));
        }
        Ok(out)
    }
}

/// Scores `classifier` on a fresh test set for every (K, run).
///
/// Accuracy pools frames across the run's mixtures. Mixture `i` of run `r`
/// at `K` channels is drawn from its own seed, so the set does not depend on
/// which other K values are swept.
pub fn evaluate_sweep(classifier: &dyn FrameClassifier, factory: &ExampleFactory, spec: &SweepSpec) -> Result<EvalReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &k in &spec.ks {
        for run in 0..spec.runs {
            for i in 0..spec.mixtures {
                jobs.push((k, run, i));
            }
        }
    }
    let schedules = spec
        .ks
        .iter()
        .map(|&k| Ok((k, snr_schedule(spec.scheme, k)?)))
        .collect::<Result<Vec<_>>>()?;
    let counts = exec::map(&jobs, |&(k, run, i)| -> Result<(usize, usize)> {
        let schedule = &schedules.iter().find(|s| s.0 == k).expect("schedule per K").1;
        let mut rng = seed::rng(spec.seed, &[tag::TEST, k as u64, run as u64, i as u64]);
        let recipe = factory.draw(schedule, spec.per_frame_shuffle, spec.split, &mut rng)?;
        let example = factory.realize(&recipe)?;
        let pred = classifier.classify(&example)?;
        Ok((count_matches(&pred, &example.labels)?, example.labels.len()))
    });
    let mut rows = Vec::new();
    let mut it = counts.into_iter();
    for &k in &spec.ks {
        for run in 0..spec.runs {
            let (mut hit, mut total) = (0, 0);
            for _ in 0..spec.mixtures {
                let (h, t) = it.next().expect("one result per job")?;
                hit += h;
                total += t;
            }
            rows.push(EvalRow {
                model: classifier.name(),
                scheme: spec.scheme.name().to_string(),
                k,
                run,
                accuracy: quantize(hit as f64 / total as f64),
            });
        }
    }
    EvalReport::from_rows(rows)
}
