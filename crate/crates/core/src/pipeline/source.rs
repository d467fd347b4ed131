use std::sync::Arc;

use crate::data::manifest::Manifest;
use crate::data::{LabeledExample, MixtureRecipe};
use crate::error::{Error, Result};
use crate::exec;
use crate::models::Model;
use crate::seed::{self, tag};

use super::{ExampleFactory, Split, TrainConfig};

/// Supplies training batches and scores a model on held-out data.
pub trait DataSource: Sync {
    fn train_batch(&self, epoch: usize, batch: usize) -> Result<Vec<LabeledExample>>;
    fn validation_loss(&self, model: &Model, epoch: usize) -> Result<f64>;
}

fn mean_loss(model: &Model, examples: &[LabeledExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("empty validation set".into()));
    }
    let losses = exec::map(examples, |e| model.loss(&e.grid, &e.labels));
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(total / examples.len() as f64)
}

fn realize_all(factory: &ExampleFactory, recipes: &[MixtureRecipe]) -> Result<Vec<LabeledExample>> {
    exec::map(recipes, |r| factory.realize(r)).into_iter().collect()
}

/// Mixtures generated on the fly from seed-indexed recipes.
pub struct GeneratedData {
    factory: Arc<ExampleFactory>,
    cfg: TrainConfig,
    validation: Vec<LabeledExample>,
}

impl GeneratedData {
    pub fn new(factory: Arc<ExampleFactory>, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut me = Self {
            factory,
            cfg: cfg.clone(),
            validation: Vec::new(),
        };
        me.validation = realize_all(&me.factory, &me.validation_recipes()?)?;
        Ok(me)
    }

    pub fn train_recipe(&self, epoch: usize, batch: usize, index: usize) -> Result<MixtureRecipe> {
        let e = if self.cfg.resample_each_epoch { epoch } else { 0 };
        let mut rng = seed::rng(self.cfg.seed, &[tag::TRAIN, e as u64, batch as u64, index as u64]);
        self.factory
            .draw(&self.cfg.schedule(), self.cfg.per_frame_shuffle, Split::Train, &mut rng)
    }

    /// All training recipes in the order the trainer consumes them.
    pub fn train_recipes(&self) -> Result<Vec<MixtureRecipe>> {
        let epochs = if self.cfg.resample_each_epoch { self.cfg.epochs } else { 1 };
        let mut out = Vec::with_capacity(epochs * self.cfg.batches_per_epoch * self.cfg.batch_size);
        for e in 0..epochs {
            for b in 0..self.cfg.batches_per_epoch {
                for i in 0..self.cfg.batch_size {
                    out.push(self.train_recipe(e, b, i)?);
                }
            }
        }
        Ok(out)
    }

    pub fn validation_recipes(&self) -> Result<Vec<MixtureRecipe>> {
        (0..self.cfg.validation_size)
            .map(|i| {
                let mut rng = seed::rng(self.cfg.seed, &[tag::VALIDATION, i as u64]);
                self.factory
                    .draw(&self.cfg.schedule(), self.cfg.per_frame_shuffle, Split::Train, &mut rng)
            })
            .collect()
    }
}

impl DataSource for GeneratedData {
    fn train_batch(&self, epoch: usize, batch: usize) -> Result<Vec<LabeledExample>> {
        let recipes = (0..self.cfg.batch_size)
            .map(|i| self.train_recipe(epoch, batch, i))
            .collect::<Result<Vec<_>>>()?;
        realize_all(&self.factory, &recipes)
    }

    fn validation_loss(&self, model: &Model, _epoch: usize) -> Result<f64> {
        mean_loss(model, &self.validation)
    }
}

/// Recipes read from dataset manifests.
///
/// Batch `b` of epoch `e` takes recipes `(e·B + b)·S ..` of the training
/// manifest, wrapping around when the manifest is shorter than the run.
pub struct ManifestData {
    factory: Arc<ExampleFactory>,
    train: Vec<MixtureRecipe>,
    batches_per_epoch: usize,
    batch_size: usize,
    validation: Vec<LabeledExample>,
}

impl ManifestData {
    pub fn new(factory: Arc<ExampleFactory>, cfg: &TrainConfig, train: &Manifest, validation: &Manifest) -> Result<Self> {
        cfg.validate()?;
        if train.recipes.is_empty() {
            return Err(Error::Input("training manifest has no recipes".into()));
        }
        Ok(Self {
            validation: realize_all(&factory, &validation.recipes)?,
            factory,
            train: train.recipes.clone(),
            batches_per_epoch: cfg.batches_per_epoch,
            batch_size: cfg.batch_size,
        })
    }
}

impl DataSource for ManifestData {
    fn train_batch(&self, epoch: usize, batch: usize) -> Result<Vec<LabeledExample>> {
        let start = (epoch * self.batches_per_epoch + batch) * self.batch_size;
        let recipes: Vec<MixtureRecipe> = (start..start + self.batch_size)
            .map(|i| self.train[i % self.train.len()].clone())
            .collect();
        realize_all(&self.factory, &recipes)
    }

    fn validation_loss(&self, model: &Model, _epoch: usize) -> Result<f64> {
        mean_loss(model, &self.validation)
    }
}
