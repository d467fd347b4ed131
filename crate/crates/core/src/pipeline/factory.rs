use std::sync::Arc;

use rand::Rng;

use crate::data::{label_channels, ClipBank, LabeledExample, MixtureRecipe, SnrSchedule, CLIP_SAMPLES};
use crate::dsp::{FrameSpec, Stft, Waveform};
use crate::error::{Error, Result};
use crate::room::{compose_with_permutation, render_moving_source, render_noise_field, scene_sample, RoomScene, SceneConfig};
use crate::seed::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Anechoic mixtures with per-channel SNR.
    Simple,
    /// Rendered room scenes.
    Room,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simple => "simple",
            Experiment::Room => "room",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Experiment::Simple),
            "room" => Ok(Experiment::Room),
            _ => Err(Error::Parse(format!("unknown experiment `{s}` (expected simple or room)"))),
        }
    }
}

/// Which scene ids a recipe may use. Ids ending in 9 are held out for
/// testing; the rest are for training and validation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn contains(self, scene_id: u64) -> bool {
        (scene_id % 10 == 9) == (self == Split::Test)
    }
}

/// Turns recipes into labelled spectra for one clip bank and experiment.
#[derive(Clone, Debug)]
pub struct ExampleFactory {
    pub bank: Arc<ClipBank>,
    pub experiment: Experiment,
    pub scene: SceneConfig,
    /// Scene ids are drawn from `0..scene_pool`.
    pub scene_pool: u64,
    /// Base seed for scene geometry.
    pub scene_seed: u64,
    pub label_threshold: f64,
    stft: Stft,
}

impl ExampleFactory {
    pub fn new(bank: Arc<ClipBank>, experiment: Experiment) -> Result<Self> {
        Ok(Self {
            bank,
            experiment,
            scene: SceneConfig::default(),
            scene_pool: 1000,
            scene_seed: 0,
            label_threshold: 0.5,
            stft: Stft::new(FrameSpec::default())?,
        })
    }

    pub fn frame_spec(&self) -> FrameSpec {
        self.stft.spec()
    }

    pub fn input_dim(&self) -> usize {
        self.stft.spec().bins()
    }

    /// Draws a recipe; room recipes also get a scene id from `split` and a
    /// diffuse-noise seed.
    pub fn draw(&self, schedule: &SnrSchedule, per_frame_shuffle: bool, split: Split, rng: &mut impl Rng) -> Result<MixtureRecipe> {
        let mut r = self.bank.draw_recipe(schedule, per_frame_shuffle, rng)?;
        if self.experiment == Experiment::Room {
            if self.scene_pool < 10 {
                return Err(Error::Input(format!("scene pool {} has no test ids", self.scene_pool)));
            }
            let blocks = self.scene_pool / 10;
            let block = rng.random_range(0..blocks);
            let last = match split {
                Split::Train => rng.random_range(0..9),
                Split::Test => 9,
            };
            r.scene = Some(block * 10 + last);
            r.diffuse_seed = Some(rng.random());
        }
        Ok(r)
    }

    /// Geometry of scene `id` with `k` mics.
    pub fn scene_for(&self, id: u64, k: usize) -> Result<RoomScene> {
        scene_sample(id, k, &self.scene, &mut seed::rng(self.scene_seed, &[tag::SCENE, id, k as u64]))
    }

    pub fn realize(&self, recipe: &MixtureRecipe) -> Result<LabeledExample> {
        let channels = self.render(recipe)?;
        label_channels(&channels, recipe, &self.stft, self.label_threshold)
    }

    /// Time-domain channels of a recipe, before any per-frame shuffle.
    pub fn render(&self, recipe: &MixtureRecipe) -> Result<Vec<Waveform>> {
        match (self.experiment, recipe.scene) {
            (Experiment::Simple, None) => Ok(self.bank.render_simple(recipe)?.channels),
            (Experiment::Room, Some(id)) => self.render_room(recipe, id),
            (Experiment::Simple, Some(_)) => Err(Error::Input("simple-mixture recipe carries a scene id".into())),
            (Experiment::Room, None) => Err(Error::Input("room recipe lacks a scene id".into())),
        }
    }

    fn render_room(&self, recipe: &MixtureRecipe, id: u64) -> Result<Vec<Waveform>> {
        recipe.validate(CLIP_SAMPLES)?;
        let scene = self.scene_for(id, recipe.channels())?;
        let excerpt = self.bank.speech_excerpt(recipe)?;
        let mut dry = vec![0.0; CLIP_SAMPLES];
        dry[recipe.offset..recipe.offset + excerpt.len()].copy_from_slice(&excerpt.samples);
        let speech = render_moving_source(&scene, &Waveform::at_16k(dry))?;
        let diffuse = recipe
            .diffuse_seed
            .ok_or_else(|| Error::Input("room recipe lacks a diffuse-noise seed".into()))?;
        let noise = render_noise_field(
            &scene,
            &self.bank.noise_segment(recipe)?,
            &mut seed::rng(diffuse, &[tag::DIFFUSE]),
        )?;
        compose_with_permutation(&speech, &noise, &recipe.snr_db, &recipe.permutation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{snr_schedule, BankSpec, Scheme};

    fn bank() -> Arc<ClipBank> {
        Arc::new(BankSpec { seed: 1, speech: 4, noise: 3 }.build())
    }

    #[test]
    fn split_membership() {
        assert!(Split::Test.contains(19) && !Split::Train.contains(19));
        assert!(Split::Train.contains(20) && !Split::Test.contains(20));
    }

    #[test]
    fn room_recipes_respect_the_split() {
        let f = ExampleFactory::new(bank(), Experiment::Room).unwrap();
        let sched = snr_schedule(Scheme::TrainingGrid, 3).unwrap();
        let mut rng = seed::rng(2, &[]);
        for i in 0..200 {
            let split = if i % 2 == 0 { Split::Train } else { Split::Test };
            let r = f.draw(&sched, false, split, &mut rng).unwrap();
            let id = r.scene.unwrap();
            assert!(split.contains(id) && id < 1000);
            assert!(r.diffuse_seed.is_some());
        }
    }

    #[test]
    fn room_examples_are_deterministic_and_labelled() {
        let f = ExampleFactory::new(bank(), Experiment::Room).unwrap();
        let sched = snr_schedule(Scheme::Decreasing, 3).unwrap();
        let r = f.draw(&sched, false, Split::Train, &mut seed::rng(3, &[])).unwrap();
        let a = f.realize(&r).unwrap();
        assert_eq!(a, f.realize(&r).unwrap());
        assert_eq!((a.grid.channels(), a.grid.frames(), a.grid.bins()), (3, 61, 513));
        assert_eq!(a.labels.len(), 61);
        let mut simple = r.clone();
        simple.scene = None;
        assert!(f.realize(&simple).is_err());
    }

    #[test]
    fn simple_examples_reject_scene_ids() {
        let f = ExampleFactory::new(bank(), Experiment::Simple).unwrap();
        let sched = snr_schedule(Scheme::Increasing, 2).unwrap();
        let mut r = f.draw(&sched, true, Split::Train, &mut seed::rng(4, &[])).unwrap();
        assert!(r.scene.is_none());
        assert_eq!(f.realize(&r).unwrap().grid.channels(), 2);
        r.scene = Some(3);
        assert!(f.realize(&r).is_err());
    }
}
