use rand::Rng;

use crate::dsp::{stack_channels, SpectraGrid, Stft, Waveform};
use crate::error::{Error, Result};
use crate::seed;

use super::{
    check_permutation, frame_labels_with_threshold, mix_channels, normalize_unit_variance,
    per_frame_snr_shuffle, random_permutation, ClipSource, MultiChannelMix, SnrSchedule,
    CLIP_SAMPLES,
};

/// Speech and noise clips a dataset draws from. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipBank {
    pub speech: Vec<ClipSource>,
    pub noise: Vec<ClipSource>,
}

/// Everything needed to regenerate one multi-channel example bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRecipe {
    pub speech_clip: usize,
    pub noise_clip: usize,
    /// Excerpt start inside the speech clip, in samples.
    pub speech_start: usize,
    /// Excerpt length in samples (0 ..= 2 s).
    pub speech_len: usize,
    /// Where the excerpt is inserted into the 2 s noise segment.
    pub offset: usize,
    /// Scheduled SNR per schedule slot, dB.
    pub snr_db: Vec<f64>,
    /// Channel `i` carries `snr_db[permutation[i]]`.
    pub permutation: Vec<usize>,
    pub shuffle_seed: Option<u64>,
    pub scene: Option<u64>,
    pub diffuse_seed: Option<u64>,
}

impl MixtureRecipe {
    pub fn channels(&self) -> usize {
        self.snr_db.len()
    }

    /// Per-channel SNR after applying the permutation.
    pub fn channel_snrs(&self) -> Vec<f64> {
        self.permutation.iter().map(|&p| self.snr_db[p]).collect()
    }

    pub fn validate(&self, clip_samples: usize) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Input("recipe has no channels".into()));
        }
        check_permutation(&self.permutation, self.snr_db.len())?;
        if self.offset + self.speech_len > clip_samples {
            return Err(Error::Input(format!(
                "offset {} + speech {} exceeds the {clip_samples}-sample clip",
                self.offset, self.speech_len
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub grid: SpectraGrid,
    pub labels: Vec<u8>,
    pub recipe: MixtureRecipe,
}

impl ClipBank {
    /// Draws a recipe for `schedule`.
    ///
    /// Speech excerpt length is uniform over `0..=2 s` (capped by the clip),
    /// its offset uniform over admissible positions, and the channel
    /// permutation uniform.
    pub fn draw_recipe(&self, schedule: &SnrSchedule, per_frame_shuffle: bool, rng: &mut impl Rng) -> Result<MixtureRecipe> {
        if self.speech.is_empty() || self.noise.is_empty() {
            return Err(Error::Input("clip bank is empty".into()));
        }
        if schedule.is_empty() {
            return Err(Error::Input("empty SNR schedule".into()));
        }
        let speech_clip = rng.random_range(0..self.speech.len());
        let noise_clip = rng.random_range(0..self.noise.len());
        let available = self.speech[speech_clip].samples.len().min(CLIP_SAMPLES);
        let speech_len = rng.random_range(0..=available);
        let speech_start = rng.random_range(0..=self.speech[speech_clip].samples.len() - speech_len);
        let offset = rng.random_range(0..=CLIP_SAMPLES - speech_len);
        let permutation = random_permutation(schedule.len(), rng);
        let shuffle_seed = per_frame_shuffle.then(|| rng.random::<u64>());
        Ok(MixtureRecipe {
            speech_clip,
            noise_clip,
            speech_start,
            speech_len,
            offset,
            snr_db: schedule.values.clone(),
            permutation,
            shuffle_seed,
            scene: None,
            diffuse_seed: None,
        })
    }

    /// Unit-variance speech excerpt named by the recipe. Excerpts too short
    /// to have a variance come back silent.
    pub fn speech_excerpt(&self, recipe: &MixtureRecipe) -> Result<Waveform> {
        let clip = self
            .speech
            .get(recipe.speech_clip)
            .ok_or_else(|| Error::Index(format!("speech clip {}", recipe.speech_clip)))?;
        let end = recipe.speech_start + recipe.speech_len;
        if end > clip.samples.len() {
            return Err(Error::Input(format!(
                "speech excerpt {}..{end} beyond clip of {} samples",
                recipe.speech_start,
                clip.samples.len()
            )));
        }
        let raw = Waveform::new(clip.samples.samples[recipe.speech_start..end].to_vec(), clip.samples.sample_rate);
        match normalize_unit_variance(&raw) {
            Ok(w) => Ok(w),
            Err(Error::Degenerate(_)) => Ok(Waveform::new(vec![0.0; raw.len()], raw.sample_rate)),
            Err(e) => Err(e),
        }
    }

    /// Unit-variance 2 s noise segment named by the recipe.
    pub fn noise_segment(&self, recipe: &MixtureRecipe) -> Result<Waveform> {
        let clip = self
            .noise
            .get(recipe.noise_clip)
            .ok_or_else(|| Error::Index(format!("noise clip {}", recipe.noise_clip)))?;
        if clip.samples.len() < CLIP_SAMPLES {
            return Err(Error::Input(format!(
                "noise clip {} has {} samples, need {CLIP_SAMPLES}",
                recipe.noise_clip,
                clip.samples.len()
            )));
        }
        let seg = Waveform::new(clip.samples.samples[..CLIP_SAMPLES].to_vec(), clip.samples.sample_rate);
        normalize_unit_variance(&seg)
    }

    /// Time-domain channels of a simple (anechoic) mixture.
    pub fn render_simple(&self, recipe: &MixtureRecipe) -> Result<MultiChannelMix> {
        recipe.validate(CLIP_SAMPLES)?;
        let speech = self.speech_excerpt(recipe)?;
        let noise = self.noise_segment(recipe)?;
        mix_channels(&speech, &noise, &recipe.snr_db, &recipe.permutation, recipe.offset)
    }

    /// Magnitude spectra and frame labels of a simple mixture.
    pub fn realize_simple(&self, recipe: &MixtureRecipe, stft: &Stft, label_threshold: f64) -> Result<LabeledExample> {
        let mix = self.render_simple(recipe)?;
        label_channels(&mix.channels, recipe, stft, label_threshold)
    }
}

/// STFT, optional per-frame shuffle, and labels for rendered channels.
pub fn label_channels(
    channels: &[Waveform],
    recipe: &MixtureRecipe,
    stft: &Stft,
    label_threshold: f64,
) -> Result<LabeledExample> {
    let slabs = channels
        .iter()
        .map(|c| stft.magnitudes(c))
        .collect::<Result<Vec<_>>>()?;
    let mut grid = stack_channels(&slabs)?;
    if let Some(s) = recipe.shuffle_seed {
        grid = per_frame_snr_shuffle(&grid, &mut seed::rng(s, &[seed::tag::SHUFFLE]));
    }
    let labels = frame_labels_with_threshold(
        recipe.offset,
        recipe.speech_len,
        stft.spec(),
        grid.frames(),
        label_threshold,
    );
    Ok(LabeledExample {
        grid,
        labels,
        recipe: recipe.clone(),
    })
}
