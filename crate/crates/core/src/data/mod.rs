//! Clip banks, SNR-controlled mixing, channel schedules and frame labels.
//!
//! SNR convention: both components are first scaled to unit variance, then
//! the speech component is multiplied by a gain chosen so that its mean power
//! over the speech-active region is `10^(snr/10)` times the noise's mean power
//! over the same region. When the speech covers the whole clip and both
//! components are zero-mean, the gain is exactly `10^(snr/20)`.

mod corpus;
pub mod manifest;
mod mixture;
mod synth;

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dsp::{FrameSpec, SpectraGrid, Waveform};
use crate::error::{Error, Result};

pub use corpus::{load_corpus, read_wav, write_wav};
pub use mixture::{label_channels, ClipBank, LabeledExample, MixtureRecipe};
pub use synth::{synth_bank, BankSpec};

/// Two seconds at 16 kHz.
pub const CLIP_SAMPLES: usize = 32_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ClipKind {
    Speech,
    Noise,
}

impl ClipKind {
    pub fn name(self) -> &'static str {
        match self {
            ClipKind::Speech => "speech",
            ClipKind::Noise => "noise",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipSource {
    pub kind: ClipKind,
    /// File path or synthetic generator id.
    pub origin: String,
    pub samples: Waveform,
    /// Fundamental of synthetic speech proxies.
    pub f0_hz: Option<f64>,
}

/// Mean of squares over `region`.
pub fn mean_power(x: &[f64], region: Range<usize>) -> f64 {
    let n = region.len();
    if n == 0 {
        return 0.0;
    }
    x[region].iter().map(|v| v * v).sum::<f64>() / n as f64
}

fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Scales `w` to unit (population) variance. The mean is scaled, not removed.
pub fn normalize_unit_variance(w: &Waveform) -> Result<Waveform> {
    let var = variance(&w.samples);
    if !var.is_finite() || var <= f64::MIN_POSITIVE {
        return Err(Error::Degenerate(format!(
            "cannot normalise a {}-sample signal with variance {var}",
            w.len()
        )));
    }
    let s = 1.0 / var.sqrt();
    Ok(Waveform::new(
        w.samples.iter().map(|v| v * s).collect(),
        w.sample_rate,
    ))
}

/// Gain that puts `speech` at `snr_db` relative to `noise` over `region`.
///
/// `speech` is aligned with `noise` (already placed). A silent region yields
/// a zero gain.
pub fn snr_gain(speech: &[f64], noise: &[f64], region: Range<usize>, snr_db: f64) -> f64 {
    let ps = mean_power(speech, region.clone());
    let pn = mean_power(noise, region);
    if ps <= 0.0 {
        return 0.0;
    }
    10f64.powf(snr_db / 20.0) * (pn / ps).sqrt()
}

/// Single-channel mixture with its pre-sum components.
#[derive(Clone, Debug, PartialEq)]
pub struct MixComponents {
    pub mixture: Waveform,
    /// Scaled speech, placed on the noise's time axis.
    pub speech: Vec<f64>,
    pub noise: Vec<f64>,
    pub offset: usize,
    pub gain: f64,
}

impl MixComponents {
    pub fn region(&self, speech_len: usize) -> Range<usize> {
        self.offset..self.offset + speech_len
    }
}

/// `speech` on the noise's time axis, zero outside `offset..offset+len`.
fn place(speech: &Waveform, noise: &Waveform, offset: usize) -> Result<Vec<f64>> {
    if speech.len() > noise.len() {
        return Err(Error::Input(format!(
            "speech ({} samples) longer than noise ({} samples)",
            speech.len(),
            noise.len()
        )));
    }
    if offset + speech.len() > noise.len() {
        return Err(Error::Input(format!(
            "offset {offset} + {} speech samples exceeds {}",
            speech.len(),
            noise.len()
        )));
    }
    let mut placed = vec![0.0; noise.len()];
    placed[offset..offset + speech.len()].copy_from_slice(&speech.samples);
    Ok(placed)
}

/// Places `speech` at `offset` in `noise` scaled to `snr_db`.
pub fn mix_at(speech: &Waveform, noise: &Waveform, snr_db: f64, offset: usize) -> Result<MixComponents> {
    let mut placed = place(speech, noise, offset)?;
    let region = offset..offset + speech.len();
    let gain = snr_gain(&placed, &noise.samples, region, snr_db);
    for v in &mut placed {
        *v *= gain;
    }
    let mixture = noise.samples.iter().zip(&placed).map(|(n, s)| n + s).collect();
    Ok(MixComponents {
        mixture: Waveform::new(mixture, noise.sample_rate),
        speech: placed,
        noise: noise.samples.clone(),
        offset,
        gain,
    })
}

/// Mixes unit-variance `speech` into unit-variance `noise` at a uniformly
/// random admissible offset.
pub fn make_single_mixture(
    speech: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    rng: &mut impl Rng,
) -> Result<(Waveform, usize)> {
    if speech.len() > noise.len() {
        return Err(Error::Input(format!(
            "speech ({} samples) longer than noise ({} samples)",
            speech.len(),
            noise.len()
        )));
    }
    let offset = rng.random_range(0..=noise.len() - speech.len());
    let mix = mix_at(speech, noise, snr_db, offset)?;
    Ok((mix.mixture, offset))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Evenly spaced over the training range (−5..5 dB by default).
    TrainingGrid,
    /// `0, −1, …, −(K−1)` dB.
    Decreasing,
    /// `−29, −28, …, −29+K−1` dB.
    Increasing,
    Explicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::TrainingGrid => "training_grid",
            Scheme::Decreasing => "decreasing",
            Scheme::Increasing => "increasing",
            Scheme::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "training_grid" => Scheme::TrainingGrid,
            "decreasing" => Scheme::Decreasing,
            "increasing" => Scheme::Increasing,
            "explicit" => Scheme::Explicit,
            _ => return Err(Error::Parse(format!("unknown SNR scheme `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnrSchedule {
    pub scheme: Scheme,
    pub values: Vec<f64>,
}

pub const TRAIN_SNR_RANGE: (f64, f64) = (-5.0, 5.0);

impl SnrSchedule {
    pub fn training_grid(k: usize, lo: f64, hi: f64) -> Self {
        let values = if k == 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..k)
                .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                .collect()
        };
        Self {
            scheme: Scheme::TrainingGrid,
            values,
        }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Self {
            scheme: Scheme::Explicit,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-channel SNRs for `k` channels under `scheme`.
pub fn snr_schedule(scheme: Scheme, k: usize) -> Result<SnrSchedule> {
    if k == 0 {
        return Err(Error::Input("an SNR schedule needs at least one channel".into()));
    }
    Ok(match scheme {
        Scheme::TrainingGrid => SnrSchedule::training_grid(k, TRAIN_SNR_RANGE.0, TRAIN_SNR_RANGE.1),
        Scheme::Decreasing => SnrSchedule {
            scheme,
            values: (0..k).map(|i| -(i as f64)).collect(),
        },
        Scheme::Increasing => SnrSchedule {
            scheme,
            values: (0..k).map(|i| -29.0 + i as f64).collect(),
        },
        Scheme::Explicit => {
            return Err(Error::Input("explicit schedules carry their own values".into()))
        }
    })
}

/// A multi-channel mixture: one shared event, per-channel SNR.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelMix {
    pub channels: Vec<Waveform>,
    pub noise: Waveform,
    pub offset: usize,
    pub speech_len: usize,
    /// Channel `i` carries `schedule[permutation[i]]`.
    pub permutation: Vec<usize>,
    pub gains: Vec<f64>,
}

/// Mixes every channel at `snr_db[permutation[i]]` with a shared offset.
pub fn mix_channels(
    speech: &Waveform,
    noise: &Waveform,
    schedule: &[f64],
    permutation: &[usize],
    offset: usize,
) -> Result<MultiChannelMix> {
    check_permutation(permutation, schedule.len())?;
    let placed = place(speech, noise, offset)?;
    let region = offset..offset + speech.len();
    let mut channels = Vec::with_capacity(permutation.len());
    let mut gains = Vec::with_capacity(permutation.len());
    for &p in permutation {
        let gain = snr_gain(&placed, &noise.samples, region.clone(), schedule[p]);
        let samples = noise
            .samples
            .iter()
            .zip(&placed)
            .map(|(n, s)| n + gain * s)
            .collect();
        channels.push(Waveform::new(samples, noise.sample_rate));
        gains.push(gain);
    }
    Ok(MultiChannelMix {
        channels,
        noise: noise.clone(),
        offset,
        speech_len: speech.len(),
        permutation: permutation.to_vec(),
        gains,
    })
}

/// [`mix_channels`] with a random offset and a uniformly drawn permutation.
pub fn build_multichannel(
    speech: &Waveform,
    noise: &Waveform,
    schedule: &SnrSchedule,
    rng: &mut impl Rng,
) -> Result<MultiChannelMix> {
    if speech.len() > noise.len() {
        return Err(Error::Input(format!(
            "speech ({} samples) longer than noise ({} samples)",
            speech.len(),
            noise.len()
        )));
    }
    if schedule.is_empty() {
        return Err(Error::Input("empty SNR schedule".into()));
    }
    let offset = rng.random_range(0..=noise.len() - speech.len());
    let permutation = random_permutation(schedule.len(), rng);
    mix_channels(speech, noise, &schedule.values, &permutation, offset)
}

pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

pub(crate) fn check_permutation(p: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if p.len() != n {
        return Err(Error::Input(format!("permutation of length {} for {n} channels", p.len())));
    }
    for &i in p {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Input(format!("{p:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Independently permutes the channels at every frame.
pub fn per_frame_snr_shuffle(grid: &SpectraGrid, rng: &mut impl Rng) -> SpectraGrid {
    let mut out = grid.clone();
    let k = grid.channels();
    for t in 0..grid.frames() {
        let perm = random_permutation(k, rng);
        for (dst, &src) in perm.iter().enumerate() {
            out.frame_mut(dst, t).copy_from_slice(grid.frame(src, t));
        }
    }
    out
}

/// `1` where at least `threshold` of a frame's samples lie inside the speech
/// span `[offset, offset + speech_len)`.
pub fn frame_labels_with_threshold(
    offset: usize,
    speech_len: usize,
    spec: FrameSpec,
    frames: usize,
    threshold: f64,
) -> Vec<u8> {
    let (s0, s1) = (offset, offset + speech_len);
    (0..frames)
        .map(|t| {
            let f0 = t * spec.hop;
            let f1 = f0 + spec.window;
            let overlap = s1.min(f1).saturating_sub(s0.max(f0));
            u8::from(speech_len > 0 && overlap as f64 >= threshold * spec.window as f64)
        })
        .collect()
}

/// Frame labels under the 50% overlap rule.
pub fn frame_labels(offset: usize, speech_len: usize, spec: FrameSpec, frames: usize) -> Vec<u8> {
    frame_labels_with_threshold(offset, speech_len, spec, frames, 0.5)
}
