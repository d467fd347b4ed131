//! Deterministic stand-ins for speech and noise corpora.
//!
//! Speech proxies are harmonic complexes (f0 in 100–300 Hz, 1/h partial
//! amplitudes up to 4 kHz) with slow amplitude modulation and raised-cosine
//! onset/offset ramps. Noise clips are white Gaussian noise through a
//! one-pole filter with a random coefficient, giving a random spectral tilt.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::seed;

use super::{ClipBank, ClipKind, ClipSource, CLIP_SAMPLES};

const RAMP_SAMPLES: usize = 800;

pub fn synth_bank(kind: ClipKind, seed: u64, n: usize) -> Vec<ClipSource> {
    let tag = match kind {
        ClipKind::Speech => seed::tag::SPEECH_BANK,
        ClipKind::Noise => seed::tag::NOISE_BANK,
    };
    (0..n)
        .map(|i| {
            let mut rng = seed::rng(seed, &[tag, i as u64]);
            let (samples, f0) = match kind {
                ClipKind::Speech => {
                    let (s, f0) = speech_proxy(&mut rng);
                    (s, Some(f0))
                }
                ClipKind::Noise => (tilted_noise(&mut rng), None),
            };
            ClipSource {
                kind,
                origin: format!("synth:{}:{seed}:{i}", kind.name()),
                samples: Waveform::at_16k(samples),
                f0_hz: f0,
            }
        })
        .collect()
}

fn speech_proxy(rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let fs = SAMPLE_RATE as f64;
    let f0 = rng.random_range(100.0..300.0);
    let am_rate = rng.random_range(2.0..8.0);
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let partials: Vec<(f64, f64, f64)> = (1..)
        .map(|h| h as f64)
        .take_while(|h| h * f0 < 4000.0)
        .map(|h| (h * f0, 1.0 / h, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let n = CLIP_SAMPLES;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let carrier: f64 = partials
                .iter()
                .map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin())
                .sum();
            let am = 0.6 + 0.4 * (2.0 * PI * am_rate * t + am_phase).sin();
            carrier * am * ramp(i, n)
        })
        .collect();
    (samples, f0)
}

fn ramp(i: usize, n: usize) -> f64 {
    let edge = i.min(n - 1 - i);
    if edge >= RAMP_SAMPLES {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge as f64 / RAMP_SAMPLES as f64).cos()
    }
}

fn tilted_noise(rng: &mut impl Rng) -> Vec<f64> {
    let pole: f64 = rng.random_range(-0.5..0.95);
    let mut state = 0.0;
    (0..CLIP_SAMPLES)
        .map(|_| {
            let x: f64 = StandardNormal.sample(rng);
            state = x + pole * state;
            state
        })
        .collect()
}

/// Sizes and seed of a synthetic [`ClipBank`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BankSpec {
    pub seed: u64,
    pub speech: usize,
    pub noise: usize,
}

impl BankSpec {
    pub fn build(&self) -> ClipBank {
        ClipBank {
            speech: synth_bank(ClipKind::Speech, self.seed, self.speech),
            noise: synth_bank(ClipKind::Noise, self.seed, self.noise),
        }
    }

    /// A bank of the same size whose clips share no seeds with this one.
    pub fn held_out(&self) -> BankSpec {
        BankSpec {
            seed: seed::derive(self.seed, &[seed::tag::TEST_BANK]),
            ..*self
        }
    }
}
