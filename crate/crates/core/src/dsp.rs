//! Short-time Fourier analysis into magnitude spectra.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, Error, Result};
use crate::numerics::Matrix;

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn at_16k(samples: Vec<f64>) -> Self {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn silence(len: usize) -> Self {
        Self::at_16k(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowShape {
    /// Periodic Hann, `0.5 − 0.5·cos(2πn/N)`.
    Hann,
    Rectangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSpec {
    pub window: usize,
    pub hop: usize,
    pub shape: WindowShape,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window: 1024,
            hop: 512,
            shape: WindowShape::Hann,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hop == 0 || self.hop > self.window {
            return Err(Error::Input(format!(
                "frame spec window={} hop={} (need 0 < hop <= window)",
                self.window, self.hop
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    /// Full frames in a signal of `len` samples; partial tails are dropped.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.hop + 1
        }
    }

    pub fn window_values(&self) -> Vec<f64> {
        let n = self.window as f64;
        (0..self.window)
            .map(|i| match self.shape {
                WindowShape::Hann => 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos(),
                WindowShape::Rectangular => 1.0,
            })
            .collect()
    }
}

/// One-sided complex spectra, `frames × bins`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexFrames {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<Complex64>,
}

impl ComplexFrames {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// Reusable analyser: caches the window and FFT plan for one [`FrameSpec`].
#[derive(Clone)]
pub struct Stft {
    spec: FrameSpec,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("spec", &self.spec).finish()
    }
}

impl Stft {
    pub fn new(spec: FrameSpec) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.window);
        Ok(Self {
            spec,
            window: spec.window_values(),
            fft,
        })
    }

    pub fn spec(&self) -> FrameSpec {
        self.spec
    }

    pub fn analyze(&self, w: &Waveform) -> Result<ComplexFrames> {
        let FrameSpec { window, hop, .. } = self.spec;
        if w.len() < window {
            return Err(Error::Input(format!(
                "signal of {} samples is shorter than one {window}-sample window",
                w.len()
            )));
        }
        let frames = self.spec.frame_count(w.len());
        let bins = self.spec.bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); window];
        for t in 0..frames {
            let seg = &w.samples[t * hop..t * hop + window];
            for ((b, &s), &win) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new(s * win, 0.0);
            }
            self.fft.process(&mut buf);
            data.extend_from_slice(&buf[..bins]);
        }
        Ok(ComplexFrames { frames, bins, data })
    }

    pub fn magnitudes(&self, w: &Waveform) -> Result<Matrix> {
        Ok(magnitude(&self.analyze(w)?))
    }
}

/// One-shot [`Stft::analyze`].
pub fn stft(w: &Waveform, spec: FrameSpec) -> Result<ComplexFrames> {
    Stft::new(spec)?.analyze(w)
}

/// Elementwise modulus, as a `frames × bins` slab.
pub fn magnitude(frames: &ComplexFrames) -> Matrix {
    let data = frames.data.iter().map(|c| c.norm()).collect();
    Matrix::from_raw(frames.frames, frames.bins, data)
}

/// Magnitude spectra of `K` channels, indexed `(channel, frame, bin)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectraGrid {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl SpectraGrid {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, k: usize, t: usize) -> &[f64] {
        let start = (k * self.frames + t) * self.bins;
        &self.data[start..start + self.bins]
    }

    pub(crate) fn frame_mut(&mut self, k: usize, t: usize) -> &mut [f64] {
        let start = (k * self.frames + t) * self.bins;
        &mut self.data[start..start + self.bins]
    }

    /// Channel `k` as a `frames × bins` matrix.
    pub fn channel(&self, k: usize) -> Matrix {
        let n = self.frames * self.bins;
        Matrix::from_raw(self.frames, self.bins, self.data[k * n..(k + 1) * n].to_vec())
    }

    pub fn from_parts(channels: usize, frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * frames * bins {
            return shape_err(format!(
                "{} magnitudes for a {channels}x{frames}x{bins} grid",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Input("magnitudes must be finite and non-negative".into()));
        }
        Ok(Self {
            channels,
            frames,
            bins,
            data,
        })
    }

    /// Channels with all frames in time order, `(K·T) × F`, row `t·K + k`.
    pub fn serpentine(&self) -> Matrix {
        let mut out = Vec::with_capacity(self.data.len());
        for t in 0..self.frames {
            for k in 0..self.channels {
                out.extend_from_slice(self.frame(k, t));
            }
        }
        Matrix::from_raw(self.frames * self.channels, self.bins, out)
    }

    /// Mean over channels, `T × F`.
    pub fn channel_mean(&self) -> Matrix {
        let mut out = Matrix::zeros(self.frames, self.bins);
        for k in 0..self.channels {
            for t in 0..self.frames {
                for (o, v) in out.row_mut(t).iter_mut().zip(self.frame(k, t)) {
                    *o += v;
                }
            }
        }
        out.scale(1.0 / self.channels as f64);
        out
    }

    pub fn select_channels(&self, order: &[usize]) -> Result<Self> {
        let slabs: Vec<Matrix> = order
            .iter()
            .map(|&k| {
                if k < self.channels {
                    Ok(self.channel(k))
                } else {
                    Err(Error::Index(format!("channel {k} of {}", self.channels)))
                }
            })
            .collect::<Result<_>>()?;
        stack_channels(&slabs)
    }
}

/// Stacks `T × F` slabs into a grid, preserving order.
pub fn stack_channels(slabs: &[Matrix]) -> Result<SpectraGrid> {
    let Some(first) = slabs.first() else {
        return shape_err("no channels to stack");
    };
    let (frames, bins) = first.shape();
    let mut data = Vec::with_capacity(slabs.len() * frames * bins);
    for (k, s) in slabs.iter().enumerate() {
        if s.shape() != (frames, bins) {
            return shape_err(format!(
                "channel {k} is {}x{}, channel 0 is {frames}x{bins}",
                s.rows(),
                s.cols()
            ));
        }
        data.extend_from_slice(s.data());
    }
    SpectraGrid::from_parts(slabs.len(), frames, bins, data)
}
