//! WAV ingestion for user-supplied corpora.

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

use super::{ClipBank, ClipKind, ClipSource, CLIP_SAMPLES};

/// Reads a mono 16-bit PCM or 32-bit float WAV at 16 kHz.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let fail = |reason: String| Error::Ingestion {
        files: vec![path.to_path_buf()],
        reason,
    };
    let mut reader = WavReader::open(path).map_err(|e| fail(format!("unreadable: {e}")))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(fail(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(fail(format!("sample rate {} Hz, expected {SAMPLE_RATE} Hz", spec.sample_rate)));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => return Err(fail(format!("unsupported {bits}-bit {fmt:?} samples"))),
    }
    .map_err(|e| fail(format!("corrupt sample data: {e}")))?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(fail("non-finite samples".into()));
    }
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Writes channels as one interleaved 32-bit float WAV.
pub fn write_wav(path: &Path, channels: &[Waveform]) -> Result<()> {
    let Some(first) = channels.first() else {
        return Err(Error::Input("no channels to write".into()));
    };
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(Error::Input("channels differ in length".into()));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: first.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let io = |e: hound::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for i in 0..first.len() {
        for c in channels {
            w.write_sample(c.samples[i] as f32).map_err(io)?;
        }
    }
    w.finalize().map_err(io)?;
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Ingestion {
        files: vec![dir.to_path_buf()],
        reason: format!("cannot list directory: {e}"),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Ingestion {
            files: vec![dir.to_path_buf()],
            reason: "no WAV files".into(),
        });
    }
    Ok(files)
}

fn load_kind(dir: &Path, kind: ClipKind) -> Result<Vec<ClipSource>> {
    let mut clips = Vec::new();
    let mut bad = Vec::new();
    let mut reasons = Vec::new();
    for path in wav_files(dir)? {
        match read_wav(&path) {
            Ok(w) if kind == ClipKind::Noise && w.len() < CLIP_SAMPLES => {
                reasons.push(format!("{}: shorter than 2 s", path.display()));
                bad.push(path);
            }
            Ok(mut w) => {
                w.samples.truncate(CLIP_SAMPLES);
                clips.push(ClipSource {
                    kind,
                    origin: path.display().to_string(),
                    samples: w,
                    f0_hz: None,
                });
            }
            Err(Error::Ingestion { reason, .. }) => {
                reasons.push(format!("{}: {reason}", path.display()));
                bad.push(path);
            }
            Err(e) => return Err(e),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Ingestion {
            files: bad,
            reason: reasons.join("; "),
        });
    }
    Ok(clips)
}

/// Loads speech clips (first 2 s kept) and noise clips (first 2 s, must be
/// at least that long). Every offending file is reported at once; there is
/// no resampling.
pub fn load_corpus(speech_dir: &Path, noise_dir: &Path) -> Result<ClipBank> {
    Ok(ClipBank {
        speech: load_kind(speech_dir, ClipKind::Speech)?,
        noise: load_kind(noise_dir, ClipKind::Noise)?,
    })
}
