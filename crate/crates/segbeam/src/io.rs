//! Multichannel WAV and sidecar file handling.

use std::path::Path;

use crate::error::{Error, Result};

/// Channel-major multichannel audio, nominal range `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("audio buffer needs at least one channel".into()));
        }
        let len = samples[0].len();
        if samples.iter().any(|ch| ch.len() != len) {
            return Err(Error::Shape("audio channels have inconsistent lengths".into()));
        }
        if samples.iter().any(|ch| ch.iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("audio contains non-finite samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Read a PCM 16-bit or float-32 WAV file; 16-bit samples are scaled by
/// `1/32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "{}: unsupported encoding {bits}-bit {fmt:?} (PCM 16-bit and float-32 only)",
                path.display()
            )))
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(Error::Format(format!(
            "{}: truncated file ({} samples across {channels} channels)",
            path.display(),
            interleaved.len()
        )));
    }
    let frames = interleaved.len() / channels;
    let mut samples = vec![Vec::with_capacity(frames); channels];
    for (i, v) in interleaved.into_iter().enumerate() {
        samples[i % channels].push(v);
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Write a standards-conformant RIFF/WAVE file. `Pcm16` clamps to full scale;
/// no dither is applied.
pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    if buffer.is_empty() || buffer.channels() == 0 {
        return Err(Error::Data(format!(
            "{}: refusing to write an empty audio buffer",
            path.display()
        )));
    }
    let spec = hound::WavSpec {
        channels: buffer.channels() as u16,
        sample_rate: buffer.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for i in 0..buffer.len() {
        for ch in &buffer.samples {
            match format {
                WavFormat::Pcm16 => {
                    let v = (ch[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(|e| wav_error(path, e))?;
                }
                WavFormat::Float32 => {
                    writer
                        .write_sample(ch[i] as f32)
                        .map_err(|e| wav_error(path, e))?;
                }
            }
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}

/// Change-point sidecar: plain text, one sample index per line.
pub fn write_changes(changes: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for c in changes {
        text.push_str(&c.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_changes(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad change-point line '{l}'", path.display())))
        })
        .collect()
}
