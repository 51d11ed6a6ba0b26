//! Analysis/synthesis STFT filterbank.
//!
//! Weighted overlap-add with a one-sided spectrum. The signal is zero-padded
//! by `frame_size − hop` at both ends before framing, which makes the
//! overlap-add denominator saturated over the whole original extent, so the
//! round trip is exact to round-off everywhere (not just "away from edges").

use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::mvdr::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Square-root periodic Hann for both analysis and synthesis (WOLA).
    SqrtHann,
    /// Periodic Hann analysis, rectangular synthesis (plain OLA).
    Hann,
    /// Rectangular analysis and synthesis.
    Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub frame_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
}

impl StftConfig {
    pub fn new(frame_size: usize, hop: usize, window: WindowKind, sample_rate: u32) -> Result<Self> {
        let cfg = StftConfig {
            frame_size,
            hop,
            window,
            sample_rate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configuration used throughout the evaluation harness:
    /// 1024-sample frames with 50% overlap, sqrt-Hann.
    pub fn default_1024(sample_rate: u32) -> Self {
        StftConfig {
            frame_size: 1024,
            hop: 512,
            window: WindowKind::SqrtHann,
            sample_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_size == 0 || !self.frame_size.is_power_of_two() {
            return Err(Error::Parameter(format!(
                "frame_size must be a power of two, got {}",
                self.frame_size
            )));
        }
        if self.hop == 0 || self.frame_size % self.hop != 0 {
            return Err(Error::Parameter(format!(
                "hop ({}) must divide frame_size ({})",
                self.hop, self.frame_size
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        self.check_cola()
    }

    /// Verify the analysis/synthesis pair satisfies constant overlap-add at
    /// the configured hop.
    fn check_cola(&self) -> Result<()> {
        let a = self.analysis_window();
        let s = self.synthesis_window();
        let n = self.frame_size;
        let span = n + 8 * self.hop;
        let mut den = vec![0.0; span];
        let mut offset = 0;
        while offset + n <= span {
            for i in 0..n {
                den[offset + i] += a[i] * s[i];
            }
            offset += self.hop;
        }
        let interior = &den[n..span - n];
        let level = interior[0];
        let dev = interior
            .iter()
            .map(|&d| (d - level).abs())
            .fold(0.0, f64::max);
        if level <= 0.0 || dev > 1e-10 * level.max(1.0) {
            return Err(Error::Parameter(format!(
                "window/hop pair violates COLA (deviation {dev:.3e} at level {level:.3e})"
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    /// Center frequency of a bin in Hz.
    pub fn bin_freq(&self, bin: usize) -> f64 {
        bin as f64 * f64::from(self.sample_rate) / self.frame_size as f64
    }

    /// Zero-padding applied at both signal ends before framing.
    pub fn edge_pad(&self) -> usize {
        self.frame_size - self.hop
    }

    pub(crate) fn analysis_window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::SqrtHann => periodic_hann(self.frame_size).iter().map(|&v| v.sqrt()).collect(),
            WindowKind::Hann => periodic_hann(self.frame_size),
            WindowKind::Rect => vec![1.0; self.frame_size],
        }
    }

    pub(crate) fn synthesis_window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::SqrtHann => self.analysis_window(),
            WindowKind::Hann | WindowKind::Rect => vec![1.0; self.frame_size],
        }
    }
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided multichannel spectrogram, `bins × frames × channels`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    bins: usize,
    frames: usize,
    channels: usize,
    pub config: StftConfig,
    signal_len: usize,
}

impl Spectrogram {
    pub fn zeros(config: StftConfig, frames: usize, channels: usize, signal_len: usize) -> Self {
        let bins = config.bins();
        Spectrogram {
            data: vec![Complex64::ZERO; bins * frames * channels],
            bins,
            frames,
            channels,
            config,
            signal_len,
        }
    }

    /// Build a single-channel spectrogram from per-bin frame sequences
    /// (`rows[bin][frame]`), e.g. beamformer outputs.
    pub fn from_mono_bins(rows: &[Vec<Complex64>], config: StftConfig, signal_len: usize) -> Result<Self> {
        if rows.len() != config.bins() {
            return Err(Error::Shape(format!(
                "expected {} bin rows, got {}",
                config.bins(),
                rows.len()
            )));
        }
        let frames = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != frames) {
            return Err(Error::Shape("bin rows have inconsistent frame counts".into()));
        }
        let mut spec = Spectrogram::zeros(config, frames, 1, signal_len);
        for (bin, row) in rows.iter().enumerate() {
            for (frame, &v) in row.iter().enumerate() {
                spec.set(bin, frame, 0, v);
            }
        }
        Ok(spec)
    }

    #[inline]
    fn idx(&self, bin: usize, frame: usize, channel: usize) -> usize {
        (bin * self.frames + frame) * self.channels + channel
    }

    #[inline]
    pub fn at(&self, bin: usize, frame: usize, channel: usize) -> Complex64 {
        self.data[self.idx(bin, frame, channel)]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, channel: usize, value: Complex64) {
        let i = self.idx(bin, frame, channel);
        self.data[i] = value;
    }

    /// The across-channel observation vector for one (bin, frame) cell.
    pub fn snapshot(&self, bin: usize, frame: usize) -> Snapshot {
        let start = self.idx(bin, frame, 0);
        let values =
            nalgebra::DVector::from_column_slice(&self.data[start..start + self.channels]);
        Snapshot {
            values,
            time_index: frame,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }
}

/// Forward STFT of multichannel audio (`audio[channel][sample]`).
pub fn stft_forward(audio: &[Vec<f64>], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if audio.is_empty() {
        return Err(Error::Shape("audio must have at least one channel".into()));
    }
    let len = audio[0].len();
    if audio.iter().any(|ch| ch.len() != len) {
        return Err(Error::Shape("audio channels have inconsistent lengths".into()));
    }
    if len < config.frame_size {
        return Err(Error::Data(format!(
            "audio length {len} is shorter than one frame ({})",
            config.frame_size
        )));
    }
    for (ci, ch) in audio.iter().enumerate() {
        if !ch.iter().all(|v| v.is_finite()) {
            return Err(Error::Data(format!("channel {ci} contains non-finite samples")));
        }
    }

    let n = config.frame_size;
    let hop = config.hop;
    let pad = config.edge_pad();
    let padded = len + 2 * pad;
    let frames = (padded - n).div_ceil(hop) + 1;

    let window = config.analysis_window();
    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut out = Spectrogram::zeros(*config, frames, audio.len(), len);
    for (ch, samples) in audio.iter().enumerate() {
        for frame in 0..frames {
            let start = frame * hop; // position in the padded stream
            for i in 0..n {
                let pos = start + i;
                buf[i] = if pos >= pad && pos < pad + len {
                    samples[pos - pad] * window[i]
                } else {
                    0.0
                };
            }
            fft.process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
                .map_err(|e| Error::Numerical(format!("FFT failed: {e}")))?;
            for (bin, &v) in spectrum.iter().enumerate() {
                out.set(bin, frame, ch, v);
            }
        }
    }
    Ok(out)
}

/// Inverse STFT by weighted overlap-add; returns `channels × signal_len`
/// audio aligned with the forward transform's input.
pub fn istft_inverse(spec: &Spectrogram) -> Result<Vec<Vec<f64>>> {
    let config = &spec.config;
    let n = config.frame_size;
    let hop = config.hop;
    let pad = config.edge_pad();
    let frames = spec.frames();
    if frames == 0 {
        return Ok(vec![Vec::new(); spec.channels()]);
    }

    let analysis = config.analysis_window();
    let synthesis = config.synthesis_window();
    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut spectrum = ifft.make_input_vec();
    let mut frame_buf = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    let span = (frames - 1) * hop + n;
    let mut den = vec![0.0; span];
    for frame in 0..frames {
        let start = frame * hop;
        for i in 0..n {
            den[start + i] += analysis[i] * synthesis[i];
        }
    }

    let mut out = Vec::with_capacity(spec.channels());
    for ch in 0..spec.channels() {
        let mut num = vec![0.0; span];
        for frame in 0..frames {
            for bin in 0..spec.bins() {
                spectrum[bin] = spec.at(bin, frame, ch);
            }
            // one-sided convention: DC and Nyquist are real
            spectrum[0].im = 0.0;
            spectrum[n / 2].im = 0.0;
            ifft.process_with_scratch(&mut spectrum, &mut frame_buf, &mut scratch)
                .map_err(|e| Error::Numerical(format!("inverse FFT failed: {e}")))?;
            let start = frame * hop;
            let scale = 1.0 / n as f64;
            for i in 0..n {
                num[start + i] += frame_buf[i] * scale * synthesis[i];
            }
        }
        let mut samples = Vec::with_capacity(spec.signal_len());
        for i in 0..spec.signal_len() {
            let pos = pad + i;
            let d = if pos < span { den[pos] } else { 0.0 };
            samples.push(if d > 1e-12 { num[pos] / d } else { 0.0 });
        }
        out.push(samples);
    }
    Ok(out)
}
