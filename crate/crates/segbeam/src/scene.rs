//! Free-field piecewise-stationary scene simulator.
//!
//! Sources move by jumping between piecewise-constant positions (with a short
//! crossfade), which makes the ground-truth change points exact — the cleanest
//! reference for scoring a segmentation-driven beamformer. Propagation is
//! spherical-wave: per-channel fractional delay (64-tap windowed sinc) and
//! `1/r` gain. Reverberation is out of scope.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::mvdr::SteeringVector;

/// Source or sensor positions closer than this are rejected.
pub const MIN_SOURCE_DISTANCE_M: f64 = 1e-3;

const SINC_TAPS: usize = 64;
const CROSSFADE_S: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArrayGeometry {
    /// Sensor positions in meters.
    pub positions: Vec<[f64; 3]>,
    pub sound_speed: f64,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<[f64; 3]>, sound_speed: f64) -> Result<Self> {
        let g = ArrayGeometry {
            positions,
            sound_speed,
        };
        g.validate()?;
        Ok(g)
    }

    /// Circle of `sensors` microphones in the horizontal plane.
    pub fn circular(center: [f64; 3], radius_m: f64, sensors: usize) -> Result<Self> {
        if !(radius_m > 0.0) {
            return Err(Error::Parameter(format!("array radius must be positive, got {radius_m}")));
        }
        let positions = (0..sensors)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / sensors.max(1) as f64;
                [
                    center[0] + radius_m * a.cos(),
                    center[1] + radius_m * a.sin(),
                    center[2],
                ]
            })
            .collect();
        ArrayGeometry::new(positions, 343.0)
    }

    /// Uniform line of `sensors` microphones along the x axis.
    pub fn linear(origin: [f64; 3], spacing_m: f64, sensors: usize) -> Result<Self> {
        if !(spacing_m > 0.0) {
            return Err(Error::Parameter(format!("sensor spacing must be positive, got {spacing_m}")));
        }
        let positions = (0..sensors)
            .map(|i| [origin[0] + spacing_m * i as f64, origin[1], origin[2]])
            .collect();
        ArrayGeometry::new(positions, 343.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() {
            return Err(Error::Parameter("array needs at least one sensor".into()));
        }
        if !(self.sound_speed > 0.0) || !self.sound_speed.is_finite() {
            return Err(Error::Parameter(format!(
                "sound speed must be positive, got {}",
                self.sound_speed
            )));
        }
        for (i, a) in self.positions.iter().enumerate() {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::Parameter(format!("sensor {i} position is not finite")));
            }
            for (j, b) in self.positions.iter().enumerate().skip(i + 1) {
                if distance(a, b) < 1e-9 {
                    return Err(Error::Parameter(format!("sensors {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn sensors(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrackSegment {
    pub start_sample: usize,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    /// White noise shaped by a slowly drifting 4-pole resonator with 4 Hz
    /// syllabic amplitude modulation.
    SpeechLike,
    WhiteNoise,
    Tone { freq_hz: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SourceTrack {
    /// Piecewise-constant positions; starts strictly increasing, first at 0.
    pub segments: Vec<TrackSegment>,
    pub signal: SignalKind,
    /// Emitted level: RMS in dBFS at 1 m from the source.
    pub level_db: f64,
}

impl SourceTrack {
    pub fn static_source(position: [f64; 3], signal: SignalKind, level_db: f64) -> Self {
        SourceTrack {
            segments: vec![TrackSegment {
                start_sample: 0,
                position,
            }],
            signal,
            level_db,
        }
    }

    fn validate(&self, total_samples: usize, label: &str) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Parameter(format!("{label}: track needs at least one segment")));
        }
        if self.segments[0].start_sample != 0 {
            return Err(Error::Parameter(format!("{label}: first segment must start at sample 0")));
        }
        for w in self.segments.windows(2) {
            if w[1].start_sample <= w[0].start_sample {
                return Err(Error::Parameter(format!(
                    "{label}: segment starts must be strictly increasing"
                )));
            }
        }
        if let Some(last) = self.segments.last() {
            if last.start_sample >= total_samples {
                return Err(Error::Parameter(format!(
                    "{label}: segment start {} is beyond the scene duration ({total_samples} samples)",
                    last.start_sample
                )));
            }
        }
        if !self.level_db.is_finite() {
            return Err(Error::Parameter(format!("{label}: level_db must be finite")));
        }
        if let SignalKind::Tone { freq_hz } = self.signal {
            if !(freq_hz > 0.0) || !freq_hz.is_finite() {
                return Err(Error::Parameter(format!("{label}: tone frequency must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub geometry: ArrayGeometry,
    /// The static target (exactly one position segment).
    pub target: SourceTrack,
    pub interferers: Vec<SourceTrack>,
    /// Spatially white sensor noise level in dB relative to the target image
    /// at the reference channel.
    pub noise_level_db: f64,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl SceneSpec {
    pub fn num_samples(&self) -> usize {
        (self.duration_s * f64::from(self.sample_rate)).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::Parameter(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Parameter("sample_rate must be positive".into()));
        }
        if !self.noise_level_db.is_finite() {
            return Err(Error::Parameter("noise_level_db must be finite".into()));
        }
        let n = self.num_samples();
        if n == 0 {
            return Err(Error::Parameter("scene duration rounds to zero samples".into()));
        }
        self.target.validate(n, "target")?;
        if self.target.segments.len() != 1 {
            return Err(Error::Parameter("target must be static (exactly one segment)".into()));
        }
        for (i, track) in self.interferers.iter().enumerate() {
            track.validate(n, &format!("interferer {i}"))?;
        }
        Ok(())
    }

    /// Ground-truth per-bin steering vectors for the target, RTF-normalized at
    /// `reference_index`, for a one-sided spectrum of the given frame size.
    pub fn target_steering(&self, frame_size: usize, reference_index: usize) -> Result<Vec<SteeringVector>> {
        let pos = self.target.segments[0].position;
        let bins = frame_size / 2 + 1;
        (0..bins)
            .map(|k| {
                let f = k as f64 * f64::from(self.sample_rate) / frame_size as f64;
                let v = steering_freefield(&self.geometry, pos, f, reference_index)?;
                SteeringVector::new(v, reference_index)
            })
            .collect()
    }
}

/// Rendered scene with exact ground truth.
#[derive(Debug, Clone)]
pub struct SceneOutput {
    pub mixture: Vec<Vec<f64>>,
    pub target_image: Vec<Vec<f64>>,
    pub interference_image: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    /// Every interferer position-change instant, in samples, sorted.
    pub true_changes: Vec<usize>,
    /// Target steering per bin for the default 1024-sample frame, reference
    /// channel 0. Use [`SceneSpec::target_steering`] for other frame sizes.
    pub true_steering: Vec<SteeringVector>,
}

/// Spherical-wave steering vector: entry `m` is
/// `(r_ref/r_m)·exp(−j·2πf·(r_m − r_ref)/c)`; the reference entry is exactly 1.
pub fn steering_freefield(
    geometry: &ArrayGeometry,
    source_pos: [f64; 3],
    freq_hz: f64,
    reference_index: usize,
) -> Result<DVector<Complex64>> {
    geometry.validate()?;
    if !(freq_hz >= 0.0) || !freq_hz.is_finite() {
        return Err(Error::Parameter(format!("frequency must be nonnegative, got {freq_hz}")));
    }
    if reference_index >= geometry.sensors() {
        return Err(Error::Parameter(format!(
            "reference index {reference_index} out of range for {} sensors",
            geometry.sensors()
        )));
    }
    let dists: Vec<f64> = geometry
        .positions
        .iter()
        .map(|p| distance(p, &source_pos))
        .collect();
    if let Some((m, r)) = dists.iter().enumerate().find(|(_, &r)| r < MIN_SOURCE_DISTANCE_M) {
        return Err(Error::Parameter(format!(
            "source coincides with sensor {m} (distance {r:.2e} m)"
        )));
    }
    let r_ref = dists[reference_index];
    let mut v = DVector::zeros(geometry.sensors());
    for (m, &r) in dists.iter().enumerate() {
        if m == reference_index {
            v[m] = Complex64::new(1.0, 0.0);
        } else {
            let phase = -2.0 * PI * freq_hz * (r - r_ref) / geometry.sound_speed;
            v[m] = Complex64::from_polar(r_ref / r, phase);
        }
    }
    Ok(v)
}

/// Render a scene deterministically from its seed.
pub fn render_scene(spec: &SceneSpec) -> Result<SceneOutput> {
    spec.validate()?;
    let total = spec.num_samples();
    let channels = spec.geometry.sensors();
    let fs = spec.sample_rate;

    let target_signal = source_signal(&spec.target, total, fs, stream_rng(spec.seed, 0))?;
    let target_image = render_track(&spec.target, &target_signal, &spec.geometry, fs, total)?;

    let mut interference_image = vec![vec![0.0; total]; channels];
    let mut true_changes: Vec<usize> = Vec::new();
    for (i, track) in spec.interferers.iter().enumerate() {
        let signal = source_signal(track, total, fs, stream_rng(spec.seed, 1 + i as u64))?;
        let image = render_track(track, &signal, &spec.geometry, fs, total)?;
        for ch in 0..channels {
            for n in 0..total {
                interference_image[ch][n] += image[ch][n];
            }
        }
        true_changes.extend(track.segments.iter().skip(1).map(|s| s.start_sample));
    }
    true_changes.sort_unstable();
    true_changes.dedup();

    let target_rms = rms(&target_image[0]);
    let sigma = target_rms * db_to_lin(spec.noise_level_db);
    let mut noise_rng = stream_rng(spec.seed, 1_000_000);
    let noise: Vec<Vec<f64>> = (0..channels)
        .map(|_| {
            (0..total)
                .map(|_| noise_rng.sample::<f64, _>(StandardNormal) * sigma)
                .collect()
        })
        .collect();

    let mixture: Vec<Vec<f64>> = (0..channels)
        .map(|ch| {
            (0..total)
                .map(|n| target_image[ch][n] + interference_image[ch][n] + noise[ch][n])
                .collect()
        })
        .collect();

    let true_steering = spec.target_steering(1024, 0)?;
    Ok(SceneOutput {
        mixture,
        target_image,
        interference_image,
        noise,
        true_changes,
        true_steering,
    })
}

/// Independent deterministic RNG per scene role.
fn stream_rng(seed: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ role.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Generate the emitted mono signal for a track: unit RMS, scaled to
/// `level_db`.
fn source_signal(track: &SourceTrack, total: usize, fs: u32, mut rng: ChaCha8Rng) -> Result<Vec<f64>> {
    let mut s = match &track.signal {
        SignalKind::WhiteNoise => (0..total)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>(),
        SignalKind::Tone { freq_hz } => {
            let phase: f64 = rng.random::<f64>() * 2.0 * PI;
            (0..total)
                .map(|n| (2.0 * PI * freq_hz * n as f64 / f64::from(fs) + phase).sin())
                .collect()
        }
        SignalKind::SpeechLike => speech_like(total, fs, &mut rng),
        SignalKind::File { path } => {
            let buf = crate::io::read_wav(path)?;
            if buf.sample_rate != fs {
                return Err(Error::Data(format!(
                    "{}: sample rate {} does not match the scene's {fs}",
                    path.display(),
                    buf.sample_rate
                )));
            }
            let mut s = buf.samples.into_iter().next().unwrap_or_default();
            s.resize(total, 0.0);
            s
        }
    };
    let r = rms(&s);
    if r > 0.0 {
        let g = db_to_lin(track.level_db) / r;
        for v in s.iter_mut() {
            *v *= g;
        }
    }
    Ok(s)
}

/// White noise through two slowly drifting two-pole resonators, with 4 Hz
/// syllabic amplitude modulation.
fn speech_like(total: usize, fs: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = f64::from(fs);
    let phi1: f64 = rng.random::<f64>() * 2.0 * PI;
    let phi2: f64 = rng.random::<f64>() * 2.0 * PI;
    let phi_am: f64 = rng.random::<f64>() * 2.0 * PI;
    let r = 0.97;
    let mut state1 = [0.0f64; 2];
    let mut state2 = [0.0f64; 2];
    let mut out = Vec::with_capacity(total);
    let mut coef1 = (0.0, 0.0);
    let mut coef2 = (0.0, 0.0);
    for n in 0..total {
        if n % 64 == 0 {
            let t = n as f64 / fs;
            let f1 = 500.0 * (1.0 + 0.35 * (2.0 * PI * 0.40 * t + phi1).sin());
            let f2 = 1700.0 * (1.0 + 0.25 * (2.0 * PI * 0.23 * t + phi2).sin());
            coef1 = (2.0 * r * (2.0 * PI * f1 / fs).cos(), r * r);
            coef2 = (2.0 * r * (2.0 * PI * f2 / fs).cos(), r * r);
        }
        let x: f64 = rng.sample(StandardNormal);
        let y1 = x + coef1.0 * state1[0] - coef1.1 * state1[1];
        state1 = [y1, state1[0]];
        let y2 = y1 + coef2.0 * state2[0] - coef2.1 * state2[1];
        state2 = [y2, state2[0]];
        let t = n as f64 / fs;
        let env = 0.15 + 0.85 * 0.5 * (1.0 + (2.0 * PI * 4.0 * t + phi_am).sin());
        out.push(y2 * env);
    }
    out
}

/// Render one track's multichannel image: per-segment spherical-wave
/// propagation with linear crossfades at position changes.
fn render_track(
    track: &SourceTrack,
    signal: &[f64],
    geometry: &ArrayGeometry,
    fs: u32,
    total: usize,
) -> Result<Vec<Vec<f64>>> {
    let channels = geometry.sensors();
    let xfade = (CROSSFADE_S * f64::from(fs)).round() as usize;
    let mut out = vec![vec![0.0; total]; channels];
    let starts: Vec<usize> = track.segments.iter().map(|s| s.start_sample).collect();

    for (k, seg) in track.segments.iter().enumerate() {
        let a = starts[k];
        let next = starts.get(k + 1).copied().unwrap_or(total);
        let render_end = (next + xfade).min(total);
        let rendered = render_at_position(signal, seg.position, geometry, fs, a, render_end)?;
        for n in a..render_end {
            // weight ramps complement across consecutive segments
            let mut w = 1.0;
            if k > 0 && xfade > 0 && n < a + xfade {
                w *= (n - a) as f64 / xfade as f64;
            }
            if k + 1 < starts.len() && xfade > 0 && n >= next {
                w *= 1.0 - (n - next) as f64 / xfade as f64;
            }
            if w <= 0.0 {
                continue;
            }
            for ch in 0..channels {
                out[ch][n] += w * rendered[ch][n - a];
            }
        }
    }
    Ok(out)
}

/// Propagate `signal` from a fixed position to every sensor over the sample
/// range `[from, to)`: 64-tap windowed-sinc fractional delay plus `1/r` gain.
fn render_at_position(
    signal: &[f64],
    position: [f64; 3],
    geometry: &ArrayGeometry,
    fs: u32,
    from: usize,
    to: usize,
) -> Result<Vec<Vec<f64>>> {
    let span = to - from;
    let mut out = vec![vec![0.0; span]; geometry.sensors()];
    let half = (SINC_TAPS / 2) as isize - 1; // kernel center tap
    for (m, sensor) in geometry.positions.iter().enumerate() {
        let r = distance(sensor, &position);
        if r < MIN_SOURCE_DISTANCE_M {
            return Err(Error::Parameter(format!(
                "source coincides with sensor {m} (distance {r:.2e} m)"
            )));
        }
        let delay = r / geometry.sound_speed * f64::from(fs);
        let d_int = delay.floor() as isize;
        let mu = delay - delay.floor();
        let gain = 1.0 / r;

        // h[j] interpolates s[n − delay] from taps at lags d_int + (j − half)
        let mut kernel = [0.0f64; SINC_TAPS];
        for (j, k) in kernel.iter_mut().enumerate() {
            let t = j as f64 - half as f64 - mu;
            let sinc = if t.abs() < 1e-12 { 1.0 } else { (PI * t).sin() / (PI * t) };
            // Blackman window over the tap span
            let w = 0.42 - 0.5 * (2.0 * PI * j as f64 / (SINC_TAPS - 1) as f64).cos()
                + 0.08 * (4.0 * PI * j as f64 / (SINC_TAPS - 1) as f64).cos();
            *k = sinc * w;
        }

        for n in from..to {
            let mut acc = 0.0;
            let base = n as isize - d_int + half;
            for (j, &h) in kernel.iter().enumerate() {
                let idx = base - j as isize;
                if idx >= 0 && (idx as usize) < signal.len() {
                    acc += h * signal[idx as usize];
                }
            }
            out[m][n - from] = gain * acc;
        }
    }
    Ok(out)
}
