//! Configuration file format and its lowering into resolved run settings.
//!
//! The config is TOML with sections mirroring the domain types; every CLI
//! flag overrides its config key. See `configs/demo.toml` for a complete
//! example.

use std::path::PathBuf;

use segbeam::scene::{ArrayGeometry, SceneSpec, SignalKind, SourceTrack, TrackSegment};
use segbeam::stft::{StftConfig, WindowKind};

use crate::CliError;

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub scene: Option<SceneConfig>,
    pub input: Option<InputConfig>,
    pub stft: Option<StftSection>,
    pub segmenter: Option<SegmenterSection>,
    pub run: Option<RunSection>,
    pub sweep: Option<SweepSection>,
}

impl FileConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub geometry: GeometryConfig,
    pub target: TrackConfig,
    #[serde(default)]
    pub interferers: Vec<TrackConfig>,
    pub noise_level_db: f64,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    Circular {
        center: [f64; 3],
        radius_m: f64,
        sensors: usize,
        sound_speed: Option<f64>,
    },
    Linear {
        origin: [f64; 3],
        spacing_m: f64,
        sensors: usize,
        sound_speed: Option<f64>,
    },
    Explicit {
        positions: Vec<[f64; 3]>,
        sound_speed: Option<f64>,
    },
}

impl GeometryConfig {
    fn lower(&self) -> Result<ArrayGeometry, CliError> {
        let mut g = match self {
            GeometryConfig::Circular {
                center,
                radius_m,
                sensors,
                ..
            } => ArrayGeometry::circular(*center, *radius_m, *sensors),
            GeometryConfig::Linear {
                origin,
                spacing_m,
                sensors,
                ..
            } => ArrayGeometry::linear(*origin, *spacing_m, *sensors),
            GeometryConfig::Explicit { positions, .. } => ArrayGeometry::new(positions.clone(), 343.0),
        }
        .map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        let speed = match self {
            GeometryConfig::Circular { sound_speed, .. }
            | GeometryConfig::Linear { sound_speed, .. }
            | GeometryConfig::Explicit { sound_speed, .. } => *sound_speed,
        };
        if let Some(c) = speed {
            g.sound_speed = c;
            g.validate()
                .map_err(|e| CliError::Config(format!("geometry: {e}")))?;
        }
        Ok(g)
    }
}

/// One source: a signal name, a level, and either a fixed `position`,
/// explicit `segments`, or a `positions` list visited every `jump_every_s`
/// seconds (offset by `jump_offset_s`).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackConfig {
    /// `speech-like`, `white-noise`, `tone:<hz>`, or `file:<path>`.
    pub signal: String,
    #[serde(default)]
    pub level_db: f64,
    pub position: Option<[f64; 3]>,
    pub segments: Option<Vec<TrackSegment>>,
    pub positions: Option<Vec<[f64; 3]>>,
    pub jump_every_s: Option<f64>,
    pub jump_offset_s: Option<f64>,
}

impl TrackConfig {
    fn lower(&self, sample_rate: u32, label: &str) -> Result<SourceTrack, CliError> {
        let signal = parse_signal(&self.signal)
            .ok_or_else(|| CliError::Config(format!("{label}: unknown signal '{}'", self.signal)))?;
        let segments = match (&self.position, &self.segments, &self.positions) {
            (Some(p), None, None) => vec![TrackSegment {
                start_sample: 0,
                position: *p,
            }],
            (None, Some(segs), None) => segs.clone(),
            (None, None, Some(list)) => {
                let every = self.jump_every_s.ok_or_else(|| {
                    CliError::Config(format!("{label}: 'positions' needs 'jump_every_s'"))
                })?;
                if !(every > 0.0) {
                    return Err(CliError::Config(format!("{label}: jump_every_s must be positive")));
                }
                let offset = self.jump_offset_s.unwrap_or(0.0);
                list.iter()
                    .enumerate()
                    .map(|(k, p)| {
                        let t = if k == 0 { 0.0 } else { offset + every * k as f64 };
                        TrackSegment {
                            start_sample: (t * f64::from(sample_rate)).round() as usize,
                            position: *p,
                        }
                    })
                    .collect()
            }
            _ => {
                return Err(CliError::Config(format!(
                    "{label}: give exactly one of 'position', 'segments', or 'positions'"
                )))
            }
        };
        Ok(SourceTrack {
            segments,
            signal,
            level_db: self.level_db,
        })
    }
}

pub fn parse_signal(s: &str) -> Option<SignalKind> {
    match s {
        "speech" | "speech-like" => Some(SignalKind::SpeechLike),
        "white" | "white-noise" | "noise" => Some(SignalKind::WhiteNoise),
        _ => {
            if let Some(hz) = s.strip_prefix("tone:") {
                hz.parse().ok().map(|freq_hz| SignalKind::Tone { freq_hz })
            } else {
                s.strip_prefix("file:").map(|path| SignalKind::File {
                    path: PathBuf::from(path),
                })
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub wav: PathBuf,
    pub rtf_sidecar: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    pub frame_size: Option<usize>,
    pub hop: Option<usize>,
    pub window: Option<WindowKind>,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmenterSection {
    /// Fixed transition penalty; omit to use the per-bin default rule.
    pub penalty_c: Option<f64>,
    /// Scale factor for the default penalty rule.
    pub c_rel: Option<f64>,
    pub tau: Option<usize>,
    /// Candidate-bank cap; 0 means unbounded.
    pub max_window: Option<usize>,
    /// Diagonal loading; omit to use the scale-relative default per bin.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub baselines: Option<Vec<usize>>,
    /// `oracle`, `estimate`, or `sidecar:<path>`.
    pub rtf: Option<String>,
    pub reference_channel: Option<usize>,
    pub verbose_partitions: Option<bool>,
    /// Frame ranges `start:end` for file-mode RTF estimation.
    pub rtf_noise_frames: Option<String>,
    pub rtf_target_frames: Option<String>,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub c_values: Option<Vec<f64>>,
    pub tau_values: Option<Vec<usize>>,
}

/// How the constraint vector is obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RtfMode {
    Oracle,
    Estimate,
    Sidecar(PathBuf),
}

impl RtfMode {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "oracle" => Ok(RtfMode::Oracle),
            "estimate" => Ok(RtfMode::Estimate),
            _ => s
                .strip_prefix("sidecar:")
                .map(|p| RtfMode::Sidecar(PathBuf::from(p)))
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "rtf mode must be 'oracle', 'estimate', or 'sidecar:<path>', got '{s}'"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum InputMode {
    Synthetic(SceneSpec),
    File {
        wav: PathBuf,
        rtf_sidecar: Option<PathBuf>,
    },
}

/// Segmenter knobs before per-bin resolution (delta and penalty defaults are
/// data-dependent).
#[derive(Debug, Clone)]
pub struct SegmenterOptions {
    pub penalty_c: Option<f64>,
    pub c_rel: f64,
    pub tau: usize,
    pub max_window: Option<usize>,
    pub delta: Option<f64>,
}

impl Default for SegmenterOptions {
    fn default() -> Self {
        SegmenterOptions {
            penalty_c: None,
            c_rel: 2.0,
            tau: 8,
            max_window: Some(256),
            delta: None,
        }
    }
}

/// Fully resolved settings for one beamforming run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: InputMode,
    pub frame_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub segmenter: SegmenterOptions,
    pub baselines: Vec<usize>,
    pub rtf: RtfMode,
    pub reference_channel: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub verbose_partitions: bool,
    pub rtf_noise_frames: Option<(usize, usize)>,
    pub rtf_target_frames: Option<(usize, usize)>,
}

impl RunConfig {
    pub fn stft_config(&self, sample_rate: u32) -> Result<StftConfig, CliError> {
        StftConfig::new(self.frame_size, self.hop, self.window, sample_rate)
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

pub fn default_baselines() -> Vec<usize> {
    vec![20, 70, 120, 200, 400, 1200]
}

/// Resolve a file config (or the built-in demo) into a run configuration.
/// `overrides` applies CLI flags on top.
pub fn resolve_run_config(file: &FileConfig, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let seed = overrides.seed.or(file.seed).unwrap_or(7);

    let input = match (&file.scene, &file.input, &overrides.input_wav) {
        (_, _, Some(wav)) => InputMode::File {
            wav: wav.clone(),
            rtf_sidecar: file.input.as_ref().and_then(|i| i.rtf_sidecar.clone()),
        },
        (Some(scene), None, None) => InputMode::Synthetic(lower_scene(scene, seed)?),
        (None, Some(input), None) => InputMode::File {
            wav: input.wav.clone(),
            rtf_sidecar: input.rtf_sidecar.clone(),
        },
        (None, None, None) => InputMode::Synthetic(lower_scene(&demo_scene_config(), seed)?),
        (Some(_), Some(_), None) => {
            return Err(CliError::Config(
                "config selects both [scene] and [input]; pick exactly one input mode".into(),
            ))
        }
    };

    let stft = file.stft.clone().unwrap_or_default();
    let seg = file.segmenter.clone().unwrap_or_default();
    let run = file.run.clone().unwrap_or_default();

    let defaults = SegmenterOptions::default();
    let max_window = match overrides.max_window.or(seg.max_window) {
        Some(0) => None,
        Some(w) => Some(w),
        None => defaults.max_window,
    };
    let segmenter = SegmenterOptions {
        penalty_c: overrides.penalty_c.or(seg.penalty_c),
        c_rel: overrides.c_rel.or(seg.c_rel).unwrap_or(defaults.c_rel),
        tau: overrides.tau.or(seg.tau).unwrap_or(defaults.tau),
        max_window,
        delta: overrides.delta.or(seg.delta),
    };
    if let Some(c) = segmenter.penalty_c {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(CliError::Config(format!("penalty_c must be finite and nonnegative, got {c}")));
        }
    }

    let rtf = match &overrides.rtf {
        Some(s) => RtfMode::parse(s)?,
        None => match &run.rtf {
            Some(s) => RtfMode::parse(s)?,
            None => RtfMode::Oracle,
        },
    };

    let parse_span = |s: &Option<String>, what: &str| -> Result<Option<(usize, usize)>, CliError> {
        match s {
            None => Ok(None),
            Some(text) => {
                let (a, b) = text
                    .split_once(':')
                    .ok_or_else(|| CliError::Config(format!("{what} must be 'start:end', got '{text}'")))?;
                let lo: usize = a
                    .parse()
                    .map_err(|_| CliError::Config(format!("{what}: bad start '{a}'")))?;
                let hi: usize = b
                    .parse()
                    .map_err(|_| CliError::Config(format!("{what}: bad end '{b}'")))?;
                if hi <= lo {
                    return Err(CliError::Config(format!("{what}: empty range {lo}:{hi}")));
                }
                Ok(Some((lo, hi)))
            }
        }
    };

    Ok(RunConfig {
        input,
        frame_size: overrides.frame_size.or(stft.frame_size).unwrap_or(1024),
        hop: overrides.hop.or(stft.hop).unwrap_or(512),
        window: stft.window.unwrap_or(WindowKind::SqrtHann),
        segmenter,
        baselines: overrides
            .windows
            .clone()
            .or(run.baselines)
            .unwrap_or_else(default_baselines),
        rtf,
        reference_channel: overrides
            .reference_channel
            .or(run.reference_channel)
            .unwrap_or(0),
        output_dir: overrides
            .output_dir
            .clone()
            .or(file.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        seed,
        verbose_partitions: overrides.verbose_partitions || run.verbose_partitions.unwrap_or(false),
        rtf_noise_frames: parse_span(
            &overrides.rtf_noise_frames.clone().or(run.rtf_noise_frames),
            "rtf_noise_frames",
        )?,
        rtf_target_frames: parse_span(
            &overrides.rtf_target_frames.clone().or(run.rtf_target_frames),
            "rtf_target_frames",
        )?,
    })
}

/// CLI flag values layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub windows: Option<Vec<usize>>,
    pub penalty_c: Option<f64>,
    pub c_rel: Option<f64>,
    pub tau: Option<usize>,
    pub max_window: Option<usize>,
    pub delta: Option<f64>,
    pub rtf: Option<String>,
    pub verbose_partitions: bool,
    pub input_wav: Option<PathBuf>,
    pub reference_channel: Option<usize>,
    pub frame_size: Option<usize>,
    pub hop: Option<usize>,
    pub rtf_noise_frames: Option<String>,
    pub rtf_target_frames: Option<String>,
}

pub fn lower_scene(scene: &SceneConfig, fallback_seed: u64) -> Result<SceneSpec, CliError> {
    let geometry = scene.geometry.lower()?;
    let target = scene.target.lower(scene.sample_rate, "target")?;
    let interferers = scene
        .interferers
        .iter()
        .enumerate()
        .map(|(i, t)| t.lower(scene.sample_rate, &format!("interferer {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SceneSpec {
        geometry,
        target,
        interferers,
        noise_level_db: scene.noise_level_db,
        duration_s: scene.duration_s,
        sample_rate: scene.sample_rate,
        seed: scene.seed.unwrap_or(fallback_seed),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

/// Express a rendered-scene spec back in config form (explicit geometry and
/// segments), so `scene.toml` echoes are loadable.
pub fn scene_to_config(spec: &SceneSpec) -> SceneConfig {
    let signal_name = |k: &SignalKind| match k {
        SignalKind::SpeechLike => "speech-like".to_string(),
        SignalKind::WhiteNoise => "white-noise".to_string(),
        SignalKind::Tone { freq_hz } => format!("tone:{freq_hz}"),
        SignalKind::File { path } => format!("file:{}", path.display()),
    };
    let track = |t: &SourceTrack| TrackConfig {
        signal: signal_name(&t.signal),
        level_db: t.level_db,
        position: None,
        segments: Some(t.segments.clone()),
        positions: None,
        jump_every_s: None,
        jump_offset_s: None,
    };
    SceneConfig {
        geometry: GeometryConfig::Explicit {
            positions: spec.geometry.positions.clone(),
            sound_speed: Some(spec.geometry.sound_speed),
        },
        target: track(&spec.target),
        interferers: spec.interferers.iter().map(track).collect(),
        noise_level_db: spec.noise_level_db,
        duration_s: spec.duration_s,
        sample_rate: spec.sample_rate,
        seed: Some(spec.seed),
    }
}

/// The shipped moving-interferer demo: a 6-microphone circular array, a
/// static speech-like target, and three interferers whose positions jump
/// every 4 seconds (staggered), 40 s total.
pub fn demo_scene_config() -> SceneConfig {
    demo_scene_config_with(40.0)
}

pub fn demo_scene_config_with(duration_s: f64) -> SceneConfig {
    let ring = |base_deg: f64, k: usize| -> [f64; 3] {
        let a = (base_deg + 77.0 * k as f64).to_radians();
        [2.5 * a.cos(), 2.5 * a.sin(), 1.2 + 0.1 * (k % 3) as f64]
    };
    let interferer = |base_deg: f64, offset_s: f64| TrackConfig {
        signal: "speech-like".to_string(),
        level_db: 0.0,
        position: None,
        segments: None,
        positions: Some((0..4).map(|k| ring(base_deg, k)).collect()),
        jump_every_s: Some(12.0),
        jump_offset_s: Some(offset_s),
    };
    SceneConfig {
        geometry: GeometryConfig::Circular {
            center: [0.0, 0.0, 1.2],
            radius_m: 0.05,
            sensors: 6,
        sound_speed: None,
        },
        target: TrackConfig {
            signal: "speech-like".to_string(),
            level_db: 0.0,
            position: Some([2.0, 0.0, 1.2]),
            segments: None,
            positions: None,
            jump_every_s: None,
            jump_offset_s: None,
        },
        interferers: vec![
            interferer(95.0, -8.0),
            interferer(200.0, -4.0),
            interferer(320.0, 0.0),
        ],
        noise_level_db: -30.0,
        duration_s,
        sample_rate: 16000,
        seed: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_scene_lowered_has_staggered_jumps() {
        let spec = lower_scene(&demo_scene_config(), 7).unwrap();
        assert_eq!(spec.geometry.sensors(), 6);
        assert_eq!(spec.interferers.len(), 3);
        let out = segbeam::scene::render_scene(&SceneSpec {
            duration_s: 0.05,
            ..spec.clone()
        });
        // duration too short for the segment starts: must complain
        assert!(out.is_err());
        // jumps land every 4 s overall: 4, 8, ..., 36 s
        let fs = f64::from(spec.sample_rate);
        let mut changes: Vec<usize> = spec
            .interferers
            .iter()
            .flat_map(|t| t.segments.iter().skip(1).map(|s| s.start_sample))
            .collect();
        changes.sort_unstable();
        let expected: Vec<usize> = (1..=9).map(|k| (4.0 * k as f64 * fs) as usize).collect();
        assert_eq!(changes, expected);
    }

    #[test]
    fn sugar_forms_are_exclusive() {
        let mut t = TrackConfig {
            signal: "white-noise".into(),
            level_db: 0.0,
            position: Some([1.0, 0.0, 0.0]),
            segments: Some(vec![]),
            positions: None,
            jump_every_s: None,
            jump_offset_s: None,
        };
        assert!(t.lower(16000, "t").is_err());
        t.segments = None;
        assert!(t.lower(16000, "t").is_ok());
    }

    #[test]
    fn signal_names_parse() {
        assert_eq!(parse_signal("speech-like"), Some(SignalKind::SpeechLike));
        assert_eq!(parse_signal("white-noise"), Some(SignalKind::WhiteNoise));
        assert_eq!(parse_signal("tone:440"), Some(SignalKind::Tone { freq_hz: 440.0 }));
        assert!(matches!(parse_signal("file:/tmp/x.wav"), Some(SignalKind::File { .. })));
        assert_eq!(parse_signal("chirp"), None);
    }

    #[test]
    fn scene_echo_roundtrips_through_toml() {
        let spec = lower_scene(&demo_scene_config(), 13).unwrap();
        let echo = scene_to_config(&spec);
        let text = toml::to_string(&FileConfig {
            scene: Some(echo),
            ..Default::default()
        })
        .unwrap();
        let parsed: FileConfig = toml::from_str(&text).unwrap();
        let spec2 = lower_scene(parsed.scene.as_ref().unwrap(), 13).unwrap();
        assert_eq!(spec, spec2);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let err = toml::from_str::<FileConfig>("nonsense_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("nonsense_key"));
    }

    #[test]
    fn rtf_mode_parsing() {
        assert_eq!(RtfMode::parse("oracle").unwrap(), RtfMode::Oracle);
        assert_eq!(RtfMode::parse("estimate").unwrap(), RtfMode::Estimate);
        assert!(matches!(RtfMode::parse("sidecar:x.rtf").unwrap(), RtfMode::Sidecar(_)));
        assert!(RtfMode::parse("psychic").is_err());
    }
}
