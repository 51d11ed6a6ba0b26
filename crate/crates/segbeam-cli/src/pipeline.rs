//! Run orchestration: scene rendering, per-bin beamforming across methods,
//! metric assembly, and output files.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;

use segbeam::io::{write_changes, write_wav, AudioBuffer, WavFormat};
use segbeam::metrics::{change_point_score, si_sdr, MetricsReport, DB_FLOOR};
use segbeam::mvdr::{default_delta_over, Snapshot, SteeringVector};
use segbeam::rtf::{estimate_rtf_cw, RtfEstimate};
use segbeam::scene::{render_scene, SceneSpec};
use segbeam::segmenter::{default_penalty, fixed_window_mpdr, SegmenterConfig, SegmenterState};
use segbeam::stft::{istft_inverse, stft_forward, Spectrogram};
use segbeam::Maintenance;

use crate::config::{scene_to_config, FileConfig, InputMode, RtfMode, RunConfig};
use crate::summary::{consensus_change_points, summarize_against_truth, CONSENSUS_MIN_FRACTION};
use crate::CliError;

/// Aggregated candidate-update statistics across all bins.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunStats {
    pub candidate_updates: u64,
    pub max_constraint_error: f64,
}

#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub label: String,
    pub enhanced: Vec<f64>,
    pub report: MetricsReport,
}

/// Everything a beamforming run produces, before and after files are written.
#[derive(Debug, Clone)]
pub struct BeamformOutcome {
    pub methods: Vec<MethodOutcome>,
    pub per_bin_partitions: Vec<Vec<usize>>,
    pub consensus_frames: Vec<usize>,
    pub truth_frames: Vec<usize>,
    pub stats: RunStats,
    pub sample_rate: u32,
    pub num_frames: usize,
    /// Paths written by [`run_beamform`]; empty for in-memory runs.
    pub files: Vec<PathBuf>,
}

/// Run the closure under the `SEGBEAM_THREADS` parallelism cap, when set.
pub fn with_thread_cap<F, R>(f: F) -> R
where
    F: FnOnce() -> R + Send,
    R: Send,
{
    let cap = std::env::var("SEGBEAM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    match cap {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

struct ResolvedInput {
    mixture: Vec<Vec<f64>>,
    sample_rate: u32,
    target_image: Option<Vec<Vec<f64>>>,
    truth_changes: Vec<usize>,
    scene: Option<SceneSpec>,
    rtf_sidecar: Option<PathBuf>,
}

fn resolve_input(cfg: &RunConfig) -> Result<ResolvedInput, CliError> {
    match &cfg.input {
        InputMode::Synthetic(spec) => {
            let out = render_scene(spec)?;
            Ok(ResolvedInput {
                mixture: out.mixture,
                sample_rate: spec.sample_rate,
                target_image: Some(out.target_image),
                truth_changes: out.true_changes,
                scene: Some(spec.clone()),
                rtf_sidecar: None,
            })
        }
        InputMode::File { wav, rtf_sidecar } => {
            let buf = segbeam::io::read_wav(wav)?;
            Ok(ResolvedInput {
                mixture: buf.samples,
                sample_rate: buf.sample_rate,
                target_image: None,
                truth_changes: Vec::new(),
                scene: None,
                rtf_sidecar: rtf_sidecar.clone(),
            })
        }
    }
}

fn slice_frames(spec: &Spectrogram, lo: usize, hi: usize, what: &str) -> Result<Spectrogram, CliError> {
    if lo >= hi || hi > spec.frames() {
        return Err(CliError::Config(format!(
            "{what}: frame range {lo}:{hi} out of bounds (have {} frames)",
            spec.frames()
        )));
    }
    let mut out = Spectrogram::zeros(spec.config, hi - lo, spec.channels(), 0);
    for bin in 0..spec.bins() {
        for frame in lo..hi {
            for ch in 0..spec.channels() {
                out.set(bin, frame - lo, ch, spec.at(bin, frame, ch));
            }
        }
    }
    Ok(out)
}

fn resolve_steering(
    cfg: &RunConfig,
    input: &ResolvedInput,
    spec_mix: &Spectrogram,
) -> Result<Vec<SteeringVector>, CliError> {
    let bins = spec_mix.bins();
    let channels = spec_mix.channels();
    match &cfg.rtf {
        RtfMode::Oracle => {
            let scene = input.scene.as_ref().ok_or_else(|| {
                CliError::Config(
                    "--rtf oracle needs a synthetic scene; use sidecar:<path> or estimate for file input"
                        .into(),
                )
            })?;
            Ok(scene.target_steering(cfg.frame_size, cfg.reference_channel)?)
        }
        RtfMode::Sidecar(path) => {
            let sidecar_path = if path.as_os_str().is_empty() {
                input.rtf_sidecar.clone().ok_or_else(|| {
                    CliError::Config("no RTF sidecar path given (flag or [input] section)".into())
                })?
            } else {
                path.clone()
            };
            let est = RtfEstimate::from_sidecar(&sidecar_path)?;
            if est.bins() != bins || est.channels() != channels {
                return Err(CliError::Config(format!(
                    "RTF sidecar shape {}×{} does not match the input ({bins}×{channels})",
                    est.bins(),
                    est.channels()
                )));
            }
            if est.reference_index != cfg.reference_channel {
                return Err(CliError::Config(format!(
                    "RTF sidecar reference channel {} differs from configured {}",
                    est.reference_index, cfg.reference_channel
                )));
            }
            (0..bins).map(|b| Ok(est.steering(b)?)).collect()
        }
        RtfMode::Estimate => {
            let (noisy, noise) = match (&input.target_image, cfg.rtf_target_frames, cfg.rtf_noise_frames) {
                // Synthetic scenes provide oracle intervals: the exact
                // target-free component serves as the noise segment.
                (Some(target), None, None) => {
                    let target_free: Vec<Vec<f64>> = input
                        .mixture
                        .iter()
                        .zip(target)
                        .map(|(m, t)| m.iter().zip(t).map(|(a, b)| a - b).collect())
                        .collect();
                    let stft_cfg = spec_mix.config;
                    (spec_mix.clone(), stft_forward(&target_free, &stft_cfg)?)
                }
                (_, Some((tlo, thi)), Some((nlo, nhi))) => (
                    slice_frames(spec_mix, tlo, thi, "rtf_target_frames")?,
                    slice_frames(spec_mix, nlo, nhi, "rtf_noise_frames")?,
                ),
                _ => {
                    return Err(CliError::Config(
                        "--rtf estimate on file input needs --rtf-target-frames and --rtf-noise-frames"
                            .into(),
                    ))
                }
            };
            let est = estimate_rtf_cw(&noisy, &noise, cfg.reference_channel)?;
            (0..bins).map(|b| Ok(est.steering(b)?)).collect()
        }
    }
}

struct BinOutput {
    seg_row: Vec<Complex64>,
    partition: Vec<usize>,
    baseline_rows: Vec<Vec<Complex64>>,
    updates: u64,
    max_cerr: f64,
}

/// The in-memory computation behind `beamform`: per-bin segmented runs plus
/// fixed-window baselines, metrics included. Does not touch the filesystem.
pub fn compute_beamform(cfg: &RunConfig) -> Result<BeamformOutcome, CliError> {
    let input = resolve_input(cfg)?;
    let stft_cfg = cfg.stft_config(input.sample_rate)?;
    if cfg.reference_channel >= input.mixture.len() {
        return Err(CliError::Config(format!(
            "reference channel {} out of range for {} channels",
            cfg.reference_channel,
            input.mixture.len()
        )));
    }
    let spec_mix = stft_forward(&input.mixture, &stft_cfg)?;
    let steering = resolve_steering(cfg, &input, &spec_mix)?;

    let bins = spec_mix.bins();
    let frames = spec_mix.frames();
    let channels = spec_mix.channels();
    let seg_opts = &cfg.segmenter;

    let results: Vec<BinOutput> = with_thread_cap(|| {
        (0..bins)
            .into_par_iter()
            .map(|bin| -> Result<BinOutput, segbeam::Error> {
                let snaps: Vec<Snapshot> = (0..frames).map(|t| spec_mix.snapshot(bin, t)).collect();
                let nu = steering[bin].clone();
                let delta = seg_opts.delta.unwrap_or_else(|| default_delta_over(&snaps));
                let penalty = match seg_opts.penalty_c {
                    Some(c) => c,
                    None => default_penalty(&snaps, &nu, delta, seg_opts.c_rel)?,
                };
                let seg_cfg = SegmenterConfig {
                    penalty_c: penalty,
                    delta,
                    tau: seg_opts.tau,
                    max_window: seg_opts.max_window,
                    p: channels,
                    maintenance: Maintenance::default(),
                };
                let mut state = SegmenterState::new(nu.clone(), &seg_cfg)?;
                let mut seg_row = Vec::with_capacity(frames);
                for x in &snaps {
                    seg_row.push(state.step(x, &seg_cfg)?.y);
                }
                let baseline_rows = cfg
                    .baselines
                    .iter()
                    .map(|&k| fixed_window_mpdr(&snaps, &nu, k, delta))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(BinOutput {
                    seg_row,
                    partition: state.partition().to_vec(),
                    baseline_rows,
                    updates: state.update_count(),
                    max_cerr: state.max_constraint_error(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let stats = RunStats {
        candidate_updates: results.iter().map(|r| r.updates).sum(),
        max_constraint_error: results.iter().map(|r| r.max_cerr).fold(0.0, f64::max),
    };
    let per_bin_partitions: Vec<Vec<usize>> = results.iter().map(|r| r.partition.clone()).collect();

    // truth sample indices → frame indices (frame whose analysis window has
    // fully entered the new regime at 50% overlap)
    let pad = stft_cfg.edge_pad();
    let mut truth_frames: Vec<usize> = input
        .truth_changes
        .iter()
        .map(|&s| (s + pad) / stft_cfg.hop)
        .collect();
    truth_frames.dedup();
    let tolerance = seg_opts.tau + 10;
    let consensus_frames =
        consensus_change_points(&per_bin_partitions, frames, seg_opts.tau.max(1), CONSENSUS_MIN_FRACTION);

    // resynthesize each method and attach metrics
    let signal_len = spec_mix.signal_len();
    let trim = cfg.frame_size.min(signal_len / 4);
    let target_ref = input.target_image.as_ref().map(|t| &t[cfg.reference_channel]);
    let unprocessed_si = match target_ref {
        Some(reference) => si_sdr(
            trimmed(&input.mixture[cfg.reference_channel], trim),
            trimmed(reference, trim),
        )?,
        None => f64::NAN,
    };

    let mut methods = Vec::new();
    let mut assemble = |label: String, rows: Vec<Vec<Complex64>>, detected: &[usize]| -> Result<(), CliError> {
        let spec_out = Spectrogram::from_mono_bins(&rows, stft_cfg, signal_len)?;
        let enhanced = istft_inverse(&spec_out)?.remove(0);
        let (si, gain) = match target_ref {
            Some(reference) => {
                let si = si_sdr(trimmed(&enhanced, trim), trimmed(reference, trim))?;
                (si, si - unprocessed_si)
            }
            None => (f64::NAN, f64::NAN),
        };
        let mean_power = mean_power_db(&enhanced);
        let (cp_p, cp_r, cp_l) = change_point_score(detected, &truth_frames, tolerance);
        methods.push(MethodOutcome {
            label: label.clone(),
            enhanced,
            report: MetricsReport {
                method: label,
                si_sdr_db: si,
                si_sdr_gain_db: gain,
                mean_output_power_db: mean_power,
                cp_precision: cp_p,
                cp_recall: cp_r,
                cp_mean_latency_frames: cp_l,
            },
        });
        Ok(())
    };

    let seg_rows: Vec<Vec<Complex64>> = results.iter().map(|r| r.seg_row.clone()).collect();
    assemble("segmented".to_string(), seg_rows, &consensus_frames)?;
    for (ki, &k) in cfg.baselines.iter().enumerate() {
        let rows: Vec<Vec<Complex64>> = results.iter().map(|r| r.baseline_rows[ki].clone()).collect();
        assemble(format!("mpdr_win{k}"), rows, &[])?;
    }

    Ok(BeamformOutcome {
        methods,
        per_bin_partitions,
        consensus_frames,
        truth_frames,
        stats,
        sample_rate: input.sample_rate,
        num_frames: frames,
        files: Vec::new(),
    })
}

fn trimmed(x: &[f64], trim: usize) -> &[f64] {
    if x.len() > 2 * trim {
        &x[trim..x.len() - trim]
    } else {
        x
    }
}

fn mean_power_db(x: &[f64]) -> f64 {
    if x.is_empty() {
        return DB_FLOOR;
    }
    let mean = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    (10.0 * mean.log10()).max(DB_FLOOR)
}

/// `beamform`: compute, then write enhanced WAVs, the metrics CSV, and the
/// partition summary into the output directory.
pub fn run_beamform(cfg: &RunConfig) -> Result<BeamformOutcome, CliError> {
    let mut outcome = compute_beamform(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", cfg.output_dir.display())))?;

    for m in &outcome.methods {
        let path = cfg.output_dir.join(format!("enhanced_{}.wav", m.label));
        let buf = AudioBuffer::new(vec![m.enhanced.clone()], outcome.sample_rate)?;
        write_wav(&buf, &path, WavFormat::Float32)?;
        outcome.files.push(path);
    }

    let csv_path = cfg.output_dir.join("metrics.csv");
    let mut csv = String::from(MetricsReport::CSV_HEADER);
    csv.push('\n');
    for m in &outcome.methods {
        csv.push_str(&m.report.to_csv_row());
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv).map_err(|e| CliError::from_io(&csv_path, e))?;
    outcome.files.push(csv_path);

    let summary_path = cfg.output_dir.join("partitions_summary.txt");
    let mut text = String::new();
    text.push_str(&format!(
        "bins {} frames {}\nconsensus_change_frames {}\ntruth_frames {}\n",
        outcome.per_bin_partitions.len(),
        outcome.num_frames,
        join(&outcome.consensus_frames),
        join(&outcome.truth_frames),
    ));
    let tolerance = cfg.segmenter.tau + 10;
    for s in summarize_against_truth(&outcome.per_bin_partitions, &outcome.truth_frames, tolerance) {
        text.push_str(&format!(
            "truth_frame {} bins_detecting {} median_detected {}\n",
            s.truth_frame,
            s.bins_detecting,
            s.median_detected_frame
                .map_or_else(|| "-".to_string(), |f| f.to_string()),
        ));
    }
    std::fs::write(&summary_path, text).map_err(|e| CliError::from_io(&summary_path, e))?;
    outcome.files.push(summary_path);

    if cfg.verbose_partitions {
        let full_path = cfg.output_dir.join("partitions_full.txt");
        let mut text = String::new();
        for (bin, partition) in outcome.per_bin_partitions.iter().enumerate() {
            text.push_str(&format!("bin {bin}: {}\n", join(partition)));
        }
        std::fs::write(&full_path, text).map_err(|e| CliError::from_io(&full_path, e))?;
        outcome.files.push(full_path);
    }
    Ok(outcome)
}

fn join(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `simulate`: render the scene and write the mixture, the clean target
/// image, the change-point sidecar, and a loadable scene echo.
pub fn run_simulate(spec: &SceneSpec, output_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let out = render_scene(spec)?;
    std::fs::create_dir_all(output_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", output_dir.display())))?;
    let mut files = Vec::new();

    let mixture_path = output_dir.join("mixture.wav");
    write_wav(
        &AudioBuffer::new(out.mixture, spec.sample_rate)?,
        &mixture_path,
        WavFormat::Float32,
    )?;
    files.push(mixture_path);

    let target_path = output_dir.join("target.wav");
    write_wav(
        &AudioBuffer::new(out.target_image, spec.sample_rate)?,
        &target_path,
        WavFormat::Float32,
    )?;
    files.push(target_path);

    let changes_path = output_dir.join("changes.txt");
    write_changes(&out.true_changes, &changes_path)?;
    files.push(changes_path);

    let echo_path = output_dir.join("scene.toml");
    let echo = FileConfig {
        scene: Some(scene_to_config(spec)),
        ..Default::default()
    };
    let text = toml::to_string(&echo)
        .map_err(|e| CliError::Config(format!("failed to serialize scene echo: {e}")))?;
    std::fs::write(&echo_path, text).map_err(|e| CliError::from_io(&echo_path, e))?;
    files.push(echo_path);

    Ok(files)
}

/// `sweep`: run the segmented beamformer over the (C, τ) grid, appending one
/// CSV row per combination. Existing rows are skipped, so an interrupted
/// sweep resumes where it stopped.
pub fn run_sweep(
    cfg: &RunConfig,
    c_values: &[f64],
    tau_values: &[usize],
) -> Result<PathBuf, CliError> {
    if c_values.is_empty() || tau_values.is_empty() {
        return Err(CliError::Config("sweep needs at least one C and one tau value".into()));
    }
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Config(format!("{}: {e}", cfg.output_dir.display())))?;
    let path = cfg.output_dir.join("sweep.csv");

    let header = format!("penalty_c,tau,{}", MetricsReport::CSV_HEADER);
    let mut existing: Vec<String> = Vec::new();
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::from_io(&path, e))?;
        for line in text.lines().skip(1) {
            let mut it = line.split(',');
            if let (Some(c), Some(tau)) = (it.next(), it.next()) {
                existing.push(format!("{c},{tau}"));
            }
        }
    } else {
        std::fs::write(&path, format!("{header}\n")).map_err(|e| CliError::from_io(&path, e))?;
    }

    for &c in c_values {
        for &tau in tau_values {
            let key = format!("{c},{tau}");
            if existing.iter().any(|k| k == &key) {
                continue;
            }
            let mut run_cfg = cfg.clone();
            run_cfg.segmenter.penalty_c = Some(c);
            run_cfg.segmenter.tau = tau;
            run_cfg.baselines = Vec::new();
            let outcome = compute_beamform(&run_cfg)?;
            let row = &outcome.methods[0].report;
            let line = format!("{key},{}\n", row.to_csv_row());
            use std::io::Write as _;
            let mut file = std::fs::OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| CliError::from_io(&path, e))?;
            file.write_all(line.as_bytes())
                .map_err(|e| CliError::from_io(&path, e))?;
        }
    }
    Ok(path)
}
