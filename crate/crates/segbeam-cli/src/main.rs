//! `segbeam` — render piecewise-stationary scenes, run the online segmented
//! beamformer against fixed-window MPDR baselines, and sweep hyperparameters.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segbeam_cli::config::{
    demo_scene_config, lower_scene, resolve_run_config, FileConfig, Overrides,
};
use segbeam_cli::pipeline::{run_beamform, run_simulate, run_sweep};
use segbeam_cli::CliError;

#[derive(Parser)]
#[command(
    name = "segbeam",
    about = "Online segmented MVDR/MPDR beamforming harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// TOML configuration file; the built-in demo scene is used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct BeamformArgs {
    /// Fixed-window baseline lengths, comma separated (e.g. 20,120,1200).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    windows: Option<Vec<usize>>,
    /// Fixed transition penalty C (overrides the per-bin default rule).
    #[arg(long, value_name = "X")]
    penalty_c: Option<f64>,
    /// Scale factor for the default penalty rule.
    #[arg(long, value_name = "X")]
    c_rel: Option<f64>,
    /// Minimum segment-boundary advance before a switch commits.
    #[arg(long, value_name = "N")]
    tau: Option<usize>,
    /// Candidate-bank cap (0 = unbounded).
    #[arg(long, value_name = "N")]
    max_window: Option<usize>,
    /// Diagonal loading (overrides the scale-relative default).
    #[arg(long, value_name = "X")]
    delta: Option<f64>,
    /// Constraint source: oracle | estimate | sidecar:<path>.
    #[arg(long, value_name = "MODE")]
    rtf: Option<String>,
    /// Dump every per-bin partition instead of the summary only.
    #[arg(long)]
    verbose_partitions: bool,
    /// Process a WAV file instead of a synthetic scene.
    #[arg(long, value_name = "PATH")]
    input_wav: Option<PathBuf>,
    /// Reference channel for the distortionless constraint and metrics.
    #[arg(long, value_name = "N")]
    reference_channel: Option<usize>,
    /// Target-active frame range `start:end` for file-mode RTF estimation.
    #[arg(long, value_name = "A:B")]
    rtf_target_frames: Option<String>,
    /// Target-free frame range `start:end` for file-mode RTF estimation.
    #[arg(long, value_name = "A:B")]
    rtf_noise_frames: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene: mixture + target image WAVs, change points, scene echo.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the segmented beamformer and fixed-window baselines; write
    /// enhanced audio, metrics CSV, and partition summaries.
    Beamform {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        beamform: BeamformArgs,
    },
    /// Grid-run the segmented beamformer over penalty/tau values.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        beamform: BeamformArgs,
        /// Penalty values, comma separated.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        c_values: Option<Vec<f64>>,
        /// Tau values, comma separated.
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        tau_values: Option<Vec<usize>>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<FileConfig, CliError> {
    match &common.config {
        Some(path) => FileConfig::from_path(path),
        None => Ok(FileConfig::default()),
    }
}

fn overrides(common: &CommonArgs, beamform: &BeamformArgs) -> Overrides {
    Overrides {
        seed: common.seed,
        output_dir: common.out.clone(),
        windows: beamform.windows.clone(),
        penalty_c: beamform.penalty_c,
        c_rel: beamform.c_rel,
        tau: beamform.tau,
        max_window: beamform.max_window,
        delta: beamform.delta,
        rtf: beamform.rtf.clone(),
        verbose_partitions: beamform.verbose_partitions,
        input_wav: beamform.input_wav.clone(),
        reference_channel: beamform.reference_channel,
        frame_size: None,
        hop: None,
        rtf_noise_frames: beamform.rtf_noise_frames.clone(),
        rtf_target_frames: beamform.rtf_target_frames.clone(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => {
            let file = load_config(&common)?;
            let seed = common.seed.or(file.seed).unwrap_or(7);
            let scene_cfg = file.scene.clone().unwrap_or_else(demo_scene_config);
            let spec = lower_scene(&scene_cfg, seed)?;
            let out_dir = common
                .out
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from("out"));
            let files = run_simulate(&spec, &out_dir)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Beamform { common, beamform } => {
            let file = load_config(&common)?;
            let cfg = resolve_run_config(&file, &overrides(&common, &beamform))?;
            let outcome = run_beamform(&cfg)?;
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for m in &outcome.methods {
                println!("{}", m.report.to_csv_row());
            }
            println!(
                "candidate_updates {} max_constraint_error {:.3e}",
                outcome.stats.candidate_updates, outcome.stats.max_constraint_error
            );
            Ok(())
        }
        Command::Sweep {
            common,
            beamform,
            c_values,
            tau_values,
        } => {
            let file = load_config(&common)?;
            let cfg = resolve_run_config(&file, &overrides(&common, &beamform))?;
            let sweep = file.sweep.clone().unwrap_or_default();
            let cs = c_values
                .or(sweep.c_values)
                .ok_or_else(|| CliError::Config("sweep needs --c-values (or [sweep] c_values)".into()))?;
            let taus = tau_values
                .or(sweep.tau_values)
                .ok_or_else(|| CliError::Config("sweep needs --tau-values (or [sweep] tau_values)".into()))?;
            let path = run_sweep(&cfg, &cs, &taus)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}
