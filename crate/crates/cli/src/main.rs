//! Command-line interface for the DenseMapNet stereo-disparity engine.
//!
//! Exit codes: 0 success, 1 I/O or state errors, 2 usage errors,
//! 3 numerical failures during training.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use densemapnet_core::checkpoint::load_checkpoint;
use densemapnet_core::data::{
    load_dataset, load_image_unit, save_dataset, split_filter, synth_generate, DatasetMeta,
    StereoSample,
};
use densemapnet_core::error::{DataError, TrainError};
use densemapnet_core::eval::{
    benchmark_throughput, emit_disparity_png, evaluate_samples, DisparityPngMode,
};
use densemapnet_core::graph::{build_densemapnet, ModelGraph};
use densemapnet_core::train::{fit, FitOptions, TrainConfig};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "densemapnet",
    version,
    about = "Stereo disparity estimation with a dense correspondence/disparity CNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo dataset with exact ground truth.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        /// Maximum disparity in pixels (must be below the image width).
        #[arg(long)]
        dmax: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset directory, logging one line per epoch.
    Train(RunArgs),
    /// Evaluate a checkpoint on a dataset directory (end-point error).
    Eval(RunArgs),
    /// Predict a disparity map for one stereo pair.
    Predict {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for the gray16 and colormap PNGs.
        #[arg(long)]
        out: PathBuf,
        /// Maximum disparity the model was trained with.
        #[arg(long, default_value_t = 192.0)]
        dmax: f64,
        #[arg(long, default_value_t = 3)]
        channels: usize,
    },
    /// Print the per-layer parameter table and totals.
    Params {
        #[arg(long, default_value_t = 3)]
        channels: usize,
    },
    /// Deterministic inference throughput benchmark.
    Bench {
        #[arg(long, default_value_t = 540)]
        height: usize,
        #[arg(long, default_value_t = 960)]
        width: usize,
        /// Timed iterations (two warmup passes are always discarded).
        #[arg(long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        /// Omit timing fields from the output (for determinism diffs).
        #[arg(long)]
        no_timing: bool,
    },
}

/// Flags shared by `train` and `eval`; each overrides its config-file key.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    #[arg(long)]
    dmax: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_path: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Which samples to use: all (default), or the train/test side of the
    /// seeded 90/10 split.
    #[arg(long, default_value = "all")]
    split: String,
    /// Omit timing fields from logs and reports.
    #[arg(long)]
    no_timing: bool,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
    fn state(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
    fn numeric(message: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::SynthInvalid(_) => CliError::usage(e.to_string()),
            other => CliError::state(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGradient { .. } => {
                CliError::numeric(e.to_string())
            }
            TrainError::InvalidConfig(_) => CliError::usage(e.to_string()),
            other => CliError::state(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            count,
            height,
            width,
            dmax,
            seed,
            out,
        } => cmd_synth(count, height, width, dmax, seed, &out),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict {
            left,
            right,
            checkpoint,
            out,
            dmax,
            channels,
        } => cmd_predict(&left, &right, &checkpoint, &out, dmax, channels),
        Command::Params { channels } => cmd_params(channels),
        Command::Bench {
            height,
            width,
            iterations,
            channels,
            no_timing,
        } => cmd_bench(height, width, iterations, channels, no_timing),
    }
}

fn cmd_synth(
    count: usize,
    height: usize,
    width: usize,
    dmax: usize,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let samples = synth_generate(count, height, width, dmax, seed)?;
    let meta = DatasetMeta {
        count,
        h: height,
        w: width,
        dmax: dmax as f64,
        seed,
    };
    save_dataset(&samples, &meta, out)?;
    println!(
        "wrote {} samples to {} (dmax={dmax})",
        samples.len(),
        out.display()
    );
    Ok(())
}

/// Resolved settings for train/eval after merging defaults, config file,
/// dataset metadata, and flags.
struct ResolvedRun {
    samples: Vec<StereoSample>,
    cfg: TrainConfig,
    channels: usize,
    checkpoint_path: PathBuf,
    output_dir: Option<PathBuf>,
    no_timing: bool,
}

fn resolve_run(args: &RunArgs) -> Result<ResolvedRun, CliError> {
    let file_cfg = match &args.config {
        Some(path) => RunConfig::parse_file(path).map_err(CliError::usage)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        dataset_dir: args.dataset_dir.clone(),
        dmax: args.dmax,
        channels: args.channels,
        lr: args.lr,
        decay: args.decay,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
        checkpoint_path: args.checkpoint_path.clone(),
        output_dir: args.output_dir.clone(),
    };
    let merged = file_cfg.overlay(flags);

    let dataset_dir = merged
        .dataset_dir
        .ok_or_else(|| CliError::usage("dataset_dir is required (flag or config)"))?;
    if !dataset_dir.is_dir() {
        return Err(CliError::state(format!(
            "dataset directory {} does not exist",
            dataset_dir.display()
        )));
    }
    let channels = merged.channels.unwrap_or(3);
    let (all_samples, meta) = load_dataset(&dataset_dir, channels)?;

    let cfg = TrainConfig {
        learning_rate: merged.lr.unwrap_or(1e-3),
        decay: merged.decay.unwrap_or(1e-6),
        batch_size: merged.batch_size.unwrap_or(4),
        epochs: merged.epochs.unwrap_or(500),
        seed: merged.seed.unwrap_or(1),
        dmax: merged.dmax.unwrap_or(meta.dmax),
        ..TrainConfig::default()
    };
    cfg.validate()?;

    let samples = match args.split.as_str() {
        "all" => all_samples,
        side @ ("train" | "test") => {
            let (train, test, rejected) = split_filter(&all_samples, cfg.seed)?;
            if rejected > 0 {
                eprintln!("rejected {rejected} samples with out-of-range disparity");
            }
            let index = if side == "train" { train } else { test };
            index
                .indices
                .iter()
                .map(|&i| all_samples[i].clone())
                .collect()
        }
        other => {
            return Err(CliError::usage(format!(
                "--split must be all, train, or test (got `{other}`)"
            )))
        }
    };
    if samples.is_empty() {
        return Err(CliError::state("selected split is empty"));
    }

    Ok(ResolvedRun {
        samples,
        cfg,
        channels,
        checkpoint_path: merged
            .checkpoint_path
            .unwrap_or_else(|| PathBuf::from("densemapnet.dmnw")),
        output_dir: merged.output_dir,
        no_timing: args.no_timing,
    })
}

fn build_graph(channels: usize, dmax: f64) -> Result<ModelGraph<f32>, CliError> {
    build_densemapnet::<f32>(channels, dmax).map_err(|e| CliError::usage(e.to_string()))
}

fn cmd_train(args: RunArgs) -> Result<(), CliError> {
    let run = resolve_run(&args)?;
    if let Some(dir) = &run.output_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::state(format!("cannot create {}: {e}", dir.display())))?;
    }

    let mut graph = build_graph(run.channels, run.cfg.dmax)?;
    graph.init_parameters(run.cfg.seed);

    let no_timing = run.no_timing;
    let mut print_epoch = |stats: &densemapnet_core::train::EpochStats| {
        println!("{}", stats.format_line(!no_timing));
    };
    let options = FitOptions {
        checkpoint_path: Some(run.checkpoint_path.clone()),
        on_epoch: Some(&mut print_epoch),
        stop_after_epoch: None,
    };
    let log = fit(&mut graph, &run.samples, &run.cfg, options)?;

    if let Some(dir) = &run.output_dir {
        let path = dir.join("train.log");
        let text: String = log
            .epochs
            .iter()
            .map(|e| e.format_line(!no_timing) + "\n")
            .collect();
        std::fs::write(&path, text)
            .map_err(|e| CliError::state(format!("cannot write {}: {e}", path.display())))?;
    }
    println!("checkpoint written to {}", run.checkpoint_path.display());
    Ok(())
}

fn cmd_eval(args: RunArgs) -> Result<(), CliError> {
    let run = resolve_run(&args)?;
    if !run.checkpoint_path.is_file() {
        return Err(CliError::state(format!(
            "checkpoint {} does not exist",
            run.checkpoint_path.display()
        )));
    }
    let mut graph = build_graph(run.channels, run.cfg.dmax)?;
    load_checkpoint(&mut graph, &run.checkpoint_path)
        .map_err(|e| CliError::state(e.to_string()))?;
    let report =
        evaluate_samples(&graph, &run.samples).map_err(|e| CliError::state(e.to_string()))?;
    let text = report.format(!run.no_timing);
    print!("{text}");
    if let Some(dir) = &run.output_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::state(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("eval.txt");
        std::fs::write(&path, &text)
            .map_err(|e| CliError::state(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_predict(
    left: &Path,
    right: &Path,
    checkpoint: &Path,
    out: &Path,
    dmax: f64,
    channels: usize,
) -> Result<(), CliError> {
    if !checkpoint.is_file() {
        return Err(CliError::state(format!(
            "checkpoint {} does not exist",
            checkpoint.display()
        )));
    }
    let left = load_image_unit(left, channels)?;
    let right = load_image_unit(right, channels)?;
    let mut graph = build_graph(channels, dmax)?;
    load_checkpoint(&mut graph, checkpoint).map_err(|e| CliError::state(e.to_string()))?;

    let pred = graph
        .predict(&left, &right)
        .map_err(|e| CliError::state(e.to_string()))?;
    let pred_px = densemapnet_core::data::denormalize_disparity(&pred, dmax);

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::state(format!("cannot create {}: {e}", out.display())))?;
    let gray = out.join("disparity_gray16.png");
    let color = out.join("disparity_color.png");
    emit_disparity_png(&pred_px, &gray, DisparityPngMode::Gray16)
        .map_err(|e| CliError::state(e.to_string()))?;
    emit_disparity_png(&pred_px, &color, DisparityPngMode::Colormap { dmax })
        .map_err(|e| CliError::state(e.to_string()))?;
    println!("wrote {} and {}", gray.display(), color.display());
    Ok(())
}

fn cmd_params(channels: usize) -> Result<(), CliError> {
    let graph = build_graph(channels, 192.0)?;
    for info in graph.layer_param_summary() {
        if info.trainable == 0 && info.non_trainable == 0 {
            continue;
        }
        println!(
            "layer={} kind={} part={:?} trainable={} non_trainable={}",
            info.name, info.kind, info.part, info.trainable, info.non_trainable
        );
    }
    let (trainable, non_trainable) = graph.count_parameters();
    println!(
        "conv_layers={} disparity_conv_layers={}",
        graph.conv_layer_count(),
        graph.disparity_conv_count()
    );
    println!(
        "total_trainable={trainable} total_non_trainable={non_trainable} total={}",
        trainable + non_trainable
    );
    Ok(())
}

fn cmd_bench(
    height: usize,
    width: usize,
    iterations: usize,
    channels: usize,
    no_timing: bool,
) -> Result<(), CliError> {
    if iterations < 10 {
        return Err(CliError::usage("--iterations must be at least 10"));
    }
    if height < 8 || width < 8 {
        return Err(CliError::usage("bench dimensions must be at least 8x8"));
    }
    let mut graph = build_graph(channels, 192.0)?;
    graph.init_parameters(1);
    let report = benchmark_throughput(&graph, height, width, iterations)
        .map_err(|e| CliError::state(e.to_string()))?;
    print!("{}", report.format(!no_timing));
    Ok(())
}
