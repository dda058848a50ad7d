//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;

pub use commands::{
    cmd_evaluate, cmd_extract, cmd_reproduce_all, cmd_synth, cmd_train, prepare_data,
    summary_csv, PreparedData, SummaryRow,
};
pub use config::{DatasetSource, ExperimentId, Settings};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "citysound",
    about = "City classification from urban soundscapes: features, CNN training, and the full experiment matrix",
    version
)]
pub struct Cli {
    /// Flat key=value config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Thread count for data-parallel work (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// `synthetic` or a path to a TSV manifest (relative to the data root).
    #[arg(long)]
    dataset: Option<String>,

    /// Audio corpus root (defaults to $CITYSOUND_DATA, then `.`).
    #[arg(long)]
    data_root: Option<PathBuf>,

    /// Official split manifests, replacing the stratified split.
    #[arg(long, requires_all = ["val_manifest", "test_manifest"])]
    train_manifest: Option<PathBuf>,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    #[arg(long)]
    test_manifest: Option<PathBuf>,

    /// RNG seed for splits, synthesis, initialisation and shuffling.
    #[arg(long)]
    seed: Option<u64>,

    /// Synthetic corpus: clips per (city, scene) pair.
    #[arg(long)]
    clips_per_pair: Option<usize>,

    /// Synthetic corpus: clip length in seconds.
    #[arg(long)]
    duration: Option<f64>,

    /// Synthetic corpus: additive noise level.
    #[arg(long)]
    noise: Option<f64>,

    /// Directory of raw feature caches to reuse (and fill, for extract).
    #[arg(long)]
    cache_dir: Option<PathBuf>,

    /// Recompute outputs even when files already exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,

    /// Multi-task scene loss weight.
    #[arg(long)]
    scene_weight: Option<f64>,

    /// Multi-task city loss weight.
    #[arg(long)]
    city_weight: Option<f64>,

    /// Average-pool factor on the input time axis (1 = full resolution).
    #[arg(long)]
    time_downsample: Option<usize>,

    /// Stop when validation accuracy reaches this value.
    #[arg(long)]
    early_stop: Option<f64>,

    /// Train the ten scene-specific models concurrently (scene_priors only).
    #[arg(long)]
    parallel: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic WAV corpus plus manifest.
    Synth {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory for WAV files and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract per-clip feature caches and training normalisation stats.
    Extract {
        #[command(flatten)]
        data: DataArgs,
        /// Output directory for .csfm caches and norm_stats.csfm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one experiment's model(s).
    Train {
        /// Experiment id (benchmark_scene10 | city6 | scene_priors | pair60 |
        /// grouped3 | grouped_pair18 | multilabel16 | multitask).
        #[arg(long)]
        experiment: String,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Output directory for checkpoints and training logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint and write the report bundle.
    Evaluate {
        #[arg(long)]
        experiment: String,
        /// Checkpoint file, or directory for multi-model experiments.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Which split to score: train | validation | test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write the city feature-distance table.
        #[arg(long)]
        city_distances: bool,
        /// Multi-label binarisation threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every experiment and emit the results-table-shaped summary CSV.
    ReproduceAll {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn apply_data_args(settings: &mut Settings, args: &DataArgs) {
    if let Some(d) = &args.dataset {
        settings.dataset = DatasetSource::parse(d);
    }
    if let Some(r) = &args.data_root {
        settings.data_root = r.clone();
    }
    if let (Some(t), Some(v), Some(e)) =
        (&args.train_manifest, &args.val_manifest, &args.test_manifest)
    {
        settings.split_manifests = Some((t.clone(), v.clone(), e.clone()));
    }
    if let Some(s) = args.seed {
        settings.seed = s;
    }
    if let Some(c) = args.clips_per_pair {
        settings.synth_clips_per_pair = c;
    }
    if let Some(d) = args.duration {
        settings.synth_duration_s = d;
    }
    if let Some(n) = args.noise {
        settings.synth_noise = n;
    }
    if let Some(c) = &args.cache_dir {
        settings.cache_dir = Some(c.clone());
    }
    settings.force |= args.force;
}

fn apply_train_args(settings: &mut Settings, args: &TrainArgs) {
    if let Some(e) = args.epochs {
        settings.epochs = e;
    }
    if let Some(b) = args.batch_size {
        settings.batch_size = b;
    }
    if let Some(lr) = args.lr {
        settings.lr = lr;
    }
    if let Some(w) = args.scene_weight {
        settings.scene_weight = w;
    }
    if let Some(w) = args.city_weight {
        settings.city_weight = w;
    }
    if let Some(t) = args.time_downsample {
        settings.time_downsample = t;
    }
    if let Some(a) = args.early_stop {
        settings.early_stop_val_accuracy = Some(a);
    }
    settings.parallel |= args.parallel;
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap treats --help/--version as errors that print to stdout
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("citysound: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut settings = Settings::default();
    if let Some(path) = &cli.config {
        settings.apply_config_file(path)?;
    }
    match cli.command {
        Command::Synth { data, out } => {
            apply_data_args(&mut settings, &data);
            cmd_synth(&settings, &out)
        }
        Command::Extract { data, out } => {
            apply_data_args(&mut settings, &data);
            cmd_extract(&settings, &out)
        }
        Command::Train { experiment, data, train, out } => {
            apply_data_args(&mut settings, &data);
            apply_train_args(&mut settings, &train);
            let id: ExperimentId = experiment.parse()?;
            cmd_train(id, &settings, &out)
        }
        Command::Evaluate { experiment, checkpoint, split, city_distances, threshold, data, out } => {
            apply_data_args(&mut settings, &data);
            if let Some(t) = threshold {
                settings.threshold = t;
            }
            let id: ExperimentId = experiment.parse()?;
            cmd_evaluate(id, &settings, &checkpoint, &split, &out, city_distances).map(|_| ())
        }
        Command::ReproduceAll { data, train, out } => {
            apply_data_args(&mut settings, &data);
            apply_train_args(&mut settings, &train);
            cmd_reproduce_all(&settings, &out)
        }
    }
}

impl From<clap::Error> for Error {
    fn from(e: clap::Error) -> Self {
        Error::Config(e.to_string())
    }
}
