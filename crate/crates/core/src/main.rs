//! Thin command-line front end over the library. Every subcommand reads a
//! JSON config, runs one library entry point, and writes artifacts plus a
//! manifest; exit code 0 on success, 2 on validation errors, 3 on numerical
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use connectome_id::connectome::correlation_matrix;
use connectome_id::ingest::{
    generate_synthetic_cohort, load_cohort, load_time_series, save_cohort, save_matrix,
    MatrixFormat, RowKind, SynthConfig,
};
use connectome_id::pipeline::{run_experiment, ExperimentKind, ExperimentSpec};
use connectome_id::regress::task_group_matrix;
use connectome_id::sketch::{principal_features, save_feature_selection};
use connectome_id::{Error, Result};

#[derive(Parser)]
#[command(name = "connectome-id", about = "Connectome fingerprinting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's feature budget
    #[arg(long)]
    top_features: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort and save it with a manifest
    Synth {
        /// Generator config (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Matrix storage format
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
    },
    /// Compute a connectivity matrix from one time-series file
    Connectome {
        /// Time-series matrix, regions x timepoints
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "csv")]
        format: MatrixFormat,
        /// Repetition time in seconds
        #[arg(long, default_value_t = 0.72)]
        tr: f64,
        /// Output matrix path (same format as input)
        #[arg(long)]
        out: PathBuf,
    },
    /// Select top leverage-score features from a cohort's group matrix
    Select {
        /// Cohort manifest (JSON)
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "rest")]
        task: String,
        #[arg(long, default_value_t = 100)]
        top_features: usize,
        /// Output CSV of selected features
        #[arg(long)]
        out: PathBuf,
    },
    /// Rest-vs-rest subject identification
    Match(ExperimentArgs),
    /// Cross-task identifiability grid
    Grid(ExperimentArgs),
    /// t-SNE embedding of all conditions
    Embed(ExperimentArgs),
    /// Nearest-neighbor condition classification on the embedding
    Classify(ExperimentArgs),
    /// Performance regression from connectome features
    Perf(ExperimentArgs),
    /// Identification robustness under scanner noise
    Multisite(ExperimentArgs),
}

fn run_kind(args: &ExperimentArgs, kind: ExperimentKind) -> Result<()> {
    let mut spec = ExperimentSpec::from_file(&args.config)?;
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "config declares {:?}, subcommand expects {:?}",
            spec.kind, kind
        )));
    }
    if let Some(seed) = args.seed {
        spec.seeds = vec![seed];
    }
    if let Some(t) = args.top_features {
        spec.top_features = t;
    }
    let report = run_experiment(&spec, &args.out)?;
    for (key, value) in &report.metrics {
        println!("{key}: {value}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            out,
            format,
        } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let mut cfg: SynthConfig =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let cohort = generate_synthetic_cohort(&cfg)?;
            let manifest = save_cohort(&cohort, &out, format)?;
            println!("cohort manifest: {}", manifest.display());
            Ok(())
        }
        Command::Connectome {
            input,
            format,
            tr,
            out,
        } => {
            let ts = load_time_series(&input, format, tr, RowKind::Region)?;
            let conn = correlation_matrix(&ts)?;
            save_matrix(conn.corr(), &out, format)?;
            println!("connectivity matrix: {}", out.display());
            Ok(())
        }
        Command::Select {
            config,
            task,
            top_features,
            out,
        } => {
            let cohort = load_cohort(&config)?;
            let group = task_group_matrix(&cohort, &task, 1)?;
            let sel = principal_features(&group.a, top_features.min(group.a.nrows()))?;
            save_feature_selection(&sel, &group.feature_pairs, &out)?;
            println!("selected {} features: {}", sel.indices.len(), out.display());
            Ok(())
        }
        Command::Match(args) => run_kind(&args, ExperimentKind::RestVsRest),
        Command::Grid(args) => run_kind(&args, ExperimentKind::CrossTaskGrid),
        Command::Embed(args) => run_kind(&args, ExperimentKind::TaskClustering),
        Command::Classify(args) => run_kind(&args, ExperimentKind::TaskClustering),
        Command::Perf(args) => run_kind(&args, ExperimentKind::Performance),
        Command::Multisite(args) => run_kind(&args, ExperimentKind::Multisite),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
