mod commands;
mod config;
mod error;
mod ingest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bham::tune::{DEFAULT_S0_COUNT, DEFAULT_S0_MAX, DEFAULT_S0_MIN};
use bham::{Criterion, Family, PriorKind, Solver};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bham",
    version,
    about = "Spike-and-slab additive models fitted by EM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate train/test CSVs from the benchmark additive model.
    Simulate(SimulateArgs),
    /// Fit at a fixed spike scale.
    Fit(FitArgs),
    /// Choose the spike scale by cross-validation, then refit on all rows.
    Tune(TuneArgs),
    /// Predict from a saved model.
    Predict(PredictArgs),
    /// Print a summary of a saved model.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Gaussian => Family::GaussianIdentity,
            FamilyArg::Binomial => Family::BinomialLogit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    EmCd,
    EmIwls,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::EmCd => Solver::EmCd,
            SolverArg::EmIwls => Solver::EmIwls,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PriorArg {
    De,
    Normal,
}

impl From<PriorArg> for PriorKind {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::De => PriorKind::DeMixture,
            PriorArg::Normal => PriorKind::NormalMixture,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CriterionArg {
    Deviance,
    Mse,
    Auc,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Deviance => Criterion::Deviance,
            CriterionArg::Mse => Criterion::Mse,
            CriterionArg::Auc => Criterion::Auc,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    family: FamilyArg,
    /// Number of predictors (at least 4).
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Gaussian noise variance.
    #[arg(long, default_value_t = 1.0)]
    dispersion: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    outcome: String,
    /// Comma-separated predictor columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    #[arg(long, value_enum, default_value = "gaussian")]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "em-cd")]
    solver: SolverArg,
    #[arg(long, value_enum, default_value = "de")]
    prior: PriorArg,
    /// Slab scale.
    #[arg(long, default_value_t = 1.0)]
    s1: f64,
    /// Beta hyperprior shapes on the inclusion probabilities.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Basis size for predictors not listed in --smooth-config.
    #[arg(long, default_value_t = 10)]
    default_k: usize,
    /// TOML file with per-predictor smooth settings.
    #[arg(long)]
    smooth_config: Option<PathBuf>,
    /// Relative deviance change that stops EM.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Inclusion-probability cutoff for selection.csv.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Held-out CSV for out-of-sample metrics.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, default_value = "bham-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Spike scale.
    #[arg(long, default_value_t = 0.05)]
    s0: f64,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_S0_MIN)]
    s0_min: f64,
    #[arg(long, default_value_t = DEFAULT_S0_MAX)]
    s0_max: f64,
    #[arg(long, default_value_t = DEFAULT_S0_COUNT)]
    s0_count: usize,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_enum, default_value = "deviance")]
    criterion: CriterionArg,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Tune(a) => commands::tune(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
