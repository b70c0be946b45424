mod classifier;
mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fliptest_core::neural::TrainConfig;
use fliptest_core::CostFunction;
use serde::Serialize;

/// Audit a black-box binary classifier for group discrimination with
/// optimal transport flipsets.
#[derive(Debug, Parser)]
#[command(name = "fliptest", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (for `synth`, a path ending in `.csv` names the file).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Work on raw feature values instead of standardized ones.
    #[arg(long, global = true)]
    pub no_normalize: bool,
    /// Transport cost.
    #[arg(long, global = true, default_value = "sql1")]
    pub cost: CostFunction,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic grouped dataset.
    Synth(commands::SynthArgs),
    /// Fit an exact or learned transport map between the two groups.
    Map(commands::MapArgs),
    /// Compute flipsets and transparency reports.
    #[command(alias = "audit")]
    Flipset(commands::AuditArgs),
    /// Transparency report for one flipset side, optionally with histograms.
    Report(commands::ReportArgs),
    /// Distributional checks of a trained generator.
    Validate(commands::ValidateArgs),
    /// Variance of a fixed point's image across resampled datasets.
    Stability(commands::StabilityArgs),
    /// Six-dimensional control experiment with a three-feature classifier.
    Control(commands::ControlArgs),
}

/// Adversarial training options shared by the commands that train generators.
#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Generator updates.
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    /// Critic updates per generator update.
    #[arg(long, default_value_t = 5)]
    pub critic_steps: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub clip: f64,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128,128")]
    pub hidden: Vec<usize>,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            batch_size: self.batch,
            generator_steps: self.steps,
            critic_steps_per_gen: self.critic_steps,
            learning_rate: self.lr,
            clip: self.clip,
            seed,
            hidden: self.hidden.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Gan,
}

/// Invalid combination of options or parameter values.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    use fliptest_core::Error as E;
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                _ if e.is_numeric() => EXIT_NUMERIC,
                E::BadParams(_) | E::KTooLarge { .. } | E::TooLarge(_) => EXIT_CONFIG,
                _ => EXIT_DATA,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
    }
    1
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FLIPTEST_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| config_error(format!("FLIPTEST_THREADS: `{v}` is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config_error(format!("FLIPTEST_THREADS: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    let g = &cli.global;
    match &cli.command {
        Command::Synth(a) => commands::synth(g, a),
        Command::Map(a) => commands::map(g, a),
        Command::Flipset(a) => commands::audit(g, a),
        Command::Report(a) => commands::report(g, a),
        Command::Validate(a) => commands::validate(g, a),
        Command::Stability(a) => commands::stability(g, a),
        Command::Control(a) => commands::control(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
