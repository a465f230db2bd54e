//! The `darqn` command line: `train`, `eval`, `count-params` and `visualize`.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! failures while running.

mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{count_params, Architecture, Model, ModelSpec, Profile};
use crate::envs::Environment;
use crate::evalviz::{capture_trajectory, evaluate, EvalBudget, Policy};
use crate::parallel::{derive_seed, Execution};
use crate::training::{load_model, train, transfer_cnn_from_file};

pub use config::{Config, KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable that forces deterministic mode when set to `1`.
pub const DETERMINISTIC_VAR: &str = "DARQN_DETERMINISTIC";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "darqn", version, about = "Deep attention recurrent Q-networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set total_steps=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write metrics and checkpoints to `out_dir`.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a checkpoint and print mean ± stddev reward per episode.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of episodes; the config's evaluation budget applies when absent.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Print the trainable parameter count of an architecture.
    CountParams {
        /// dqn | drqn | darqn_soft | darqn_hard
        model: String,
        /// paper | small
        profile: String,
        actions: usize,
    },
    /// Write per-step attention overlays (PPM) and `index.csv`.
    Visualize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Defaults, then the file, then overrides, then the environment variable.
fn resolve(args: &ConfigArgs) -> Result<Config, CliError> {
    let mut config = Config::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        config
            .apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
    }
    for spec in &args.overrides {
        config.apply_override(spec)?;
    }
    if std::env::var(DETERMINISTIC_VAR).is_ok_and(|v| v == "1") {
        config.train.deterministic = true;
    }
    config.validate()?;
    Ok(config)
}

fn make_env(config: &Config) -> Result<Box<dyn Environment>, CliError> {
    config.env.make(config.frame_side()).map_err(runtime)
}

fn spec_for(config: &Config) -> ModelSpec {
    ModelSpec::from_profile(config.model, config.profile, config.env.action_count())
}

fn print_config(out: &mut dyn Write, config: &Config) -> Result<(), CliError> {
    write!(out, "{}", config.to_text()).map_err(runtime)
}

fn cmd_train(out: &mut dyn Write, config: &Config) -> Result<(), CliError> {
    print_config(out, config)?;
    let env = make_env(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.train.seed, u64::MAX));
    let mut model = Model::init(spec_for(config), &mut rng).map_err(runtime)?;
    if let Some(path) = &config.transfer_from {
        transfer_cnn_from_file(path, &mut model).map_err(runtime)?;
    }
    let summary = train(model, env, &config.train, Some(&config.out_dir)).map_err(runtime)?;
    writeln!(
        out,
        "trained {} steps, {} updates, {} episodes; best mean eval reward {}",
        summary.steps,
        summary.updates,
        summary.episodes,
        summary
            .best_reward
            .map(|r| r.to_string())
            .unwrap_or_else(|| "n/a".into())
    )
    .map_err(runtime)
}

fn load(config: &Config, checkpoint: &Path) -> Result<Model, CliError> {
    load_model(checkpoint, spec_for(config)).map_err(runtime)
}

fn cmd_eval(
    out: &mut dyn Write,
    config: &Config,
    checkpoint: &Path,
    episodes: Option<usize>,
) -> Result<(), CliError> {
    print_config(out, config)?;
    let model = load(config, checkpoint)?;
    let env = make_env(config)?;
    let budget = match (episodes, config.train.eval_episodes) {
        (Some(0), _) => return Err(CliError::Usage("--episodes must be positive".into())),
        (Some(n), _) => EvalBudget::Episodes(n),
        (None, 0) => EvalBudget::Steps(config.train.eval_steps),
        (None, n) => EvalBudget::Episodes(n),
    };
    let policy = Policy::Agent {
        model: &model,
        epsilon: config.train.eval_epsilon,
        mix_prob: config.train.mix_prob,
    };
    let report = evaluate(
        policy,
        env.as_ref(),
        budget,
        config.train.seed,
        Execution::available(),
    )
    .map_err(runtime)?;
    writeln!(
        out,
        "episodes {} steps {} reward {} ± {}",
        report.episodes, report.steps, report.mean_reward, report.std_reward
    )
    .map_err(runtime)
}

fn cmd_count_params(
    out: &mut dyn Write,
    model: &str,
    profile: &str,
    actions: usize,
) -> Result<(), CliError> {
    let arch: Architecture = model
        .parse()
        .map_err(|e: crate::agent::AgentError| CliError::Usage(e.to_string()))?;
    if arch == Architecture::Linear {
        return Err(CliError::Usage(format!(
            "unknown model `{model}` (expected dqn|drqn|darqn_soft|darqn_hard)"
        )));
    }
    let profile: Profile = profile
        .parse()
        .map_err(|e: crate::agent::AgentError| CliError::Usage(e.to_string()))?;
    let n = count_params(&ModelSpec::from_profile(arch, profile, actions))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "{n}").map_err(runtime)
}

fn cmd_visualize(
    out: &mut dyn Write,
    config: &Config,
    checkpoint: &Path,
    steps: u64,
    dir: &Path,
) -> Result<(), CliError> {
    print_config(out, config)?;
    let model = load(config, checkpoint)?;
    let env = make_env(config)?;
    let policy = Policy::Agent {
        model: &model,
        epsilon: config.train.eval_epsilon,
        mix_prob: config.train.mix_prob,
    };
    let summary =
        capture_trajectory(policy, env.as_ref(), steps, config.train.seed, dir).map_err(runtime)?;
    writeln!(
        out,
        "wrote {} frames and index.csv to {}",
        summary.files.len(),
        dir.display()
    )
    .map_err(runtime)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => cmd_train(out, &resolve(&config)?),
        Command::Eval {
            checkpoint,
            config,
            episodes,
        } => cmd_eval(out, &resolve(&config)?, &checkpoint, episodes),
        Command::CountParams {
            model,
            profile,
            actions,
        } => cmd_count_params(out, &model, &profile, actions),
        Command::Visualize {
            checkpoint,
            config,
            steps,
            out: dir,
        } => cmd_visualize(out, &resolve(&config)?, &checkpoint, steps, &dir),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "darqn: {e}");
            e.exit_code()
        }
    }
}
