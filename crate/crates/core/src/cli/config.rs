//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::agent::{Architecture, Profile};
use crate::envs::EnvKind;
use crate::training::TrainConfig;

use super::CliError;

/// Everything a command needs: model, environment, hyperparameters and paths.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub model: Architecture,
    pub profile: Profile,
    pub env: EnvKind,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    /// Checkpoint whose conv stack initializes the model before training.
    pub transfer_from: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: Architecture::DarqnSoft,
            profile: Profile::Paper,
            env: EnvKind::Catch,
            train: TrainConfig::default(),
            out_dir: PathBuf::from("runs/darqn"),
            transfer_from: None,
        }
    }
}

/// Keys in printing order.
pub const KEYS: &[&str] = &[
    "model",
    "profile",
    "env",
    "seed",
    "gamma",
    "lr_start",
    "lr_end",
    "lr_decay_steps",
    "epsilon_start",
    "epsilon_end",
    "epsilon_decay_steps",
    "unroll",
    "update_period",
    "batch_size",
    "target_sync",
    "total_steps",
    "learn_start",
    "replay_capacity",
    "eval_period",
    "eval_steps",
    "eval_episodes",
    "eval_epsilon",
    "mix_prob",
    "advantage_sign",
    "entropy_coef",
    "optimizer",
    "rms_momentum",
    "rms_decay",
    "rms_epsilon",
    "clip_rewards",
    "stop_at_reward",
    "deterministic",
    "out_dir",
    "transfer_from",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected true|false, got `{value}`"
        ))),
    }
}

/// Hard attention starts its learning-rate decay at 0.001, the rest at 0.01.
pub fn default_lr_start(model: Architecture) -> f64 {
    match model {
        Architecture::DarqnHard => 0.001,
        _ => TrainConfig::default().learning_rate.start,
    }
}

impl Config {
    /// Sets one key. Switching `model` also moves `lr_start` to the new
    /// model's default when it still holds the old one.; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let t = &mut self.train;
        match key {
            "model" => {
                let arch: Architecture = parse(key, value)?;
                if arch == Architecture::Linear {
                    return Err(CliError::Config(
                        "model: expected dqn|drqn|darqn_soft|darqn_hard".into(),
                    ));
                }
                let old = default_lr_start(self.model);
                if t.learning_rate.start == old {
                    t.learning_rate.start = default_lr_start(arch);
                }
                self.model = arch;
            }
            "profile" => self.profile = parse(key, value)?,
            "env" => self.env = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "lr_start" => t.learning_rate.start = parse(key, value)?,
            "lr_end" => t.learning_rate.end = parse(key, value)?,
            "lr_decay_steps" => t.learning_rate.decay_steps = parse(key, value)?,
            "epsilon_start" => t.epsilon.start = parse(key, value)?,
            "epsilon_end" => t.epsilon.end = parse(key, value)?,
            "epsilon_decay_steps" => t.epsilon.decay_steps = parse(key, value)?,
            "unroll" => t.unroll = parse(key, value)?,
            "update_period" => t.update_period = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "target_sync" => t.target_sync = parse(key, value)?,
            "total_steps" => t.total_steps = parse(key, value)?,
            "learn_start" => t.learn_start = parse(key, value)?,
            "replay_capacity" => t.replay_capacity = parse(key, value)?,
            "eval_period" => t.eval_period = parse(key, value)?,
            "eval_steps" => t.eval_steps = parse(key, value)?,
            "eval_episodes" => t.eval_episodes = parse(key, value)?,
            "eval_epsilon" => t.eval_epsilon = parse(key, value)?,
            "mix_prob" => t.mix_prob = parse(key, value)?,
            "advantage_sign" => t.advantage_sign = parse(key, value)?,
            "entropy_coef" => t.entropy_coef = parse(key, value)?,
            "optimizer" => t.optimizer = parse(key, value)?,
            "rms_momentum" => t.rmsprop.momentum = parse(key, value)?,
            "rms_decay" => t.rmsprop.decay = parse(key, value)?,
            "rms_epsilon" => t.rmsprop.epsilon = parse(key, value)?,
            "clip_rewards" => t.clip_rewards = parse_bool(key, value)?,
            "stop_at_reward" => {
                t.stop_at_reward = if value.is_empty() {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "deterministic" => t.deterministic = parse_bool(key, value)?,
            "out_dir" => {
                if value.is_empty() {
                    return Err(CliError::Config("out_dir: must not be empty".into()));
                }
                self.out_dir = PathBuf::from(value)
            }
            "transfer_from" => {
                self.transfer_from = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Current value of `key` in the form [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let opt_path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        Some(match key {
            "model" => self.model.to_string(),
            "profile" => self.profile.to_string(),
            "env" => self.env.to_string(),
            "seed" => t.seed.to_string(),
            "gamma" => t.gamma.to_string(),
            "lr_start" => t.learning_rate.start.to_string(),
            "lr_end" => t.learning_rate.end.to_string(),
            "lr_decay_steps" => t.learning_rate.decay_steps.to_string(),
            "epsilon_start" => t.epsilon.start.to_string(),
            "epsilon_end" => t.epsilon.end.to_string(),
            "epsilon_decay_steps" => t.epsilon.decay_steps.to_string(),
            "unroll" => t.unroll.to_string(),
            "update_period" => t.update_period.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "target_sync" => t.target_sync.to_string(),
            "total_steps" => t.total_steps.to_string(),
            "learn_start" => t.learn_start.to_string(),
            "replay_capacity" => t.replay_capacity.to_string(),
            "eval_period" => t.eval_period.to_string(),
            "eval_steps" => t.eval_steps.to_string(),
            "eval_episodes" => t.eval_episodes.to_string(),
            "eval_epsilon" => t.eval_epsilon.to_string(),
            "mix_prob" => t.mix_prob.to_string(),
            "advantage_sign" => t.advantage_sign.to_string(),
            "entropy_coef" => t.entropy_coef.to_string(),
            "optimizer" => t.optimizer.to_string(),
            "rms_momentum" => t.rmsprop.momentum.to_string(),
            "rms_decay" => t.rmsprop.decay.to_string(),
            "rms_epsilon" => t.rmsprop.epsilon.to_string(),
            "clip_rewards" => t.clip_rewards.to_string(),
            "stop_at_reward" => t.stop_at_reward.map(|v| v.to_string()).unwrap_or_default(),
            "deterministic" => t.deterministic.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "transfer_from" => opt_path(&self.transfer_from),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    n + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut c = Config::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), CliError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got `{spec}`")))?;
        self.set(key.trim(), value.trim())
    }

    /// Checks every value before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Side length of frames fed to the model and rendered by the environment.
    pub fn frame_side(&self) -> usize {
        match self.profile {
            Profile::Paper => 84,
            Profile::Small => 24,
        }
    }

    /// Every key on its own line; parses back to an identical config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("listed keys are known");
            writeln!(out, "{key} = {value}").expect("writing to a String");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_model_gets_its_own_lr_start() {
        let hard = Config::parse("model = darqn_hard").unwrap();
        assert_eq!(hard.train.learning_rate.start, 0.001);
        assert_eq!(hard.train.learning_rate.end, 0.00025);
        let explicit = Config::parse("lr_start = 0.05\nmodel = darqn_hard").unwrap();
        assert_eq!(explicit.train.learning_rate.start, 0.05);
        let back = Config::parse("model = darqn_hard\nmodel = dqn").unwrap();
        assert_eq!(back.train.learning_rate.start, 0.01);
        assert_eq!(Config::parse(&hard.to_text()).unwrap(), hard);
    }

    #[test]
    fn printed_form_round_trips() {
        let mut c = Config::default();
        c.apply_text("model = darqn_hard\ngamma = 0.9 # comment\nstop_at_reward = 0.5\nlr_start=0.1234567890123")
            .unwrap();
        let back = Config::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = Config::parse("gama = 0.9").unwrap_err();
        assert!(err.message().contains("gama"));
    }

    #[test]
    fn every_key_is_printable() {
        let c = Config::default();
        for key in KEYS {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
}
