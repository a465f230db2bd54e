use std::fmt;
use std::str::FromStr;

use crate::numerics::RmsPropConfig;

use super::{Schedule, TrainError};

/// Orientation of the policy-gradient coefficient for hard attention.
///
/// `Prose` scales `∇log π(i_t)` so that locations followed by a return above
/// the baseline become more likely (coefficient `Y_t - G_t`). `AsPrinted`
/// uses `G_t - Y_t` literally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AdvantageSign {
    #[default]
    Prose,
    AsPrinted,
}

impl fmt::Display for AdvantageSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdvantageSign::Prose => "prose",
            AdvantageSign::AsPrinted => "as_printed",
        })
    }
}

impl FromStr for AdvantageSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prose" => Ok(AdvantageSign::Prose),
            "as_printed" => Ok(AdvantageSign::AsPrinted),
            other => Err(format!(
                "unknown advantage_sign `{other}` (expected prose|as_printed)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    #[default]
    RmsProp,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(format!(
                "unknown optimizer `{other}` (expected rmsprop|sgd)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub gamma: f64,
    pub learning_rate: Schedule,
    pub epsilon: Schedule,
    pub unroll: usize,
    pub update_period: u64,
    pub batch_size: usize,
    pub target_sync: u64,
    pub total_steps: u64,
    /// Environment steps collected before the first update.
    pub learn_start: u64,
    pub replay_capacity: usize,
    pub eval_period: u64,
    /// Evaluation budget in environment steps; ignored when `eval_episodes > 0`.
    pub eval_steps: u64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    /// Chance that a hard-attention step uses the soft context.
    pub mix_prob: f64,
    pub advantage_sign: AdvantageSign,
    pub entropy_coef: f64,
    pub optimizer: OptimizerKind,
    pub rmsprop: RmsPropConfig,
    pub clip_rewards: bool,
    /// Stop after an evaluation whose mean reward reaches this value.
    pub stop_at_reward: Option<f64>,
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            gamma: 0.99,
            learning_rate: Schedule::new(0.01, 0.00025, 1_000_000),
            epsilon: Schedule::new(1.0, 0.1, 1_000_000),
            unroll: 4,
            update_period: 4,
            batch_size: 32,
            target_sync: 10_000,
            total_steps: 5_000_000,
            learn_start: 50_000,
            replay_capacity: 500_000,
            eval_period: 50_000,
            eval_steps: 25_000,
            eval_episodes: 0,
            eval_epsilon: 0.05,
            mix_prob: 0.5,
            advantage_sign: AdvantageSign::Prose,
            entropy_coef: 0.0,
            optimizer: OptimizerKind::RmsProp,
            rmsprop: RmsPropConfig::default(),
            clip_rewards: false,
            stop_at_reward: None,
            deterministic: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.unroll == 0 {
            return bad("unroll must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.update_period == 0 || self.target_sync == 0 || self.eval_period == 0 {
            return bad("update_period, target_sync and eval_period must be positive".into());
        }
        if self.eval_episodes == 0 && self.eval_steps == 0 {
            return bad("one of eval_steps or eval_episodes must be positive".into());
        }
        if self.replay_capacity < self.unroll {
            return bad(format!(
                "replay_capacity {} smaller than unroll {}",
                self.replay_capacity, self.unroll
            ));
        }
        for (name, s) in [("lr", &self.learning_rate), ("epsilon", &self.epsilon)] {
            if !s.start.is_finite() || !s.end.is_finite() || s.start < 0.0 || s.end < 0.0 {
                return bad(format!("{name} schedule must be finite and non-negative"));
            }
            if s.decay_steps == 0 {
                return bad(format!("{name} decay steps must be positive"));
            }
        }
        if self.epsilon.start > 1.0 || self.epsilon.end > 1.0 {
            return bad("epsilon must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            return bad(format!("eval_epsilon {} outside [0, 1]", self.eval_epsilon));
        }
        if !(0.0..=1.0).contains(&self.mix_prob) {
            return bad(format!("mix_prob {} outside [0, 1]", self.mix_prob));
        }
        if !self.entropy_coef.is_finite() || self.entropy_coef < 0.0 {
            return bad(format!(
                "entropy_coef {} must be non-negative",
                self.entropy_coef
            ));
        }
        if let Some(r) = self.stop_at_reward {
            if !r.is_finite() {
                return bad("stop_at_reward must be finite".into());
            }
        }
        self.rmsprop
            .validate()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))
    }
}
