//! Network architectures: conv encoder, attention, LSTM core, Q and baseline heads.

mod arch;
mod model;

use rand::Rng;
use thiserror::Error;

use crate::numerics::NumericsError;

pub use arch::{
    conv_param_count, count_params, lstm_count, Architecture, ConvLayer, Geometry, ModelSpec,
    ParamShape, Profile,
};
pub use model::{
    attention_logits, attention_scores, baseline, hard_context, q_step, soft_context,
    AttentionOutput, AttentionTrace, AttentionVars, ConvVars, FeatureGrid, Handles, HeadVars,
    HiddenState, Model, StepOutput, StepVars,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("architecture has no conv stack")]
    NoConvStack,
    #[error("architecture is missing its {0} parameters")]
    MissingHead(&'static str),
    #[error("baseline head requires darqn_hard, got {0}")]
    NotHardMode(Architecture),
    #[error("unknown model `{0}` (expected dqn|drqn|darqn_soft|darqn_hard)")]
    UnknownArchitecture(String),
    #[error("unknown profile `{0}` (expected paper|small)")]
    UnknownProfile(String),
    #[error("empty Q-value vector")]
    EmptyQ,
    #[error("epsilon {0} outside [0, 1]")]
    InvalidEpsilon(f64),
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// ε-greedy: a uniform random action with probability `epsilon`, else the argmax.
///
/// Always draws one uniform number, plus one more when exploring.
pub fn select_action<R: Rng + ?Sized>(
    q_values: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if q_values.is_empty() {
        return Err(AgentError::EmptyQ);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(AgentError::InvalidEpsilon(epsilon));
    }
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..q_values.len()))
    } else {
        Ok(argmax(q_values).expect("non-empty"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_picks_lowest_index_on_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 3.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(select_action(&[-2.0, -5.0], 0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn argmax_shift_invariant() {
        let q = [0.3, -1.0, 2.5, 2.4];
        let shifted: Vec<f64> = q.iter().map(|v| v + 17.0).collect();
        assert_eq!(argmax(&q), argmax(&shifted));
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[select_action(&[5.0, 0.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 3.0).abs() <= 0.01);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[], 0.1, &mut rng), Err(AgentError::EmptyQ));
        assert!(select_action(&[1.0], 1.5, &mut rng).is_err());
    }
}
