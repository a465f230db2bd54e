//! Evaluation rollouts, attention overlays and trajectory capture.

mod capture;
mod render;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{select_action, AgentError, AttentionOutput, HiddenState, Model};
use crate::envs::{catch_scripted_action, preprocess, EnvError, Environment, Frame};
use crate::parallel::{derive_seed, map_indexed, Execution};

pub use capture::{capture_trajectory, CaptureSummary, INDEX_HEADER};
pub use render::{receptive_fields, render_attention, write_ppm, AttentionFrame, DIM_FACTOR};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("evaluation budget must be positive")]
    EmptyBudget,
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// How the acting policy chooses actions.
#[derive(Clone, Copy, Debug)]
pub enum Policy<'a> {
    /// ε-greedy on the model's Q values.
    Agent {
        model: &'a Model,
        epsilon: f64,
        mix_prob: f64,
    },
    /// Optimal Catch controller reading the raw frame rendered at `scale` px per cell.
    ScriptedCatch {
        scale: usize,
    },
    Random {
        actions: usize,
    },
}

/// One decision with everything the overlay renderer needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub q_values: Option<Vec<f64>>,
    pub attention: Option<AttentionOutput>,
    /// The frame as seen by the model.
    pub input: Option<Frame>,
}

/// A policy plus its per-episode recurrent state.
pub struct Actor<'a> {
    policy: Policy<'a>,
    state: Option<HiddenState>,
}

impl<'a> Actor<'a> {
    pub fn new(policy: Policy<'a>) -> Self {
        let mut actor = Actor {
            policy,
            state: None,
        };
        actor.reset();
        actor
    }

    /// Zeroes the recurrent state at an episode boundary.
    pub fn reset(&mut self) {
        self.state = match self.policy {
            Policy::Agent { model, .. } => Some(HiddenState::zeros(model.hidden_size())),
            _ => None,
        };
    }

    pub fn act<R: Rng + ?Sized>(
        &mut self,
        raw: &Frame,
        rng: &mut R,
    ) -> Result<Decision, EvalError> {
        match self.policy {
            Policy::Agent {
                model,
                epsilon,
                mix_prob,
            } => {
                let g = &model.spec().geometry;
                let input = preprocess(raw, g.input_height, g.input_width)?;
                let state = self.state.as_ref().expect("agent state is initialized");
                let (out, next) = model.step(&input, state, mix_prob, rng)?;
                let action = select_action(&out.q_values, epsilon, rng)?;
                self.state = Some(next);
                Ok(Decision {
                    action,
                    q_values: Some(out.q_values),
                    attention: out.attention,
                    input: Some(input),
                })
            }
            Policy::ScriptedCatch { scale } => Ok(Decision {
                action: catch_scripted_action(raw, scale),
                q_values: None,
                attention: None,
                input: None,
            }),
            Policy::Random { actions } => Ok(Decision {
                action: rng.gen_range(0..actions),
                q_values: None,
                attention: None,
                input: None,
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalBudget {
    /// Exactly this many complete episodes.
    Episodes(usize),
    /// Complete episodes until at least this many steps have run.
    Steps(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub steps: u64,
    /// Mean over steps of `max_a Q`; `None` for policies without Q values.
    pub mean_max_q: Option<f64>,
    pub episode_rewards: Vec<f64>,
}

impl EvalReport {
    fn from_episodes(results: &[EpisodeResult]) -> Self {
        let episodes = results.len();
        let rewards: Vec<f64> = results.iter().map(|r| r.reward).collect();
        let mean = rewards.iter().sum::<f64>() / episodes as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / episodes as f64;
        let steps: u64 = results.iter().map(|r| r.steps).sum();
        let q_steps: u64 = results.iter().map(|r| r.q_steps).sum();
        let q_sum: f64 = results.iter().map(|r| r.max_q_sum).sum();
        EvalReport {
            episodes,
            mean_reward: mean,
            std_reward: var.sqrt(),
            steps,
            mean_max_q: (q_steps > 0).then(|| q_sum / q_steps as f64),
            episode_rewards: rewards,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct EpisodeResult {
    pub reward: f64,
    pub steps: u64,
    pub max_q_sum: f64,
    pub q_steps: u64,
}

/// One step observed by a rollout callback.
pub(crate) struct StepRecord<'r> {
    /// Raw frame the decision was made on.
    pub observed: &'r Frame,
    pub decision: &'r Decision,
    pub reward: f64,
}

/// Runs episode `index` of the stream rooted at `seed`, stopping early after
/// `max_steps` steps. The callback sees every step in order.
pub(crate) fn run_episode<F>(
    policy: Policy<'_>,
    env: &mut dyn Environment,
    seed: u64,
    index: u64,
    max_steps: u64,
    mut on_step: F,
) -> Result<EpisodeResult, EvalError>
where
    F: FnMut(&StepRecord<'_>) -> Result<(), EvalError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index));
    let mut frame = env.reset(rng.gen());
    let mut actor = Actor::new(policy);
    let mut out = EpisodeResult::default();
    while out.steps < max_steps {
        let decision = actor.act(&frame, &mut rng)?;
        if let Some(q) = &decision.q_values {
            out.max_q_sum += q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            out.q_steps += 1;
        }
        let step = env.step(decision.action)?;
        out.reward += step.reward;
        out.steps += 1;
        on_step(&StepRecord {
            observed: &frame,
            decision: &decision,
            reward: step.reward,
        })?;
        if step.terminal {
            break;
        }
        frame = step.frame;
    }
    Ok(out)
}

/// Rolls out `policy` with a zeroed recurrent state at every episode start.
///
/// Episode `k` draws its environment seed and all action randomness from
/// `derive_seed(seed, k)`, so results do not depend on `exec`.
pub fn evaluate(
    policy: Policy<'_>,
    env: &dyn Environment,
    budget: EvalBudget,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport, EvalError> {
    let results = match budget {
        EvalBudget::Episodes(0) | EvalBudget::Steps(0) => return Err(EvalError::EmptyBudget),
        EvalBudget::Episodes(n) => {
            let indices: Vec<u64> = (0..n as u64).collect();
            map_indexed(&indices, exec, |_, &k| {
                let mut local = env.box_clone();
                run_episode(policy, local.as_mut(), seed, k, u64::MAX, |_| Ok(()))
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?
        }
        EvalBudget::Steps(n) => {
            let mut local = env.box_clone();
            let mut results = Vec::new();
            let mut steps = 0;
            while steps < n {
                let r = run_episode(
                    policy,
                    local.as_mut(),
                    seed,
                    results.len() as u64,
                    u64::MAX,
                    |_| Ok(()),
                )?;
                steps += r.steps;
                results.push(r);
            }
            results
        }
    };
    Ok(EvalReport::from_episodes(&results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvKind;

    #[test]
    fn scripted_catch_is_perfect() {
        let env = EnvKind::Catch.make(24).unwrap();
        let r = evaluate(
            Policy::ScriptedCatch { scale: 1 },
            env.as_ref(),
            EvalBudget::Episodes(50),
            3,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.mean_reward, 1.0);
        assert_eq!(r.std_reward, 0.0);
        assert_eq!(r.steps, 50 * 23);
    }

    #[test]
    fn execution_mode_does_not_change_results() {
        let env = EnvKind::Catch.make(24).unwrap();
        let p = Policy::Random { actions: 3 };
        let a = evaluate(
            p,
            env.as_ref(),
            EvalBudget::Episodes(20),
            9,
            Execution::Sequential,
        )
        .unwrap();
        let b = evaluate(
            p,
            env.as_ref(),
            EvalBudget::Episodes(20),
            9,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_budget_completes_episodes() {
        let env = EnvKind::Catch.make(24).unwrap();
        let r = evaluate(
            Policy::Random { actions: 3 },
            env.as_ref(),
            EvalBudget::Steps(50),
            1,
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(r.episodes, 3);
        assert_eq!(r.steps, 69);
    }

    #[test]
    fn empty_budget_rejected() {
        let env = EnvKind::Catch.make(24).unwrap();
        let p = Policy::Random { actions: 3 };
        assert!(evaluate(
            p,
            env.as_ref(),
            EvalBudget::Steps(0),
            0,
            Execution::Sequential
        )
        .is_err());
    }
}
