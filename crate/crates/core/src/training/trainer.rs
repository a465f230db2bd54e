use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{select_action, HiddenState, Model};
use crate::envs::{clip_reward, preprocess, Environment};
use crate::evalviz::{evaluate, EvalBudget, EvalError, Policy};
use crate::numerics::{Optimizer, RmsProp};
use crate::parallel::{derive_seed, Execution};

use super::{
    minibatch_gradients, save_checkpoint, BatchResult, LossConfig, OptimizerKind, ReplayMemory,
    Segment, TargetNetwork, TrainConfig, TrainError, Transition,
};

pub const METRICS_HEADER: &str = "epoch,steps,mean_eval_reward,mean_q,loss,epsilon,alpha";

/// Online network, target network and optimizer state.
pub struct Learner {
    model: Model,
    target: TargetNetwork,
    optimizer: Optimizer,
    loss: LossConfig,
    exec: Execution,
    deterministic: bool,
}

impl Learner {
    pub fn new(model: Model, config: &TrainConfig) -> Result<Self, TrainError> {
        let optimizer = match config.optimizer {
            OptimizerKind::RmsProp => {
                Optimizer::RmsProp(RmsProp::new(config.rmsprop, model.params())?)
            }
            OptimizerKind::Sgd => Optimizer::Sgd,
        };
        Ok(Learner {
            target: TargetNetwork::new(&model),
            model,
            optimizer,
            loss: LossConfig::from(config),
            exec: Execution::available(),
            deterministic: config.deterministic,
        })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn target(&self) -> &TargetNetwork {
        &self.target
    }

    pub fn sync(&mut self, step: u64) {
        self.target.sync(&self.model, step);
    }

    /// Gradients for `segments` without touching the parameters.
    pub fn gradients(
        &self,
        segments: &[Segment],
        seeds: &[u64],
    ) -> Result<BatchResult, TrainError> {
        minibatch_gradients(
            &self.model,
            self.target.model(),
            segments,
            seeds,
            &self.loss,
            self.exec,
            self.deterministic,
        )
    }

    /// One optimizer step on the minibatch loss.
    pub fn update(
        &mut self,
        segments: &[Segment],
        seeds: &[u64],
        lr: f64,
        step: u64,
    ) -> Result<BatchResult, TrainError> {
        let batch = self.gradients(segments, seeds)?;
        if !batch.objective.is_finite() || !batch.grads.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                step,
                loss: batch.objective,
            });
        }
        self.optimizer
            .step(self.model.params_mut(), &batch.grads, lr)?;
        Ok(batch)
    }
}

/// One metrics row, written after each evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub steps: u64,
    pub mean_eval_reward: f64,
    pub mean_q: f64,
    /// Mean minibatch TD loss since the previous row; 0 if no update ran.
    pub loss: f64,
    pub epsilon: f64,
    pub alpha: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.steps,
            self.mean_eval_reward,
            self.mean_q,
            self.loss,
            self.epsilon,
            self.alpha
        )
    }
}

#[derive(Debug)]
pub struct TrainSummary {
    pub model: Model,
    pub records: Vec<EpochRecord>,
    pub steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub best_reward: Option<f64>,
    /// Fraction of hard-attention training steps that drew a location.
    pub sampled_fraction: Option<f64>,
}

struct Output {
    dir: PathBuf,
    metrics: File,
}

fn output_error(path: &Path, e: impl ToString) -> TrainError {
    TrainError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

impl Output {
    fn create(dir: &Path) -> Result<Self, TrainError> {
        fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
        let path = dir.join("metrics.csv");
        let mut metrics = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| output_error(&path, e))?;
        writeln!(metrics, "{METRICS_HEADER}").map_err(|e| output_error(&path, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            metrics,
        })
    }

    fn row(&mut self, record: &EpochRecord) -> Result<(), TrainError> {
        writeln!(self.metrics, "{}", record.csv_row())
            .and_then(|_| self.metrics.flush())
            .map_err(|e| output_error(&self.dir.join("metrics.csv"), e))
    }

    fn checkpoint(&self, model: &Model, name: &str) -> Result<(), TrainError> {
        Ok(save_checkpoint(model, &self.dir.join(name))?)
    }
}

fn eval_error(e: EvalError) -> TrainError {
    match e {
        EvalError::Agent(a) => TrainError::Agent(a),
        EvalError::Env(v) => TrainError::Env(v),
        other => TrainError::InvalidConfig(other.to_string()),
    }
}

/// Runs the act → store → update → sync → evaluate loop.
///
/// With `out_dir`, writes `metrics.csv` and the checkpoints `init.darq`,
/// `latest.darq`, `best.darq` and (after at least one step) `final.darq`.
pub fn train(
    model: Model,
    env: Box<dyn Environment>,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainSummary, TrainError> {
    config.validate()?;
    let mut env = env;
    let spec = env.spec();
    if spec.action_count != model.spec().actions {
        return Err(TrainError::InvalidConfig(format!(
            "environment has {} actions, model has {}",
            spec.action_count,
            model.spec().actions
        )));
    }
    let (in_h, in_w) = {
        let g = &model.spec().geometry;
        (g.input_height, g.input_width)
    };
    let mut output = out_dir.map(Output::create).transpose()?;
    if let Some(out) = &output {
        out.checkpoint(&model, "init.darq")?;
    }

    let mut learner = Learner::new(model, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut replay = ReplayMemory::new(config.replay_capacity);
    let budget = if config.eval_episodes > 0 {
        EvalBudget::Episodes(config.eval_episodes)
    } else {
        EvalBudget::Steps(config.eval_steps)
    };
    let eval_exec = if config.deterministic {
        Execution::available()
    } else {
        Execution::Parallel
    };

    let mut frame = preprocess(&env.reset(rng.gen()), in_h, in_w)?;
    let mut state = HiddenState::zeros(learner.model().hidden_size());
    let mut records = Vec::new();
    let mut updates = 0u64;
    let mut episodes = 0u64;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut sampled = 0usize;
    let mut policy_steps = 0usize;
    let mut best: Option<f64> = None;
    let mut steps = 0u64;
    let mut last_eval = 0u64;

    while steps < config.total_steps {
        let epsilon = config.epsilon.value(steps);
        let (out, next_state) = learner
            .model()
            .step(&frame, &state, config.mix_prob, &mut rng)?;
        let action = select_action(&out.q_values, epsilon, &mut rng)?;
        let result = env.step(action)?;
        let reward = if config.clip_rewards {
            clip_reward(result.reward)
        } else {
            result.reward
        };
        replay.append(Transition {
            frame,
            action,
            reward,
            terminal: result.terminal,
        });
        if result.terminal {
            episodes += 1;
            frame = preprocess(&env.reset(rng.gen()), in_h, in_w)?;
            state = HiddenState::zeros(learner.model().hidden_size());
        } else {
            frame = preprocess(&result.frame, in_h, in_w)?;
            state = next_state;
        }
        steps += 1;

        if steps >= config.learn_start
            && steps.is_multiple_of(config.update_period)
            && replay.eligible(config.unroll) >= config.batch_size
        {
            let segments = replay.sample(config.batch_size, config.unroll, &mut rng)?;
            let base: u64 = rng.gen();
            let seeds: Vec<u64> = (0..segments.len() as u64)
                .map(|k| derive_seed(base, k))
                .collect();
            let lr = config.learning_rate.value(steps);
            let batch = learner.update(&segments, &seeds, lr, steps)?;
            loss_sum += batch.loss;
            loss_count += 1;
            sampled += batch.sampled_steps;
            policy_steps += batch.steps;
            updates += 1;
        }
        if steps.is_multiple_of(config.target_sync) {
            learner.sync(steps);
        }

        let final_step = steps == config.total_steps;
        if steps.is_multiple_of(config.eval_period) || final_step {
            let epoch = records.len() as u64;
            let policy = Policy::Agent {
                model: learner.model(),
                epsilon: config.eval_epsilon,
                mix_prob: config.mix_prob,
            };
            let report = evaluate(
                policy,
                env.as_ref(),
                budget,
                derive_seed(config.seed ^ 0x00E7_A1E7, epoch),
                eval_exec,
            )
            .map_err(eval_error)?;
            let record = EpochRecord {
                epoch,
                steps,
                mean_eval_reward: report.mean_reward,
                mean_q: report.mean_max_q.unwrap_or(0.0),
                loss: if loss_count > 0 {
                    loss_sum / loss_count as f64
                } else {
                    0.0
                },
                epsilon: config.epsilon.value(steps),
                alpha: config.learning_rate.value(steps),
            };
            loss_sum = 0.0;
            loss_count = 0;
            last_eval = steps;
            let improved = best.is_none_or(|b| report.mean_reward > b);
            if improved {
                best = Some(report.mean_reward);
            }
            if let Some(out) = output.as_mut() {
                out.row(&record)?;
                out.checkpoint(learner.model(), "latest.darq")?;
                if improved {
                    out.checkpoint(learner.model(), "best.darq")?;
                }
            }
            records.push(record);
            if config
                .stop_at_reward
                .is_some_and(|target| report.mean_reward >= target)
            {
                break;
            }
        }
    }
    debug_assert!(steps == 0 || last_eval == steps);

    if steps > 0 {
        if let Some(out) = &output {
            out.checkpoint(learner.model(), "final.darq")?;
        }
    }
    let sampled_fraction = (policy_steps > 0
        && learner.model().arch() == crate::agent::Architecture::DarqnHard)
        .then(|| sampled as f64 / policy_steps as f64);
    Ok(TrainSummary {
        model: learner.into_model(),
        records,
        steps,
        updates,
        episodes,
        best_reward: best,
        sampled_fraction,
    })
}
