//! Targets, the Q regression loss and the hard-attention policy terms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{argmax, baseline, Architecture, Model};
use crate::envs::Frame;
use crate::numerics::{Gradients, Tape, Var};
use crate::parallel::{map_indexed, reduce_unordered, Execution};

use super::{AdvantageSign, Segment, TrainConfig, TrainError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
    pub mix_prob: f64,
    pub advantage_sign: AdvantageSign,
    pub entropy_coef: f64,
}

impl From<&TrainConfig> for LossConfig {
    fn from(c: &TrainConfig) -> Self {
        LossConfig {
            gamma: c.gamma,
            mix_prob: c.mix_prob,
            advantage_sign: c.advantage_sign,
            entropy_coef: c.entropy_coef,
        }
    }
}

/// `Y_t = r_t` at a terminal step, else `r_t + γ·max_a Q(s_{t+1}, a; θ⁻)`.
///
/// The target network runs its own pass from a zeroed state over the
/// segment frames followed by the bootstrap frame. Hard-attention targets use
/// the soft context so the target is a deterministic function of `θ⁻`.
pub fn compute_targets(
    target: &Model,
    segment: &Segment,
    gamma: f64,
) -> Result<Vec<f64>, TrainError> {
    let n = segment.len();
    if gamma == 0.0 {
        return Ok(segment.rewards.clone());
    }
    let mut frames: Vec<&Frame> = segment.frames.iter().collect();
    if let Some(b) = &segment.bootstrap {
        frames.push(b);
    }
    let mut tape = Tape::new(target.params());
    let handles = target.bind(&mut tape)?;
    // Never sampled from: every hard step is mixed when mix_prob = 1.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let steps = target.unroll(&mut tape, &handles, &frames, 1.0, &mut unused)?;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let r = segment.rewards[t];
        if segment.terminals[t] {
            out.push(r);
            continue;
        }
        let next = steps.get(t + 1).ok_or(TrainError::InsufficientReplay {
            eligible: frames.len(),
            needed: t + 2,
        })?;
        let q = tape.value(next.q);
        out.push(r + gamma * q[argmax(q).expect("non-empty Q")]);
    }
    Ok(out)
}

/// Constant factor of the policy term: `Y - G` (prose) or `G - Y` (as printed).
pub fn advantage(sign: AdvantageSign, y: f64, g: f64) -> f64 {
    match sign {
        AdvantageSign::Prose => y - g,
        AdvantageSign::AsPrinted => g - y,
    }
}

/// `-coef·log softmax(logits)[index]`, with `coef` held constant.
pub fn policy_term(
    tape: &mut Tape<'_>,
    logits: Var,
    index: usize,
    coef: f64,
) -> Result<Var, TrainError> {
    let logp = tape.log_softmax(logits)?;
    let chosen = tape.pick(logp, index)?;
    Ok(tape.scale(chosen, -coef)?)
}

/// Gradient and statistics of one segment's share of the minibatch loss.
#[derive(Clone, Debug)]
pub struct SegmentResult {
    pub grads: Gradients,
    /// `Σ_t (Y_t - Q(s_t, a_t))²`, not normalized.
    pub squared_error: f64,
    /// Value of the full objective (already divided by the normalizer).
    pub objective: f64,
    pub q_sum: f64,
    pub steps: usize,
    /// Steps that drew a hard-attention location.
    pub sampled_steps: usize,
}

/// Builds the loss of one segment on a fresh tape and backpropagates it.
///
/// Every term is divided by `normalizer` (batch × unroll):
/// `(Y_t - Q(s_t, a_t))²` on all steps; in hard mode also
/// `(G_t - Y_t)²` on all steps and `-coef_t·log π(i_t)` on sampled steps,
/// where `G_t` reads a detached `h_t` and `coef_t` is a constant.
pub fn segment_gradients(
    model: &Model,
    target: &Model,
    segment: &Segment,
    cfg: &LossConfig,
    normalizer: f64,
    seed: u64,
) -> Result<SegmentResult, TrainError> {
    let targets = compute_targets(target, segment, cfg.gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tape = Tape::new(model.params());
    let handles = model.bind(&mut tape)?;
    let frames: Vec<&Frame> = segment.frames.iter().collect();
    let steps = model.unroll(&mut tape, &handles, &frames, cfg.mix_prob, &mut rng)?;
    let hard = model.arch() == Architecture::DarqnHard;
    let inv = 1.0 / normalizer;

    let mut terms: Vec<Var> = Vec::with_capacity(steps.len() * 3);
    let mut squared_error = 0.0;
    let mut q_sum = 0.0;
    let mut sampled_steps = 0;
    for (t, step) in steps.iter().enumerate() {
        let y = targets[t];
        let qa = tape.pick(step.q, segment.actions[t])?;
        let qv = tape.scalar(qa)?;
        q_sum += qv;
        squared_error += (y - qv) * (y - qv);
        let yv = tape.input_vec(vec![y]);
        let diff = tape.sub(qa, yv)?;
        let sq = tape.square(diff)?;
        terms.push(tape.scale(sq, inv)?);

        if !hard {
            continue;
        }
        let head = handles.baseline.ok_or(TrainError::MissingSample)?;
        let h_fixed = tape.detach(step.h);
        let g = baseline(&mut tape, h_fixed, head)?;
        let gv = tape.scalar(g)?;
        let bdiff = tape.sub(g, yv)?;
        let bsq = tape.square(bdiff)?;
        terms.push(tape.scale(bsq, inv)?);

        let trace = step.attention.ok_or(TrainError::MissingSample)?;
        if let Some(index) = trace.sampled {
            sampled_steps += 1;
            let coef = advantage(cfg.advantage_sign, y, gv);
            terms.push(policy_term(&mut tape, trace.logits, index, coef * inv)?);
            if cfg.entropy_coef > 0.0 {
                let logp = tape.log_softmax(trace.logits)?;
                let plogp = tape.mul(trace.weights, logp)?;
                let neg_entropy = tape.sum(plogp)?;
                terms.push(tape.scale(neg_entropy, cfg.entropy_coef * inv)?);
            }
        }
    }
    let loss = tape.sum_scalars(&terms)?;
    let objective = tape.scalar(loss)?;
    let mut grads = model.params().zeros_like();
    tape.backward(loss, &mut grads)?;
    Ok(SegmentResult {
        grads,
        squared_error,
        objective,
        q_sum,
        steps: steps.len(),
        sampled_steps,
    })
}

/// Summed gradient of a minibatch.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub grads: Gradients,
    /// Mean squared TD error over batch × unroll.
    pub loss: f64,
    pub objective: f64,
    pub mean_q: f64,
    pub steps: usize,
    pub sampled_steps: usize,
}

fn merge(mut a: SegmentResult, b: SegmentResult) -> SegmentResult {
    a.grads
        .accumulate(&b.grads)
        .expect("segment gradients share one layout");
    a.squared_error += b.squared_error;
    a.objective += b.objective;
    a.q_sum += b.q_sum;
    a.steps += b.steps;
    a.sampled_steps += b.sampled_steps;
    a
}

/// Gradients of all `segments`, one tape per segment.
///
/// `seeds[k]` drives the attention sampling of segment `k`. With
/// `deterministic`, per-segment results are summed in index order, so the
/// result is bit-identical for sequential and parallel execution.
pub fn minibatch_gradients(
    model: &Model,
    target: &Model,
    segments: &[Segment],
    seeds: &[u64],
    cfg: &LossConfig,
    exec: Execution,
    deterministic: bool,
) -> Result<BatchResult, TrainError> {
    if segments.is_empty() || seeds.len() != segments.len() {
        return Err(TrainError::InvalidConfig(format!(
            "{} segments with {} seeds",
            segments.len(),
            seeds.len()
        )));
    }
    let normalizer: usize = segments.iter().map(Segment::len).sum();
    let results = map_indexed(segments, exec, |k, seg| {
        segment_gradients(model, target, seg, cfg, normalizer as f64, seeds[k])
    });
    let results: Vec<SegmentResult> = results.into_iter().collect::<Result<_, _>>()?;
    let total = if deterministic {
        results.into_iter().reduce(merge)
    } else {
        reduce_unordered(results, merge)
    }
    .expect("at least one segment");
    let n = total.steps as f64;
    Ok(BatchResult {
        loss: total.squared_error / n,
        objective: total.objective,
        mean_q: total.q_sum / n,
        steps: total.steps,
        sampled_steps: total.sampled_steps,
        grads: total.grads,
    })
}
