//! Test oracles shared by the integration tests.
#![allow(dead_code)]

use darqn::agent::{Model, ModelSpec};
use darqn::envs::Frame;
use darqn::numerics::{Gradients, ParamId, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(h: usize, w: usize, rng: &mut impl Rng) -> Frame {
    Frame::from_values(h, w, (0..h * w).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Fixed probe objective over an unrolled sequence:
/// `Σ_t (Q_t[a_t] - y_t)² + Σ_t Σ_a c_{t,a} Q_t[a]`.
pub struct Probe {
    pub frames: Vec<Frame>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
    pub coefs: Vec<Vec<f64>>,
}

impl Probe {
    pub fn new(spec: &ModelSpec, steps: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let g = &spec.geometry;
        Probe {
            frames: (0..steps)
                .map(|_| random_frame(g.input_height, g.input_width, &mut r))
                .collect(),
            actions: (0..steps).map(|_| r.gen_range(0..spec.actions)).collect(),
            targets: (0..steps).map(|_| r.gen_range(-1.0..1.0)).collect(),
            coefs: (0..steps)
                .map(|_| (0..spec.actions).map(|_| r.gen_range(-0.5..0.5)).collect())
                .collect(),
        }
    }

    /// Loss value from plain forward values.
    pub fn loss(&self, model: &Model) -> f64 {
        let mut tape = Tape::new(model.params());
        let handles = model.bind(&mut tape).unwrap();
        let frames: Vec<&Frame> = self.frames.iter().collect();
        let steps = model
            .unroll(&mut tape, &handles, &frames, 1.0, &mut rng(0))
            .unwrap();
        let mut total = 0.0;
        for (t, s) in steps.iter().enumerate() {
            let q = tape.value(s.q);
            let d = q[self.actions[t]] - self.targets[t];
            total += d * d;
            total += q
                .iter()
                .zip(&self.coefs[t])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        total
    }

    /// Loss gradient through the tape.
    pub fn gradient(&self, model: &Model) -> Gradients {
        let mut tape = Tape::new(model.params());
        let handles = model.bind(&mut tape).unwrap();
        let frames: Vec<&Frame> = self.frames.iter().collect();
        let steps = model
            .unroll(&mut tape, &handles, &frames, 1.0, &mut rng(0))
            .unwrap();
        let mut terms = Vec::new();
        for (t, s) in steps.iter().enumerate() {
            let qa = tape.pick(s.q, self.actions[t]).unwrap();
            let y = tape.input_vec(vec![self.targets[t]]);
            let d = tape.sub(qa, y).unwrap();
            terms.push(tape.square(d).unwrap());
            let c = tape.input_vec(self.coefs[t].clone());
            let m = tape.mul(s.q, c).unwrap();
            terms.push(tape.sum(m).unwrap());
        }
        let loss = tape.sum_scalars(&terms).unwrap();
        let mut grads = model.params().zeros_like();
        tape.backward(loss, &mut grads).unwrap();
        grads
    }
}

/// Worst relative error of `analytic` against central differences of `f`,
/// with `|a - n| / max(|a|, |n|, floor)`. `filter` chooses the parameters to check.
pub struct FdReport {
    pub checked: usize,
    pub worst: f64,
    pub worst_at: String,
}

pub fn finite_difference_check(
    model: &mut Model,
    analytic: &Gradients,
    h: f64,
    floor: f64,
    mut every: impl FnMut(usize) -> bool,
    f: impl Fn(&Model) -> f64,
) -> FdReport {
    let mut report = FdReport {
        checked: 0,
        worst: 0.0,
        worst_at: String::new(),
    };
    let ids: Vec<ParamId> = model.params().ids().collect();
    let mut flat = 0usize;
    for id in ids {
        let n = model.params().get(id).len();
        for k in 0..n {
            flat += 1;
            if !every(flat - 1) {
                continue;
            }
            let orig = model.params().get(id).data()[k];
            model.params_mut().get_mut(id).data_mut()[k] = orig + h;
            let plus = f(model);
            model.params_mut().get_mut(id).data_mut()[k] = orig - h;
            let minus = f(model);
            model.params_mut().get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.get(id).data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.worst {
                report.worst = rel;
                report.worst_at = format!(
                    "{}[{k}] analytic {a:e} numeric {numeric:e}",
                    model.params().name(id)
                );
            }
        }
    }
    report
}

/// Exact mean reward of a uniformly random policy on a `rows`×`cols` Catch
/// board, by dynamic programming over (ball column, paddle centre) and steps.
pub fn catch_random_policy_value(rows: usize, cols: usize) -> f64 {
    let steps = rows - 1;
    let centres: Vec<usize> = (1..cols - 1).collect();
    let mut total = 0.0;
    for ball in 0..cols {
        // distribution over paddle centre
        let mut dist = vec![0.0; cols];
        for &c in &centres {
            dist[c] = 1.0 / centres.len() as f64;
        }
        for _ in 0..steps {
            let mut next = vec![0.0; cols];
            for (c, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for delta in [-1i64, 0, 1] {
                    let nc = (c as i64 + delta).clamp(1, cols as i64 - 2) as usize;
                    next[nc] += p / 3.0;
                }
            }
            dist = next;
        }
        let hit: f64 = dist
            .iter()
            .enumerate()
            .filter(|(c, _)| (*c as i64 - ball as i64).abs() <= 1)
            .map(|(_, p)| p)
            .sum();
        total += (2.0 * hit - 1.0) / cols as f64;
    }
    total
}
