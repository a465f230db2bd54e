//! Parameter layout and forward passes of the four network families.
//!
//! A step of the attention models runs:
//!
//! ```text
//! frame ─ conv stack ─ v [L, D] ─┐
//!                  h_{t-1} ──────┴─ scores_i = A2·tanh(A1·v_i + b1 + W·h_{t-1}) + b2
//!                                   weights  = softmax(scores)
//!                                   z        = Σ weights_i v_i         (soft / mixed step)
//!                                            | v_{i_t}, i_t ~ weights (hard step)
//! (h_t, c_t) = LSTM(z, h_{t-1}, c_{t-1});   Q = q.weight·h_t + q.bias
//! ```

use rand::Rng;

use crate::envs::Frame;
use crate::numerics::{categorical_sample, lstm_step, LstmVars, ParameterSet, Tape, Tensor, Var};

use super::{AgentError, Architecture, ModelSpec};

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    params: ParameterSet,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvVars {
    pub kernel: Var,
    pub bias: Var,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub inner_weight: Var,
    pub inner_bias: Var,
    pub recurrent_weight: Var,
    pub outer_weight: Var,
    pub outer_bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub weight: Var,
    pub bias: Option<Var>,
}

/// Tape handles for every parameter of a model.
#[derive(Clone, Debug)]
pub struct Handles {
    pub convs: Vec<ConvVars>,
    pub attention: Option<AttentionVars>,
    pub lstm: Option<LstmVars>,
    pub fc: Option<HeadVars>,
    pub q: HeadVars,
    pub baseline: Option<HeadVars>,
}

/// Attention quantities recorded for one step.
#[derive(Clone, Copy, Debug)]
pub struct AttentionTrace {
    /// Unnormalized scores `[L]`.
    pub logits: Var,
    /// Softmax of the scores `[L]`.
    pub weights: Var,
    /// Location sampled at a hard step; `None` for soft or mixed steps.
    pub sampled: Option<usize>,
    /// Context vector `[D]`.
    pub context: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepVars {
    pub q: Var,
    pub h: Var,
    pub c: Var,
    pub attention: Option<AttentionTrace>,
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(hidden: usize) -> Self {
        HiddenState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// CNN output viewed as `L` location vectors of length `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub side: usize,
    pub dim: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn new(side: usize, dim: usize, data: Vec<f64>) -> Result<Self, AgentError> {
        if data.len() != side * side * dim {
            return Err(AgentError::GeometryMismatch(format!(
                "{} values for a {side}x{side}x{dim} grid",
                data.len()
            )));
        }
        Ok(FeatureGrid { side, dim, data })
    }

    pub fn locations(&self) -> usize {
        self.side * self.side
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Location-major values, `[L, D]`.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.locations(), self.dim], self.data.clone())
            .expect("grid holds L·D values")
    }
}

/// Attention result for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    pub sampled_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub q_values: Vec<f64>,
    pub attention: Option<AttentionOutput>,
}

impl Model {
    /// Fresh parameters, each array uniform in `±1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self, AgentError> {
        let mut params = ParameterSet::new();
        for p in spec.param_shapes()? {
            let bound = 1.0 / (p.fan_in as f64).sqrt();
            let n: usize = p.shape.iter().product();
            let data = (0..n)
                .map(|_| (2.0 * rng.gen::<f64>() - 1.0) * bound)
                .collect();
            params.insert(&p.name, Tensor::new(p.shape, data)?)?;
        }
        Ok(Model { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self, AgentError> {
        let mut params = ParameterSet::new();
        for p in spec.param_shapes()? {
            params.insert(&p.name, Tensor::zeros(&p.shape))?;
        }
        Ok(Model { spec, params })
    }

    /// Wraps existing parameters after checking names and shapes against `spec`.
    pub fn from_params(spec: ModelSpec, params: ParameterSet) -> Result<Self, AgentError> {
        let expected = spec.param_shapes()?;
        if expected.len() != params.len() {
            return Err(AgentError::GeometryMismatch(format!(
                "{} expects {} parameter arrays, found {}",
                spec.arch,
                expected.len(),
                params.len()
            )));
        }
        for (p, (name, t)) in expected.iter().zip(params.iter()) {
            if p.name != name || p.shape != t.shape() {
                return Err(AgentError::GeometryMismatch(format!(
                    "expected {} {:?}, found {} {:?}",
                    p.name,
                    p.shape,
                    name,
                    t.shape()
                )));
            }
        }
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn arch(&self) -> Architecture {
        self.spec.arch
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn hidden_size(&self) -> usize {
        self.spec.geometry.hidden
    }

    /// Registers every parameter on `tape` (which must borrow `self.params()`).
    pub fn bind(&self, tape: &mut Tape<'_>) -> Result<Handles, AgentError> {
        let mut convs = Vec::new();
        for (i, layer) in self.spec.geometry.convs.iter().enumerate() {
            if !self.spec.arch.has_conv() {
                break;
            }
            convs.push(ConvVars {
                kernel: tape.param_by_name(&format!("conv{}.kernel", i + 1))?,
                bias: tape.param_by_name(&format!("conv{}.bias", i + 1))?,
                stride: layer.stride,
            });
        }
        let attention = if self.spec.arch.has_attention() {
            Some(AttentionVars {
                inner_weight: tape.param_by_name("att.inner.weight")?,
                inner_bias: tape.param_by_name("att.inner.bias")?,
                recurrent_weight: tape.param_by_name("att.recurrent.weight")?,
                outer_weight: tape.param_by_name("att.outer.weight")?,
                outer_bias: tape.param_by_name("att.outer.bias")?,
            })
        } else {
            None
        };
        let lstm = if self.spec.arch.is_recurrent() {
            Some(LstmVars {
                w_ih: tape.param_by_name("lstm.w_ih")?,
                b_ih: tape.param_by_name("lstm.b_ih")?,
                w_hh: tape.param_by_name("lstm.w_hh")?,
                b_hh: tape.param_by_name("lstm.b_hh")?,
            })
        } else {
            None
        };
        let fc = if self.spec.arch == Architecture::Dqn {
            Some(HeadVars {
                weight: tape.param_by_name("fc.weight")?,
                bias: Some(tape.param_by_name("fc.bias")?),
            })
        } else {
            None
        };
        let q = if self.spec.arch == Architecture::Linear {
            HeadVars {
                weight: tape.param_by_name("linear.weight")?,
                bias: None,
            }
        } else {
            HeadVars {
                weight: tape.param_by_name("q.weight")?,
                bias: Some(tape.param_by_name("q.bias")?),
            }
        };
        let baseline = if self.spec.arch == Architecture::DarqnHard {
            Some(HeadVars {
                weight: tape.param_by_name("baseline.weight")?,
                bias: Some(tape.param_by_name("baseline.bias")?),
            })
        } else {
            None
        };
        Ok(Handles {
            convs,
            attention,
            lstm,
            fc,
            q,
            baseline,
        })
    }

    fn check_frame(&self, frame: &Frame) -> Result<(), AgentError> {
        let g = &self.spec.geometry;
        if frame.height() != g.input_height || frame.width() != g.input_width {
            return Err(AgentError::GeometryMismatch(format!(
                "frame {}x{} but model expects {}x{}",
                frame.height(),
                frame.width(),
                g.input_height,
                g.input_width
            )));
        }
        Ok(())
    }

    /// Runs the conv stack; returns the final `[D, m, m]` map.
    pub fn conv_features(
        &self,
        tape: &mut Tape<'_>,
        handles: &Handles,
        frame: &Frame,
    ) -> Result<Var, AgentError> {
        self.check_frame(frame)?;
        let input = Tensor::new(
            vec![1, frame.height(), frame.width()],
            frame.values().to_vec(),
        )?;
        let mut x = tape.input(&input);
        for conv in &handles.convs {
            x = tape.conv2d(x, conv.kernel, conv.bias, conv.stride)?;
            x = tape.relu(x)?;
        }
        Ok(x)
    }

    /// Location-major feature grid `[L, D]` on the tape.
    pub fn encode_on(
        &self,
        tape: &mut Tape<'_>,
        handles: &Handles,
        frame: &Frame,
    ) -> Result<Var, AgentError> {
        let maps = self.conv_features(tape, handles, frame)?;
        Ok(tape.transpose(maps)?)
    }

    pub fn encode(&self, frame: &Frame) -> Result<FeatureGrid, AgentError> {
        if !self.spec.arch.has_conv() {
            return Err(AgentError::NoConvStack);
        }
        let mut tape = Tape::new(&self.params);
        let handles = self.bind(&mut tape)?;
        let grid = self.encode_on(&mut tape, &handles, frame)?;
        let g = &self.spec.geometry;
        FeatureGrid::new(g.grid_side()?, g.feature_dim()?, tape.value(grid).to_vec())
    }

    /// One recurrent step. `mix_prob` is the chance that a hard-attention step
    /// uses the soft context instead of sampling; other architectures ignore it.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_step<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        handles: &Handles,
        frame: &Frame,
        h_prev: Var,
        c_prev: Var,
        mix_prob: f64,
        rng: &mut R,
    ) -> Result<StepVars, AgentError> {
        match self.spec.arch {
            Architecture::Linear => {
                self.check_frame(frame)?;
                let x = tape.input_vec(frame.values().to_vec());
                let q = tape.affine(x, handles.q.weight, handles.q.bias)?;
                Ok(StepVars {
                    q,
                    h: h_prev,
                    c: c_prev,
                    attention: None,
                })
            }
            Architecture::Dqn => {
                let maps = self.conv_features(tape, handles, frame)?;
                let n = tape.value(maps).len();
                let flat = tape.reshape(maps, &[n])?;
                let fc = handles.fc.ok_or(AgentError::MissingHead("fc"))?;
                let hidden = tape.affine(flat, fc.weight, fc.bias)?;
                let hidden = tape.relu(hidden)?;
                let q = tape.affine(hidden, handles.q.weight, handles.q.bias)?;
                Ok(StepVars {
                    q,
                    h: h_prev,
                    c: c_prev,
                    attention: None,
                })
            }
            Architecture::Drqn => {
                let maps = self.conv_features(tape, handles, frame)?;
                let n = tape.value(maps).len();
                let flat = tape.reshape(maps, &[n])?;
                let lstm = handles.lstm.ok_or(AgentError::MissingHead("lstm"))?;
                let (q, h, c) = q_step(tape, flat, h_prev, c_prev, lstm, handles.q)?;
                Ok(StepVars {
                    q,
                    h,
                    c,
                    attention: None,
                })
            }
            Architecture::DarqnSoft | Architecture::DarqnHard => {
                let att = handles
                    .attention
                    .ok_or(AgentError::MissingHead("attention"))?;
                let lstm = handles.lstm.ok_or(AgentError::MissingHead("lstm"))?;
                let grid = self.encode_on(tape, handles, frame)?;
                let hard = self.spec.arch == Architecture::DarqnHard;
                let mixed = hard && rng.gen::<f64>() < mix_prob;
                let trace = if hard && !mixed {
                    // The policy-gradient path must not reach earlier steps.
                    let h_fixed = tape.detach(h_prev);
                    let logits = attention_logits(tape, grid, h_fixed, &att)?;
                    let weights = tape.softmax(logits)?;
                    let index = categorical_sample(tape.value(weights), rng)?;
                    let context = tape.row(grid, index)?;
                    AttentionTrace {
                        logits,
                        weights,
                        sampled: Some(index),
                        context,
                    }
                } else {
                    let logits = attention_logits(tape, grid, h_prev, &att)?;
                    let weights = tape.softmax(logits)?;
                    let context = soft_context(tape, grid, weights)?;
                    AttentionTrace {
                        logits,
                        weights,
                        sampled: None,
                        context,
                    }
                };
                let (q, h, c) = q_step(tape, trace.context, h_prev, c_prev, lstm, handles.q)?;
                Ok(StepVars {
                    q,
                    h,
                    c,
                    attention: Some(trace),
                })
            }
        }
    }

    /// Runs `frames` from a zeroed recurrent state.
    pub fn unroll<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        handles: &Handles,
        frames: &[&Frame],
        mix_prob: f64,
        rng: &mut R,
    ) -> Result<Vec<StepVars>, AgentError> {
        let hidden = self.hidden_size();
        let mut h = tape.input_vec(vec![0.0; hidden]);
        let mut c = tape.input_vec(vec![0.0; hidden]);
        let mut steps = Vec::with_capacity(frames.len());
        for frame in frames {
            let step = self.forward_step(tape, handles, frame, h, c, mix_prob, rng)?;
            h = step.h;
            c = step.c;
            steps.push(step);
        }
        Ok(steps)
    }

    /// Forward-only step on plain values, for acting and evaluation.
    pub fn step<R: Rng + ?Sized>(
        &self,
        frame: &Frame,
        state: &HiddenState,
        mix_prob: f64,
        rng: &mut R,
    ) -> Result<(StepOutput, HiddenState), AgentError> {
        let mut tape = Tape::new(&self.params);
        let handles = self.bind(&mut tape)?;
        let h = tape.input_vec(state.h.clone());
        let c = tape.input_vec(state.c.clone());
        let out = self.forward_step(&mut tape, &handles, frame, h, c, mix_prob, rng)?;
        let attention = out.attention.map(|a| AttentionOutput {
            weights: tape.value(a.weights).to_vec(),
            context: tape.value(a.context).to_vec(),
            sampled_index: a.sampled,
        });
        Ok((
            StepOutput {
                q_values: tape.value(out.q).to_vec(),
                attention,
            },
            HiddenState {
                h: tape.value(out.h).to_vec(),
                c: tape.value(out.c).to_vec(),
            },
        ))
    }

    /// Baseline estimate `G = baseline.weight·h + baseline.bias` (hard attention only).
    pub fn baseline(&self, h: &[f64]) -> Result<f64, AgentError> {
        if self.spec.arch != Architecture::DarqnHard {
            return Err(AgentError::NotHardMode(self.spec.arch));
        }
        let mut tape = Tape::new(&self.params);
        let handles = self.bind(&mut tape)?;
        let head = handles
            .baseline
            .ok_or(AgentError::MissingHead("baseline"))?;
        let hv = tape.input_vec(h.to_vec());
        let g = baseline(&mut tape, hv, head)?;
        Ok(tape.scalar(g)?)
    }

    /// Attention weights for a feature grid and previous hidden state.
    pub fn attention_weights(
        &self,
        grid: &FeatureGrid,
        h_prev: &[f64],
    ) -> Result<Vec<f64>, AgentError> {
        let mut tape = Tape::new(&self.params);
        let handles = self.bind(&mut tape)?;
        let att = handles
            .attention
            .ok_or(AgentError::MissingHead("attention"))?;
        let g = tape.input(&grid.to_tensor());
        let h = tape.input_vec(h_prev.to_vec());
        let w = attention_scores(&mut tape, g, h, &att)?;
        Ok(tape.value(w).to_vec())
    }
}

/// Per-location scores `A2·tanh(A1·v_i + b1 + W·h) + b2`; `W·h` is computed once.
pub fn attention_logits(
    tape: &mut Tape<'_>,
    grid: Var,
    h_prev: Var,
    att: &AttentionVars,
) -> Result<Var, AgentError> {
    let projected = tape.linear_rows(grid, att.inner_weight, Some(att.inner_bias))?;
    let recurrent = tape.affine(h_prev, att.recurrent_weight, None)?;
    let pre = tape.add_row(projected, recurrent)?;
    let act = tape.tanh(pre)?;
    let scores = tape.linear_rows(act, att.outer_weight, Some(att.outer_bias))?;
    let l = tape.shape(scores)[0];
    Ok(tape.reshape(scores, &[l])?)
}

/// Softmax-normalized attention weights over the `L` locations.
pub fn attention_scores(
    tape: &mut Tape<'_>,
    grid: Var,
    h_prev: Var,
    att: &AttentionVars,
) -> Result<Var, AgentError> {
    let logits = attention_logits(tape, grid, h_prev, att)?;
    Ok(tape.softmax(logits)?)
}

/// `z = Σ_i weights_i · v_i`.
pub fn soft_context(tape: &mut Tape<'_>, grid: Var, weights: Var) -> Result<Var, AgentError> {
    Ok(tape.weighted_rows(weights, grid)?)
}

/// Either the soft context (`mix_soft`) or the vector at a location drawn from `weights`.
pub fn hard_context<R: Rng + ?Sized>(
    tape: &mut Tape<'_>,
    grid: Var,
    weights: Var,
    rng: &mut R,
    mix_soft: bool,
) -> Result<(Var, Option<usize>), AgentError> {
    if mix_soft {
        return Ok((soft_context(tape, grid, weights)?, None));
    }
    let index = categorical_sample(tape.value(weights), rng)?;
    Ok((tape.row(grid, index)?, Some(index)))
}

/// LSTM step followed by the Q head; returns `(q, h, c)`.
pub fn q_step(
    tape: &mut Tape<'_>,
    z: Var,
    h_prev: Var,
    c_prev: Var,
    lstm: LstmVars,
    head: HeadVars,
) -> Result<(Var, Var, Var), AgentError> {
    let (h, c) = lstm_step(tape, z, h_prev, c_prev, lstm)?;
    let q = tape.affine(h, head.weight, head.bias)?;
    Ok((q, h, c))
}

/// Scalar baseline `G = Linear(h)`.
pub fn baseline(tape: &mut Tape<'_>, h: Var, head: HeadVars) -> Result<Var, AgentError> {
    Ok(tape.affine(h, head.weight, head.bias)?)
}
