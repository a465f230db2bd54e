use super::{Gradients, NumericsError, ParameterSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmsPropConfig {
    pub momentum: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig {
            momentum: 0.95,
            decay: 0.95,
            epsilon: 0.01,
        }
    }
}

impl RmsPropConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NumericsError::InvalidHyperparameter(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(NumericsError::InvalidHyperparameter(format!(
                "decay {} outside [0, 1)",
                self.decay
            )));
        }
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(NumericsError::InvalidHyperparameter(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// RMSProp with a momentum buffer.
///
/// Per element, with gradient `g` and learning rate `lr`:
///
/// ```text
/// ms  <- decay * ms + (1 - decay) * g^2
/// vel <- momentum * vel + lr * g / sqrt(ms + epsilon)
/// w   <- w - vel
/// ```
#[derive(Clone, Debug)]
pub struct RmsProp {
    config: RmsPropConfig,
    mean_square: Vec<Tensor>,
    velocity: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(config: RmsPropConfig, params: &ParameterSet) -> Result<Self, NumericsError> {
        config.validate()?;
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Ok(RmsProp {
            config,
            mean_square: zeros.clone(),
            velocity: zeros,
        })
    }

    pub fn config(&self) -> RmsPropConfig {
        self.config
    }

    pub fn mean_square(&self) -> &[Tensor] {
        &self.mean_square
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &Gradients,
        lr: f64,
    ) -> Result<(), NumericsError> {
        check_lr(lr)?;
        check_alignment(params, grads)?;
        if self.mean_square.len() != params.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "rmsprop_step",
                expected: vec![self.mean_square.len()],
                got: vec![params.len()],
            });
        }
        let RmsPropConfig {
            momentum,
            decay,
            epsilon,
        } = self.config;
        for id in params.ids().collect::<Vec<_>>() {
            let g = grads.get(id).data();
            let ms = self.mean_square[id.0].data_mut();
            let vel = self.velocity[id.0].data_mut();
            let w = params.get_mut(id).data_mut();
            for k in 0..w.len() {
                ms[k] = decay * ms[k] + (1.0 - decay) * g[k] * g[k];
                vel[k] = momentum * vel[k] + lr * g[k] / (ms[k] + epsilon).sqrt();
                w[k] -= vel[k];
            }
        }
        Ok(())
    }
}

/// Plain gradient descent: `w <- w - lr * g`.
pub fn sgd_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    lr: f64,
) -> Result<(), NumericsError> {
    check_lr(lr)?;
    check_alignment(params, grads)?;
    for id in params.ids().collect::<Vec<_>>() {
        let g = grads.get(id).data();
        for (w, gk) in params.get_mut(id).data_mut().iter_mut().zip(g) {
            *w -= lr * gk;
        }
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<(), NumericsError> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(NumericsError::InvalidHyperparameter(format!(
            "learning rate {lr} must be non-negative"
        )));
    }
    Ok(())
}

fn check_alignment(params: &ParameterSet, grads: &Gradients) -> Result<(), NumericsError> {
    if params.len() != grads.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "optimizer",
            expected: vec![params.len()],
            got: vec![grads.len()],
        });
    }
    for id in params.ids() {
        if params.get(id).shape() != grads.get(id).shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "optimizer",
                expected: params.get(id).shape().to_vec(),
                got: grads.get(id).shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Optimizer selected by configuration.
#[derive(Clone, Debug)]
pub enum Optimizer {
    RmsProp(RmsProp),
    Sgd,
}

impl Optimizer {
    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &Gradients,
        lr: f64,
    ) -> Result<(), NumericsError> {
        match self {
            Optimizer::RmsProp(state) => state.step(params, grads, lr),
            Optimizer::Sgd => sgd_step(params, grads, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamId;

    fn scalar_set(v: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::scalar(v)).unwrap();
        p
    }

    fn grad_of(params: &ParameterSet, g: f64) -> Gradients {
        let mut grads = params.zeros_like();
        grads.get_mut(ParamId(0)).data_mut()[0] = g;
        grads
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = scalar_set(0.7);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p).unwrap();
        let g = grad_of(&p, 0.0);
        opt.step(&mut p, &g, 0.01).unwrap();
        assert_eq!(p.get(ParamId(0)).data(), &[0.7]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut p = scalar_set(0.7);
        let mut opt = RmsProp::new(RmsPropConfig::default(), &p).unwrap();
        let g = grad_of(&p, 3.0);
        opt.step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p.get(ParamId(0)).data(), &[0.7]);
    }

    #[test]
    fn two_step_trace() {
        let cfg = RmsPropConfig {
            momentum: 0.9,
            decay: 0.5,
            epsilon: 0.01,
        };
        let mut p = scalar_set(1.0);
        let mut opt = RmsProp::new(cfg, &p).unwrap();
        let lr = 0.1;

        // step 1, g = 2: ms = 0.5*4 = 2; vel = 0.1*2/sqrt(2.01); w = 1 - vel
        let g = grad_of(&p, 2.0);
        opt.step(&mut p, &g, lr).unwrap();
        let ms1 = 2.0;
        let vel1 = 0.1 * 2.0 / (ms1 + 0.01f64).sqrt();
        let w1 = 1.0 - vel1;
        assert!((p.get(ParamId(0)).data()[0] - w1).abs() <= 1e-12);

        // step 2, g = -1: ms = 0.5*2 + 0.5*1 = 1.5; vel = 0.9*vel1 + 0.1*(-1)/sqrt(1.51)
        let g = grad_of(&p, -1.0);
        opt.step(&mut p, &g, lr).unwrap();
        let ms2 = 1.5;
        let vel2 = 0.9 * vel1 - 0.1 / (ms2 + 0.01f64).sqrt();
        let w2 = w1 - vel2;
        assert!((p.get(ParamId(0)).data()[0] - w2).abs() <= 1e-12);
        assert!((opt.mean_square()[0].data()[0] - ms2).abs() <= 1e-12);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let p = scalar_set(0.0);
        let bad = RmsPropConfig {
            momentum: 1.0,
            ..RmsPropConfig::default()
        };
        assert!(RmsProp::new(bad, &p).is_err());
    }

    #[test]
    fn rejects_misaligned_gradients() {
        let mut p = scalar_set(0.0);
        let mut other = ParameterSet::new();
        other.insert("w", Tensor::zeros(&[2])).unwrap();
        let g = other.zeros_like();
        assert!(sgd_step(&mut p, &g, 0.1).is_err());
    }
}
