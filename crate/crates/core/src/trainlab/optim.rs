//! First-order optimizers over flat parameter vectors.
//!
//! Both update rules minimize: callers maximizing a value pass the negated
//! gradient. Adam follows the standard moment recursion with bias
//! correction, `p -= lr * m_hat / (sqrt(v_hat) + eps)`.

use super::TrainError;

/// Batch selection per optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    /// One step per epoch over the whole dataset.
    Full,
    /// Seeded shuffle each epoch, split into chunks of this size.
    Size(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptKind {
    pub fn adam_default() -> Self {
        OptKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptKind::Sgd => "sgd",
            OptKind::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub kind: OptKind,
    pub learning_rate: f64,
    pub batch: Batch,
    pub epochs: usize,
    /// Seed for the per-epoch minibatch shuffle; unused with [`Batch::Full`].
    pub shuffle_seed: u64,
}

impl OptimizerConfig {
    /// Adam at the default moment coefficients.
    pub fn adam(learning_rate: f64, epochs: usize) -> Self {
        Self {
            kind: OptKind::adam_default(),
            learning_rate,
            batch: Batch::Full,
            epochs,
            shuffle_seed: 0,
        }
    }

    pub fn sgd(learning_rate: f64, epochs: usize) -> Self {
        Self { kind: OptKind::Sgd, learning_rate, batch: Batch::Full, epochs, shuffle_seed: 0 }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::InvalidOptimizer(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let OptKind::Adam { beta1, beta2, epsilon } = self.kind {
            for (name, beta) in [("beta1", beta1), ("beta2", beta2)] {
                if !((0.0..1.0).contains(&beta)) {
                    return Err(TrainError::InvalidOptimizer(format!(
                        "{name} must lie in [0, 1), got {beta}"
                    )));
                }
            }
            if !(epsilon.is_finite() && epsilon > 0.0) {
                return Err(TrainError::InvalidOptimizer(format!(
                    "epsilon must be positive, got {epsilon}"
                )));
            }
        }
        if let Batch::Size(0) = self.batch {
            return Err(TrainError::InvalidOptimizer("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Mutable optimizer state carried across steps.
#[derive(Debug, Clone)]
pub enum OptState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, step: u64 },
}

impl OptState {
    pub fn new(kind: &OptKind, dim: usize) -> Self {
        match kind {
            OptKind::Sgd => OptState::Sgd,
            OptKind::Adam { .. } => {
                OptState::Adam { m: vec![0.0; dim], v: vec![0.0; dim], step: 0 }
            }
        }
    }
}

/// Plain gradient-descent update `p -= lr * g`.
pub fn sgd_step(params: &mut [f64], grad: &[f64], learning_rate: f64) {
    debug_assert_eq!(params.len(), grad.len());
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= learning_rate * g;
    }
}

/// One Adam update with bias correction; advances the step counter.
pub fn adam_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut OptState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    let OptState::Adam { m, v, step } = state else {
        panic!("adam_step requires Adam state");
    };
    debug_assert_eq!(params.len(), grad.len());
    *step += 1;
    let t = *step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Dispatch one update according to the configured kind.
pub fn apply_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut OptState,
    config: &OptimizerConfig,
) {
    match config.kind {
        OptKind::Sgd => sgd_step(params, grad, config.learning_rate),
        OptKind::Adam { beta1, beta2, epsilon } => {
            adam_step(params, grad, state, config.learning_rate, beta1, beta2, epsilon)
        }
    }
}
