use serde::{Deserialize, Serialize};

use super::network::{Network, Params, PARAM_NAMES};
use super::scalar::Scalar;
use super::NnError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub minibatch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.01, momentum: 0.9, minibatch_size: 16 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NnError::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.minibatch_size == 0 {
            return Err(NnError::InvalidConfig("minibatch_size must be positive".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> Network<T> {
    /// `v <- momentum * v - learning_rate * g; w <- w + v` for every array,
    /// then bumps the revision. Non-finite gradients leave the model untouched.
    pub fn sgd_momentum_step(&mut self, grads: &Params<T>, cfg: &SgdConfig) -> Result<(), NnError> {
        cfg.validate()?;
        if !grads.same_shapes(&self.params) {
            return Err(NnError::GradientShape);
        }
        if let Some(i) = grads.arrays().iter().position(|g| !g.all_finite()) {
            return Err(NnError::NonFinite(PARAM_NAMES[i]));
        }
        let mu = T::from_f64(cfg.momentum);
        let lr = T::from_f64(cfg.learning_rate);
        let weights = self.params.arrays_mut();
        let velocities = self.velocity.arrays_mut();
        for ((w, v), g) in weights.into_iter().zip(velocities).zip(grads.arrays()) {
            for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vi = mu * *vi - lr * gi;
                *wi += *vi;
            }
        }
        self.revision += 1;
        Ok(())
    }
}
