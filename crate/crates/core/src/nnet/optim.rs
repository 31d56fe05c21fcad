use serde::{Deserialize, Serialize};

use super::model::{ParamSet, Params};
use super::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp { learning_rate: 0.001, rho: 0.9, epsilon: 1e-7 }
    }
}

/// Running mean of squared gradients, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState<T> {
    pub mean_square: ParamSet<T>,
}

impl<T: Real> RmsPropState<T> {
    pub fn zeros(params: &ParamSet<T>) -> Self {
        RmsPropState { mean_square: params.iter().map(|p| p.as_ref().map(Params::zeros_like)).collect() }
    }
}

impl RmsProp {
    /// `s <- rho*s + (1-rho)*g^2; w <- w - lr*g/(sqrt(s) + eps)`, elementwise.
    pub fn update<T: Real>(&self, weights: &mut [T], grads: &[T], state: &mut [T]) {
        let (lr, rho, eps) = (T::lit(self.learning_rate), T::lit(self.rho), T::lit(self.epsilon));
        let one_minus_rho = T::one() - rho;
        for ((w, &g), s) in weights.iter_mut().zip(grads).zip(state.iter_mut()) {
            *s = rho * *s + one_minus_rho * g * g;
            *w -= lr * g / (s.sqrt() + eps);
        }
    }

    pub fn step<T: Real>(&self, params: &mut ParamSet<T>, grads: &ParamSet<T>, state: &mut RmsPropState<T>) {
        for ((p, g), s) in params.iter_mut().zip(grads).zip(state.mean_square.iter_mut()) {
            if let (Some(p), Some(g), Some(s)) = (p.as_mut(), g.as_ref(), s.as_mut()) {
                self.update(&mut p.weights, &g.weights, &mut s.weights);
                self.update(&mut p.bias, &g.bias, &mut s.bias);
            }
        }
    }
}
