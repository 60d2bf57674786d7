use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sigmoid, normal_log_pdf, sigmoid};
use crate::optimizer::Bounds;

use super::SemiGenerative;

/// `Y | x_C ~ Bernoulli(σ(x_C − m))`, `X_E | y ~ N(mu_y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussClassParams {
    pub m: f64,
    pub mu_0: f64,
    pub mu_1: f64,
}

impl GaussClassParams {
    pub fn new(m: f64, mu_0: f64, mu_1: f64) -> Self {
        Self { m, mu_0, mu_1 }
    }

    /// Class log-densities `(ln P(0, x_E | x_C), ln P(1, x_E | x_C))`.
    #[inline]
    fn class_terms(&self, x_c: f64, x_e: f64) -> (f64, f64) {
        let z = x_c - self.m;
        (
            log_sigmoid(-z) + normal_log_pdf(x_e, self.mu_0, 1.0),
            log_sigmoid(z) + normal_log_pdf(x_e, self.mu_1, 1.0),
        )
    }
}

impl SemiGenerative for GaussClassParams {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn is_classifier(&self) -> bool {
        true
    }

    fn log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c[0], x_e[0]);
        if y == 1.0 {
            l1
        } else {
            l0
        }
    }

    fn log_marginal(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c[0], x_e[0]);
        log_add_exp(l0, l1)
    }

    fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c[0], x_e[0]);
        if l1 >= l0 {
            1.0
        } else {
            0.0
        }
    }

    fn predict_proba(&self, x_c: &[f64], x_e: &[f64]) -> Option<f64> {
        let (l0, l1) = self.class_terms(x_c[0], x_e[0]);
        Some(sigmoid(l1 - l0))
    }

    fn n_params(&self) -> usize {
        3
    }

    fn to_vector(&self) -> Vec<f64> {
        vec![self.m, self.mu_0, self.mu_1]
    }

    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        match v {
            [m, mu_0, mu_1] => Ok(Self::new(*m, *mu_0, *mu_1)),
            _ => Err(Error::DimensionMismatch { expected: 3, got: v.len() }),
        }
    }

    fn bounds(&self) -> Bounds {
        Bounds::unbounded(3)
    }

    fn accumulate_log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let z = x_c[0] - self.m;
        let s = sigmoid(z);
        if y == 1.0 {
            grad[0] -= weight * (1.0 - s);
            grad[2] += weight * (x_e[0] - self.mu_1);
            log_sigmoid(z) + normal_log_pdf(x_e[0], self.mu_1, 1.0)
        } else {
            grad[0] += weight * s;
            grad[1] += weight * (x_e[0] - self.mu_0);
            log_sigmoid(-z) + normal_log_pdf(x_e[0], self.mu_0, 1.0)
        }
    }

    fn accumulate_log_marginal(&self, x_c: &[f64], x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c[0], x_e[0]);
        let s = sigmoid(x_c[0] - self.m);
        let r1 = sigmoid(l1 - l0);
        let r0 = 1.0 - r1;
        grad[0] += weight * (r0 * s - r1 * (1.0 - s));
        grad[1] += weight * r0 * (x_e[0] - self.mu_0);
        grad[2] += weight * r1 * (x_e[0] - self.mu_1);
        log_add_exp(l0, l1)
    }

    fn to_kv(&self) -> Vec<(String, f64)> {
        vec![("m".into(), self.m), ("mu_0".into(), self.mu_0), ("mu_1".into(), self.mu_1)]
    }

    fn relabelled(&self) -> Option<Self> {
        // the label slope in x_C is fixed at +1, so only the offset can be mirrored
        Some(Self::new(-self.m, self.mu_1, self.mu_0))
    }
}
