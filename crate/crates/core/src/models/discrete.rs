use crate::error::{Error, Result};
use crate::numeric::{log_add_exp, log_sigmoid, sigmoid};
use crate::optimizer::Bounds;

use super::SemiGenerative;

/// Logistic `P(Y=1 | x_C)` with conditionally independent Bernoulli effects.
///
/// `w[0]` is the bias, `w[1..]` the cause weights. `logit_p[j][y]` is the
/// logit of `p(X_E[j] = 1 | Y = y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteParams {
    pub w: Vec<f64>,
    pub logit_p: Vec<[f64; 2]>,
}

impl DiscreteParams {
    pub fn zeros(dim_c: usize, dim_e: usize) -> Self {
        Self { w: vec![0.0; dim_c + 1], logit_p: vec![[0.0; 2]; dim_e] }
    }

    #[inline]
    fn score(&self, x_c: &[f64]) -> f64 {
        self.w[0] + self.w[1..].iter().zip(x_c).map(|(w, x)| w * x).sum::<f64>()
    }

    #[inline]
    fn effect_term(&self, x_e: &[f64], y: usize) -> f64 {
        self.logit_p
            .iter()
            .zip(x_e)
            .map(|(l, &x)| x * log_sigmoid(l[y]) + (1.0 - x) * log_sigmoid(-l[y]))
            .sum()
    }

    #[inline]
    fn class_terms(&self, x_c: &[f64], x_e: &[f64]) -> (f64, f64) {
        let z = self.score(x_c);
        (log_sigmoid(-z) + self.effect_term(x_e, 0), log_sigmoid(z) + self.effect_term(x_e, 1))
    }

    fn effect_offset(&self) -> usize {
        self.w.len()
    }

    fn add_effect_grad(&self, x_e: &[f64], y: usize, weight: f64, grad: &mut [f64]) {
        let off = self.effect_offset();
        for (j, (l, &x)) in self.logit_p.iter().zip(x_e).enumerate() {
            grad[off + 2 * j + y] += weight * (x - sigmoid(l[y]));
        }
    }

    fn add_label_grad(&self, x_c: &[f64], residual: f64, weight: f64, grad: &mut [f64]) {
        grad[0] += weight * residual;
        for (g, x) in grad[1..self.w.len()].iter_mut().zip(x_c) {
            *g += weight * residual * x;
        }
    }
}

impl SemiGenerative for DiscreteParams {
    fn dims(&self) -> (usize, usize) {
        (self.w.len() - 1, self.logit_p.len())
    }

    fn is_classifier(&self) -> bool {
        true
    }

    fn log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c, x_e);
        if y == 1.0 {
            l1
        } else {
            l0
        }
    }

    fn log_marginal(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c, x_e);
        log_add_exp(l0, l1)
    }

    fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let (l0, l1) = self.class_terms(x_c, x_e);
        if l1 >= l0 {
            1.0
        } else {
            0.0
        }
    }

    fn predict_proba(&self, x_c: &[f64], x_e: &[f64]) -> Option<f64> {
        let (l0, l1) = self.class_terms(x_c, x_e);
        Some(sigmoid(l1 - l0))
    }

    fn n_params(&self) -> usize {
        self.w.len() + 2 * self.logit_p.len()
    }

    fn to_vector(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.extend(self.logit_p.iter().flat_map(|l| l.iter().copied()));
        v
    }

    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        if v.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: v.len() });
        }
        let (w, rest) = v.split_at(self.w.len());
        Ok(Self { w: w.to_vec(), logit_p: rest.chunks_exact(2).map(|c| [c[0], c[1]]).collect() })
    }

    fn bounds(&self) -> Bounds {
        Bounds::unbounded(self.n_params())
    }

    fn accumulate_log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let z = self.score(x_c);
        let yi = usize::from(y == 1.0);
        self.add_label_grad(x_c, y - sigmoid(z), weight, grad);
        self.add_effect_grad(x_e, yi, weight, grad);
        if yi == 1 {
            log_sigmoid(z) + self.effect_term(x_e, 1)
        } else {
            log_sigmoid(-z) + self.effect_term(x_e, 0)
        }
    }

    fn accumulate_log_marginal(&self, x_c: &[f64], x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let z = self.score(x_c);
        let (l0, l1) = self.class_terms(x_c, x_e);
        let r1 = sigmoid(l1 - l0);
        // Σ_y r_y (y − σ(z)) = r1 − σ(z)
        self.add_label_grad(x_c, r1 - sigmoid(z), weight, grad);
        self.add_effect_grad(x_e, 0, weight * (1.0 - r1), grad);
        self.add_effect_grad(x_e, 1, weight * r1, grad);
        log_add_exp(l0, l1)
    }

    fn to_kv(&self) -> Vec<(String, f64)> {
        let mut kv: Vec<(String, f64)> = self.w.iter().enumerate().map(|(i, w)| (format!("w_{i}"), *w)).collect();
        for (j, l) in self.logit_p.iter().enumerate() {
            kv.push((format!("logit_p_{j}_0"), l[0]));
            kv.push((format!("logit_p_{j}_1"), l[1]));
        }
        kv
    }

    fn relabelled(&self) -> Option<Self> {
        Some(Self {
            w: self.w.iter().map(|w| -w).collect(),
            logit_p: self.logit_p.iter().map(|l| [l[1], l[0]]).collect(),
        })
    }
}
