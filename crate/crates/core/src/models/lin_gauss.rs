use crate::error::{Error, Result};
use crate::numeric::normal_log_pdf;
use crate::optimizer::Bounds;

use super::SemiGenerative;

/// `Y | x_C ~ N(a + b x_C, σ_Y²)`, `X_E | y ~ N(c + d y, σ_E²)`.
///
/// Noise scales are stored on the log scale. With `restricted` set, the
/// slopes `b` and `d` are constrained to be non-positive during fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinGaussParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub log_sigma_y: f64,
    pub log_sigma_e: f64,
    pub restricted: bool,
}

impl LinGaussParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64, sigma_y: f64, sigma_e: f64) -> Self {
        Self { a, b, c, d, log_sigma_y: sigma_y.ln(), log_sigma_e: sigma_e.ln(), restricted: false }
    }

    pub fn restricted(mut self, on: bool) -> Self {
        self.restricted = on;
        self
    }

    pub fn sigma_y(&self) -> f64 {
        self.log_sigma_y.exp()
    }

    pub fn sigma_e(&self) -> f64 {
        self.log_sigma_e.exp()
    }

    /// Mean and variance of `X_E | x_C` with `Y` integrated out.
    pub fn marginal_moments(&self, x_c: f64) -> (f64, f64) {
        let vy = (2.0 * self.log_sigma_y).exp();
        let ve = (2.0 * self.log_sigma_e).exp();
        (self.c + self.a * self.d + self.b * self.d * x_c, self.d * self.d * vy + ve)
    }

    /// Clamps the slopes to the feasible half-lines when restricted.
    pub fn projected(&self) -> Self {
        let mut p = *self;
        if p.restricted {
            p.b = p.b.min(0.0);
            p.d = p.d.min(0.0);
        }
        p
    }
}

impl SemiGenerative for LinGaussParams {
    fn dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn is_classifier(&self) -> bool {
        false
    }

    fn log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64]) -> f64 {
        let vy = (2.0 * self.log_sigma_y).exp();
        let ve = (2.0 * self.log_sigma_e).exp();
        normal_log_pdf(y, self.a + self.b * x_c[0], vy) + normal_log_pdf(x_e[0], self.c + self.d * y, ve)
    }

    fn log_marginal(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let (mean, var) = self.marginal_moments(x_c[0]);
        normal_log_pdf(x_e[0], mean, var)
    }

    /// Posterior mode of `Y`, a precision-weighted average of the cause-side
    /// prediction and the inverted effect mechanism. Written without dividing
    /// by `d` so that `d = 0` is regular.
    fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let vy = (2.0 * self.log_sigma_y).exp();
        let ve = (2.0 * self.log_sigma_e).exp();
        let prior = self.a + self.b * x_c[0];
        (ve * prior + self.d * vy * (x_e[0] - self.c)) / (ve + self.d * self.d * vy)
    }

    fn predict_proba(&self, _x_c: &[f64], _x_e: &[f64]) -> Option<f64> {
        None
    }

    fn n_params(&self) -> usize {
        6
    }

    fn to_vector(&self) -> Vec<f64> {
        vec![self.a, self.b, self.c, self.d, self.log_sigma_y, self.log_sigma_e]
    }

    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        match v {
            [a, b, c, d, ly, le] => Ok(Self {
                a: *a,
                b: *b,
                c: *c,
                d: *d,
                log_sigma_y: *ly,
                log_sigma_e: *le,
                restricted: self.restricted,
            }),
            _ => Err(Error::DimensionMismatch { expected: 6, got: v.len() }),
        }
    }

    fn bounds(&self) -> Bounds {
        let mut b = Bounds::unbounded(6);
        if self.restricted {
            b.upper[1] = 0.0;
            b.upper[3] = 0.0;
        }
        b
    }

    fn accumulate_log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let vy = (2.0 * self.log_sigma_y).exp();
        let ve = (2.0 * self.log_sigma_e).exp();
        let ry = y - self.a - self.b * x_c[0];
        let re = x_e[0] - self.c - self.d * y;
        grad[0] += weight * ry / vy;
        grad[1] += weight * ry * x_c[0] / vy;
        grad[2] += weight * re / ve;
        grad[3] += weight * re * y / ve;
        grad[4] += weight * (ry * ry / vy - 1.0);
        grad[5] += weight * (re * re / ve - 1.0);
        normal_log_pdf(y, self.a + self.b * x_c[0], vy) + normal_log_pdf(x_e[0], self.c + self.d * y, ve)
    }

    fn accumulate_log_marginal(&self, x_c: &[f64], x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        let vy = (2.0 * self.log_sigma_y).exp();
        let ve = (2.0 * self.log_sigma_e).exp();
        let (mean, var) = self.marginal_moments(x_c[0]);
        let r = x_e[0] - mean;
        let d_mean = r / var;
        let d_var = 0.5 * (r * r / var - 1.0) / var;
        grad[0] += weight * d_mean * self.d;
        grad[1] += weight * d_mean * self.d * x_c[0];
        grad[2] += weight * d_mean;
        grad[3] += weight * (d_mean * (self.a + self.b * x_c[0]) + d_var * 2.0 * self.d * vy);
        grad[4] += weight * d_var * 2.0 * self.d * self.d * vy;
        grad[5] += weight * d_var * 2.0 * ve;
        normal_log_pdf(x_e[0], mean, var)
    }

    fn to_kv(&self) -> Vec<(String, f64)> {
        vec![
            ("a".into(), self.a),
            ("b".into(), self.b),
            ("c".into(), self.c),
            ("d".into(), self.d),
            ("log_sigma_y".into(), self.log_sigma_y),
            ("log_sigma_e".into(), self.log_sigma_e),
        ]
    }
}
