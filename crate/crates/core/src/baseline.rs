//! Linear / logistic regression on the concatenated features `(1, x_C, x_E)`,
//! ignoring the causal roles of the features.

use nalgebra::{DMatrix, DVector};

use crate::data::{DomainDataset, Task};
use crate::error::{Error, Result};
use crate::numeric::{fmt_g17, log_sigmoid, sigmoid};
use crate::optimizer::{maximize, Objective, OptimizerOptions};

const RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    pub task: Task,
    /// Intercept, cause coefficients, effect coefficients.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDiagnostics {
    /// Smallest eigenvalue of the Gram matrix fell below `1e-12` times the largest.
    pub rank_deficient: bool,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub model: JointModel,
    pub diagnostics: JointDiagnostics,
}

fn features(x_c: &[f64], x_e: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(1 + x_c.len() + x_e.len());
    f.push(1.0);
    f.extend_from_slice(x_c);
    f.extend_from_slice(x_e);
    f
}

impl JointModel {
    fn score(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        features(x_c, x_e).iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }

    /// Regression: fitted value. Classification: `1` iff `P(Y=1) >= 0.5`.
    pub fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        let s = self.score(x_c, x_e);
        match self.task {
            Task::Regression => s,
            Task::Classification => {
                if s >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn predict_proba(&self, x_c: &[f64], x_e: &[f64]) -> Option<f64> {
        match self.task {
            Task::Regression => None,
            Task::Classification => Some(sigmoid(self.score(x_c, x_e))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "model={}\nn_coef={}\n",
            if self.task == Task::Regression { "joint_linear" } else { "joint_logistic" },
            self.coef.len()
        );
        for (i, c) in self.coef.iter().enumerate() {
            out.push_str(&format!("coef_{i}={}\n", fmt_g17(*c)));
        }
        out
    }

    pub fn from_kv(kv: &std::collections::BTreeMap<String, String>) -> Result<Self> {
        let task = match kv.get("model").map(String::as_str) {
            Some("joint_linear") => Task::Regression,
            Some("joint_logistic") => Task::Classification,
            other => return Err(Error::Data(format!("not a joint model: {other:?}"))),
        };
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("missing or bad key `{k}`")))
        };
        let n = num("n_coef")? as usize;
        let coef = (0..n).map(|i| num(&format!("coef_{i}"))).collect::<Result<_>>()?;
        Ok(Self { task, coef })
    }
}

struct LogisticObjective {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.x[0].len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        self.x
            .iter()
            .zip(&self.y)
            .map(|(f, &y)| {
                let z: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
                if y == 1.0 {
                    log_sigmoid(z)
                } else {
                    log_sigmoid(-z)
                }
            })
            .sum::<f64>()
            / n
    }

    fn value_and_gradient(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.y.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (f, &y) in self.x.iter().zip(&self.y) {
            let z: f64 = f.iter().zip(w).map(|(a, b)| a * b).sum();
            let r = (y - sigmoid(z)) / n;
            for (g, a) in grad.iter_mut().zip(f) {
                *g += r * a;
            }
        }
        self.value(w)
    }
}

/// Fits the joint-feature baseline on the labelled source rows.
///
/// Regression solves the ridge-jittered normal equations; classification
/// maximizes the logistic log-likelihood, relying on the iteration cap when
/// the data are separable.
pub fn fit_joint_regression(ds: &DomainDataset, task: Task, opts: &OptimizerOptions) -> Result<JointFit> {
    ds.validate()?;
    let x: Vec<Vec<f64>> = ds.source.iter().map(|r| features(&r.x_c, &r.x_e)).collect();
    let y: Vec<f64> = ds.source.iter().map(|r| r.y).collect();
    let p = x[0].len();
    let design = DMatrix::from_fn(x.len(), p, |i, j| x[i][j]);
    let gram = design.transpose() * &design;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(v.abs())));
    let rank_deficient = lo <= 1e-12 * hi.max(1e-300);

    match task {
        Task::Regression => {
            let rhs = design.transpose() * DVector::from_vec(y);
            let jittered = gram + DMatrix::identity(p, p) * RIDGE_JITTER;
            let sol = match jittered.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => jittered
                    .svd(true, true)
                    .solve(&rhs, 1e-14)
                    .map_err(|e| Error::Optimizer(format!("least squares: {e}")))?,
            };
            Ok(JointFit {
                model: JointModel { task, coef: sol.iter().copied().collect() },
                diagnostics: JointDiagnostics { rank_deficient, converged: true, iterations: 0 },
            })
        }
        Task::Classification => {
            let obj = LogisticObjective { x, y };
            let r = maximize(&obj, &vec![0.0; p], opts)?;
            Ok(JointFit {
                model: JointModel { task, coef: r.theta_hat },
                diagnostics: JointDiagnostics { rank_deficient, converged: r.converged[0], iterations: r.n_iters },
            })
        }
    }
}
