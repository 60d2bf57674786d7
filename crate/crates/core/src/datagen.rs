//! Synthetic two-domain generators for the classification and regression
//! structural causal models.
//!
//! Domain `D=0` is the labelled source, `D=1` the target. Only the cause
//! distribution depends on the domain; `Y | X_C` and `X_E | Y` are shared.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{DomainDataset, LabelledRow, Task, UnlabelledRow};
use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::rng::{stream, StreamRng};

/// Binary classification SCM:
/// `X_C = ±mu_c + N(0,1)`, `Y ~ Bernoulli(σ(X_C − m))`, `X_E = mu_Y + N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScmConfig {
    /// Source cause mean; the target mean is `-mu_c`.
    pub mu_c: f64,
    pub m: f64,
    pub mu_0: f64,
    pub mu_1: f64,
    /// Permit `mu_0 == mu_1` (effect carries no label information).
    pub allow_equal_means: bool,
}

impl ClassScmConfig {
    pub fn new(mu_c: f64, m: f64, mu_0: f64, mu_1: f64) -> Self {
        Self { mu_c, m, mu_0, mu_1, allow_equal_means: false }
    }

    /// `mu_C = -1, m = 0, mu_1 = -mu_0 = mu`.
    pub fn symmetric(mu: f64) -> Self {
        Self::new(-1.0, 0.0, -mu, mu)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.mu_c, self.m, self.mu_0, self.mu_1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("classification SCM values must be finite".into()));
        }
        if self.mu_0 == self.mu_1 && !self.allow_equal_means {
            return Err(Error::InvalidConfig(
                "mu_0 == mu_1 makes the effect uninformative; set allow_equal_means to permit it".into(),
            ));
        }
        Ok(())
    }

    pub fn cause_mean(&self, domain: u8) -> f64 {
        if domain == 0 {
            self.mu_c
        } else {
            -self.mu_c
        }
    }

    fn draw<R: Rng>(&self, domain: u8, rng: &mut R) -> LabelledRow {
        let x_c = self.cause_mean(domain) + rng.sample::<f64, _>(StandardNormal);
        let u: f64 = rng.random();
        let y = if u <= sigmoid(x_c - self.m) { 1.0 } else { 0.0 };
        let mu = if y == 1.0 { self.mu_1 } else { self.mu_0 };
        let x_e = mu + rng.sample::<f64, _>(StandardNormal);
        LabelledRow::new(vec![x_c], y, vec![x_e])
    }

    /// Labelled target-domain draws.
    pub fn sample_target(&self, n: usize, rng: &mut StreamRng) -> Vec<LabelledRow> {
        (0..n).map(|_| self.draw(1, rng)).collect()
    }
}

/// `P(x_C | D=1) / P(x_C | D=0)` for the classification SCM.
///
/// The ratio of `N(-mu_c, 1)` to `N(mu_c, 1)` densities simplifies to
/// `exp(-2 mu_c x_C)`.
pub fn known_importance_weight(cfg: &ClassScmConfig, x_c: f64) -> f64 {
    (-2.0 * cfg.mu_c * x_c).exp()
}

fn check_sizes(n_s: usize, n_test: usize) -> Result<()> {
    if n_s == 0 {
        return Err(Error::EmptySample("n_S must be at least 1"));
    }
    if n_test == 0 {
        return Err(Error::InvalidArgument("n_test must be at least 1".into()));
    }
    Ok(())
}

/// Draws source, unlabelled target and labelled target-test samples, in that
/// order, from one stream seeded by `seed`.
pub fn gen_classification(
    cfg: &ClassScmConfig,
    n_s: usize,
    n_t: usize,
    n_test: usize,
    seed: u64,
) -> Result<(DomainDataset, Vec<LabelledRow>)> {
    cfg.validate()?;
    check_sizes(n_s, n_test)?;
    let mut rng = stream(seed);
    let source = (0..n_s).map(|_| cfg.draw(0, &mut rng)).collect();
    let target = (0..n_t).map(|_| cfg.draw(1, &mut rng).features()).collect();
    let test = cfg.sample_target(n_test, &mut rng);
    Ok((DomainDataset::new(source, target, Task::Classification)?, test))
}

/// Gaussian cause distribution for one domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauseDist {
    pub mean: f64,
    pub std: f64,
}

/// Linear-Gaussian SCM: `Y = a + b X_C + N(0, σ_Y²)`, `X_E = c + d Y + N(0, σ_E²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegrScmConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub sigma_y: f64,
    pub sigma_e: f64,
    pub cause_source: CauseDist,
    pub cause_target: CauseDist,
}

impl RegrScmConfig {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.a,
            self.b,
            self.c,
            self.d,
            self.sigma_y,
            self.sigma_e,
            self.cause_source.mean,
            self.cause_source.std,
            self.cause_target.mean,
            self.cause_target.std,
        ];
        if !vals.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("regression SCM values must be finite".into()));
        }
        if self.sigma_y <= 0.0 || self.sigma_e <= 0.0 {
            return Err(Error::InvalidConfig("sigma_Y and sigma_E must be positive".into()));
        }
        if self.cause_source.std <= 0.0 || self.cause_target.std <= 0.0 {
            return Err(Error::InvalidConfig("cause standard deviations must be positive".into()));
        }
        Ok(())
    }

    fn cause(&self, domain: u8) -> CauseDist {
        if domain == 0 {
            self.cause_source
        } else {
            self.cause_target
        }
    }

    fn draw<R: Rng>(&self, domain: u8, rng: &mut R) -> LabelledRow {
        let cd = self.cause(domain);
        let x_c = cd.mean + cd.std * rng.sample::<f64, _>(StandardNormal);
        let y = self.a + self.b * x_c + self.sigma_y * rng.sample::<f64, _>(StandardNormal);
        let x_e = self.c + self.d * y + self.sigma_e * rng.sample::<f64, _>(StandardNormal);
        LabelledRow::new(vec![x_c], y, vec![x_e])
    }

    /// Density ratio of the target to the source cause distribution.
    pub fn importance_weight(&self, x_c: f64) -> f64 {
        let lp = |d: CauseDist| {
            let z = (x_c - d.mean) / d.std;
            -0.5 * z * z - d.std.ln()
        };
        (lp(self.cause_target) - lp(self.cause_source)).exp()
    }
}

pub fn gen_regression(
    cfg: &RegrScmConfig,
    n_s: usize,
    n_t: usize,
    n_test: usize,
    seed: u64,
) -> Result<(DomainDataset, Vec<LabelledRow>)> {
    cfg.validate()?;
    check_sizes(n_s, n_test)?;
    let mut rng = stream(seed);
    let source = (0..n_s).map(|_| cfg.draw(0, &mut rng)).collect();
    let target = (0..n_t).map(|_| cfg.draw(1, &mut rng).features()).collect::<Vec<UnlabelledRow>>();
    let test = (0..n_test).map(|_| cfg.draw(1, &mut rng)).collect();
    Ok((DomainDataset::new(source, target, Task::Regression)?, test))
}
