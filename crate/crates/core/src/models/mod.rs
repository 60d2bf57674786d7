//! The semi-generative model family `P(Y, X_E | X_C, θ) = P(Y | X_C, θ_Y) P(X_E | Y, θ_E)`.
//!
//! Every model class exposes the supervised joint log-density, the marginal
//! of `X_E | X_C` with `Y` summed or integrated out in closed form, and the
//! domain-invariant prediction rule. None of these read a domain indicator.

mod discrete;
mod gauss_class;
mod lin_gauss;

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use discrete::DiscreteParams;
pub use gauss_class::GaussClassParams;
pub use lin_gauss::LinGaussParams;

use crate::data::{DomainDataset, Task};
use crate::error::{Error, Result};
use crate::numeric::fmt_g17;
use crate::optimizer::Bounds;

/// Shared interface of the model classes.
///
/// Row slices must have the lengths reported by [`SemiGenerative::dims`];
/// use [`SemiGenerative::check_dims`] (or the dataset-level functions in
/// `estimators`, which validate once) when that is not already known.
pub trait SemiGenerative: Clone + Send + Sync {
    fn dims(&self) -> (usize, usize);

    fn is_classifier(&self) -> bool;

    /// `ln P(y | x_C) + ln P(x_E | y)`.
    fn log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64]) -> f64;

    /// `ln P(x_E | x_C)`.
    fn log_marginal(&self, x_c: &[f64], x_e: &[f64]) -> f64;

    /// Mode of `P(Y | x_C, x_E)`. Classifiers break the exact tie towards 1.
    fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64;

    /// `P(Y = 1 | x_C, x_E)` for classifiers, `None` for regression.
    fn predict_proba(&self, x_c: &[f64], x_e: &[f64]) -> Option<f64>;

    fn n_params(&self) -> usize;

    fn to_vector(&self) -> Vec<f64>;

    /// Unflattens `v`, taking structural settings (dimensions, constraint
    /// flags) from `self`.
    fn from_vector(&self, v: &[f64]) -> Result<Self>;

    /// Feasible set for the flattened parameters.
    fn bounds(&self) -> Bounds;

    /// Adds `weight * ∇ log_joint` into `grad` and returns `log_joint`.
    fn accumulate_log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64;

    /// Adds `weight * ∇ log_marginal` into `grad` and returns `log_marginal`.
    fn accumulate_log_marginal(&self, x_c: &[f64], x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64;

    /// Named parameter values in a stable order, for persistence.
    fn to_kv(&self) -> Vec<(String, f64)>;

    /// The parameters with the roles of the two classes exchanged. The
    /// unlabelled likelihood of a two-class mixture has a local mode near the
    /// relabelled solution, so fitting restarts from here once.
    fn relabelled(&self) -> Option<Self> {
        None
    }

    fn check_dims(&self, x_c: &[f64], x_e: &[f64]) -> Result<()> {
        let (dc, de) = self.dims();
        if x_c.len() != dc {
            return Err(Error::DimensionMismatch { expected: dc, got: x_c.len() });
        }
        if x_e.len() != de {
            return Err(Error::DimensionMismatch { expected: de, got: x_e.len() });
        }
        Ok(())
    }
}

/// A fitted or hand-specified parameter set of any model class.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    GaussClass(GaussClassParams),
    LinGauss(LinGaussParams),
    Discrete(DiscreteParams),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $e:expr) => {
        match $self {
            ModelParams::GaussClass($p) => $e,
            ModelParams::LinGauss($p) => $e,
            ModelParams::Discrete($p) => $e,
        }
    };
}

impl SemiGenerative for ModelParams {
    fn dims(&self) -> (usize, usize) {
        dispatch!(self, p => p.dims())
    }
    fn is_classifier(&self) -> bool {
        dispatch!(self, p => p.is_classifier())
    }
    fn log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64]) -> f64 {
        dispatch!(self, p => p.log_joint(x_c, y, x_e))
    }
    fn log_marginal(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        dispatch!(self, p => p.log_marginal(x_c, x_e))
    }
    fn predict(&self, x_c: &[f64], x_e: &[f64]) -> f64 {
        dispatch!(self, p => p.predict(x_c, x_e))
    }
    fn predict_proba(&self, x_c: &[f64], x_e: &[f64]) -> Option<f64> {
        dispatch!(self, p => p.predict_proba(x_c, x_e))
    }
    fn n_params(&self) -> usize {
        dispatch!(self, p => p.n_params())
    }
    fn to_vector(&self) -> Vec<f64> {
        dispatch!(self, p => p.to_vector())
    }
    fn from_vector(&self, v: &[f64]) -> Result<Self> {
        Ok(match self {
            ModelParams::GaussClass(p) => ModelParams::GaussClass(p.from_vector(v)?),
            ModelParams::LinGauss(p) => ModelParams::LinGauss(p.from_vector(v)?),
            ModelParams::Discrete(p) => ModelParams::Discrete(p.from_vector(v)?),
        })
    }
    fn bounds(&self) -> Bounds {
        dispatch!(self, p => p.bounds())
    }
    fn accumulate_log_joint(&self, x_c: &[f64], y: f64, x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        dispatch!(self, p => p.accumulate_log_joint(x_c, y, x_e, weight, grad))
    }
    fn accumulate_log_marginal(&self, x_c: &[f64], x_e: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        dispatch!(self, p => p.accumulate_log_marginal(x_c, x_e, weight, grad))
    }
    fn to_kv(&self) -> Vec<(String, f64)> {
        dispatch!(self, p => p.to_kv())
    }
    fn relabelled(&self) -> Option<Self> {
        match self {
            ModelParams::GaussClass(p) => p.relabelled().map(ModelParams::GaussClass),
            ModelParams::LinGauss(p) => p.relabelled().map(ModelParams::LinGauss),
            ModelParams::Discrete(p) => p.relabelled().map(ModelParams::Discrete),
        }
    }
}

/// Which model class to fit, with its structural settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaussClass,
    LinGauss { restricted: bool },
    Discrete,
}

impl ModelKind {
    pub fn task(&self) -> Task {
        match self {
            ModelKind::LinGauss { .. } => Task::Regression,
            _ => Task::Classification,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::GaussClass => "gauss_class",
            ModelKind::LinGauss { .. } => "lin_gauss",
            ModelKind::Discrete => "discrete",
        }
    }

    /// Data-driven starting point for fitting: moment estimates from the
    /// labelled source sample.
    pub fn initial_params(&self, ds: &DomainDataset) -> Result<ModelParams> {
        if ds.task != self.task() {
            return Err(Error::InvalidArgument(format!(
                "model `{}` does not match a {:?} dataset",
                self.name(),
                ds.task
            )));
        }
        ds.validate()?;
        let (dc, de) = ds.dims();
        match *self {
            ModelKind::GaussClass => {
                if (dc, de) != (1, 1) {
                    return Err(Error::DimensionMismatch { expected: 1, got: dc.max(de) });
                }
                let n = ds.n_source() as f64;
                let n1 = ds.source.iter().filter(|r| r.y == 1.0).count() as f64;
                let p1 = (n1 + 0.5) / (n + 1.0);
                let mean_c = ds.source.iter().map(|r| r.x_c[0]).sum::<f64>() / n;
                let mean_e = ds.source.iter().map(|r| r.x_e[0]).sum::<f64>() / n;
                let class_mean = |y: f64, fallback: f64| {
                    let v: Vec<f64> = ds.source.iter().filter(|r| r.y == y).map(|r| r.x_e[0]).collect();
                    if v.is_empty() {
                        fallback
                    } else {
                        v.iter().sum::<f64>() / v.len() as f64
                    }
                };
                Ok(ModelParams::GaussClass(GaussClassParams::new(
                    mean_c - (p1 / (1.0 - p1)).ln(),
                    class_mean(0.0, mean_e - 0.5),
                    class_mean(1.0, mean_e + 0.5),
                )))
            }
            ModelKind::LinGauss { restricted } => {
                if (dc, de) != (1, 1) {
                    return Err(Error::DimensionMismatch { expected: 1, got: dc.max(de) });
                }
                let xc: Vec<f64> = ds.source.iter().map(|r| r.x_c[0]).collect();
                let ys: Vec<f64> = ds.source.iter().map(|r| r.y).collect();
                let xe: Vec<f64> = ds.source.iter().map(|r| r.x_e[0]).collect();
                let (a, b, vy) = simple_ols(&xc, &ys);
                let (c, d, ve) = simple_ols(&ys, &xe);
                let p = LinGaussParams {
                    a,
                    b,
                    c,
                    d,
                    log_sigma_y: 0.5 * vy.max(1e-6).ln(),
                    log_sigma_e: 0.5 * ve.max(1e-6).ln(),
                    restricted,
                };
                Ok(ModelParams::LinGauss(p.projected()))
            }
            ModelKind::Discrete => {
                let n = ds.n_source() as f64;
                let n1 = ds.source.iter().filter(|r| r.y == 1.0).count() as f64;
                let logit = |p: f64| (p / (1.0 - p)).ln();
                let mut p = DiscreteParams::zeros(dc, de);
                p.w[0] = logit((n1 + 0.5) / (n + 1.0));
                for j in 0..de {
                    for y in 0..2 {
                        let rows = ds.source.iter().filter(|r| r.y == y as f64);
                        let (ones, total) = rows.fold((0.0, 0.0), |(o, t), r| (o + r.x_e[j], t + 1.0));
                        p.logit_p[j][y] = logit((ones + 0.5) / (total + 1.0));
                    }
                }
                Ok(ModelParams::Discrete(p))
            }
        }
    }
}

/// Least squares of `ys` on `(1, xs)`: `(intercept, slope, mean squared residual)`.
fn simple_ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 1e-12 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    (intercept, slope, ssr / n)
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::GaussClass(_) => ModelKind::GaussClass,
            ModelParams::LinGauss(p) => ModelKind::LinGauss { restricted: p.restricted },
            ModelParams::Discrete(_) => ModelKind::Discrete,
        }
    }

    /// `key=value` lines, floats with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model={}", self.kind().name()).unwrap();
        match self {
            ModelParams::LinGauss(p) => writeln!(out, "restricted={}", p.restricted).unwrap(),
            ModelParams::Discrete(p) => {
                let (dc, de) = p.dims();
                writeln!(out, "dim_c={dc}\ndim_e={de}").unwrap();
            }
            ModelParams::GaussClass(_) => {}
        }
        for (k, v) in self.to_kv() {
            writeln!(out, "{k}={}", fmt_g17(v)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let get = |k: &str| -> Result<&str> {
            kv.get(k).map(String::as_str).ok_or_else(|| Error::Data(format!("missing key `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse::<f64>().map_err(|_| Error::Data(format!("key `{k}` is not a number")))
        };
        match get("model")? {
            "gauss_class" => Ok(ModelParams::GaussClass(GaussClassParams::new(num("m")?, num("mu_0")?, num("mu_1")?))),
            "lin_gauss" => Ok(ModelParams::LinGauss(LinGaussParams {
                a: num("a")?,
                b: num("b")?,
                c: num("c")?,
                d: num("d")?,
                log_sigma_y: num("log_sigma_y")?,
                log_sigma_e: num("log_sigma_e")?,
                restricted: kv.get("restricted").map(|s| s == "true").unwrap_or(false),
            })),
            "discrete" => {
                let dc = num("dim_c")? as usize;
                let de = num("dim_e")? as usize;
                let mut p = DiscreteParams::zeros(dc, de);
                for (i, w) in p.w.iter_mut().enumerate() {
                    *w = num(&format!("w_{i}"))?;
                }
                for (j, l) in p.logit_p.iter_mut().enumerate() {
                    l[0] = num(&format!("logit_p_{j}_0"))?;
                    l[1] = num(&format!("logit_p_{j}_1"))?;
                }
                Ok(ModelParams::Discrete(p))
            }
            other => Err(Error::Data(format!("unknown model `{other}`"))),
        }
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: k + 1, msg: format!("expected key=value, got `{line}`") })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}
