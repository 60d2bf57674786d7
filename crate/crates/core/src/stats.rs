//! Evaluation metrics, replicate aggregation and the paired t-test.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::data::LabelledRow;
use crate::error::{Error, Result};
use crate::models::SemiGenerative;

fn check_pair(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    if a == 0 {
        return Err(Error::EmptySample("metric needs at least one value"));
    }
    Ok(())
}

/// Fraction of positions where `predictions` and `labels` differ.
pub fn error_rate(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    check_pair(predictions.len(), labels.len())?;
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(predictions.len(), targets.len())?;
    let mse = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / targets.len() as f64;
    Ok(mse.sqrt())
}

/// Mean of `-log P(y, x_E | x_C)` over labelled rows.
pub fn semi_generative_nll<M: SemiGenerative>(model: &M, rows: &[LabelledRow]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptySample("NLL needs at least one row"));
    }
    let mut sum = 0.0;
    for r in rows {
        model.check_dims(&r.x_c, &r.x_e)?;
        sum += model.log_joint(&r.x_c, r.y, &r.x_e);
    }
    Ok(-sum / rows.len() as f64)
}

// Lanczos approximation, g = 7, n = 9.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=20_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// `P(T > |t|)` for Student's t with `dof` degrees of freedom.
fn t_upper_tail(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    0.5 * reg_inc_beta(dof / (dof + t * t), 0.5 * dof, 0.5)
}

/// Student-t cumulative distribution function.
pub fn student_t_cdf(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let tail = t_upper_tail(t, dof);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alternative {
    #[default]
    TwoSided,
    /// Mean of `a − b` is greater than zero.
    Greater,
    Less,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTestResult {
    pub t_stat: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Mean of `a − b`.
    pub mean_diff: f64,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    paired_t_test_with(a, b, Alternative::TwoSided)
}

/// Paired t-test on `a − b`.
///
/// When all differences agree to machine precision the statistic is
/// degenerate: the p-value is 1 if their mean is zero and 0 otherwise.
pub fn paired_t_test_with(a: &[f64], b: &[f64], alt: Alternative) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mut stats = RunningStats::default();
    diffs.iter().for_each(|d| stats.push(*d));
    let mean = stats.mean();
    let dof = n - 1;
    let (lo, hi) = diffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(*d), h.max(*d)));
    let scale = lo.abs().max(hi.abs());
    if hi - lo <= 4.0 * f64::EPSILON * scale {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            let t = mean.signum() * f64::INFINITY;
            let p = match alt {
                Alternative::TwoSided => 0.0,
                Alternative::Greater => if mean > 0.0 { 0.0 } else { 1.0 },
                Alternative::Less => if mean < 0.0 { 0.0 } else { 1.0 },
            };
            (t, p)
        };
        return Ok(PairedTestResult { t_stat: t, dof, p_value: p, mean_diff: mean });
    }
    let se = stats.std() / (n as f64).sqrt();
    let t = mean / se;
    let dof_f = dof as f64;
    let p = match alt {
        Alternative::TwoSided => (2.0 * t_upper_tail(t, dof_f)).min(1.0),
        Alternative::Greater => 1.0 - student_t_cdf(t, dof_f),
        Alternative::Less => student_t_cdf(t, dof_f),
    };
    Ok(PairedTestResult { t_stat: t, dof, p_value: p, mean_diff: mean })
}

/// Single-pass mean and variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample standard deviation (`n − 1` denominator); 0 for fewer than two values.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.std() / (self.count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    ErrorRate,
    Nll,
    Rmse,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::ErrorRate => "error_rate",
            Metric::Nll => "nll",
            Metric::Rmse => "rmse",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "error_rate" => Ok(Metric::ErrorRate),
            "nll" => Ok(Metric::Nll),
            "rmse" => Ok(Metric::Rmse),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// One evaluation of one estimator on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub replicate: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub estimator: String,
    pub metric: Metric,
    /// `NaN` marks a failed fit.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub n_s: usize,
    pub n_t: usize,
    pub estimator: String,
    pub metric: Metric,
    pub stats: RunningStats,
}

/// Per-`(n_S, n_T, estimator, metric)` mean, std and count. Non-finite
/// values (failed fits) are left out of the statistics.
pub fn aggregate(records: &[MetricRecord]) -> Result<Vec<AggregateRow>> {
    if records.is_empty() {
        return Err(Error::EmptySample("no records to aggregate"));
    }
    let mut groups: BTreeMap<(usize, usize, String, Metric), RunningStats> = BTreeMap::new();
    for r in records {
        let s = groups.entry((r.n_s, r.n_t, r.estimator.clone(), r.metric)).or_default();
        if r.value.is_finite() {
            s.push(r.value);
        }
    }
    Ok(groups
        .into_iter()
        .map(|((n_s, n_t, estimator, metric), stats)| AggregateRow { n_s, n_t, estimator, metric, stats })
        .collect())
}
