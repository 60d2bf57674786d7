//! Average log-likelihoods over a two-domain sample and the estimators built on them.
//!
//! * `S`: maximizes the supervised source log-likelihood.
//! * `WS`: the same with per-row importance weights.
//! * `P`: maximizes `λ ℓ_S + (1 − λ) ℓ_T`, pooling the unlabelled target
//!   sample through the closed-form marginal.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::data::DomainDataset;
use crate::datagen::{known_importance_weight, ClassScmConfig, RegrScmConfig};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelParams, SemiGenerative};
use crate::optimizer::{maximize, multistart_maximize, Bounds, FitResult, Objective, OptimizerOptions};
use crate::rng::derive_seed;

/// Rule mapping `(n_S, n_T)` to the pooling weight `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    /// `n_S / (n_S + n_T)`: every observation counts the same.
    EqualWeight,
    /// `n_S / (n_S + √n_T)`.
    SqrtTarget,
    Fixed(f64),
    /// `1 − 1/n_S`.
    SupervisedHeavy,
}

impl LambdaPolicy {
    pub fn lambda(&self, n_s: usize, n_t: usize) -> f64 {
        let (ns, nt) = (n_s as f64, n_t as f64);
        let l = match *self {
            LambdaPolicy::EqualWeight => ns / (ns + nt),
            LambdaPolicy::SqrtTarget => ns / (ns + nt.sqrt()),
            LambdaPolicy::Fixed(c) => c,
            LambdaPolicy::SupervisedHeavy => 1.0 - 1.0 / ns,
        };
        l.clamp(0.0, 1.0)
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "equal" => Ok(LambdaPolicy::EqualWeight),
            "sqrt" => Ok(LambdaPolicy::SqrtTarget),
            "supheavy" => Ok(LambdaPolicy::SupervisedHeavy),
            other => {
                let c = other
                    .strip_prefix("fixed:")
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown lambda policy `{other}`")))?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::InvalidArgument(format!("fixed lambda {c} outside [0, 1]")));
                }
                Ok(LambdaPolicy::Fixed(c))
            }
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::EqualWeight => write!(f, "equal"),
            LambdaPolicy::SqrtTarget => write!(f, "sqrt"),
            LambdaPolicy::Fixed(c) => write!(f, "fixed:{c}"),
            LambdaPolicy::SupervisedHeavy => write!(f, "supheavy"),
        }
    }
}

/// Where importance weights for the source rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    /// Exact density ratio of the classification SCM.
    KnownSynthetic(ClassScmConfig),
    /// Exact density ratio of the regression SCM's cause distributions.
    KnownRegression(RegrScmConfig),
    /// One weight per source row.
    Supplied(Vec<f64>),
    Unit,
}

impl WeightSource {
    /// Per-source-row weights; with `self_normalize` they are rescaled to mean one.
    pub fn resolve(&self, ds: &DomainDataset, self_normalize: bool) -> Result<Vec<f64>> {
        let first_cause = |ds: &DomainDataset| -> Result<()> {
            if ds.dims().0 != 1 {
                return Err(Error::InvalidArgument("known weights need a one-dimensional cause".into()));
            }
            Ok(())
        };
        let mut w = match self {
            WeightSource::KnownSynthetic(cfg) => {
                first_cause(ds)?;
                ds.source.iter().map(|r| known_importance_weight(cfg, r.x_c[0])).collect()
            }
            WeightSource::KnownRegression(cfg) => {
                first_cause(ds)?;
                ds.source.iter().map(|r| cfg.importance_weight(r.x_c[0])).collect()
            }
            WeightSource::Supplied(w) => w.clone(),
            WeightSource::Unit => vec![1.0; ds.n_source()],
        };
        check_weights(&w, ds.n_source())?;
        if self_normalize {
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            w.iter_mut().for_each(|v| *v /= mean);
        }
        Ok(w)
    }
}

fn check_weights(w: &[f64], n_s: usize) -> Result<()> {
    if w.len() != n_s {
        return Err(Error::DimensionMismatch { expected: n_s, got: w.len() });
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidArgument(format!("weights must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_model<M: SemiGenerative>(model: &M, ds: &DomainDataset) -> Result<()> {
    if ds.source.is_empty() {
        return Err(Error::EmptySample("source sample is empty"));
    }
    let r = &ds.source[0];
    model.check_dims(&r.x_c, &r.x_e)?;
    ds.validate()
}

/// `(1/n_S) Σ log P(y, x_E | x_C)` over the source rows.
pub fn loglik_supervised<M: SemiGenerative>(model: &M, ds: &DomainDataset) -> Result<f64> {
    check_model(model, ds)?;
    Ok(source_sum(model, ds, None) / ds.n_source() as f64)
}

/// Importance-weighted variant of [`loglik_supervised`]; weights are used as given.
pub fn loglik_weighted<M: SemiGenerative>(model: &M, ds: &DomainDataset, weights: &[f64]) -> Result<f64> {
    check_model(model, ds)?;
    check_weights(weights, ds.n_source())?;
    Ok(source_sum(model, ds, Some(weights)) / ds.n_source() as f64)
}

/// `(1/n_T) Σ log P(x_E | x_C)` over the target rows.
pub fn loglik_unsupervised<M: SemiGenerative>(model: &M, ds: &DomainDataset) -> Result<f64> {
    check_model(model, ds)?;
    if ds.target.is_empty() {
        return Err(Error::EmptySample("target sample is empty"));
    }
    Ok(target_sum(model, ds) / ds.n_target() as f64)
}

/// `λ ℓ_S + (1 − λ) ℓ_T`. Without target rows this is `ℓ_S` for every `λ`.
pub fn loglik_pooled<M: SemiGenerative>(model: &M, ds: &DomainDataset, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_model(model, ds)?;
    let ls = || source_sum(model, ds, None) / ds.n_source() as f64;
    let lt = || target_sum(model, ds) / ds.n_target() as f64;
    Ok(pool(lambda, ds.n_target(), ls, lt))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

#[inline]
fn pool(lambda: f64, n_t: usize, ls: impl FnOnce() -> f64, lt: impl FnOnce() -> f64) -> f64 {
    if n_t == 0 || lambda == 1.0 {
        ls()
    } else if lambda == 0.0 {
        lt()
    } else {
        lambda * ls() + (1.0 - lambda) * lt()
    }
}

fn source_sum<M: SemiGenerative>(model: &M, ds: &DomainDataset, weights: Option<&[f64]>) -> f64 {
    match weights {
        None => ds.source.iter().map(|r| model.log_joint(&r.x_c, r.y, &r.x_e)).sum(),
        Some(w) => ds
            .source
            .iter()
            .zip(w)
            .map(|(r, w)| w * model.log_joint(&r.x_c, r.y, &r.x_e))
            .sum(),
    }
}

fn target_sum<M: SemiGenerative>(model: &M, ds: &DomainDataset) -> f64 {
    ds.target.iter().map(|r| model.log_marginal(&r.x_c, &r.x_e)).sum()
}

/// Which average log-likelihood a [`LikelihoodObjective`] maximizes.
#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodKind {
    Supervised,
    Weighted(Vec<f64>),
    Pooled(f64),
}

/// One of the average log-likelihoods as a function of the flattened
/// parameters, with analytic gradient.
///
/// Identical rows are evaluated once and weighted by their multiplicity,
/// which matters for discrete data. Rows keep their first-appearance order,
/// so data without duplicates are summed exactly as the `loglik_*` functions do.
pub struct LikelihoodObjective<'a, M: SemiGenerative> {
    template: &'a M,
    ds: &'a DomainDataset,
    kind: LikelihoodKind,
    scale: f64,
    /// `(row index, total weight)` per distinct source row.
    source_groups: Vec<(usize, f64)>,
    /// `(row index, multiplicity)` per distinct target row.
    target_groups: Vec<(usize, f64)>,
}

fn group_rows(keys: impl Iterator<Item = (Vec<u64>, f64)>) -> Vec<(usize, f64)> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<(usize, f64)> = Vec::new();
    for (i, (key, w)) in keys.enumerate() {
        match index.entry(key) {
            Entry::Occupied(e) => groups[*e.get()].1 += w,
            Entry::Vacant(e) => {
                e.insert(groups.len());
                groups.push((i, w));
            }
        }
    }
    groups
}

fn bits(parts: &[&[f64]]) -> Vec<u64> {
    parts.iter().flat_map(|p| p.iter().map(|v| v.to_bits())).collect()
}

impl<'a, M: SemiGenerative> LikelihoodObjective<'a, M> {
    pub fn new(template: &'a M, ds: &'a DomainDataset, kind: LikelihoodKind) -> Result<Self> {
        check_model(template, ds)?;
        match &kind {
            LikelihoodKind::Weighted(w) => check_weights(w, ds.n_source())?,
            LikelihoodKind::Pooled(l) => check_lambda(*l)?,
            LikelihoodKind::Supervised => {}
        }
        let source_groups = group_rows(ds.source.iter().enumerate().map(|(i, r)| {
            let w = match &kind {
                LikelihoodKind::Weighted(w) => w[i],
                _ => 1.0,
            };
            (bits(&[&r.x_c, &[r.y], &r.x_e]), w)
        }));
        let target_groups = group_rows(ds.target.iter().map(|r| (bits(&[&r.x_c, &r.x_e]), 1.0)));
        Ok(Self { template, ds, kind, scale: 1.0, source_groups, target_groups })
    }

    /// Multiplies the objective by a positive constant.
    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn params(&self, x: &[f64]) -> M {
        self.template.from_vector(x).expect("optimizer keeps the dimension fixed")
    }

    fn evaluate(&self, m: &M, mut grad: Option<&mut [f64]>) -> f64 {
        let n_s = self.ds.n_source() as f64;
        let n_t = self.ds.n_target();
        let lambda = match &self.kind {
            LikelihoodKind::Pooled(l) => *l,
            _ => 1.0,
        };
        let use_source = n_t == 0 || lambda > 0.0;
        let use_target = n_t > 0 && lambda < 1.0;
        let source_coef = if n_t == 0 { 1.0 } else { lambda };
        let target_coef = 1.0 - lambda;

        let mut s_sum = 0.0;
        let mut t_sum = 0.0;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        if use_source {
            for &(i, w) in &self.source_groups {
                let r = &self.ds.source[i];
                let lj = match grad.as_deref_mut() {
                    Some(g) => m.accumulate_log_joint(&r.x_c, r.y, &r.x_e, self.scale * source_coef * w / n_s, g),
                    None => m.log_joint(&r.x_c, r.y, &r.x_e),
                };
                s_sum += w * lj;
            }
        }
        if use_target {
            let nt = n_t as f64;
            for &(i, c) in &self.target_groups {
                let r = &self.ds.target[i];
                t_sum += c * match grad.as_deref_mut() {
                    Some(g) => m.accumulate_log_marginal(&r.x_c, &r.x_e, self.scale * target_coef * c / nt, g),
                    None => m.log_marginal(&r.x_c, &r.x_e),
                };
            }
        }
        let value = pool(lambda, n_t, || s_sum / n_s, || t_sum / n_t as f64);
        self.scale * value
    }
}

impl<M: SemiGenerative> Objective for LikelihoodObjective<'_, M> {
    fn dim(&self) -> usize {
        self.template.n_params()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(&self.params(x), None)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(&self.params(x), Some(grad))
    }

    fn bounds(&self) -> Bounds {
        self.template.bounds()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Supervised,
    Weighted,
    Pooled(LambdaPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub optimizer: OptimizerOptions,
    pub supervised_starts: usize,
    pub pooled_starts: usize,
    pub perturb_scale: f64,
    /// Rescale resolved importance weights to mean one.
    pub self_normalize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerOptions::default(),
            supervised_starts: 1,
            pooled_starts: 5,
            perturb_scale: 0.5,
            self_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<M> {
    pub params: M,
    pub result: FitResult,
    /// Resolved pooling weight for `P`.
    pub lambda: Option<f64>,
    /// Set when `WS` ran with unit weights, i.e. degenerated to `S`.
    pub unit_weights: bool,
}

/// Fits `estimator` starting from `init`.
pub fn fit_from<M: SemiGenerative>(
    init: &M,
    ds: &DomainDataset,
    estimator: Estimator,
    weights: &WeightSource,
    opts: &FitOptions,
    seed: u64,
) -> Result<Fitted<M>> {
    check_model(init, ds)?;
    let supervised = |start: &M| -> Result<Fitted<M>> {
        let obj = LikelihoodObjective::new(start, ds, LikelihoodKind::Supervised)?;
        let r = multistart_maximize(
            &obj,
            &start.to_vector(),
            opts.supervised_starts,
            opts.perturb_scale,
            seed,
            &opts.optimizer,
        )?;
        Ok(Fitted { params: start.from_vector(&r.theta_hat)?, result: r, lambda: None, unit_weights: false })
    };
    match estimator {
        Estimator::Supervised => supervised(init),
        Estimator::Weighted => {
            let unit = matches!(weights, WeightSource::Unit);
            if unit {
                log::warn!("weighted estimator with unit weights is the supervised estimator");
            }
            let w = weights.resolve(ds, opts.self_normalize)?;
            let obj = LikelihoodObjective::new(init, ds, LikelihoodKind::Weighted(w))?;
            let r = multistart_maximize(
                &obj,
                &init.to_vector(),
                opts.supervised_starts,
                opts.perturb_scale,
                seed,
                &opts.optimizer,
            )?;
            Ok(Fitted { params: init.from_vector(&r.theta_hat)?, result: r, lambda: None, unit_weights: unit })
        }
        Estimator::Pooled(policy) => {
            let lambda = policy.lambda(ds.n_source(), ds.n_target());
            let mut s = supervised(init)?;
            if ds.n_target() == 0 || lambda == 1.0 {
                // the pooled objective is the supervised one
                s.lambda = Some(lambda);
                return Ok(s);
            }
            let obj = LikelihoodObjective::new(&s.params, ds, LikelihoodKind::Pooled(lambda))?;
            let mut r = multistart_maximize(
                &obj,
                &s.params.to_vector(),
                opts.pooled_starts,
                opts.perturb_scale,
                derive_seed(seed, &[1]),
                &opts.optimizer,
            )?;
            relabel_restart(&obj, &s.params.from_vector(&r.theta_hat)?, &mut r, &opts.optimizer);
            Ok(Fitted { params: s.params.from_vector(&r.theta_hat)?, result: r, lambda: Some(lambda), unit_weights: false })
        }
    }
}

/// One more start from the class-swapped best point; keeps it when strictly better.
fn relabel_restart<M: SemiGenerative>(obj: &LikelihoodObjective<'_, M>, best: &M, r: &mut FitResult, opts: &OptimizerOptions) {
    let Some(flipped) = best.relabelled() else { return };
    let mut start = flipped.to_vector();
    obj.bounds().project(&mut start);
    match maximize(obj, &start, opts) {
        Ok(alt) => {
            r.n_starts += 1;
            r.n_evals += alt.n_evals;
            r.n_iters += alt.n_iters;
            r.converged.push(alt.converged[0]);
            if alt.objective_value > r.objective_value {
                r.best_start_index = r.converged.len() - 1;
                r.theta_hat = alt.theta_hat;
                r.objective_value = alt.objective_value;
                r.trace = alt.trace;
            }
        }
        Err(e) => log::debug!("relabelled restart skipped: {e}"),
    }
}

/// Fits `estimator` for a model class from its data-driven starting point.
pub fn fit(
    kind: ModelKind,
    ds: &DomainDataset,
    estimator: Estimator,
    weights: &WeightSource,
    opts: &FitOptions,
    seed: u64,
) -> Result<Fitted<ModelParams>> {
    let init = kind.initial_params(ds)?;
    fit_from(&init, ds, estimator, weights, opts, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelledRow, Task, UnlabelledRow};
    use crate::models::GaussClassParams;

    fn gc() -> GaussClassParams {
        GaussClassParams::new(0.0, -1.0, 1.0)
    }

    fn ds(source: Vec<(f64, f64, f64)>, target: Vec<(f64, f64)>) -> DomainDataset {
        DomainDataset::new(
            source.into_iter().map(|(c, y, e)| LabelledRow::new(vec![c], y, vec![e])).collect(),
            target.into_iter().map(|(c, e)| UnlabelledRow { x_c: vec![c], x_e: vec![e] }).collect(),
            Task::Classification,
        )
        .unwrap()
    }

    #[test]
    fn lambda_policies() {
        assert_eq!(LambdaPolicy::EqualWeight.lambda(8, 8), 0.5);
        assert_eq!(LambdaPolicy::SqrtTarget.lambda(8, 16), 8.0 / 12.0);
        assert_eq!(LambdaPolicy::SupervisedHeavy.lambda(1, 100), 0.0);
        assert_eq!(LambdaPolicy::Fixed(0.8).lambda(3, 5), 0.8);
        assert_eq!(LambdaPolicy::EqualWeight.lambda(8, 0), 1.0);
        for s in ["equal", "sqrt", "supheavy", "fixed:0.8"] {
            assert_eq!(s.parse::<LambdaPolicy>().unwrap().to_string(), s);
        }
        assert!("fixed:1.5".parse::<LambdaPolicy>().is_err());
        assert!("bogus".parse::<LambdaPolicy>().is_err());
    }

    #[test]
    fn supervised_examples() {
        let d = ds(vec![(0.0, 1.0, 1.0), (0.0, 0.0, -1.0)], vec![]);
        assert!((loglik_supervised(&gc(), &d).unwrap() + 1.612_086).abs() < 1e-6);
        let one = ds(vec![(0.3, 1.0, -0.2)], vec![]);
        assert_eq!(loglik_supervised(&gc(), &one).unwrap(), gc().log_joint(&[0.3], 1.0, &[-0.2]));
        let twice = ds(vec![(0.3, 1.0, -0.2), (1.0, 0.0, 0.5), (0.3, 1.0, -0.2), (1.0, 0.0, 0.5)], vec![]);
        let once = ds(vec![(0.3, 1.0, -0.2), (1.0, 0.0, 0.5)], vec![]);
        let (a, b) = (loglik_supervised(&gc(), &twice).unwrap(), loglik_supervised(&gc(), &once).unwrap());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn weighted_examples() {
        let d = ds(vec![(0.3, 1.0, -0.2), (1.0, 0.0, 0.5)], vec![]);
        let first = gc().log_joint(&[0.3], 1.0, &[-0.2]);
        let v = loglik_weighted(&gc(), &d, &[2.0, 1e-300]).unwrap();
        assert!((v - first).abs() < 1e-12);
        assert!(loglik_weighted(&gc(), &d, &[1.0]).is_err());
        assert!(loglik_weighted(&gc(), &d, &[1.0, 0.0]).is_err());
        let zeros = ds(vec![(0.0, 1.0, 0.2), (0.0, 0.0, 0.5)], vec![]);
        let w = WeightSource::KnownSynthetic(ClassScmConfig::symmetric(0.5)).resolve(&zeros, false).unwrap();
        assert_eq!(loglik_weighted(&gc(), &zeros, &w).unwrap(), loglik_supervised(&gc(), &zeros).unwrap());
    }

    #[test]
    fn unsupervised_and_pooled() {
        let d = ds(vec![(0.3, 1.0, -0.2)], vec![(0.1, 0.4), (-2.0, 1.0), (0.7, -0.3)]);
        let lt = loglik_unsupervised(&gc(), &d).unwrap();
        let perm = ds(vec![(0.3, 1.0, -0.2)], vec![(0.7, -0.3), (0.1, 0.4), (-2.0, 1.0)]);
        assert!((loglik_unsupervised(&gc(), &perm).unwrap() - lt).abs() < 1e-15);
        let ls = loglik_supervised(&gc(), &d).unwrap();
        assert_eq!(loglik_pooled(&gc(), &d, 1.0).unwrap(), ls);
        assert_eq!(loglik_pooled(&gc(), &d, 0.0).unwrap(), lt);
        assert!((loglik_pooled(&gc(), &d, 0.5).unwrap() - 0.5 * (ls + lt)).abs() < 1e-15);
        assert!(loglik_pooled(&gc(), &d, 1.2).is_err());

        let no_target = ds(vec![(0.3, 1.0, -0.2)], vec![]);
        assert!(loglik_unsupervised(&gc(), &no_target).is_err());
        assert_eq!(loglik_pooled(&gc(), &no_target, 0.3).unwrap(), loglik_supervised(&gc(), &no_target).unwrap());
    }

    #[test]
    fn objective_value_matches_loglik() {
        let d = ds(vec![(0.3, 1.0, -0.2), (1.0, 0.0, 0.5)], vec![(0.1, 0.4), (-2.0, 1.0)]);
        let p = GaussClassParams::new(0.2, -0.7, 1.3);
        let x = p.to_vector();
        let mut g = vec![0.0; 3];
        for lambda in [0.0, 0.25, 1.0] {
            let obj = LikelihoodObjective::new(&p, &d, LikelihoodKind::Pooled(lambda)).unwrap();
            let expect = loglik_pooled(&p, &d, lambda).unwrap();
            assert_eq!(obj.value(&x), expect);
            assert_eq!(obj.value_and_gradient(&x, &mut g), expect);
        }
        let w = vec![0.5, 2.0];
        let obj = LikelihoodObjective::new(&p, &d, LikelihoodKind::Weighted(w.clone())).unwrap();
        assert_eq!(obj.value(&x), loglik_weighted(&p, &d, &w).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = DomainDataset::new(
            vec![LabelledRow::new(vec![0.0, 1.0], 1.0, vec![0.0])],
            vec![],
            Task::Classification,
        )
        .unwrap();
        assert!(matches!(loglik_supervised(&gc(), &d), Err(Error::DimensionMismatch { .. })));
    }
}
