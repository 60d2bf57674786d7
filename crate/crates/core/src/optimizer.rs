//! Projected gradient ascent with Armijo backtracking over box constraints.
//!
//! Trial step lengths come from the Barzilai–Borwein rule and are halved
//! until the Armijo condition holds along the projected path, so accepted
//! iterates never decrease the objective and always stay feasible.

use std::cell::Cell;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Per-coordinate box `lower[i] <= x[i] <= upper[i]` (infinite ends allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, lo), hi)| v >= lo && v <= hi)
    }

    /// Indices of coordinates with at least one finite bound.
    pub fn constrained(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.lower[i].is_finite() || self.upper[i].is_finite()).collect()
    }
}

/// A smooth function to maximize.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    ///
    /// Defaults to central differences with step `1e-6 * max(1, |x_i|)`.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        fd_gradient(|p| self.value(p), x, grad);
        self.value(x)
    }

    fn bounds(&self) -> Bounds {
        Bounds::unbounded(self.dim())
    }
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], grad: &mut [f64]) {
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
}

/// Adapts closures to [`Objective`].
pub struct FnObjective<F, G = fn(&[f64], &mut [f64])> {
    f: F,
    g: Option<G>,
    bounds: Bounds,
}

impl<F: Fn(&[f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { f, g: None, bounds: Bounds::unbounded(dim) }
    }
}

impl<F: Fn(&[f64]) -> f64, G: Fn(&[f64], &mut [f64])> FnObjective<F, G> {
    pub fn with_gradient(dim: usize, f: F, g: G) -> Self {
        Self { f, g: Some(g), bounds: Bounds::unbounded(dim) }
    }

    pub fn bounded(mut self, bounds: Bounds) -> Self {
        self.bounds = bounds;
        self
    }
}

impl<F: Fn(&[f64]) -> f64, G: Fn(&[f64], &mut [f64])> Objective for FnObjective<F, G> {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match &self.g {
            Some(g) => g(x, grad),
            None => fd_gradient(&self.f, x, grad),
        }
        (self.f)(x)
    }

    fn bounds(&self) -> Bounds {
        self.bounds.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient's infinity norm is at most this.
    pub tol: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub min_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { max_iters: 500, tol: 1e-6, armijo: 1e-4, shrink: 0.5, min_step: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub objective_value: f64,
    pub n_starts: usize,
    pub n_evals: usize,
    pub n_iters: usize,
    /// One flag per start; `false` means the iteration or step-size limit was hit.
    pub converged: Vec<bool>,
    pub best_start_index: usize,
    /// Objective value after each accepted iteration of the best start.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn best_converged(&self) -> bool {
        self.converged[self.best_start_index]
    }
}

struct Counted<'a, O: Objective + ?Sized> {
    inner: &'a O,
    evals: Cell<usize>,
}

impl<O: Objective + ?Sized> Counted<'_, O> {
    fn value(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        self.inner.value(x)
    }

    fn value_and_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        self.inner.value_and_gradient(x, g)
    }
}

fn inf_norm_projected_step(bounds: &Bounds, x: &[f64], g: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (xi, gi))| ((xi + gi).clamp(bounds.lower[i], bounds.upper[i]) - xi).abs())
        .fold(0.0, f64::max)
}

/// Maximizes `obj` from a feasible, finite starting point.
pub fn maximize<O: Objective + ?Sized>(obj: &O, init: &[f64], opts: &OptimizerOptions) -> Result<FitResult> {
    let bounds = obj.bounds();
    if init.len() != obj.dim() || bounds.dim() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: init.len() });
    }
    if !init.iter().all(|v| v.is_finite()) {
        return Err(Error::Optimizer("initial point is not finite".into()));
    }
    if !bounds.contains(init) {
        return Err(Error::Optimizer("initial point is infeasible".into()));
    }
    let counted = Counted { inner: obj, evals: Cell::new(0) };
    let n = init.len();
    let mut x = init.to_vec();
    let mut g = vec![0.0; n];
    let mut f = counted.value_and_gradient(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::Optimizer(format!("objective is not finite at the initial point ({f})")));
    }

    let mut trace = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    let mut iters = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while iters < opts.max_iters {
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        if inf_norm_projected_step(&bounds, &x, &g) <= opts.tol {
            converged = true;
            break;
        }
        iters += 1;
        let mut alpha = step;
        let accepted = loop {
            for i in 0..n {
                x_new[i] = x[i] + alpha * g[i];
            }
            bounds.project(&mut x_new);
            let ascent: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
            let f_trial = counted.value(&x_new);
            if f_trial.is_finite() && f_trial >= f + opts.armijo * ascent {
                break Some(f_trial);
            }
            alpha *= opts.shrink;
            if alpha < opts.min_step {
                break None;
            }
        };
        let Some(f_next) = accepted else { break };
        counted.value_and_gradient(&x_new, &mut g_new);

        // Barzilai–Borwein step for the next trial; the curvature pair is
        // taken for -f so that sy > 0 on concave regions.
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = x_new[i] - x[i];
            ss += s * s;
            sy -= s * (g_new[i] - g[i]);
        }
        step = if sy > 0.0 && ss > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { (alpha * 2.0).min(1e10) };

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_next;
        trace.push(f);
    }
    if !converged && iters == opts.max_iters && inf_norm_projected_step(&bounds, &x, &g) <= opts.tol {
        converged = true;
    }
    Ok(FitResult {
        theta_hat: x,
        objective_value: f,
        n_starts: 1,
        n_evals: counted.evals.get(),
        n_iters: iters,
        converged: vec![converged],
        best_start_index: 0,
        trace,
    })
}

/// Runs [`maximize`] from `base_init` and from `n_starts - 1` Gaussian
/// perturbations of it, returning the best. Ties go to the lower start index.
pub fn multistart_maximize<O: Objective + ?Sized>(
    obj: &O,
    base_init: &[f64],
    n_starts: usize,
    perturb_scale: f64,
    seed: u64,
    opts: &OptimizerOptions,
) -> Result<FitResult> {
    if n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
    }
    let bounds = obj.bounds();
    let mut best = maximize(obj, base_init, opts)?;
    let mut converged = best.converged.clone();
    let mut n_evals = best.n_evals;
    let mut n_iters = best.n_iters;
    let mut best_index = 0;
    let mut rng = stream(seed);
    for k in 1..n_starts {
        let mut start: Vec<f64> = base_init
            .iter()
            .map(|v| v + perturb_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        bounds.project(&mut start);
        match maximize(obj, &start, opts) {
            Ok(r) => {
                n_evals += r.n_evals;
                n_iters += r.n_iters;
                converged.push(r.converged[0]);
                if r.objective_value > best.objective_value {
                    best = r;
                    best_index = k;
                }
            }
            Err(e) => {
                log::debug!("start {k} skipped: {e}");
                converged.push(false);
            }
        }
    }
    Ok(FitResult {
        theta_hat: best.theta_hat,
        objective_value: best.objective_value,
        n_starts,
        n_evals,
        n_iters,
        converged,
        best_start_index: best_index,
        trace: best.trace,
    })
}

/// Largest coordinate-wise `|g_fd − g_analytic| / max(1, |g_analytic|)`.
pub fn check_gradient<O: Objective + ?Sized>(obj: &O, point: &[f64]) -> f64 {
    let mut analytic = vec![0.0; point.len()];
    obj.value_and_gradient(point, &mut analytic);
    let mut numeric = vec![0.0; point.len()];
    fd_gradient(|p| obj.value(p), point, &mut numeric);
    numeric
        .iter()
        .zip(&analytic)
        .map(|(n, a)| (n - a).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}
