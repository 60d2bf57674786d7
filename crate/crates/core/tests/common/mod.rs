//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the closed forms under test.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// [`integrate`] over `panels` equal sub-intervals, so narrow peaks cannot slip between the first samples.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, panels: usize, tol: f64) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels).map(|i| integrate(f, a + h * i as f64, a + h * (i + 1) as f64, tol / panels as f64)).sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

pub fn gauss_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximizer of a unimodal `f` on `[lo, hi]`: a grid scan followed by golden-section refinement
/// around the best grid point.
pub fn argmax_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, grid: usize) -> f64 {
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|i| lo + step * i as f64)
        .max_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
        .unwrap();
    let (mut a, mut b) = (best - step, best + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-10 * (1.0 + best.abs()) {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

fn ln_gamma_stirling(x: f64) -> f64 {
    // shift up so the asymptotic series is accurate, then undo with the recurrence
    let mut shift = 0.0;
    let mut z = x;
    while z < 20.0 {
        shift -= z.ln();
        z += 1.0;
    }
    let inv = 1.0 / z;
    let series = inv / 12.0 - inv.powi(3) / 360.0 + inv.powi(5) / 1260.0 - inv.powi(7) / 1680.0;
    shift + (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series
}

/// Two-sided tail probability of Student's t by integrating the density numerically.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    let log_norm = ln_gamma_stirling(0.5 * (dof + 1.0)) - ln_gamma_stirling(0.5 * dof) - 0.5 * (dof * PI).ln();
    let density = |x: f64| (log_norm - 0.5 * (dof + 1.0) * (1.0 + x * x / dof).ln()).exp();
    let central = integrate(&density, -t.abs(), t.abs(), 1e-13);
    1.0 - central
}

/// Mean and sample standard deviation by the two-pass formula.
pub fn two_pass(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Binary Bayes net given as `(parents, cpt)` per node in topological order.
pub struct TinyNet {
    pub nodes: Vec<(Vec<usize>, Vec<f64>)>,
}

impl TinyNet {
    /// Exact probability of every joint assignment (bit `i` = node `i`) with `clamp = (node, value)`.
    pub fn joint(&self, clamp: (usize, bool)) -> Vec<f64> {
        let n = self.nodes.len();
        (0..1usize << n)
            .map(|mask| {
                let bit = |i: usize| mask >> i & 1 == 1;
                if bit(clamp.0) != clamp.1 {
                    return 0.0;
                }
                (0..n)
                    .filter(|&i| i != clamp.0)
                    .map(|i| {
                        let (parents, cpt) = &self.nodes[i];
                        let idx = parents.iter().enumerate().fold(0, |acc, (k, &p)| acc | (usize::from(bit(p)) << k));
                        if bit(i) { cpt[idx] } else { 1.0 - cpt[idx] }
                    })
                    .product()
            })
            .collect()
    }
}
