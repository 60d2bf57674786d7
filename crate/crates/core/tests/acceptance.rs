//! Acceptance suite. Runs as a plain binary (`harness = false`) so the
//! per-criterion verdict lines always appear in `cargo test` output.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{argmax_1d, gauss_pdf, integrate_panels, t_two_sided_p};
use sgm_core::estimators::{LikelihoodKind, LikelihoodObjective};
use sgm_core::harness::{write_aggregate, write_records};
use sgm_core::stats::student_t_cdf;
use sgm_core::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1. closed-form marginals against explicit sums and quadrature
fn marginal_oracle() -> Verdict {
    let mut r = rng(101);
    let draws = 1000;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..draws {
        let p = GaussClassParams::new(r.random_range(-3.0..3.0), r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
        let (xc, xe) = ([r.random_range(-4.0..4.0)], [r.random_range(-4.0..4.0)]);
        let direct = p.log_joint(&xc, 0.0, &xe).exp() + p.log_joint(&xc, 1.0, &xe).exp();
        worst_sum = worst_sum.max((p.log_marginal(&xc, &xe).exp() - direct).abs() / direct.max(1e-300));

        let (dc, de) = (r.random_range(1..4), r.random_range(1..5));
        let mut d = DiscreteParams::zeros(dc, de);
        d.w.iter_mut().for_each(|w| *w = r.random_range(-2.0..2.0));
        d.logit_p.iter_mut().for_each(|l| *l = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]);
        let xc: Vec<f64> = (0..dc).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
        let xe: Vec<f64> = (0..de).map(|_| f64::from(u8::from(r.random_bool(0.5)))).collect();
        let direct = d.log_joint(&xc, 0.0, &xe).exp() + d.log_joint(&xc, 1.0, &xe).exp();
        worst_sum = worst_sum.max((d.log_marginal(&xc, &xe).exp() - direct).abs() / direct);
    }
    let mut worst_quad: f64 = 0.0;
    for _ in 0..draws {
        let (a, b, c, d) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let (sy, se) = (r.random_range(0.3..2.0), r.random_range(0.3..2.0));
        let p = LinGaussParams::new(a, b, c, d, sy, se);
        let xc = r.random_range(-3.0..3.0);
        // effect value near the bulk of its marginal, located without the closed form
        let y0 = a + b * xc + sy * r.random_range(-2.0..2.0);
        let xe = c + d * y0 + se * r.random_range(-2.0..2.0);
        let joint = |y: f64| gauss_pdf(y, a + b * xc, sy) * gauss_pdf(xe, c + d * y, se);
        let lo = a + b * xc - 14.0 * sy;
        let hi = a + b * xc + 14.0 * sy;
        let quad = integrate_panels(&joint, lo, hi, 4096, 1e-13);
        let closed = p.log_marginal(&[xc], &[xe]).exp();
        worst_quad = worst_quad.max((closed - quad).abs() / quad);
    }
    verdict(
        worst_sum <= 1e-12 && worst_quad <= 1e-6,
        format!("max rel err: label sum {worst_sum:.2e} (tol 1e-12), quadrature {worst_quad:.2e} (tol 1e-6)"),
    )
}

// 2. regression prediction against a grid-search argmax of the joint density in y
fn prediction_oracle() -> Verdict {
    let mut r = rng(202);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 0..240 {
        let d = match k % 8 {
            0 => 0.0,
            1 => 1e-8,
            2 => -1e-8,
            _ => r.random_range(-2.0..2.0),
        };
        let (a, b, c) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
        let (sy, se) = (r.random_range(0.3..2.0), r.random_range(0.3..2.0));
        let p = LinGaussParams::new(a, b, c, d, sy, se);
        let (xc, xe) = (r.random_range(-3.0..3.0), r.random_range(-4.0..4.0));
        let log_density = |y: f64| {
            let u = (y - a - b * xc) / sy;
            let v = (xe - c - d * y) / se;
            -0.5 * (u * u + v * v)
        };
        let centre = a + b * xc;
        let oracle = argmax_1d(log_density, centre - 10.0 * sy, centre + 10.0 * sy, 4000);
        worst = worst.max((p.predict(&[xc], &[xe]) - oracle).abs());
        cases += 1;
    }
    verdict(worst <= 1e-4, format!("{cases} cases, max |pred - argmax| {worst:.2e} (tol 1e-4)"))
}

// 3. exact endpoint identities
fn endpoint_identities() -> Verdict {
    let cfg = ClassScmConfig::symmetric(0.5);
    let (ds, _) = gen_classification(&cfg, 12, 40, 1, 303).unwrap();
    let theta = GaussClassParams::new(0.3, -0.2, 0.7);
    let ls = loglik_supervised(&theta, &ds).unwrap();
    let lt = loglik_unsupervised(&theta, &ds).unwrap();
    let p1 = loglik_pooled(&theta, &ds, 1.0).unwrap();
    let p0 = loglik_pooled(&theta, &ds, 0.0).unwrap();
    let ws = loglik_weighted(&theta, &ds, &vec![1.0; ds.n_source()]).unwrap();
    let no_target = ds.with_target(vec![]);
    let opts = FitOptions::default();
    let fs = fit(ModelKind::GaussClass, &no_target, Estimator::Supervised, &WeightSource::Unit, &opts, 9).unwrap();
    let fp = fit(ModelKind::GaussClass, &no_target, Estimator::Pooled(LambdaPolicy::EqualWeight), &WeightSource::Unit, &opts, 9)
        .unwrap();
    let checks = [
        ("l_P(1)=l_S", p1 == ls),
        ("l_P(0)=l_T", p0 == lt),
        ("l_WS(1)=l_S", ws == ls),
        ("fit P(n_T=0)=fit S", fp.params == fs.params),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    verdict(failed.is_empty(), if failed.is_empty() { "all four bit-identical".to_string() } else { format!("failed: {failed:?}") })
}

// 4. Bayes error of the hard configuration
fn bayes_error_check() -> Verdict {
    let e = bayes_error(&ClassScmConfig::symmetric(0.5), 1_000_000, 404).unwrap();
    verdict((e - 0.21).abs() <= 0.01, format!("Bayes error {e:.4} (target 0.21 +/- 0.01)"))
}

fn class_grid(mu: f64, seed: u64) -> GridOutput {
    let grid = ExperimentGrid {
        source: DataSource::Classification(ClassScmConfig::symmetric(mu)),
        model: ModelKind::GaussClass,
        n_s: vec![8],
        n_t: vec![0, 4, 16, 64, 256],
        replicates: 500,
        n_test: 1000,
        estimators: ["S", "P"].iter().map(|s| EstimatorSpec::parse(s, LambdaPolicy::EqualWeight).unwrap()).collect(),
        master_seed: seed,
        fit: FitOptions::default(),
        threads: 0,
    };
    run_grid(&grid).unwrap()
}

fn cell<'a>(out: &'a GridOutput, n_s: usize, n_t: usize, est: &str, metric: Metric) -> &'a stats::AggregateRow {
    out.aggregates
        .iter()
        .find(|r| r.n_s == n_s && r.n_t == n_t && r.estimator == est && r.metric == metric)
        .expect("cell present")
}

/// Largest violation of "mean non-increasing within one standard error" along `n_t`;
/// the step allowance combines both cells' standard errors since each `n_T` has its own data.
fn monotone_excess(out: &GridOutput, n_s: usize, n_t: &[usize], est: &str, metric: Metric) -> (f64, String) {
    let cells: Vec<_> = n_t.iter().map(|&t| cell(out, n_s, t, est, metric)).collect();
    let means: Vec<String> = cells.iter().map(|c| format!("{:.4}", c.stats.mean())).collect();
    let excess = cells
        .windows(2)
        .map(|w| {
            let se = (w[0].stats.std_error().powi(2) + w[1].stats.std_error().powi(2)).sqrt();
            w[1].stats.mean() - w[0].stats.mean() - se
        })
        .fold(f64::NEG_INFINITY, f64::max);
    (excess, means.join(" > "))
}

const CURVE_NT: [usize; 5] = [0, 4, 16, 64, 256];

// 5. hard dataset learning curve
fn hard_curve(out: &GridOutput) -> Verdict {
    let (excess, path) = monotone_excess(out, 8, &CURVE_NT, "P", Metric::ErrorRate);
    let s = cell(out, 8, 256, "S", Metric::ErrorRate).stats.mean();
    let p = cell(out, 8, 256, "P", Metric::ErrorRate).stats.mean();
    let test = compare(&out.records, "S", "P", Metric::ErrorRate, 8, 256).unwrap();
    verdict(
        excess <= 0.0 && s - p >= 0.02 && test.p_value < 0.05,
        format!("P error {path}; S-P at 256 = {:.4} (need >= 0.02); paired p = {:.2e}", s - p, test.p_value),
    )
}

// 6. easy dataset: relative improvement and early saturation
fn easy_curve(out: &GridOutput) -> Verdict {
    let s = cell(out, 8, 256, "S", Metric::ErrorRate).stats.mean();
    let p = |t| cell(out, 8, t, "P", Metric::ErrorRate).stats.mean();
    let rel = (s - p(256)) / s;
    let total = p(0) - p(256);
    let share = if total > 0.0 { (p(0) - p(64)) / total } else { f64::NAN };
    verdict(
        rel >= 0.15 && share >= 0.8,
        format!("relative reduction {:.1}% (need >= 15%); share of improvement by n_T=64 {:.1}% (need >= 80%)", 100.0 * rel, 100.0 * share),
    )
}

// 7. NLL tracks the error curve
fn nll_curve(out: &GridOutput) -> Verdict {
    let (excess, path) = monotone_excess(out, 8, &CURVE_NT, "P", Metric::Nll);
    verdict(excess <= 0.0, format!("P NLL {path}; worst step excess {excess:.4}"))
}

// 8. discrete Bayes-net trend
fn discrete_trend() -> Verdict {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/lucas_like.bn")).unwrap();
    let cfg = BayesNetConfig::parse(&text).unwrap();
    let n_t = [0, 1, 4, 16, 64, 256];
    let grid = ExperimentGrid {
        source: DataSource::BayesNet(cfg),
        model: ModelKind::Discrete,
        n_s: vec![8, 16],
        n_t: n_t.to_vec(),
        replicates: 500,
        n_test: 1000,
        estimators: vec![EstimatorSpec::parse("P:sqrt", LambdaPolicy::EqualWeight).unwrap()],
        master_seed: 808,
        fit: FitOptions::default(),
        threads: 0,
    };
    let out = run_grid(&grid).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n_s in [8, 16] {
        let (excess, path) = monotone_excess(&out, n_s, &n_t, "P:sqrt", Metric::ErrorRate);
        pass &= excess <= 0.0;
        parts.push(format!("n_S={n_s}: {path}"));
    }
    parts.push("table match skipped: official CPDs not supplied".into());
    verdict(pass, parts.join("; "))
}

// 9. sign-restricted regression under strong domain discrepancy, with a mild-shift control for context
fn restricted_rmse(shift: f64) -> (f64, f64) {
    let cfg = RegrScmConfig {
        a: 1.0,
        b: -0.8,
        c: 0.5,
        d: -1.2,
        sigma_y: 1.0,
        sigma_e: 1.0,
        cause_source: CauseDist { mean: 0.0, std: 1.0 },
        cause_target: CauseDist { mean: shift, std: 1.0 },
    };
    let grid = ExperimentGrid {
        source: DataSource::Regression(cfg),
        model: ModelKind::LinGauss { restricted: true },
        n_s: vec![4],
        n_t: vec![256],
        replicates: 200,
        n_test: 200,
        estimators: ["S", "P:fixed:0.8"].iter().map(|s| EstimatorSpec::parse(s, LambdaPolicy::EqualWeight).unwrap()).collect(),
        master_seed: 909,
        fit: FitOptions::default(),
        threads: 0,
    };
    let out = run_grid(&grid).unwrap();
    let s = cell(&out, 4, 256, "S", Metric::Rmse).stats.mean();
    let p = cell(&out, 4, 256, "P:fixed:0.8", Metric::Rmse).stats.mean();
    (s, p)
}

fn restricted_regression() -> Verdict {
    let (s, p) = restricted_rmse(4.0);
    let (cs, cp) = restricted_rmse(1.0);
    verdict(
        p <= s,
        format!("target shift 4: mean RMSE restricted P {p:.4} vs restricted S {s:.4} (shift-1 control: P {cp:.4} vs S {cs:.4})"),
    )
}

// 10. gradients, t distribution, thread-count invariance
fn optimizer_and_stats() -> Verdict {
    let mut worst_grad: f64 = 0.0;
    let (cds, _) = gen_classification(&ClassScmConfig::symmetric(0.5), 10, 30, 1, 1).unwrap();
    let g = ModelParams::GaussClass(GaussClassParams::new(0.2, -0.6, 0.9));
    let (rds, _) = gen_regression(
        &RegrScmConfig {
            a: 0.2,
            b: 0.7,
            c: -0.1,
            d: 1.1,
            sigma_y: 0.8,
            sigma_e: 0.6,
            cause_source: CauseDist { mean: 0.0, std: 1.0 },
            cause_target: CauseDist { mean: 1.0, std: 1.0 },
        },
        10,
        30,
        1,
        2,
    )
    .unwrap();
    let l = ModelParams::LinGauss(LinGaussParams::new(0.1, 0.5, 0.0, 0.9, 1.1, 0.7));
    for (m, ds) in [(&g, &cds), (&l, &rds)] {
        for kind in [LikelihoodKind::Supervised, LikelihoodKind::Pooled(0.4)] {
            let obj = LikelihoodObjective::new(m, ds, kind).unwrap();
            worst_grad = worst_grad.max(check_gradient(&obj, &m.to_vector()));
        }
    }
    let cdf0 = student_t_cdf(0.0, 7.0);
    let sym = [0.3, 1.0, 2.5, 7.0]
        .iter()
        .flat_map(|&t| [1.0, 4.0, 30.0].map(|v| (student_t_cdf(t, v) + student_t_cdf(-t, v) - 1.0).abs()))
        .fold(0.0, f64::max);
    let p_ours = 2.0 * (1.0 - student_t_cdf(2.262, 9.0));
    let p_oracle = t_two_sided_p(2.262, 9.0);

    let run = |threads| {
        let grid = ExperimentGrid {
            source: DataSource::Classification(ClassScmConfig::symmetric(0.5)),
            model: ModelKind::GaussClass,
            n_s: vec![4, 8],
            n_t: vec![0, 16],
            replicates: 6,
            n_test: 50,
            estimators: ["S", "WS", "P", "LR"].iter().map(|s| EstimatorSpec::parse(s, LambdaPolicy::EqualWeight).unwrap()).collect(),
            master_seed: 1010,
            fit: FitOptions::default(),
            threads,
        };
        let out = run_grid(&grid).unwrap();
        let mut bytes = Vec::new();
        write_records(&mut bytes, &out.records).unwrap();
        write_aggregate(&mut bytes, &out.aggregates).unwrap();
        bytes
    };
    let identical = run(1) == run(4);
    let pass = worst_grad < 1e-5
        && cdf0 == 0.5
        && sym <= 1e-12
        && (p_ours - 0.05).abs() <= 0.001
        && (p_ours - p_oracle).abs() <= 0.001
        && identical;
    verdict(
        pass,
        format!(
            "grad err {worst_grad:.1e}; CDF(0)={cdf0}; symmetry {sym:.1e}; p(2.262, 9 dof)={p_ours:.5} vs oracle {p_oracle:.5}; \
             threads 1 vs 4 identical: {identical}"
        ),
    )
}

fn report(id: u32, name: &str, started: Instant, v: &Verdict) {
    println!(
        "criterion {id:>2} {name:<28} {} ({:.1}s) {}",
        if v.pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        v.detail
    );
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |id: u32| filter.is_empty() || filter.iter().any(|f| f == &id.to_string());
    let mut failures = 0;
    let mut record = |id: u32, name: &str, f: &dyn Fn() -> Verdict| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let v = f();
        report(id, name, t, &v);
        failures += usize::from(!v.pass);
    };
    record(1, "marginal oracle", &marginal_oracle);
    record(2, "prediction oracle", &prediction_oracle);
    record(3, "endpoint identities", &endpoint_identities);
    record(4, "Bayes error", &bayes_error_check);
    if wanted(5) || wanted(7) {
        let t = Instant::now();
        let hard = class_grid(0.5, 505);
        let elapsed = t.elapsed();
        record(5, "hard learning curve", &|| hard_curve(&hard));
        record(7, "NLL surrogate", &|| nll_curve(&hard));
        println!("   (hard grid run took {:.1}s)", elapsed.as_secs_f64());
    }
    record(6, "easy learning curve", &|| easy_curve(&class_grid(2.0, 606)));
    record(8, "discrete trend", &discrete_trend);
    record(9, "restricted regression", &restricted_regression);
    record(10, "optimizer and statistics", &optimizer_and_stats);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
