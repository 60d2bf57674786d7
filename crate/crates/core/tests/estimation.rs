mod common;

use sgm_core::*;

#[test]
fn supervised_fit_is_consistent_for_gauss_class() {
    let cfg = ClassScmConfig::new(-1.0, 0.2, -0.5, 0.5);
    let (ds, _) = gen_classification(&cfg, 100_000, 0, 1, 31).unwrap();
    let f = fit(ModelKind::GaussClass, &ds, Estimator::Supervised, &WeightSource::Unit, &FitOptions::default(), 1).unwrap();
    let ModelParams::GaussClass(p) = f.params else { panic!() };
    assert!((p.m - 0.2).abs() < 0.02 && (p.mu_0 + 0.5).abs() < 0.02 && (p.mu_1 - 0.5).abs() < 0.02, "{p:?}");
    assert!(f.result.best_converged());
}

#[test]
fn unsupervised_data_alone_identifies_the_model() {
    // with λ near zero the fit is driven by the marginal of X_E | X_C
    let cfg = ClassScmConfig::new(-1.0, 0.0, -2.0, 2.0);
    let (ds, _) = gen_classification(&cfg, 50, 100_000, 1, 32).unwrap();
    let f = fit(
        ModelKind::GaussClass,
        &ds,
        Estimator::Pooled(LambdaPolicy::Fixed(0.001)),
        &WeightSource::Unit,
        &FitOptions::default(),
        2,
    )
    .unwrap();
    let ModelParams::GaussClass(p) = f.params else { panic!() };
    assert!(p.m.abs() < 0.05 && (p.mu_0 + 2.0).abs() < 0.03 && (p.mu_1 - 2.0).abs() < 0.03, "{p:?}");
}

#[test]
fn lin_gauss_supervised_fit_recovers_parameters() {
    let cfg = RegrScmConfig {
        a: 0.5,
        b: -0.8,
        c: 0.3,
        d: 1.5,
        sigma_y: 0.6,
        sigma_e: 0.9,
        cause_source: CauseDist { mean: 0.0, std: 1.0 },
        cause_target: CauseDist { mean: 1.0, std: 1.0 },
    };
    let (ds, _) = gen_regression(&cfg, 100_000, 0, 1, 33).unwrap();
    let kind = ModelKind::LinGauss { restricted: false };
    let f = fit(kind, &ds, Estimator::Supervised, &WeightSource::Unit, &FitOptions::default(), 3).unwrap();
    let ModelParams::LinGauss(p) = f.params else { panic!() };
    let got = [p.a, p.b, p.c, p.d, p.sigma_y(), p.sigma_e()];
    let want = [0.5, -0.8, 0.3, 1.5, 0.6, 0.9];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() < 0.02, "{got:?}");
    }
}

#[test]
fn restricted_fit_stays_feasible() {
    let cfg = RegrScmConfig {
        a: 0.0,
        b: 1.0,
        c: 0.0,
        d: 1.0,
        sigma_y: 0.5,
        sigma_e: 0.5,
        cause_source: CauseDist { mean: 0.0, std: 1.0 },
        cause_target: CauseDist { mean: 1.0, std: 1.0 },
    };
    let (ds, _) = gen_regression(&cfg, 200, 200, 1, 34).unwrap();
    let kind = ModelKind::LinGauss { restricted: true };
    for est in [Estimator::Supervised, Estimator::Pooled(LambdaPolicy::Fixed(0.8))] {
        let f = fit(kind, &ds, est, &WeightSource::Unit, &FitOptions::default(), 4).unwrap();
        let ModelParams::LinGauss(p) = f.params else { panic!() };
        assert!(p.b <= 0.0 && p.d <= 0.0, "{p:?}");
    }
}

#[test]
fn discrete_supervised_fit_matches_counts() {
    // with one binary cause the logistic part is saturated, so the MLE reproduces cell frequencies
    let text = "
        d | | 0.5
        c | d=0 | 0.3
        c | d=1 | 0.6
        y | c=0 | 0.2
        y | c=1 | 0.7
        e | y=0 | 0.1
        e | y=1 | 0.8
        role d = domain
        role c = cause
        role y = label
        role e = effect
    ";
    let cfg = BayesNetConfig::parse(text).unwrap();
    let (ds, _) = gen_bayesnet_dataset(&cfg, 50_000, 0, 1, 35).unwrap();
    let f = fit(ModelKind::Discrete, &ds, Estimator::Supervised, &WeightSource::Unit, &FitOptions::default(), 5).unwrap();
    let freq = |c: f64| {
        let rows: Vec<_> = ds.source.iter().filter(|r| r.x_c[0] == c).collect();
        rows.iter().filter(|r| r.y == 1.0).count() as f64 / rows.len() as f64
    };
    for c in [0.0, 1.0] {
        let p1 = (f.params.log_joint(&[c], 1.0, &[0.0]).exp() + f.params.log_joint(&[c], 1.0, &[1.0]).exp()).min(1.0);
        assert!((p1 - freq(c)).abs() < 1e-4, "c={c}: {p1} vs {}", freq(c));
    }
}

#[test]
fn weighted_fit_uses_known_weights() {
    let cfg = ClassScmConfig::symmetric(0.5);
    let (ds, _) = gen_classification(&cfg, 40, 0, 1, 36).unwrap();
    let opts = FitOptions::default();
    let ws = fit(ModelKind::GaussClass, &ds, Estimator::Weighted, &WeightSource::KnownSynthetic(cfg), &opts, 6).unwrap();
    let s = fit(ModelKind::GaussClass, &ds, Estimator::Supervised, &WeightSource::Unit, &opts, 6).unwrap();
    assert!(!ws.unit_weights);
    assert_ne!(ws.params, s.params);
    let unit = fit(ModelKind::GaussClass, &ds, Estimator::Weighted, &WeightSource::Unit, &opts, 6).unwrap();
    assert!(unit.unit_weights);
    assert_eq!(unit.params, s.params);
}

#[test]
fn joint_regression_baseline_recovers_linear_coefficients() {
    let cfg = RegrScmConfig {
        a: 0.0,
        b: 1.0,
        c: 0.0,
        d: 1.0,
        sigma_y: 1.0,
        sigma_e: 1.0,
        cause_source: CauseDist { mean: 0.0, std: 1.0 },
        cause_target: CauseDist { mean: 0.0, std: 1.0 },
    };
    // E[Y | x_C, x_E] = (x_C + x_E) / 2 for this configuration
    let (ds, _) = gen_regression(&cfg, 100_000, 0, 1, 37).unwrap();
    let f = fit_joint_regression(&ds, Task::Regression, &OptimizerOptions::default()).unwrap();
    assert!((f.model.predict(&[1.0], &[1.0]) - 1.0).abs() < 0.02);
    assert!((f.model.predict(&[2.0], &[0.0]) - 1.0).abs() < 0.02);
    assert!(!f.diagnostics.rank_deficient);
}
