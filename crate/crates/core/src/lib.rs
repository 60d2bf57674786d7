//! Semi-generative modelling for covariate-shift adaptation with cause and
//! effect features.
//!
//! Causes `X_C` shift between a labelled source domain and an unlabelled
//! target domain, while the mechanisms `P(Y | X_C)` and `P(X_E | Y)` stay
//! fixed. Models here fit both mechanisms jointly, using unlabelled target
//! pairs `(x_C, x_E)` through the marginal `P(X_E | X_C)`.

pub mod baseline;
pub mod bayesnet;
pub mod data;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod numeric;
pub mod optimizer;
pub mod rng;
pub mod stats;

pub use baseline::{fit_joint_regression, JointFit, JointModel};
pub use bayesnet::{gen_bayesnet, gen_bayesnet_dataset, BayesNetConfig, Role};
pub use data::{DomainDataset, LabelledRow, Task, UnlabelledRow};
pub use datagen::{gen_classification, gen_regression, known_importance_weight, CauseDist, ClassScmConfig, RegrScmConfig};
pub use error::{Error, Result};
pub use estimators::{
    fit, fit_from, loglik_pooled, loglik_supervised, loglik_unsupervised, loglik_weighted, Estimator, FitOptions,
    Fitted, LambdaPolicy, WeightSource,
};
pub use harness::{
    bayes_error, compare, load_real, run_grid, DataSource, EstimatorKind, EstimatorSpec, ExperimentGrid, GridOutput,
    RealData, RealDataSource,
};
pub use models::{DiscreteParams, GaussClassParams, LinGaussParams, ModelKind, ModelParams, SemiGenerative};
pub use optimizer::{check_gradient, maximize, multistart_maximize, Bounds, FitResult, Objective, OptimizerOptions};
pub use stats::{
    aggregate, error_rate, paired_t_test, rmse, semi_generative_nll, Metric, MetricRecord, PairedTestResult,
};
