//! Benchmarks for likelihood evaluation and estimator fitting; see `benches/`.

use sgm_core::{gen_classification, ClassScmConfig, DomainDataset, LabelledRow};

/// Fixed classification dataset used by the benchmarks.
pub fn bench_dataset(n_s: usize, n_t: usize) -> (DomainDataset, Vec<LabelledRow>) {
    gen_classification(&ClassScmConfig::symmetric(0.5), n_s, n_t, 100, 7).expect("valid config")
}
