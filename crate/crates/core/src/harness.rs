//! Replicated experiments over `(n_S, n_T)` grids.
//!
//! Each `(n_S, n_T, replicate)` cell draws its data from a stream seeded by
//! `derive_seed(master, [n_S, n_T, replicate])`; every estimator in the cell
//! sees the same draw so per-replicate results can be paired. Records are
//! sorted before they are returned, making output independent of the number
//! of worker threads.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::baseline::fit_joint_regression;
use crate::bayesnet::{gen_bayesnet_dataset, BayesNetConfig};
use crate::data::{DomainDataset, LabelledRow, Task};
use crate::datagen::{gen_classification, gen_regression, ClassScmConfig, RegrScmConfig};
use crate::error::{Error, Result};
use crate::estimators::{fit, Estimator, FitOptions, LambdaPolicy, WeightSource};
use crate::models::{GaussClassParams, ModelKind, SemiGenerative};
use crate::numeric::fmt_g17;
use crate::rng::{derive_seed, stream};
use crate::stats::{aggregate, error_rate, paired_t_test_with, rmse, Alternative, semi_generative_nll, AggregateRow, Metric,
                   MetricRecord, PairedTestResult};

/// Where replicate data come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Classification(ClassScmConfig),
    Regression(RegrScmConfig),
    BayesNet(BayesNetConfig),
    Real(Arc<RealData>),
}

impl DataSource {
    pub fn task(&self) -> Task {
        match self {
            DataSource::Classification(_) | DataSource::BayesNet(_) => Task::Classification,
            DataSource::Regression(_) | DataSource::Real(_) => Task::Regression,
        }
    }

    /// Training sample plus a labelled target-domain test set.
    pub fn draw(&self, n_s: usize, n_t: usize, n_test: usize, seed: u64) -> Result<(DomainDataset, Vec<LabelledRow>)> {
        match self {
            DataSource::Classification(cfg) => gen_classification(cfg, n_s, n_t, n_test, seed),
            DataSource::Regression(cfg) => gen_regression(cfg, n_s, n_t, n_test, seed),
            DataSource::BayesNet(cfg) => gen_bayesnet_dataset(cfg, n_s, n_t, n_test, seed),
            DataSource::Real(data) => data.split(n_s, n_t, seed).map(|s| (s.dataset, s.test)),
        }
    }

    /// Importance weights available for the weighted estimator.
    pub fn weights(&self) -> WeightSource {
        match self {
            DataSource::Classification(cfg) => WeightSource::KnownSynthetic(*cfg),
            DataSource::Regression(cfg) => WeightSource::KnownRegression(*cfg),
            _ => WeightSource::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Model(Estimator),
    /// Linear/logistic regression on the joint features.
    JointRegression,
}

/// An estimator with the tag used in output files.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub tag: String,
    pub kind: EstimatorKind,
}

impl EstimatorSpec {
    /// Parses `S`, `WS`, `LR`, `P` (pooled with `default_lambda`) or
    /// `P:<policy>`; the tag is the input string.
    pub fn parse(s: &str, default_lambda: LambdaPolicy) -> Result<Self> {
        let s = s.trim();
        let kind = match s {
            "S" => EstimatorKind::Model(Estimator::Supervised),
            "WS" => EstimatorKind::Model(Estimator::Weighted),
            "LR" => EstimatorKind::JointRegression,
            "P" => EstimatorKind::Model(Estimator::Pooled(default_lambda)),
            other => match other.strip_prefix("P:") {
                Some(policy) => EstimatorKind::Model(Estimator::Pooled(LambdaPolicy::from_str(policy)?)),
                None => return Err(Error::InvalidArgument(format!("unknown estimator `{other}`"))),
            },
        };
        Ok(Self { tag: s.to_string(), kind })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub source: DataSource,
    pub model: ModelKind,
    pub n_s: Vec<usize>,
    pub n_t: Vec<usize>,
    pub replicates: usize,
    pub n_test: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub master_seed: u64,
    pub fit: FitOptions,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.n_s.is_empty() || self.n_t.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidConfig("grid needs n_S values, n_T values and estimators".into()));
        }
        if self.n_s.contains(&0) {
            return Err(Error::InvalidConfig("n_S values must be positive".into()));
        }
        if self.n_t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_T list must be strictly ascending".into()));
        }
        if self.model.task() != self.source.task() {
            return Err(Error::InvalidConfig(format!(
                "model `{}` cannot be fitted to {:?} data",
                self.model.name(),
                self.source.task()
            )));
        }
        if let DataSource::Real(data) = &self.source {
            let max_s = *self.n_s.iter().max().expect("non-empty");
            let max_t = *self.n_t.iter().max().expect("non-empty");
            data.check_capacity(max_s, max_t)?;
        }
        Ok(())
    }

    pub fn cell_seed(&self, n_s: usize, n_t: usize, replicate: usize) -> u64 {
        derive_seed(self.master_seed, &[n_s as u64, n_t as u64, replicate as u64])
    }
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<AggregateRow>,
}

fn metrics_for(task: Task, kind: EstimatorKind) -> &'static [Metric] {
    match (task, kind) {
        (Task::Classification, EstimatorKind::Model(_)) => &[Metric::ErrorRate, Metric::Nll],
        (Task::Regression, EstimatorKind::Model(_)) => &[Metric::Rmse, Metric::Nll],
        (Task::Classification, EstimatorKind::JointRegression) => &[Metric::ErrorRate],
        (Task::Regression, EstimatorKind::JointRegression) => &[Metric::Rmse],
    }
}

fn evaluate_cell(grid: &ExperimentGrid, n_s: usize, n_t: usize, rep: usize) -> Result<Vec<MetricRecord>> {
    let seed = grid.cell_seed(n_s, n_t, rep);
    let (ds, test) = grid.source.draw(n_s, n_t, grid.n_test, seed)?;
    let task = grid.source.task();
    let labels: Vec<f64> = test.iter().map(|r| r.y).collect();
    let point_metric = |preds: &[f64]| match task {
        Task::Classification => error_rate(preds, &labels),
        Task::Regression => rmse(preds, &labels),
    };
    let weights = grid.source.weights();
    // one fit seed per cell, so estimators that coincide (S and P at n_T = 0) give identical records
    let fit_seed = derive_seed(seed, &[1000]);
    let mut out = Vec::new();
    for spec in &grid.estimators {
        let values: Result<Vec<f64>> = match spec.kind {
            EstimatorKind::Model(est) => fit(grid.model, &ds, est, &weights, &grid.fit, fit_seed).and_then(|f| {
                let preds: Vec<f64> = test.iter().map(|r| f.params.predict(&r.x_c, &r.x_e)).collect();
                Ok(vec![point_metric(&preds)?, semi_generative_nll(&f.params, &test)?])
            }),
            EstimatorKind::JointRegression => fit_joint_regression(&ds, task, &grid.fit.optimizer).and_then(|f| {
                let preds: Vec<f64> = test.iter().map(|r| f.model.predict(&r.x_c, &r.x_e)).collect();
                Ok(vec![point_metric(&preds)?])
            }),
        };
        let metrics = metrics_for(task, spec.kind);
        let values = values.unwrap_or_else(|e| {
            log::warn!("fit failed (n_S={n_s}, n_T={n_t}, replicate={rep}, {}): {e}", spec.tag);
            vec![f64::NAN; metrics.len()]
        });
        for (metric, value) in metrics.iter().zip(values) {
            out.push(MetricRecord { replicate: rep, n_s, n_t, estimator: spec.tag.clone(), metric: *metric, value });
        }
    }
    Ok(out)
}

/// Runs every estimator on every `(n_S, n_T, replicate)` cell.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridOutput> {
    grid.validate()?;
    let cells: Vec<(usize, usize, usize)> = grid
        .n_s
        .iter()
        .flat_map(|&s| grid.n_t.iter().flat_map(move |&t| (0..grid.replicates).map(move |r| (s, t, r))))
        .collect();
    let run = || -> Result<Vec<Vec<MetricRecord>>> {
        cells.par_iter().map(|&(s, t, r)| evaluate_cell(grid, s, t, r)).collect()
    };
    let nested = if grid.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(grid.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(run)?
    } else {
        run()?
    };
    let mut records: Vec<MetricRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.n_s, a.n_t, a.replicate, &a.estimator, a.metric).cmp(&(b.n_s, b.n_t, b.replicate, &b.estimator, b.metric))
    });
    let aggregates = aggregate(&records)?;
    Ok(GridOutput { records, aggregates })
}

pub fn write_records<W: Write>(w: &mut W, records: &[MetricRecord]) -> Result<()> {
    writeln!(w, "replicate,n_S,n_T,estimator,metric,value")?;
    for r in records {
        writeln!(w, "{},{},{},{},{},{}", r.replicate, r.n_s, r.n_t, r.estimator, r.metric, fmt_g17(r.value))?;
    }
    Ok(())
}

pub fn read_records<R: BufRead>(r: R) -> Result<Vec<MetricRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let field = |i: usize| rec.get(i).ok_or(Error::Parse { line, msg: "too few fields".into() });
        let int = |i: usize| -> Result<usize> {
            field(i)?.trim().parse().map_err(|_| Error::Parse { line, msg: format!("bad integer in column {i}") })
        };
        out.push(MetricRecord {
            replicate: int(0)?,
            n_s: int(1)?,
            n_t: int(2)?,
            estimator: field(3)?.trim().to_string(),
            metric: field(4)?.trim().parse()?,
            value: field(5)?
                .trim()
                .parse()
                .map_err(|_| Error::Parse { line, msg: "bad value".into() })?,
        });
    }
    Ok(out)
}

pub fn write_aggregate<W: Write>(w: &mut W, rows: &[AggregateRow]) -> Result<()> {
    writeln!(w, "n_S,n_T,estimator,metric,mean,std,count")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.n_s,
            r.n_t,
            r.estimator,
            r.metric,
            fmt_g17(r.stats.mean()),
            fmt_g17(r.stats.std()),
            r.stats.count()
        )?;
    }
    Ok(())
}

/// Two-sided paired t-test of `estimator_a − estimator_b` on per-replicate
/// values at one grid point.
pub fn compare(
    records: &[MetricRecord],
    estimator_a: &str,
    estimator_b: &str,
    metric: Metric,
    n_s: usize,
    n_t: usize,
) -> Result<PairedTestResult> {
    compare_with(records, estimator_a, estimator_b, metric, n_s, n_t, Alternative::TwoSided)
}

/// [`compare`] with a chosen alternative hypothesis.
pub fn compare_with(
    records: &[MetricRecord],
    estimator_a: &str,
    estimator_b: &str,
    metric: Metric,
    n_s: usize,
    n_t: usize,
    alternative: Alternative,
) -> Result<PairedTestResult> {
    let collect = |tag: &str| -> BTreeMap<usize, f64> {
        records
            .iter()
            .filter(|r| r.estimator == tag && r.metric == metric && r.n_s == n_s && r.n_t == n_t)
            .map(|r| (r.replicate, r.value))
            .collect()
    };
    let a = collect(estimator_a);
    let b = collect(estimator_b);
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no `{metric}` records for `{estimator_a}` or `{estimator_b}` at n_S={n_s}, n_T={n_t}"
        )));
    }
    if !a.keys().eq(b.keys()) {
        return Err(Error::InvalidArgument("estimators were run on different replicates".into()));
    }
    let va: Vec<f64> = a.values().copied().collect();
    let vb: Vec<f64> = b.values().copied().collect();
    paired_t_test_with(&va, &vb, alternative)
}

/// Monte Carlo error rate of the classifier built from the true SCM parameters
/// on target-domain draws.
pub fn bayes_error(cfg: &ClassScmConfig, n_mc: usize, seed: u64) -> Result<f64> {
    cfg.validate()?;
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be at least 1".into()));
    }
    let truth = GaussClassParams::new(cfg.m, cfg.mu_0, cfg.mu_1);
    let mut rng = stream(seed);
    let rows = cfg.sample_target(n_mc, &mut rng);
    let wrong = rows.iter().filter(|r| truth.predict(&r.x_c, &r.x_e) != r.y).count();
    Ok(wrong as f64 / n_mc as f64)
}

/// Column mapping for a real two-domain CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct RealDataSource {
    pub path: PathBuf,
    pub cause_cols: Vec<String>,
    pub target_col: String,
    pub effect_cols: Vec<String>,
    pub domain_col: String,
    pub source_value: String,
    pub target_value: String,
    pub log_transform: bool,
    pub n_test_reserved: usize,
}

/// Parsed real data, split by domain.
#[derive(Debug, Clone, PartialEq)]
pub struct RealData {
    pub source: Vec<LabelledRow>,
    pub target: Vec<LabelledRow>,
    /// Rows dropped because a log-transformed value was not positive.
    pub dropped: usize,
    pub n_test_reserved: usize,
}

/// One subsample of [`RealData`], with the row indices used.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSplit {
    pub dataset: DomainDataset,
    pub test: Vec<LabelledRow>,
    pub source_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub unlabelled_idx: Vec<usize>,
}

impl RealData {
    pub fn load(src: &RealDataSource) -> Result<Self> {
        let file = std::fs::File::open(&src.path)?;
        Self::from_reader(src, std::io::BufReader::new(file))
    }

    pub fn from_reader<R: BufRead>(src: &RealDataSource, r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let headers = reader.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
        };
        let cause: Vec<usize> = src.cause_cols.iter().map(|c| col(c)).collect::<Result<_>>()?;
        let effect: Vec<usize> = src.effect_cols.iter().map(|c| col(c)).collect::<Result<_>>()?;
        let target = col(&src.target_col)?;
        let domain = col(&src.domain_col)?;

        let mut data = RealData { source: vec![], target: vec![], dropped: 0, n_test_reserved: src.n_test_reserved };
        for (k, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let d = rec.get(domain).unwrap_or("").trim();
            let is_source = d == src.source_value;
            if !is_source && d != src.target_value {
                continue;
            }
            let num = |i: usize| -> Result<f64> {
                let cell = rec.get(i).unwrap_or("").trim();
                cell.parse::<f64>()
                    .map_err(|_| Error::Parse { line, msg: format!("non-numeric cell `{cell}`") })
            };
            let mut x_c = cause.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?;
            let mut y = num(target)?;
            let mut x_e = effect.iter().map(|&i| num(i)).collect::<Result<Vec<_>>>()?;
            if src.log_transform {
                let positive = x_c.iter().chain(&x_e).chain(std::iter::once(&y)).all(|v| *v > 0.0);
                if !positive {
                    data.dropped += 1;
                    continue;
                }
                x_c.iter_mut().chain(x_e.iter_mut()).for_each(|v| *v = v.ln());
                y = y.ln();
            }
            let row = LabelledRow::new(x_c, y, x_e);
            if is_source {
                data.source.push(row);
            } else {
                data.target.push(row);
            }
        }
        if data.dropped > 0 {
            log::info!("dropped {} rows with non-positive values before the log transform", data.dropped);
        }
        if data.n_test_reserved > data.target.len() {
            return Err(Error::Data(format!(
                "cannot reserve {} test rows from {} target rows",
                data.n_test_reserved,
                data.target.len()
            )));
        }
        Ok(data)
    }

    fn check_capacity(&self, n_s: usize, n_t: usize) -> Result<()> {
        if n_s == 0 {
            return Err(Error::EmptySample("n_S must be at least 1"));
        }
        if n_s > self.source.len() {
            return Err(Error::Data(format!("requested n_S={n_s} but only {} source rows", self.source.len())));
        }
        let remaining = self.target.len() - self.n_test_reserved;
        if n_t > remaining {
            return Err(Error::Data(format!(
                "requested n_T={n_t} but only {remaining} target rows remain after reserving the test set"
            )));
        }
        Ok(())
    }

    /// Draws `n_S` source rows, reserves the test rows, then draws `n_T`
    /// unlabelled rows from the remaining target rows, all without replacement.
    pub fn split(&self, n_s: usize, n_t: usize, seed: u64) -> Result<RealSplit> {
        self.check_capacity(n_s, n_t)?;
        let mut rng = stream(seed);
        let source_idx = sample_indices(&mut rng, self.source.len(), n_s).into_vec();
        let target_draw = sample_indices(&mut rng, self.target.len(), self.n_test_reserved + n_t).into_vec();
        let (test_idx, unlabelled_idx) = target_draw.split_at(self.n_test_reserved);
        let dataset = DomainDataset::new(
            source_idx.iter().map(|&i| self.source[i].clone()).collect(),
            unlabelled_idx.iter().map(|&i| self.target[i].features()).collect(),
            Task::Regression,
        )?;
        Ok(RealSplit {
            dataset,
            test: test_idx.iter().map(|&i| self.target[i].clone()).collect(),
            source_idx,
            test_idx: test_idx.to_vec(),
            unlabelled_idx: unlabelled_idx.to_vec(),
        })
    }
}

/// Loads `source` and draws one split from it.
pub fn load_real(source: &RealDataSource, n_s: usize, n_t: usize, seed: u64) -> Result<(DomainDataset, Vec<LabelledRow>)> {
    let data = RealData::load(source)?;
    data.split(n_s, n_t, seed).map(|s| (s.dataset, s.test))
}
