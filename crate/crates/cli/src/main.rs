use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sgm_core::data::{read_dataset, read_rows, write_dataset, write_labelled};
use sgm_core::harness::{compare_with, read_records, write_aggregate, write_records};
use sgm_core::models::parse_kv;
use sgm_core::stats::Alternative;
use sgm_core::*;

#[derive(Parser)]
#[command(name = "sgm", version, about = "Semi-generative covariate-shift adaptation experiments")]
#[command(args_override_self = true)]
struct Cli {
    /// Master seed; drawn from the clock when omitted and printed either way.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `curve` (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a training set and a target test set.
    Gen(GenArgs),
    /// Fit one estimator on a dataset file and write its parameters.
    Fit(FitArgs),
    /// Predict labels for the rows of a dataset file.
    Predict(PredictArgs),
    /// Run an (n_S, n_T) grid and write per-replicate and aggregate CSVs.
    Curve(CurveArgs),
    /// Paired t-test between two estimators from a records CSV.
    Ttest(TtestArgs),
    /// Monte Carlo Bayes error of the classification SCM.
    BayesError(BayesErrorArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Class,
    Regr,
    Bn,
    Real,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    GaussClass,
    LinGauss,
    Discrete,
}

#[derive(Clone, Copy, ValueEnum)]
enum AltArg {
    TwoSided,
    Greater,
    Less,
}

#[derive(Args, Clone)]
struct ClassArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    mu_c: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    m: f64,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    mu0: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    mu1: f64,
}

impl ClassArgs {
    fn config(&self) -> ClassScmConfig {
        ClassScmConfig::new(self.mu_c, self.m, self.mu0, self.mu1)
    }
}

#[derive(Args, Clone)]
struct RegrArgs {
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = -0.8, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    c: f64,
    #[arg(long, default_value_t = -1.2, allow_hyphen_values = true)]
    d: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_y: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_e: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    source_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    source_std: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    target_mean: f64,
    #[arg(long, default_value_t = 1.0)]
    target_std: f64,
}

impl RegrArgs {
    fn config(&self) -> RegrScmConfig {
        RegrScmConfig {
            a: self.a,
            b: self.b,
            c: self.c,
            d: self.d,
            sigma_y: self.sigma_y,
            sigma_e: self.sigma_e,
            cause_source: CauseDist { mean: self.source_mean, std: self.source_std },
            cause_target: CauseDist { mean: self.target_mean, std: self.target_std },
        }
    }
}

#[derive(Args, Clone)]
struct RealArgs {
    /// Two-domain CSV file.
    #[arg(long)]
    real_csv: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    cause_cols: Vec<String>,
    #[arg(long)]
    target_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    effect_cols: Vec<String>,
    #[arg(long)]
    domain_col: Option<String>,
    #[arg(long)]
    source_value: Option<String>,
    #[arg(long)]
    target_value: Option<String>,
    /// Take natural logarithms of all modelled columns.
    #[arg(long)]
    log_transform: bool,
    #[arg(long, default_value_t = 200)]
    n_test_reserved: usize,
}

impl RealArgs {
    fn source(&self) -> Result<RealDataSource> {
        let need = |v: &Option<String>, flag: &str| v.clone().with_context(|| format!("--{flag} is required for real data"));
        if self.cause_cols.is_empty() || self.effect_cols.is_empty() {
            bail!("--cause-cols and --effect-cols are required for real data");
        }
        Ok(RealDataSource {
            path: self.real_csv.clone().context("--real-csv is required for real data")?,
            cause_cols: self.cause_cols.clone(),
            target_col: need(&self.target_col, "target-col")?,
            effect_cols: self.effect_cols.clone(),
            domain_col: need(&self.domain_col, "domain-col")?,
            source_value: need(&self.source_value, "source-value")?,
            target_value: need(&self.target_value, "target-value")?,
            log_transform: self.log_transform,
            n_test_reserved: self.n_test_reserved,
        })
    }
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Starts for the pooled fit.
    #[arg(long, default_value_t = 5)]
    starts: usize,
    /// Standard deviation of the start perturbations.
    #[arg(long, default_value_t = 0.5)]
    perturb: f64,
    /// Rescale importance weights to mean one.
    #[arg(long)]
    self_normalize: bool,
}

impl OptimArgs {
    fn options(&self) -> Result<FitOptions> {
        if self.starts == 0 {
            bail!("--starts must be at least 1");
        }
        let mut o = FitOptions::default();
        o.optimizer.max_iters = self.max_iters;
        o.optimizer.tol = self.tol;
        o.pooled_starts = self.starts;
        o.perturb_scale = self.perturb;
        o.self_normalize = self.self_normalize;
        Ok(o)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "class")]
    source: SourceKind,
    #[command(flatten)]
    class: ClassArgs,
    #[command(flatten)]
    regr: RegrArgs,
    /// Bayes-net config for `--source bn`.
    #[arg(long)]
    bn_config: Option<PathBuf>,
    #[arg(long)]
    n_s: usize,
    #[arg(long, default_value_t = 0)]
    n_t: usize,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
}

#[derive(Args)]
struct FitArgs {
    /// Training file in the dataset layout.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// S, WS, P, P:<policy> or LR.
    #[arg(long, default_value = "P")]
    estimator: String,
    /// λ policy for P: equal, sqrt, supheavy or fixed:<c>.
    #[arg(long, default_value = "equal")]
    lambda: String,
    /// Constrain the regression slopes b and d to be non-positive.
    #[arg(long)]
    restricted: bool,
    /// One importance weight per source row, one per line, for WS.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    optim: OptimArgs,
    /// Output file name inside --out-dir.
    #[arg(long, default_value = "params.txt")]
    out: String,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    params: PathBuf,
    /// Rows to predict, in the dataset layout (labels are ignored).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "predictions.csv")]
    out: String,
}

#[derive(Args)]
struct CurveArgs {
    /// Flat key=value file whose keys are long flag names; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "class")]
    source: SourceKind,
    #[command(flatten)]
    class: ClassArgs,
    #[command(flatten)]
    regr: RegrArgs,
    #[command(flatten)]
    real: RealArgs,
    #[arg(long)]
    bn_config: Option<PathBuf>,
    /// Model class; defaults to the natural one for the source.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    restricted: bool,
    #[arg(long, value_delimiter = ',', default_value = "8")]
    n_s: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,4,16,64,256")]
    n_t: Vec<usize>,
    /// Defaults to 500 for classification and 200 for regression.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    #[arg(long, value_delimiter = ',', default_value = "S,WS,P,LR")]
    estimators: Vec<String>,
    /// λ policy for a bare `P` estimator.
    #[arg(long, default_value = "equal")]
    lambda: String,
    #[command(flatten)]
    optim: OptimArgs,
}

#[derive(Args)]
struct TtestArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long, default_value = "error_rate")]
    metric: String,
    #[arg(long)]
    n_s: usize,
    #[arg(long)]
    n_t: usize,
    #[arg(long, value_enum, default_value = "two-sided")]
    alternative: AltArg,
}

#[derive(Args)]
struct BayesErrorArgs {
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = 1_000_000)]
    n_mc: usize,
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let seed = seed.unwrap_or_else(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)
    });
    eprintln!("seed: {seed}");
    seed
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let path = out_dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn load_bn(path: &Option<PathBuf>) -> Result<BayesNetConfig> {
    let path = path.as_ref().context("--bn-config is required for a Bayes-net source")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(BayesNetConfig::parse(&text)?)
}

fn model_kind(m: ModelArg, restricted: bool) -> ModelKind {
    match m {
        ModelArg::GaussClass => ModelKind::GaussClass,
        ModelArg::LinGauss => ModelKind::LinGauss { restricted },
        ModelArg::Discrete => ModelKind::Discrete,
    }
}

fn gen(cli: &Cli, args: &GenArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    let (ds, test) = match args.source {
        SourceKind::Class => gen_classification(&args.class.config(), args.n_s, args.n_t, args.n_test, seed)?,
        SourceKind::Regr => gen_regression(&args.regr.config(), args.n_s, args.n_t, args.n_test, seed)?,
        SourceKind::Bn => gen_bayesnet_dataset(&load_bn(&args.bn_config)?, args.n_s, args.n_t, args.n_test, seed)?,
        SourceKind::Real => bail!("`gen` draws synthetic data only; use `curve --source real` for real files"),
    };
    let mut w = create(&cli.out_dir, "train.csv")?;
    write_dataset(&mut w, &ds)?;
    w.flush()?;
    let mut w = create(&cli.out_dir, "test.csv")?;
    write_labelled(&mut w, 1, &test)?;
    w.flush()?;
    println!("wrote {} source, {} target and {} test rows to {}", ds.n_source(), ds.n_target(), test.len(), cli.out_dir.display());
    Ok(())
}

fn read_weights(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<f64>().with_context(|| format!("bad weight `{l}`")))
        .collect()
}

fn fit_cmd(cli: &Cli, args: &FitArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    let kind = model_kind(args.model, args.restricted);
    let ds = read_dataset(open(&args.data)?, kind.task())?;
    let default_lambda: LambdaPolicy = args.lambda.parse()?;
    let spec = EstimatorSpec::parse(&args.estimator, default_lambda)?;
    let opts = args.optim.options()?;
    let text = match spec.kind {
        EstimatorKind::JointRegression => {
            let f = fit_joint_regression(&ds, kind.task(), &opts.optimizer)?;
            if f.diagnostics.rank_deficient {
                log::warn!("joint design matrix is rank deficient");
            }
            f.model.to_text()
        }
        EstimatorKind::Model(est) => {
            let weights = match &args.weights {
                Some(p) => WeightSource::Supplied(read_weights(p)?),
                None => WeightSource::Unit,
            };
            let f = fit(kind, &ds, est, &weights, &opts, seed)?;
            eprintln!(
                "objective {:.6}, converged {}, lambda {}",
                f.result.objective_value,
                f.result.best_converged(),
                f.lambda.map_or("-".into(), |l| l.to_string())
            );
            f.params.to_text()
        }
    };
    let mut w = create(&cli.out_dir, &args.out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    print!("{text}");
    Ok(())
}

fn predict_cmd(cli: &Cli, args: &PredictArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.params).with_context(|| format!("reading {}", args.params.display()))?;
    let kv = parse_kv(&text)?;
    let rows = read_rows(open(&args.data)?)?;
    let joint = kv.get("model").is_some_and(|m| m.starts_with("joint_"));
    let predict: Box<dyn Fn(&[f64], &[f64]) -> (f64, Option<f64>)> = if joint {
        let m = JointModel::from_kv(&kv)?;
        Box::new(move |c, e| (m.predict(c, e), m.predict_proba(c, e)))
    } else {
        let m = ModelParams::from_text(&text)?;
        if let Some(r) = rows.first() {
            m.check_dims(&r.x_c, &r.x_e)?;
        }
        Box::new(move |c, e| (m.predict(c, e), m.predict_proba(c, e)))
    };
    let mut w = create(&cli.out_dir, &args.out)?;
    let classifier = rows.first().is_some_and(|r| predict(&r.x_c, &r.x_e).1.is_some());
    writeln!(w, "{}", if classifier { "prediction,p1" } else { "prediction" })?;
    for r in &rows {
        let (y, p) = predict(&r.x_c, &r.x_e);
        match p {
            Some(p) => writeln!(w, "{},{}", numeric::fmt_g17(y), numeric::fmt_g17(p))?,
            None => writeln!(w, "{}", numeric::fmt_g17(y))?,
        }
    }
    w.flush()?;
    println!("wrote {} predictions to {}", rows.len(), cli.out_dir.join(&args.out).display());
    Ok(())
}

fn curve(cli: &Cli, args: &CurveArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    let source = match args.source {
        SourceKind::Class => DataSource::Classification(args.class.config()),
        SourceKind::Regr => DataSource::Regression(args.regr.config()),
        SourceKind::Bn => DataSource::BayesNet(load_bn(&args.bn_config)?),
        SourceKind::Real => {
            let data = RealData::load(&args.real.source()?)?;
            if data.dropped > 0 {
                eprintln!("dropped {} rows with non-positive values", data.dropped);
            }
            DataSource::Real(Arc::new(data))
        }
    };
    let model = match (args.model, args.source) {
        (Some(m), _) => model_kind(m, args.restricted),
        (None, SourceKind::Class) => ModelKind::GaussClass,
        (None, SourceKind::Bn) => ModelKind::Discrete,
        (None, _) => ModelKind::LinGauss { restricted: args.restricted },
    };
    let default_lambda: LambdaPolicy = args.lambda.parse()?;
    let estimators = args
        .estimators
        .iter()
        .map(|e| EstimatorSpec::parse(e, default_lambda))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let mut n_t = args.n_t.clone();
    n_t.sort_unstable();
    n_t.dedup();
    let grid = ExperimentGrid {
        replicates: args.replicates.unwrap_or(if model.task() == Task::Classification { 500 } else { 200 }),
        source,
        model,
        n_s: args.n_s.clone(),
        n_t,
        n_test: args.n_test,
        estimators,
        master_seed: seed,
        fit: args.optim.options()?,
        threads: cli.threads,
    };
    let out = run_grid(&grid)?;
    let failed = out.records.iter().filter(|r| !r.value.is_finite()).count();
    if failed > 0 {
        eprintln!("{failed} records are failed fits (value NaN)");
    }
    let mut w = create(&cli.out_dir, "records.csv")?;
    write_records(&mut w, &out.records)?;
    w.flush()?;
    let mut w = create(&cli.out_dir, "aggregate.csv")?;
    write_aggregate(&mut w, &out.aggregates)?;
    w.flush()?;
    println!("wrote {} records and {} aggregate rows to {}", out.records.len(), out.aggregates.len(), cli.out_dir.display());
    Ok(())
}

fn ttest(args: &TtestArgs) -> Result<()> {
    let records = read_records(open(&args.records)?)?;
    let metric: Metric = args.metric.parse()?;
    let alt = match args.alternative {
        AltArg::TwoSided => Alternative::TwoSided,
        AltArg::Greater => Alternative::Greater,
        AltArg::Less => Alternative::Less,
    };
    let r = compare_with(&records, &args.a, &args.b, metric, args.n_s, args.n_t, alt)?;
    println!("mean_diff={}", numeric::fmt_g17(r.mean_diff));
    println!("t={}", numeric::fmt_g17(r.t_stat));
    println!("dof={}", r.dof);
    println!("p={}", numeric::fmt_g17(r.p_value));
    Ok(())
}

fn bayes_error_cmd(cli: &Cli, args: &BayesErrorArgs) -> Result<()> {
    let seed = resolve_seed(cli.seed);
    let e = bayes_error(&args.class.config(), args.n_mc, seed)?;
    println!("{}", numeric::fmt_g17(e));
    Ok(())
}

/// Splices `--key value` pairs from a `--config` file in front of the
/// subcommand's own arguments, so flags given on the command line win.
fn expand_config(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config") else {
        return Ok(argv);
    };
    let path = argv.get(pos + 1).context("--config needs a path")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    let sub = argv.iter().position(|a| a == "curve").context("--config is only accepted by `curve`")?;
    let mut injected = Vec::new();
    for (key, value) in parse_kv(&text)? {
        match value.as_str() {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
        }
    }
    let mut out = argv[..=sub].to_vec();
    out.extend(injected);
    out.extend(argv[sub + 1..].iter().cloned());
    Ok(out)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    };
    let cli = Cli::parse_from(argv);
    let result = match &cli.command {
        Command::Gen(a) => gen(&cli, a),
        Command::Fit(a) => fit_cmd(&cli, a),
        Command::Predict(a) => predict_cmd(&cli, a),
        Command::Curve(a) => curve(&cli, a),
        Command::Ttest(a) => ttest(a),
        Command::BayesError(a) => bayes_error_cmd(&cli, a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
