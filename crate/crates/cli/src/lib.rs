//! Command-line front end for `ginimon`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 statistical
//! degeneracy, 10 drift detected by `monitor` (or `test`).

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ginimon::config::{split_list, KeyValues};
use ginimon::data::{
    load_csv, preaggregate, time_split_extreme, write_csv, write_csv_to, AggregationKey,
    ColumnMapping, Dataset, LoadOptions, DEFAULT_DAY_FRACTION,
};
use ginimon::drift::{
    drift_schedule, generate_portfolio, inject_drift, DriftKind, DriftScenario, SyntheticSpec,
};
use ginimon::glm::{fit_poisson, predict, DesignSpec, FitOptions, GlmModel};
use ginimon::inference::{
    bootstrap_null, drift_test, monitor, per_period_monitor, write_replicates_csv, BootstrapConfig,
    MonitorConfig, MonitoringReport, NullDistribution, Sidedness,
};
use ginimon::metrics::{
    balance_correct, calibration_table, dataset_deviance_loss, empirical_cap, gini, score_dataset,
    write_calibration_csv, Binning, DevianceConfig, GiniResult, OrderBy, RankingKey, TiePolicy,
    WeightingMode,
};
use ginimon::{Error, ErrorClass};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_REJECT: i32 = 10;

const AFTER_HELP: &str =
    "Exit codes: 0 success, 1 usage error, 2 data error, 3 statistical degeneracy, \
10 drift detected (monitor, test).";

#[derive(Debug, Parser)]
#[command(name = "ginimon", version, about = "Gini-index based drift monitoring for claim frequency models", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-aggregate records by covariate combination, or time-split them.
    Aggregate(AggregateArgs),
    /// Fit a Poisson GLM and write it as JSON.
    FitGlm(FitGlmArgs),
    /// Attach GLM predictions; optionally balance-correct and write a calibration table.
    Predict(PredictArgs),
    /// Gini index of the predictions as JSON.
    Gini(GiniArgs),
    /// CAP curve points as CSV (alpha,cap).
    Cap(CapArgs),
    /// Bootstrap null distribution of the Gini index as JSON.
    Bootstrap(BootstrapArgs),
    /// z-test of a new Gini value against a bootstrap null distribution.
    Test(TestArgs),
    /// Full pipeline: bootstrap the holdout, test the new data, write a report.
    Monitor(MonitorArgs),
    /// Move claims between two groups of policies.
    Inject(InjectArgs),
    /// Draw a synthetic portfolio.
    Simulate(SimulateArgs),
    /// Write one drifted dataset per period.
    Schedule(ScheduleArgs),
    /// Summaries and histogram data from emitted report JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone)]
struct ColumnArgs {
    /// Key=value file with exposure_col, response_col, prediction_col, covariate_cols, numeric_cols.
    #[arg(long, value_name = "FILE")]
    columns: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    exposure_col: Option<String>,
    #[arg(long, value_name = "NAME")]
    response_col: Option<String>,
    #[arg(long, value_name = "NAME")]
    prediction_col: Option<String>,
    /// Comma-separated covariate columns (default: all other columns).
    #[arg(long, value_name = "LIST")]
    covariate_cols: Option<String>,
    /// Comma-separated covariates to parse as numbers.
    #[arg(long, value_name = "LIST")]
    numeric_cols: Option<String>,
    /// Drop zero-exposure rows with a warning instead of failing.
    #[arg(long)]
    drop_zero_exposure: bool,
}

impl ColumnArgs {
    fn mapping(&self) -> ginimon::Result<ColumnMapping> {
        let mut m = match &self.columns {
            Some(p) => ColumnMapping::from_key_values(&KeyValues::from_file(p)?)?,
            None => ColumnMapping::default(),
        };
        if let Some(v) = &self.exposure_col {
            m.exposure = v.clone();
        }
        if let Some(v) = &self.response_col {
            m.response = v.clone();
        }
        if let Some(v) = &self.prediction_col {
            m.prediction = Some(v.clone());
        }
        if let Some(v) = &self.covariate_cols {
            m.covariates = Some(split_list(v));
        }
        if let Some(v) = &self.numeric_cols {
            m.numeric = split_list(v);
        }
        Ok(m)
    }

    fn load(&self, path: &Path) -> ginimon::Result<Dataset> {
        load_csv(
            path,
            &self.mapping()?,
            LoadOptions {
                drop_zero_exposure: self.drop_zero_exposure,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Ranking {
    PredictedCount,
    Frequency,
}

impl From<Ranking> for RankingKey {
    fn from(r: Ranking) -> Self {
        match r {
            Ranking::PredictedCount => RankingKey::PredictedCount,
            Ranking::Frequency => RankingKey::Frequency,
        }
    }
}

#[derive(Debug, Args, Clone)]
struct ScoringArgs {
    /// best | worst | average-extremes | random[:SEED]
    #[arg(long, default_value = "average-extremes")]
    tie: TiePolicy,
    /// count | exposure
    #[arg(long, default_value = "count")]
    weighting: WeightingMode,
    #[arg(long, value_enum, default_value = "predicted-count")]
    ranking: Ranking,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated key columns (default: all covariates).
    #[arg(long, value_name = "LIST", conflicts_with = "time_split")]
    key: Option<String>,
    /// Split every claim onto its own row of `--day-fraction` exposure instead.
    #[arg(long)]
    time_split: bool,
    #[arg(long, default_value_t = DEFAULT_DAY_FRACTION, requires = "time_split")]
    day_fraction: f64,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct FitGlmArgs {
    #[arg(long)]
    input: PathBuf,
    /// Key=value design file (categorical=, binned=, reference=).
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Replace predictions by cohort frequencies: `unique` or a number of exposure-quantile bins.
    #[arg(long, value_name = "BINS")]
    balance_correct: Option<String>,
    /// Write an observed-versus-predicted table to this CSV.
    #[arg(long, value_name = "FILE")]
    calibration: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct GiniArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Also report the mean Poisson deviance of the predictions.
    #[arg(long)]
    deviance: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct CapArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// best | worst | random[:SEED]
    #[arg(long, default_value = "random:0")]
    tie: TiePolicy,
    #[arg(long, default_value = "count")]
    weighting: WeightingMode,
    #[arg(long, value_enum, default_value = "predicted-count")]
    ranking: Ranking,
    /// Order by observed response (the best possible curve).
    #[arg(long)]
    best: bool,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args, Clone)]
struct ResampleArgs {
    /// Number of bootstrap replicates.
    #[arg(long = "B", default_value_t = 10_000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep replicate values in the JSON output (needed for `report --histogram`).
    #[arg(long)]
    keep_replicates: bool,
    /// Use records as given instead of aggregating over all covariates.
    #[arg(long)]
    no_preaggregate: bool,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write replicate values to this CSV.
    #[arg(long, value_name = "FILE")]
    replicates_csv: Option<PathBuf>,
    #[command(flatten)]
    resample: ResampleArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// NullDistribution JSON written by `bootstrap`.
    #[arg(long)]
    null: PathBuf,
    #[arg(long)]
    gini_new: f64,
    #[arg(long)]
    alpha: f64,
    /// two-sided | one-sided
    #[arg(long, default_value = "two-sided")]
    sided: Sidedness,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    /// Holdout of the training period; repeat for one test per period.
    #[arg(long, required = true)]
    old: Vec<PathBuf>,
    #[arg(long)]
    new: PathBuf,
    #[arg(long)]
    alpha: f64,
    #[arg(long, default_value = "two-sided")]
    sided: Sidedness,
    /// Proceed with a warning when the new data is smaller than the holdout.
    #[arg(long)]
    allow_smaller: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    resample: ResampleArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct InjectArgs {
    /// Key=value scenario file (source_*, target_*, transfer_count, seed).
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Key=value portfolio file (n, seed, group=, factor=, exposure=).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// Scenario file; its transfer_count is the total over all periods.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// sudden | gradual | incremental
    #[arg(long)]
    kind: DriftKind,
    #[arg(long)]
    periods: usize,
    #[arg(long)]
    output_dir: PathBuf,
    #[command(flatten)]
    columns: ColumnArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Monitoring report JSON (single report or array) written by `monitor`.
    #[arg(long)]
    input: PathBuf,
    /// Histogram of bootstrap replicates as CSV (bin_low,bin_high,count).
    #[arg(long, value_name = "FILE")]
    histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

/// What a subcommand finished with.
enum Outcome {
    Done,
    Reject,
}

type CmdResult = ginimon::Result<Outcome>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Reject) => EXIT_REJECT,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Usage => {
                    eprintln!("run `ginimon --help` for usage");
                    EXIT_USAGE
                }
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Degenerate => EXIT_DEGENERATE,
            }
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Aggregate(a) => aggregate(a),
        Command::FitGlm(a) => fit_glm(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Gini(a) => gini_cmd(a),
        Command::Cap(a) => cap(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Test(a) => test(a),
        Command::Monitor(a) => monitor_cmd(a),
        Command::Inject(a) => inject(a),
        Command::Simulate(a) => simulate(a),
        Command::Schedule(a) => schedule(a),
        Command::Report(a) => report(a),
    }
}

fn writer(path: Option<&Path>) -> ginimon::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> ginimon::Result<()> {
    let mut w = writer(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn aggregate(a: AggregateArgs) -> CmdResult {
    let d = a.columns.load(&a.input)?;
    let out = if a.time_split {
        time_split_extreme(&d, a.day_fraction)?
    } else {
        let key = match &a.key {
            Some(k) => AggregationKey::new(split_list(k))?,
            None => AggregationKey::all(d.schema())?,
        };
        preaggregate(&d, &key)?
    };
    write_csv(&out, &a.output)?;
    Ok(Outcome::Done)
}

fn fit_glm(a: FitGlmArgs) -> CmdResult {
    let d = a.columns.load(&a.input)?;
    let spec = match &a.design {
        Some(p) => DesignSpec::from_key_values(&d, &KeyValues::from_file(p)?)?,
        None => DesignSpec::intercept_only(),
    };
    let model = fit_poisson(
        &d,
        &spec,
        FitOptions {
            tol: a.tol,
            max_iter: a.max_iter,
        },
    )?;
    if let Some(w) = &model.convergence.warning {
        eprintln!("warning: {w}");
    }
    fs::write(&a.output, model.to_json()? + "\n")?;
    Ok(Outcome::Done)
}

fn predict_cmd(a: PredictArgs) -> CmdResult {
    let model = GlmModel::from_json(&fs::read_to_string(&a.model)?)?;
    let d = a.columns.load(&a.input)?;
    let mut out = predict(&model, &d)?;
    if let Some(b) = &a.balance_correct {
        let binning = match b.as_str() {
            "unique" => Binning::ByUniquePrediction,
            n => Binning::Quantiles(n.parse().map_err(|_| {
                Error::config(format!(
                    "--balance-correct expects `unique` or a bin count, got `{n}`"
                ))
            })?),
        };
        out = balance_correct(&out, binning)?;
    }
    if let Some(p) = &a.calibration {
        write_calibration_csv(&calibration_table(&out, a.bins)?, File::create(p)?)?;
    }
    write_csv(&out, &a.output)?;
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct GiniOutput {
    #[serde(flatten)]
    result: GiniResult,
    ranking: RankingKey,
    #[serde(skip_serializing_if = "Option::is_none")]
    poisson_deviance_loss: Option<f64>,
}

fn gini_cmd(a: GiniArgs) -> CmdResult {
    let d = a.columns.load(&a.input)?;
    let obs = score_dataset(&d, a.scoring.ranking.into())?;
    let result = gini(&obs, a.scoring.tie, a.scoring.weighting)?;
    let poisson_deviance_loss = if a.deviance {
        Some(dataset_deviance_loss(&d, DevianceConfig::default())?)
    } else {
        None
    };
    emit_json(
        &GiniOutput {
            result,
            ranking: a.scoring.ranking.into(),
            poisson_deviance_loss,
        },
        None,
    )?;
    Ok(Outcome::Done)
}

fn cap(a: CapArgs) -> CmdResult {
    let d = a.columns.load(&a.input)?;
    let obs = score_dataset(&d, a.ranking.into())?;
    let order_by = if a.best {
        OrderBy::Response
    } else {
        OrderBy::Score
    };
    let curve = empirical_cap(&obs, order_by, a.tie, a.weighting)?;
    let mut w = writer(a.output.as_deref())?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(Outcome::Done)
}

fn bootstrap_config(r: &ResampleArgs, s: &ScoringArgs) -> BootstrapConfig {
    BootstrapConfig {
        replicates: r.replicates,
        seed: r.seed,
        tie_policy: s.tie,
        weighting: s.weighting,
        retain_replicates: r.keep_replicates,
    }
}

fn bootstrap(a: BootstrapArgs) -> CmdResult {
    let mut d = a.columns.load(&a.input)?;
    if !a.resample.no_preaggregate {
        d = preaggregate(&d, &AggregationKey::all(d.schema())?)?;
    }
    let obs = score_dataset(&d, a.scoring.ranking.into())?;
    let mut cfg = bootstrap_config(&a.resample, &a.scoring);
    cfg.retain_replicates |= a.replicates_csv.is_some();
    let mut null = bootstrap_null(&obs, &cfg)?;
    if let Some(p) = &a.replicates_csv {
        if let Some(v) = &null.replicate_values {
            write_replicates_csv(v, File::create(p)?)?;
        }
        if !a.resample.keep_replicates {
            null.replicate_values = None;
        }
    }
    emit_json(&null, a.output.as_deref())?;
    Ok(Outcome::Done)
}

fn test(a: TestArgs) -> CmdResult {
    let null: NullDistribution = serde_json::from_str(&fs::read_to_string(&a.null)?)?;
    let result = drift_test(a.gini_new, &null, a.alpha, a.sided)?;
    emit_json(&result, None)?;
    Ok(if result.reject {
        Outcome::Reject
    } else {
        Outcome::Done
    })
}

fn monitor_cmd(a: MonitorArgs) -> CmdResult {
    let mut cfg = MonitorConfig::new(bootstrap_config(&a.resample, &a.scoring), a.alpha);
    cfg.sided = a.sided;
    cfg.allow_smaller = a.allow_smaller;
    cfg.preaggregate = !a.resample.no_preaggregate;
    cfg.ranking = a.scoring.ranking.into();

    let new = a.columns.load(&a.new)?;
    let reject = if let [old] = a.old.as_slice() {
        let report = monitor(&a.columns.load(old)?, &new, &cfg)?;
        warn_all(&report);
        emit_json(&report, a.output.as_deref())?;
        report.reject
    } else {
        let holdouts = a
            .old
            .iter()
            .map(|p| Ok((p.display().to_string(), a.columns.load(p)?)))
            .collect::<ginimon::Result<Vec<_>>>()?;
        let reports = per_period_monitor(&holdouts, &new, &cfg)?;
        reports.iter().for_each(warn_all);
        emit_json(&reports, a.output.as_deref())?;
        reports.iter().any(|r| r.reject)
    };
    Ok(if reject {
        Outcome::Reject
    } else {
        Outcome::Done
    })
}

fn warn_all(r: &MonitoringReport) {
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

#[derive(Serialize)]
struct GroupTotals {
    source_before: u64,
    source_after: u64,
    target_before: u64,
    target_after: u64,
    total_before: u64,
    total_after: u64,
}

fn group_claims(d: &Dataset, idx: &[usize]) -> u64 {
    idx.iter().map(|&i| d.records()[i].response).sum()
}

fn inject(a: InjectArgs) -> CmdResult {
    let scenario = DriftScenario::from_key_values(&KeyValues::from_file(&a.scenario)?)?;
    let d = a.columns.load(&a.input)?;
    let out = inject_drift(&d, &scenario)?;
    let src = scenario.source.select(&d)?;
    let tgt = scenario.target.select(&d)?;
    write_csv(&out, &a.output)?;
    emit_json(
        &GroupTotals {
            source_before: group_claims(&d, &src),
            source_after: group_claims(&out, &src),
            target_before: group_claims(&d, &tgt),
            target_after: group_claims(&out, &tgt),
            total_before: d.total_response(),
            total_after: out.total_response(),
        },
        None,
    )?;
    Ok(Outcome::Done)
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let spec = SyntheticSpec::from_key_values(&KeyValues::from_file(&a.spec)?)?;
    let d = generate_portfolio(&spec)?;
    let mut w = writer(a.output.as_deref())?;
    write_csv_to(&d, &mut w)?;
    w.flush()?;
    Ok(Outcome::Done)
}

fn schedule(a: ScheduleArgs) -> CmdResult {
    let scenario = DriftScenario::from_key_values(&KeyValues::from_file(&a.scenario)?)?;
    let d = a.columns.load(&a.input)?;
    let periods = drift_schedule(
        &d,
        a.kind,
        a.periods,
        scenario.transfer_count,
        (&scenario.source, &scenario.target),
        scenario.seed,
    )?;
    fs::create_dir_all(&a.output_dir)?;
    for (label, dk) in &periods {
        let path = a.output_dir.join(format!("{label}.csv"));
        write_csv(dk, &path)?;
        println!("{}", path.display());
    }
    Ok(Outcome::Done)
}

fn read_reports(path: &Path) -> ginimon::Result<Vec<MonitoringReport>> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        single => vec![single],
    };
    items
        .into_iter()
        .map(|v| MonitoringReport::from_json(&v.to_string()))
        .collect()
}

/// `(low, high, count)` for `bins` equal-width bins spanning the values.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![(lo, hi, values.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let j = (((v - lo) / width) as usize).min(bins - 1);
        counts[j] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(j, c)| {
            let low = lo + j as f64 * width;
            let high = if j + 1 == bins {
                hi
            } else {
                lo + (j + 1) as f64 * width
            };
            (low, high, c)
        })
        .collect()
}

fn report(a: ReportArgs) -> CmdResult {
    let reports = read_reports(&a.input)?;
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "period,n_old,n_new,B,mean,sd,gini_new,z,p_two_sided,p_one_sided,sided,alpha,reject"
    )?;
    for r in &reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.period.as_deref().unwrap_or(""),
            r.n_old,
            r.n_new,
            r.replicates,
            r.mean,
            r.sd,
            r.gini_new,
            r.z,
            r.p_two_sided,
            r.p_one_sided,
            r.sided,
            r.alpha,
            r.reject
        )?;
    }
    if let Some(p) = &a.histogram {
        if a.bins == 0 {
            return Err(Error::config("--bins must be positive"));
        }
        let mut w = BufWriter::new(File::create(p)?);
        writeln!(w, "period,bin_low,bin_high,count")?;
        for r in &reports {
            let values = r.replicate_values.as_deref().ok_or_else(|| {
                Error::config(
                    "report has no replicate values; rerun monitor with --keep-replicates",
                )
            })?;
            for (low, high, count) in histogram(values, a.bins) {
                writeln!(
                    w,
                    "{},{low},{high},{count}",
                    r.period.as_deref().unwrap_or("")
                )?;
            }
        }
        w.flush()?;
    }
    Ok(Outcome::Done)
}
