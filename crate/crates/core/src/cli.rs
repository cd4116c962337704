//! Command-line front end. Every command prints a JSON report envelope.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::alignment::{DEFAULT_EMBED_DIM, DEFAULT_NULL_DRAWS};
use crate::analysis::{align_runs, run_baselines, run_emergence, run_series, AlignConfig, AnalysisConfig, BaselineInput};
use crate::error::{Error, Result};
use crate::metrics::{MetricVector, DEFAULT_FLATNESS_INTERVAL};
use crate::phiid::{DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::predict::prediction::{
    fit_predict_final_reward, Model, PredictConfig, DEFAULT_EARLY_FRACTION, DEFAULT_FOLDS, DEFAULT_REPEATS,
};
use crate::predict::screen::{screen_correlations, DEFAULT_ALPHA};
use crate::synth::{gen_synthetic_cohort, RunProfile};
use crate::trajdata::{read_bundle, validate_bundle, write_bundle, RunRecord};

/// Significant digits kept for every float in a report.
const REPORT_DIGITS: usize = 12;

#[derive(Debug, Parser)]
#[command(name = "phirl", version, about = "Causal emergence analysis of latent trajectory bundles")]
struct Cli {
    /// Worker threads (falls back to PHIRL_THREADS, then all cores). Never changes the output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a bundle against the format and its invariants.
    Validate(ValidateArgs),
    /// Per-episode emergence trajectories and checkpoint medians.
    Emerge(EmergeArgs),
    /// Baseline representation metrics per checkpoint.
    Metrics(MetricsArgs),
    /// Rank correlation of each baseline with emergence, run by run.
    Screen(ScreenArgs),
    /// Reward alignment of emergence-descriptor trajectories.
    Align(AlignArgs),
    /// Cross-validated prediction of final reward from early checkpoints.
    Predict(PredictArgs),
    /// Generate synthetic bundles from a JSON run profile.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Serialize)]
struct Output {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// Also write flat CSV tables into this directory.
    #[arg(long)]
    #[serde(skip)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    bundle: PathBuf,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct EmergenceOpts {
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    stride: usize,
}

#[derive(Debug, Args, Serialize)]
struct SeriesOpts {
    #[command(flatten)]
    #[serde(flatten)]
    emergence: EmergenceOpts,
    #[arg(long, default_value_t = DEFAULT_FLATNESS_INTERVAL)]
    flatness_interval: usize,
    #[arg(long, value_enum, default_value_t = BaselineInput::Raw)]
    baseline_input: BaselineInput,
}

impl SeriesOpts {
    fn config(&self) -> AnalysisConfig {
        AnalysisConfig {
            window: self.emergence.window,
            stride: self.emergence.stride,
            flatness_interval: self.flatness_interval,
            baseline_input: self.baseline_input,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct EmergeArgs {
    bundle: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    opts: EmergenceOpts,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    bundle: PathBuf,
    #[arg(long, value_enum, default_value_t = BaselineInput::Raw)]
    baseline_input: BaselineInput,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ScreenArgs {
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[command(flatten)]
    #[serde(flatten)]
    series: SeriesOpts,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct AlignArgs {
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    m: usize,
    /// Skip regressing embedding and reward on time.
    #[arg(long)]
    no_residualize: bool,
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    null_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    series: SeriesOpts,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EARLY_FRACTION)]
    early_frac: f64,
    #[arg(long, default_value_t = DEFAULT_FOLDS)]
    folds: usize,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    repeats: usize,
    #[arg(long, value_enum, default_value_t = Model::Forest)]
    model: Model,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    series: SeriesOpts,
    #[command(flatten)]
    #[serde(skip)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    #[arg(long)]
    profile: PathBuf,
    /// Bundle directory; a multi-run profile writes one sub-directory per run.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// What a command hands back for printing.
struct Report {
    results: Value,
    warnings: Vec<String>,
    tables: Vec<Table>,
    /// Exit with status 1 after printing (a failed validation).
    failed: bool,
}

impl Report {
    fn new(results: impl Serialize, warnings: Vec<String>) -> Result<Self> {
        Ok(Self {
            results: serde_json::to_value(results).map_err(internal)?,
            warnings,
            tables: Vec::new(),
            failed: false,
        })
    }

    fn with_table(mut self, table: Table) -> Self {
        self.tables.push(table);
        self
    }
}

struct Table {
    name: &'static str,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn internal(e: impl std::fmt::Display) -> Error {
    Error::Numerical(format!("internal: {e}"))
}

fn num(v: f64) -> String {
    if v.is_finite() {
        round_sig(v).to_string()
    } else {
        String::new()
    }
}

fn round_sig(v: f64) -> f64 {
    format!("{v:.prec$e}", prec = REPORT_DIGITS - 1)
        .parse()
        .unwrap_or(v)
}

/// Rounds every float to [`REPORT_DIGITS`] significant digits; integers are untouched.
fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<RunRecord>> {
    paths.iter().map(|p| read_bundle(p)).collect()
}

fn validate(args: &ValidateArgs) -> Result<Report> {
    let report = validate_bundle(&args.bundle);
    let mut table = Table::new("violations", &["kind", "checkpoint", "episode", "row", "column", "message"]);
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for v in &report.violations {
        table.push(vec![
            serde_json::to_value(v.kind).map_err(internal)?.as_str().unwrap_or_default().to_string(),
            opt(v.checkpoint),
            opt(v.episode),
            opt(v.row),
            opt(v.column),
            v.message.clone(),
        ]);
    }
    let mut out = Report::new(
        json!({ "valid": report.is_valid(), "violations": report.violations }),
        Vec::new(),
    )?
    .with_table(table);
    out.failed = !report.is_valid();
    Ok(out)
}

fn emerge(args: &EmergeArgs) -> Result<Report> {
    let run = read_bundle(&args.bundle)?;
    let cfg = AnalysisConfig {
        window: args.opts.window,
        stride: args.opts.stride,
        ..AnalysisConfig::default()
    };
    let em = run_emergence(&run, &cfg)?;
    let mut windows = Table::new("emergence", &["run_id", "train_step", "episode", "window", "start", "phi_r"]);
    let mut summary = Table::new("checkpoints", &["run_id", "train_step", "checkpoint_reward", "phi_r"]);
    let mut checkpoints = Vec::new();
    for (c, cp) in run.checkpoints.iter().enumerate() {
        let episodes = &em.episodes[c];
        for (e, traj) in episodes.iter().enumerate() {
            for (w, v) in traj.values.iter().enumerate() {
                windows.push(vec![
                    run.run_id.clone(),
                    cp.train_step.to_string(),
                    e.to_string(),
                    w.to_string(),
                    (w * traj.stride).to_string(),
                    num(*v),
                ]);
            }
        }
        summary.push(vec![
            run.run_id.clone(),
            cp.train_step.to_string(),
            num(cp.checkpoint_reward),
            num(em.phi[c]),
        ]);
        checkpoints.push(json!({
            "train_step": cp.train_step,
            "checkpoint_reward": cp.checkpoint_reward,
            "phi_r": em.phi[c],
            "episodes": episodes.iter().map(|t| json!({ "median": t.median, "values": t.values })).collect::<Vec<_>>(),
        }));
    }
    let results = json!({
        "run_id": run.run_id,
        "env_name": run.env_name,
        "phi_r_series": em.phi,
        "checkpoints": checkpoints,
    });
    Ok(Report::new(results, em.warnings)?.with_table(windows).with_table(summary))
}

fn metrics(args: &MetricsArgs) -> Result<Report> {
    let run = read_bundle(&args.bundle)?;
    let cfg = AnalysisConfig {
        baseline_input: args.baseline_input,
        ..AnalysisConfig::default()
    };
    let base = run_baselines(&run, &cfg)?;
    let mut header = vec!["run_id", "train_step", "checkpoint_reward"];
    header.extend(MetricVector::NAMES);
    let mut table = Table::new("metrics", &header);
    let mut checkpoints = Vec::new();
    for (cp, m) in run.checkpoints.iter().zip(&base.checkpoints) {
        let mut row = vec![run.run_id.clone(), cp.train_step.to_string(), num(cp.checkpoint_reward)];
        row.extend(m.to_array().iter().map(|v| num(*v)));
        table.push(row);
        checkpoints.push(json!({
            "train_step": cp.train_step,
            "checkpoint_reward": cp.checkpoint_reward,
            "metrics": m,
        }));
    }
    let results = json!({ "run_id": run.run_id, "env_name": run.env_name, "checkpoints": checkpoints });
    Ok(Report::new(results, base.warnings)?.with_table(table))
}

fn series_for(paths: &[PathBuf], opts: &SeriesOpts) -> Result<(Vec<crate::analysis::RunSeries>, Vec<String>)> {
    let runs = load_runs(paths)?;
    let cfg = opts.config();
    let series = runs
        .par_iter()
        .map(|r| run_series(r, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let warnings = series.iter().flat_map(|s| s.warnings().cloned()).collect();
    Ok((series, warnings))
}

fn screen(args: &ScreenArgs) -> Result<Report> {
    let (series, mut warnings) = series_for(&args.bundles, &args.series)?;
    let report = screen_correlations(&series, args.alpha)?;
    warnings.extend(report.warnings.iter().cloned());
    let mut table = Table::new("screen", &["metric", "run_id", "rho", "p_value", "significant"]);
    for m in &report.metrics {
        for r in &m.runs {
            table.push(vec![
                m.metric.clone(),
                r.run_id.clone(),
                r.rho.map(num).unwrap_or_default(),
                r.p_value.map(num).unwrap_or_default(),
                r.significant.to_string(),
            ]);
        }
    }
    Ok(Report::new(&report, warnings)?.with_table(table))
}

fn align(args: &AlignArgs) -> Result<Report> {
    let (series, warnings) = series_for(&args.bundles, &args.series)?;
    let cfg = AlignConfig {
        m: args.m,
        residualize: !args.no_residualize,
        null_draws: args.null_draws,
        seed: args.seed,
    };
    let report = align_runs(&series, &cfg, args.series.flatness_interval)?;
    let mut table = Table::new(
        "alignment",
        &["env_name", "run_id", "global_alignment", "local_alignment", "degenerate", "null_median"],
    );
    for r in &report.runs {
        table.push(vec![
            r.env_name.clone(),
            r.run_id.clone(),
            num(r.scores.global_alignment),
            num(r.scores.local_alignment),
            r.scores.degenerate.to_string(),
            num(r.null_median),
        ]);
    }
    Ok(Report::new(&report, warnings)?.with_table(table))
}

fn predict(args: &PredictArgs) -> Result<Report> {
    let (series, mut warnings) = series_for(&args.bundles, &args.series)?;
    let cfg = PredictConfig {
        early_fraction: args.early_frac,
        folds: args.folds,
        repeats: args.repeats,
        model: args.model,
        seed: args.seed,
    };
    let report = fit_predict_final_reward(&series, &cfg, args.series.flatness_interval)?;
    warnings.extend(report.warnings.iter().cloned());
    let mut table = Table::new("prediction", &["feature_set", "repeat", "rho"]);
    for fs in &report.feature_sets {
        for (r, rho) in fs.rho.iter().enumerate() {
            table.push(vec![fs.feature_set.clone(), r.to_string(), num(*rho)]);
        }
    }
    Ok(Report::new(&report, warnings)?.with_table(table))
}

fn synth(args: &SynthArgs) -> Result<Report> {
    let text = std::fs::read_to_string(&args.profile).map_err(|e| Error::io(&args.profile, e))?;
    let profile: RunProfile = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: args.profile.clone(),
        source,
    })?;
    let runs = gen_synthetic_cohort(&profile, args.seed)?;
    let mut written = Vec::new();
    for run in &runs {
        let dir = if runs.len() == 1 {
            args.out.clone()
        } else {
            args.out.join(&run.run_id)
        };
        write_bundle(run, &dir)?;
        written.push(json!({
            "run_id": run.run_id,
            "path": dir,
            "n_checkpoints": run.checkpoints.len(),
        }));
    }
    Report::new(json!({ "profile": profile, "bundles": written }), Vec::new())
}

fn write_tables(dir: &Path, tables: &[Table]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(&t.header).map_err(|e| csv_error(&path, e))?;
        for row in &t.rows {
            w.write_record(row).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn config_of(args: &impl Serialize) -> Result<Value> {
    serde_json::to_value(args).map_err(internal)
}

fn execute(command: &Command) -> Result<(Report, &'static str, Value, Option<&Output>)> {
    Ok(match command {
        Command::Validate(a) => (validate(a)?, "validate", config_of(a)?, Some(&a.output)),
        Command::Emerge(a) => (emerge(a)?, "emerge", config_of(a)?, Some(&a.output)),
        Command::Metrics(a) => (metrics(a)?, "metrics", config_of(a)?, Some(&a.output)),
        Command::Screen(a) => (screen(a)?, "screen", config_of(a)?, Some(&a.output)),
        Command::Align(a) => (align(a)?, "align", config_of(a)?, Some(&a.output)),
        Command::Predict(a) => (predict(a)?, "predict", config_of(a)?, Some(&a.output)),
        Command::Synth(a) => (synth(a)?, "synth", config_of(a)?, None),
    })
}

fn emit(report: Report, command: &str, config: Value, output: Option<&Output>) -> Result<()> {
    let envelope = json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "results": report.results,
        "warnings": report.warnings,
    });
    let mut text = serde_json::to_string_pretty(&canonicalize(envelope)).map_err(internal)?;
    text.push('\n');
    match output.and_then(|o| o.out.as_ref()) {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    if let Some(dir) = output.and_then(|o| o.csv.as_ref()) {
        write_tables(dir, &report.tables)?;
    }
    Ok(())
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("PHIRL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::input(format!("PHIRL_THREADS={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::InvalidBundle(all) = &e {
                for v in all.iter().skip(1) {
                    eprintln!("  {v}");
                }
            }
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let work = || -> Result<bool> {
        let (report, name, config, output) = execute(&cli.command)?;
        let ok = !report.failed;
        emit(report, name, config, output)?;
        Ok(ok)
    };
    match thread_count(cli.threads)? {
        Some(0) => Err(Error::input("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(internal)?
            .install(work),
        None => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_are_rounded_to_twelve_digits() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.234_567_890_123_456e-7), 1.234_567_890_12e-7);
        let v = canonicalize(json!({"b": [1.000_000_000_000_1, 3], "a": f64::NAN}));
        assert_eq!(v.to_string(), r#"{"a":null,"b":[1.0,3]}"#);
    }

    #[test]
    fn parse_errors_exit_with_one() {
        assert_eq!(run(["phirl", "emerge", "--bogus"]), 1);
        assert_eq!(run(["phirl"]), 1);
        assert_eq!(run(["phirl", "--help"]), 0);
    }

    #[test]
    fn missing_bundle_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run([OsString::from("phirl"), "emerge".into(), dir.path().join("nope").into()]), 1);
    }
}
