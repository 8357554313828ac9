//! Configuration-driven experiment runner.
//!
//! `run` reads a TOML config (or the config echoed inside an earlier result file),
//! executes one experiment and writes `<output>.json` plus `<output>.csv`.
//! `emit` re-projects the rows of a result file into a named plot table.

mod experiments;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::ensemble::{Distribution, Field};
use crate::error::{Error, Result};
use crate::{c64, stats};

/// Exit status contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    CriteriaFailed = 1,
    Config = 2,
    Numerical = 3,
}

impl Status {
    pub fn of_error(e: &Error) -> Status {
        match e {
            Error::Numerical { .. } | Error::Io { .. } => Status::Numerical,
            Error::Config(_) | Error::Argument(_) | Error::OutOfRange(_) | Error::Precondition(_) => Status::Config,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MdeScan,
    CharAudit,
    LocallawScan,
    FlowDrift,
    FlowQv,
    Deloc,
    Impbound,
    EnsembleCompare,
}

/// One matrix size or several.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Many(Vec<usize>),
}

impl Sizes {
    pub fn list(&self) -> Vec<usize> {
        match self {
            Sizes::One(n) => vec![*n],
            Sizes::Many(v) => v.clone(),
        }
    }
}

/// A spectral parameter given as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZValue {
    Real(f64),
    Complex([f64; 2]),
}

impl ZValue {
    pub fn value(&self) -> c64 {
        match *self {
            ZValue::Real(x) => c64::new(x, 0.0),
            ZValue::Complex([re, im]) => c64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    #[serde(default = "default_envelope")]
    pub envelope_factor: f64,
    #[serde(default = "default_statistic_cap")]
    pub statistic_cap: f64,
    #[serde(default = "default_ks_cap")]
    pub ks_cap: f64,
    /// Required fraction for coverage-type criteria.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            envelope_factor: default_envelope(),
            statistic_cap: default_statistic_cap(),
            ks_cap: default_ks_cap(),
            coverage: default_coverage(),
        }
    }
}

fn default_envelope() -> f64 {
    10.0
}
fn default_statistic_cap() -> f64 {
    5.0
}
fn default_ks_cap() -> f64 {
    0.2
}
fn default_coverage() -> f64 {
    0.95
}
fn default_field() -> Field {
    Field::Complex
}
fn default_distribution() -> Distribution {
    Distribution::Gaussian
}
fn default_trials() -> usize {
    1
}
fn default_xi() -> f64 {
    0.01
}
fn default_steps() -> usize {
    64
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(alias = "N")]
    pub n: Sizes,
    #[serde(default = "default_field")]
    pub field: Field,
    #[serde(default = "default_distribution")]
    pub distribution: Distribution,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Spectral parameters; real entries are read as `|z|` on the real axis.
    #[serde(default)]
    pub z: Vec<ZValue>,
    /// Explicit `eta` values.
    #[serde(default)]
    pub eta: Vec<f64>,
    /// `eta rho = c log N / N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// `eta rho = a` directly; takes precedence over `c`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Size used by the characteristic audit, which needs no matrices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_n: Option<f64>,
    /// Characteristic grid steps, or flow steps for the flow experiments.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Second ensemble of a comparison; defaults to `distribution`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare_distribution: Option<Distribution>,
    /// Entry-variance multiplier of the second ensemble.
    #[serde(default = "default_scale")]
    pub variance_scale: f64,
    /// Comparison passes when the KS distance exceeds the cap (negative controls).
    #[serde(default)]
    pub expect_difference: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub output: String,
}

fn bad(field: &str, detail: impl std::fmt::Display) -> Error {
    Error::Config(format!("field `{field}`: {detail}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a TOML config, or the `config` member of a result document.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let rec: ResultRecord = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            rec.config.validate()?;
            return Ok(rec.config);
        }
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = self.n.list();
        if sizes.is_empty() {
            return Err(bad("n", "at least one size is required"));
        }
        let cap = match self.experiment {
            Experiment::FlowDrift | Experiment::FlowQv => crate::flow::FLOW_MAX_N,
            Experiment::Deloc | Experiment::Impbound => crate::deloc::DECOMPOSE_MAX_N,
            _ => crate::hermitization::SPECTRUM_MAX_N,
        };
        for &n in &sizes {
            if n < 2 || n > cap {
                return Err(bad("n", format!("{n} outside [2, {cap}] for this experiment")));
            }
        }
        if sizes.len() > 1 && self.experiment != Experiment::Deloc {
            return Err(bad("n", "several sizes are only supported by the deloc experiment"));
        }
        if self.trials == 0 {
            return Err(bad("trials", "must be positive"));
        }
        if self.experiment == Experiment::FlowDrift && self.trials < crate::flow::MIN_ENSEMBLE {
            return Err(bad("trials", format!("flow-drift needs at least {}", crate::flow::MIN_ENSEMBLE)));
        }
        if self.experiment == Experiment::EnsembleCompare && self.trials < 2 {
            return Err(bad("trials", "a comparison needs at least 2"));
        }
        for z in &self.z {
            let v = z.value();
            if !(v.norm() <= crate::mde::Z_MAX) {
                return Err(bad("z", format!("|z| = {} exceeds {}", v.norm(), crate::mde::Z_MAX)));
            }
        }
        if self.eta.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(bad("eta", "values must be positive and finite"));
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(bad("c", "must be positive"));
            }
        }
        if let Some(a) = self.a {
            if !(a > 0.0 && a < 1.0) {
                return Err(bad("a", "eta rho lies in (0, 1)"));
            }
        }
        if !(self.xi > 0.0 && self.xi <= crate::characteristics::XI_MAX) {
            return Err(bad("xi", format!("must lie in (0, {}]", crate::characteristics::XI_MAX)));
        }
        if self.experiment == Experiment::CharAudit && !self.synthetic_n.is_some_and(|n| n > 1.0) {
            return Err(bad("synthetic_n", "char-audit needs a synthetic size above 1"));
        }
        if self.steps == 0 {
            return Err(bad("steps", "must be positive"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt <= crate::ensemble::MAX_OU_DT) {
                return Err(bad("dt", format!("must lie in (0, {}]", crate::ensemble::MAX_OU_DT)));
            }
        }
        if !(self.variance_scale > 0.0 && self.variance_scale.is_finite()) {
            return Err(bad("variance_scale", "must be positive"));
        }
        let t = &self.thresholds;
        if !(t.envelope_factor >= 1.0) {
            return Err(bad("thresholds.envelope_factor", "must be at least 1"));
        }
        if !(t.statistic_cap > 0.0 && t.ks_cap > 0.0) {
            return Err(bad("thresholds", "caps must be positive"));
        }
        if !(t.coverage > 0.0 && t.coverage <= 1.0) {
            return Err(bad("thresholds.coverage", "must lie in (0, 1]"));
        }
        if self.output.trim().is_empty() {
            return Err(bad("output", "must be a non-empty path"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub criteria: Vec<Criterion>,
    pub notes: Vec<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: Summary,
    pub wall_clock_seconds: f64,
    pub version: String,
    /// Seconds since the Unix epoch at completion.
    pub timestamp: u64,
}

impl ResultRecord {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("result has no column `{name}`")))
    }
}

/// A flat table.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// Experiment output before timing metadata is attached.
pub struct Outcome {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub criteria: Vec<Criterion>,
    pub notes: Vec<String>,
}

/// Execute the configured experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<ResultRecord> {
    cfg.validate()?;
    let start = Instant::now();
    let out = experiments::dispatch(cfg)?;
    // Non-finite cells would not survive the JSON round trip.
    if out.rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cli", "experiment produced non-finite table entries"));
    }
    let pass = out.criteria.iter().all(|c| c.pass);
    let timestamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Ok(ResultRecord {
        config: cfg.clone(),
        columns: out.columns,
        rows: out.rows,
        summary: Summary { criteria: out.criteria, notes: out.notes, pass },
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp,
    })
}

fn output_stem(output: &str) -> PathBuf {
    let p = PathBuf::from(output);
    match p.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => p.with_extension(""),
        _ => p,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

/// Write `<stem>.json` and `<stem>.csv`; returns both paths.
pub fn persist(rec: &ResultRecord) -> Result<(PathBuf, PathBuf)> {
    let stem = output_stem(&rec.config.output);
    let json_path = stem.with_extension("json");
    let csv_path = stem.with_extension("csv");
    let json = serde_json::to_string_pretty(rec).map_err(|e| Error::numerical("cli", e.to_string()))? + "\n";
    write_file(&json_path, &json)?;
    let table = Table { columns: rec.columns.clone(), rows: rec.rows.clone() };
    write_file(&csv_path, &table.to_csv())?;
    Ok((json_path, csv_path))
}

/// Views understood by [`emit_plot_data`].
pub const VIEWS: [&str; 4] = ["rho-vs-eta", "stat-vs-N", "X1-vs-t", "z1-vs-z"];

fn project(rec: &ResultRecord, names: &[&str]) -> Result<Table> {
    let idx: Vec<usize> = names.iter().map(|n| rec.column(n)).collect::<Result<_>>()?;
    Ok(Table {
        columns: names.iter().map(|s| s.to_string()).collect(),
        rows: rec.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect(),
    })
}

fn require(rec: &ResultRecord, e: Experiment, view: &str) -> Result<()> {
    if rec.config.experiment == e {
        Ok(())
    } else {
        Err(Error::Config(format!("view `{view}` needs a {e:?} result, got {:?}", rec.config.experiment)))
    }
}

/// Re-project stored rows into a named view without recomputation.
pub fn emit_plot_data(rec: &ResultRecord, view: &str) -> Result<Table> {
    match view {
        "rho-vs-eta" => {
            require(rec, Experiment::MdeScan, view)?;
            project(rec, &["abs_z", "eta", "rho"])
        }
        "X1-vs-t" => {
            require(rec, Experiment::FlowDrift, view)?;
            project(rec, &["t", "mean_re_x1", "mean_im_x1", "mean_re_drift", "mean_im_drift"])
        }
        "z1-vs-z" => {
            require(rec, Experiment::LocallawScan, view)?;
            let t = project(rec, &["z_re", "z_im", "eta", "z1_re", "z1_im", "z2_re", "z2_im"])?;
            Ok(Table {
                columns: ["z_re", "z_im", "eta", "abs_z1", "abs_z2"].iter().map(|s| s.to_string()).collect(),
                rows: t.rows.iter().map(|r| vec![r[0], r[1], r[2], r[3].hypot(r[4]), r[5].hypot(r[6])]).collect(),
            })
        }
        "stat-vs-N" => {
            require(rec, Experiment::Deloc, view)?;
            let t = project(rec, &["n", "coordinate", "random"])?;
            let mut sizes: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
            sizes.dedup();
            let rows = sizes
                .iter()
                .map(|&n| {
                    let pick = |k: usize| t.rows.iter().filter(|r| r[0] == n).map(|r| r[k]).collect::<Vec<f64>>();
                    let (c, r) = (pick(1), pick(2));
                    let max = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max);
                    vec![n, c.len() as f64, stats::median(&c), stats::median(&r), max(&c), max(&r)]
                })
                .collect();
            Ok(Table {
                columns: ["n", "trials", "median_coordinate", "median_random", "max_coordinate", "max_random"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows,
            })
        }
        other => Err(Error::Config(format!("unknown view `{other}`; expected one of {}", VIEWS.join(", ")))),
    }
}

#[derive(Parser, Debug)]
#[command(name = "rmt-lab", version, about = "Random-matrix delocalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config or an earlier result file.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output path.
        #[arg(long)]
        out: Option<String>,
    },
    /// Re-project a result file into a plot table.
    Emit {
        result: PathBuf,
        view: String,
        /// Destination; defaults to `<result stem>.<view>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("RMT_LAB_THREADS") {
        let k: usize = v.trim().parse().map_err(|_| Error::Config(format!("RMT_LAB_THREADS must be a positive integer, got `{v}`")))?;
        if k == 0 {
            return Err(Error::Config("RMT_LAB_THREADS must be positive".into()));
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    Ok(())
}

fn run_command(config: &Path, seed: Option<u64>, out: Option<String>) -> Result<Status> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    let rec = execute(&cfg)?;
    let (json, csv) = persist(&rec)?;
    for c in &rec.summary.criteria {
        println!("{} {}: {:.6e} (threshold {:.6e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    for n in &rec.summary.notes {
        println!("note: {n}");
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(if rec.summary.pass { Status::Pass } else { Status::CriteriaFailed })
}

fn emit_command(result: &Path, view: &str, out: Option<PathBuf>) -> Result<Status> {
    let text = std::fs::read_to_string(result).map_err(|e| Error::Config(format!("cannot read {}: {e}", result.display())))?;
    let rec: ResultRecord = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", result.display())))?;
    let table = emit_plot_data(&rec, view)?;
    let dest = out.unwrap_or_else(|| {
        let stem = result.with_extension("");
        PathBuf::from(format!("{}.{view}.csv", stem.display()))
    });
    write_file(&dest, &table.to_csv())?;
    println!("wrote {}", dest.display());
    Ok(Status::Pass)
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::Config as i32 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, seed, out } => run_command(&config, seed, out),
        Command::Emit { result, view, out } => emit_command(&result, &view, out),
    });
    match result {
        Ok(s) => s as i32,
        Err(e) => {
            eprintln!("error: {e}");
            Status::of_error(&e) as i32
        }
    }
}
