//! Command-line front end. Every report starts with its provenance (tool
//! version, input digest, seed and parameters) so that a file can be traced
//! back to the exact invocation that produced it. Reports contain no wall
//! clock readings: identical inputs and flags give byte-identical output.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::{DateTime, Duration, DurationRound, FixedOffset, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{self, cpr, mean_correlation, rsd_summary, series_coincidence, vm_correlation};
use crate::classification::{run_task, write_reports_csv, Hyperparams, Task, TaskConfig};
use crate::forecasting::{evaluate_all, ArimaOrder, EvalConfig, ForecastReport, ModelKind};
use crate::harness::{export_dataset, run_campaign, Bins, SimulatedClock, SuiteBackend, SuiteConfig, SystemClock};
use crate::model::{format_value, ingest_csv_lenient, to_series, Catalog, Dataset, MetricSpec, VmClass, VmDescriptor};
use crate::variability::{aggregate_vi, ViWeights};
use crate::{simulate, stats};

pub const TOOL: &str = "cloudvar";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const STORE_ENV: &str = "CLOUDVAR_STORE";
const DEFAULT_STORE: &str = "cloudvar-store";

#[derive(Debug, Parser)]
#[command(
    name = "cloudvar",
    version,
    about = "Randomized VM benchmarking and performance-variability analysis"
)]
pub struct Cli {
    /// Emit JSON instead of CSV.
    #[arg(long, global = true)]
    pub json: bool,
    /// Write the report to this file instead of stdout.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute benchmark rounds and append them to the store.
    Run(RunArgs),
    /// Flatten the store (or a CSV) into the measurement CSV schema.
    Export(InputArgs),
    /// Variability indicator per provider and VM class.
    Vi(ViArgs),
    /// Descriptive analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Hold-out forecasting evaluation (naive, VAR, ARIMA).
    Forecast(ForecastArgs),
    /// Temporal classification with stratified k-fold CV.
    Classify(ClassifyArgs),
    /// Every report into one directory.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Wall clock, one round per period.
    Real,
    /// Simulated clock starting at the configured start time; no sleeping.
    Accelerated,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Campaign configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ClockMode::Accelerated)]
    pub clock: ClockMode,
    /// First round index.
    #[arg(long, default_value_t = 0)]
    pub start: u64,
    /// Round index to stop before.
    #[arg(long, default_value_t = 24)]
    pub stop: u64,
    /// Store directory.
    #[arg(long, env = STORE_ENV, default_value = DEFAULT_STORE)]
    pub store: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Measurement CSV or store directory [default: the store directory].
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[arg(long, env = STORE_ENV, default_value = DEFAULT_STORE)]
    pub store: PathBuf,
    /// Campaign configuration, for the metric catalog and VM prices.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ViArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Breadth, dispersion and speed weights as `wb,wd,ws`, or `equal`.
    #[arg(long, default_value = "equal")]
    pub weights: ViWeights,
    /// Change-vector threshold as a fraction (0 keeps every adverse deviation).
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    /// One row per (vm, metric) series instead of per group.
    #[arg(long)]
    pub series: bool,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// RSD per metric across VMs, raw and after 5th-95th percentile filtering.
    Rsd(ProviderArgs),
    /// Mean per-VM Pearson correlation matrix per provider.
    Corr(ProviderArgs),
    /// Gradient coincidence between metric pairs of each VM.
    Coincidence(CoincidenceArgs),
    /// Cost/performance ratio per VM and metric.
    Cpr(ProviderArgs),
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Restrict to one provider.
    #[arg(long)]
    pub provider: Option<String>,
}

#[derive(Debug, Args)]
pub struct CoincidenceArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// First metric; every pair when omitted.
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    /// Number of largest variations compared.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.6)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated subset of naive, var, arima.
    #[arg(long, default_value = "naive,var,arima")]
    pub models: String,
    /// ARIMA order p,d,q.
    #[arg(long, default_value = "1,1,1")]
    pub order: ArimaOrder,
    #[arg(long, default_value_t = 5)]
    pub horizon: usize,
    #[arg(long, default_value_t = 100)]
    pub min_points: usize,
    /// Emit the metric x VM MASE table of one model instead of rows.
    #[arg(long)]
    pub table: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// timeday, dayweek, weekend or all.
    #[arg(long, default_value = "all")]
    pub task: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// UTC offset of the collection site, e.g. +02:00.
    #[arg(long, default_value = "+00:00", allow_hyphen_values = true)]
    pub tz: FixedOffset,
    /// Shuffle labels before training (null baseline).
    #[arg(long)]
    pub shuffle_labels: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value = "+00:00", allow_hyphen_values = true)]
    pub tz: FixedOffset,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CliError(pub String);

impl CliError {
    fn new(context: &str, e: impl std::fmt::Display) -> Self {
        CliError(format!("{context}: {e}"))
    }
}

/// Campaign file: the suite plus the VMs to measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Start of the accelerated clock.
    #[serde(default)]
    pub start: Option<DateTime<Utc>>,
    #[serde(flatten)]
    pub suite: SuiteConfig,
    #[serde(default)]
    pub vms: Vec<VmDescriptor>,
    /// Replaces the default 28-metric catalog.
    #[serde(default)]
    pub catalog: Option<Vec<MetricSpec>>,
}

impl CampaignConfig {
    pub fn catalog(&self) -> Result<Catalog, CliError> {
        match &self.catalog {
            Some(specs) => Catalog::new(specs.clone()).map_err(|e| CliError::new("catalog", e)),
            None => Ok(Catalog::default()),
        }
    }

    /// Synthetic campaign over two providers with two VMs each: what
    /// `cloudvar run` needs to exercise the pipeline without real machines.
    pub fn synthetic_demo(seed: u64) -> Self {
        let vm = |provider: &str, class: VmClass, type_name: &str, instance: u32, cost: f64| VmDescriptor {
            provider: provider.into(),
            vm_class: class,
            type_name: type_name.into(),
            instance_ordinal: instance,
            vcpus: 2,
            ram_gib: 4.0,
            cost_per_hour: cost,
        };
        Self {
            seed: Some(seed),
            start: Some(simulate::epoch()),
            suite: SuiteConfig::synthetic_default(seed),
            vms: vec![
                vm("aws", VmClass::C2, "t3.medium", 1, 0.0416),
                vm("aws", VmClass::C2, "t3.medium", 2, 0.0416),
                vm("chameleon", VmClass::C2, "m1.medium", 1, 0.0),
                vm("chameleon", VmClass::C2, "m1.medium", 2, 0.0),
            ],
            catalog: None,
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::new("config", e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::new(&format!("config {}", path.display()), e))?;
        let cfg: CampaignConfig =
            toml::from_str(&text).map_err(|e| CliError::new(&format!("config {}", path.display()), e))?;
        cfg.suite
            .validate(&cfg.catalog()?)
            .map_err(|e| CliError::new("config", e))?;
        let mut keys = BTreeSet::new();
        for vm in &cfg.vms {
            vm.validate().map_err(|e| CliError::new("config", e))?;
            if !keys.insert(vm.key()) {
                return Err(CliError(format!("config: VM {} listed twice", vm.key())));
            }
        }
        Ok(cfg)
    }
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input_sha256: String,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, String>,
}

impl Provenance {
    fn new(command: &str, input_sha256: &str, seed: Option<u64>) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            input_sha256: input_sha256.into(),
            seed,
            params: BTreeMap::new(),
        }
    }

    fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    fn header(&self) -> String {
        let mut s = format!(
            "# tool: {} {}\n# command: {}\n# input_sha256: {}\n",
            self.tool, self.version, self.command, self.input_sha256
        );
        if let Some(seed) = self.seed {
            s.push_str(&format!("# seed: {seed}\n"));
        }
        for (k, v) in &self.params {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

/// A rendered report in both formats, plus its warning count.
#[derive(Debug, Clone)]
pub struct Report {
    pub name: &'static str,
    pub provenance: Provenance,
    pub csv: String,
    pub json: serde_json::Value,
    pub warnings: usize,
}

impl Report {
    pub fn render(&self, as_json: bool) -> String {
        if as_json {
            let doc = json!({ "provenance": self.provenance, "report": self.json });
            let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
            s.push('\n');
            s
        } else {
            format!("{}{}", self.provenance.header(), self.csv)
        }
    }
}

fn csv_string(write: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        write(&mut w).map_err(|e| CliError::new("csv", e))?;
        w.flush().map_err(|e| CliError::new("csv", e))?;
    }
    String::from_utf8(buf).map_err(|e| CliError::new("csv", e))
}

const SHOWN_WARNINGS: usize = 20;
static WARNINGS_SHOWN: AtomicUsize = AtomicUsize::new(0);

// Only the first few warnings reach stderr; the exit summary has the total.
fn warn(msg: std::fmt::Arguments<'_>) {
    if WARNINGS_SHOWN.fetch_add(1, Ordering::Relaxed) < SHOWN_WARNINGS {
        eprintln!("warning: {msg}");
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_value).unwrap_or_default()
}

/// Loaded input with its digest and the number of rejected rows.
pub struct Input {
    pub dataset: Dataset,
    pub catalog: Catalog,
    pub config: Option<CampaignConfig>,
    pub digest: String,
    pub rejected: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_input(args: &InputArgs) -> Result<Input, CliError> {
    let config = args.config.as_deref().map(CampaignConfig::load).transpose()?;
    let catalog = match &config {
        Some(c) => c.catalog()?,
        None => Catalog::default(),
    };
    let path = args.input.clone().unwrap_or_else(|| args.store.clone());
    if path.is_dir() {
        let bins = Bins::open(&path).map_err(|e| CliError::new("store", e))?;
        let rounds = bins
            .load_all()
            .map_err(|e| CliError::new(&format!("store {}", path.display()), e))?;
        let mut hasher = Sha256::new();
        let mut names: Vec<PathBuf> = fs::read_dir(&path)
            .map_err(|e| CliError::new("store", e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
            .collect();
        names.sort();
        for p in names {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            hasher.update(name.as_bytes());
            hasher.update(fs::read(&p).map_err(|e| CliError::new("store", e))?);
        }
        let dataset = export_dataset(&rounds);
        let unknown = dataset
            .measurements
            .iter()
            .filter(|m| catalog.get(&m.metric).is_none())
            .count();
        Ok(Input {
            dataset: Dataset::new(
                dataset
                    .measurements
                    .into_iter()
                    .filter(|m| catalog.get(&m.metric).is_some())
                    .collect(),
            ),
            catalog,
            config,
            digest: hex::encode(hasher.finalize()),
            rejected: unknown,
        })
    } else {
        let bytes = fs::read(&path).map_err(|e| CliError::new(&format!("input {}", path.display()), e))?;
        let (dataset, rejected) = ingest_csv_lenient(bytes.as_slice(), &catalog)
            .map_err(|e| CliError::new(&format!("input {}", path.display()), e))?;
        for r in &rejected {
            warn(format_args!("{r}"));
        }
        Ok(Input {
            dataset,
            catalog,
            config,
            digest: sha256_hex(&bytes),
            rejected: rejected.len(),
        })
    }
}

fn providers(dataset: &Dataset, only: &Option<String>) -> Vec<String> {
    dataset
        .providers()
        .into_iter()
        .filter(|p| only.as_ref().is_none_or(|o| o == p))
        .collect()
}

pub fn export_report(input: &Input) -> Result<Report, CliError> {
    let mut buf = Vec::new();
    input.dataset.write_csv(&mut buf).map_err(|e| CliError::new("csv", e))?;
    Ok(Report {
        name: "export",
        provenance: Provenance::new("export", &input.digest, None),
        csv: String::from_utf8(buf).map_err(|e| CliError::new("csv", e))?,
        json: serde_json::to_value(&input.dataset.measurements).map_err(|e| CliError::new("json", e))?,
        warnings: input.rejected,
    })
}

pub fn vi_report(input: &Input, weights: ViWeights, threshold: f64, per_series: bool) -> Result<Report, CliError> {
    let table = aggregate_vi(&input.dataset, &input.catalog, threshold, weights).map_err(|e| CliError::new("vi", e))?;
    let csv = if per_series {
        csv_string(|w| {
            w.write_record(["vm", "metric", "breadth", "dispersion", "speed", "vi", "n_points"])?;
            for r in &table.series {
                w.write_record([
                    r.vm.to_string(),
                    r.metric.clone(),
                    format_value(r.result.breadth),
                    format_value(r.result.dispersion),
                    format_value(r.result.speed),
                    format_value(r.result.vi),
                    r.result.n_points.to_string(),
                ])?;
            }
            Ok(())
        })?
    } else {
        csv_string(|w| {
            w.write_record([
                "provider",
                "vm_class",
                "breadth",
                "dispersion",
                "speed",
                "vi",
                "n_series",
                "skipped",
            ])?;
            for g in &table.groups {
                w.write_record([
                    g.provider.clone(),
                    g.vm_class.to_string(),
                    format_value(g.breadth),
                    format_value(g.dispersion),
                    format_value(g.speed),
                    format_value(g.vi),
                    g.n_series.to_string(),
                    g.skipped.to_string(),
                ])?;
            }
            Ok(())
        })?
    };
    for s in &table.skipped {
        warn(format_args!("vi skipped {} {}: {}", s.vm, s.metric, s.reason));
    }
    Ok(Report {
        name: "vi",
        provenance: Provenance::new("vi", &input.digest, None)
            .param(
                "weights",
                format!("{},{},{}", weights.breadth, weights.dispersion, weights.speed),
            )
            .param("threshold", threshold)
            .param("rows", if per_series { "series" } else { "groups" }),
        csv,
        json: serde_json::to_value(&table).map_err(|e| CliError::new("json", e))?,
        warnings: table.skipped.len() + input.rejected,
    })
}

pub fn rsd_report(input: &Input, provider: &Option<String>) -> Result<Report, CliError> {
    let mut summaries = Vec::new();
    for p in providers(&input.dataset, provider) {
        summaries.push(rsd_summary(&input.dataset, &p).map_err(|e| CliError::new("rsd", e))?);
    }
    if summaries.is_empty() {
        return Err(CliError("rsd: no data for the selection".into()));
    }
    let csv = csv_string(|w| {
        w.write_record(["provider", "metric", "avg", "min", "max", "n_vms", "filtered_avg"])?;
        for s in &summaries {
            for r in &s.rows {
                w.write_record([
                    s.provider.clone(),
                    r.metric.clone(),
                    format_value(r.avg),
                    format_value(r.min),
                    format_value(r.max),
                    r.n_vms.to_string(),
                    opt(r.filtered_avg),
                ])?;
            }
        }
        Ok(())
    })?;
    Ok(Report {
        name: "rsd",
        provenance: Provenance::new("analyze rsd", &input.digest, None)
            .param("filter", "5-95")
            .param("provider", provider.as_deref().unwrap_or("all")),
        csv,
        json: serde_json::to_value(&summaries).map_err(|e| CliError::new("json", e))?,
        warnings: input.rejected,
    })
}

pub fn corr_report(input: &Input, provider: &Option<String>) -> Result<Report, CliError> {
    let ids: Vec<&str> = input.catalog.ids().collect();
    let mut warnings = input.rejected;
    let mut out = Vec::new();
    for p in providers(&input.dataset, provider) {
        let subset = input.dataset.for_provider(&p);
        let mut matrices = Vec::new();
        for vm in subset.vms() {
            match vm_correlation(&subset, &vm, &ids) {
                Ok(m) => matrices.push(m),
                Err(e) => {
                    warnings += 1;
                    warn(format_args!("correlation skipped {vm}: {e}"));
                }
            }
        }
        if !matrices.is_empty() {
            out.push((p, mean_correlation(&matrices, &ids)));
        }
    }
    let csv = csv_string(|w| {
        w.write_record(["provider", "metric_a", "metric_b", "r"])?;
        for (p, m) in &out {
            for i in 0..m.metrics.len() {
                for j in 0..m.metrics.len() {
                    w.write_record([p.clone(), m.metrics[i].clone(), m.metrics[j].clone(), opt(m.get(i, j))])?;
                }
            }
        }
        Ok(())
    })?;
    let json: BTreeMap<&String, &analysis::CorrelationMatrix> = out.iter().map(|(p, m)| (p, m)).collect();
    Ok(Report {
        name: "corr",
        provenance: Provenance::new("analyze corr", &input.digest, None)
            .param("provider", provider.as_deref().unwrap_or("all")),
        csv,
        json: serde_json::to_value(&json).map_err(|e| CliError::new("json", e))?,
        warnings,
    })
}

pub fn coincidence_report(
    input: &Input,
    a: &Option<String>,
    b: &Option<String>,
    n: usize,
    threshold: f64,
) -> Result<Report, CliError> {
    let mut warnings = input.rejected;
    let mut verdicts = Vec::new();
    for vm in input.dataset.vms() {
        let present = input.dataset.metrics();
        let metrics: Vec<&str> = input.catalog.ids().filter(|m| present.contains(*m)).collect();
        let pairs: Vec<(String, String)> = match (a, b) {
            (Some(a), Some(b)) => vec![(a.clone(), b.clone())],
            (Some(a), None) | (None, Some(a)) => metrics
                .iter()
                .filter(|m| **m != a)
                .map(|m| (a.clone(), m.to_string()))
                .collect(),
            (None, None) => metrics
                .iter()
                .enumerate()
                .flat_map(|(i, x)| metrics[i + 1..].iter().map(move |y| (x.to_string(), y.to_string())))
                .collect(),
        };
        for (ma, mb) in pairs {
            let result = to_series(&input.dataset, &ma, &vm)
                .and_then(|sa| Ok((sa, to_series(&input.dataset, &mb, &vm)?)))
                .map_err(|e| e.to_string())
                .and_then(|(sa, sb)| series_coincidence(&sa, &sb, n, threshold).map_err(|e| e.to_string()));
            match result {
                Ok(v) => verdicts.push((vm.clone(), v)),
                Err(e) => {
                    warnings += 1;
                    warn(format_args!("coincidence skipped {vm} {ma}/{mb}: {e}"));
                }
            }
        }
    }
    let csv = csv_string(|w| {
        w.write_record(["vm", "metric_a", "metric_b", "n", "overlap", "threshold", "related"])?;
        for (vm, v) in &verdicts {
            w.write_record([
                vm.to_string(),
                v.metric_a.clone(),
                v.metric_b.clone(),
                v.n.to_string(),
                v.overlap.to_string(),
                format_value(v.threshold),
                v.related.to_string(),
            ])?;
        }
        Ok(())
    })?;
    let json: Vec<_> = verdicts
        .iter()
        .map(|(vm, v)| json!({ "vm": vm, "verdict": v }))
        .collect();
    Ok(Report {
        name: "coincidence",
        provenance: Provenance::new("analyze coincidence", &input.digest, None)
            .param("n", n)
            .param("threshold", threshold)
            .param(
                "pair",
                format!("{}/{}", a.as_deref().unwrap_or("*"), b.as_deref().unwrap_or("*")),
            ),
        csv,
        json: json.into(),
        warnings,
    })
}

pub fn cpr_report(input: &Input, provider: &Option<String>) -> Result<Report, CliError> {
    let Some(config) = &input.config else {
        return Err(CliError("cpr: --config with VM prices is required".into()));
    };
    let prices: BTreeMap<_, f64> = config.vms.iter().map(|v| (v.key(), v.cost_per_hour)).collect();
    let mut warnings = input.rejected;
    let mut rows = Vec::new();
    for vm in input.dataset.vms() {
        if provider.as_ref().is_some_and(|p| *p != vm.provider) {
            continue;
        }
        let Some(cost) = prices.get(&vm) else {
            warnings += 1;
            warn(format_args!("no price for {vm}"));
            continue;
        };
        for spec in &input.catalog.metrics {
            let Ok(series) = to_series(&input.dataset, &spec.id, &vm) else {
                continue;
            };
            let mean = stats::mean(&series.values());
            match cpr(mean, spec.direction, *cost) {
                Ok(c) => rows.push(json!({
                    "provider": vm.provider, "vm": vm.to_string(), "metric": spec.id,
                    "direction": spec.direction.to_string(), "mean": mean, "cost_per_hour": cost,
                    "cpr": c.ratio, "excluded": c.excluded,
                })),
                Err(e) => {
                    warnings += 1;
                    warn(format_args!("cpr skipped {vm} {}: {e}", spec.id));
                }
            }
        }
    }
    let csv = csv_string(|w| {
        w.write_record([
            "provider",
            "vm",
            "metric",
            "direction",
            "mean",
            "cost_per_hour",
            "cpr",
            "excluded",
        ])?;
        for r in &rows {
            let s = |k: &str| r[k].as_str().unwrap_or_default().to_string();
            let f = |k: &str| format_value(r[k].as_f64().unwrap_or(f64::NAN));
            w.write_record([
                s("provider"),
                s("vm"),
                s("metric"),
                s("direction"),
                f("mean"),
                f("cost_per_hour"),
                f("cpr"),
                r["excluded"].to_string(),
            ])?;
        }
        Ok(())
    })?;
    Ok(Report {
        name: "cpr",
        provenance: Provenance::new("analyze cpr", &input.digest, None)
            .param("provider", provider.as_deref().unwrap_or("all")),
        csv,
        json: rows.into(),
        warnings,
    })
}

fn forecast_rows_csv(report: &ForecastReport) -> Result<String, CliError> {
    csv_string(|w| {
        w.write_record([
            "vm",
            "metric",
            "model",
            "horizon",
            "mae",
            "mae_normalized",
            "mase",
            "naive_denominator",
            "stationary",
            "flag",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.vm.to_string(),
                r.metric.clone(),
                r.model.to_string(),
                r.horizon.to_string(),
                format_value(r.mae),
                format_value(r.mae_normalized),
                format_value(r.mase),
                format_value(r.naive_denominator),
                r.stationary.map(|s| s.to_string()).unwrap_or_default(),
                r.flag().to_string(),
            ])?;
        }
        Ok(())
    })
}

pub fn forecast_report(input: &Input, cfg: &EvalConfig, table: Option<ModelKind>) -> Result<Report, CliError> {
    let report = evaluate_all(&input.dataset, &input.catalog, cfg);
    for s in &report.skipped {
        warn(format_args!(
            "forecast skipped {} {} {}: {}",
            s.vm, s.metric, s.model, s.reason
        ));
    }
    let csv = match table {
        Some(model) => {
            let mut buf = Vec::new();
            report
                .write_table_csv(model, &mut buf)
                .map_err(|e| CliError::new("csv", e))?;
            String::from_utf8(buf).map_err(|e| CliError::new("csv", e))?
        }
        None => forecast_rows_csv(&report)?,
    };
    let models: Vec<String> = cfg.models.iter().map(|m| m.to_string()).collect();
    let mut prov = Provenance::new("forecast", &input.digest, None)
        .param("models", models.join(","))
        .param("order", cfg.order)
        .param("horizon", cfg.horizon)
        .param("min_points", cfg.min_points)
        .param("var_lag", cfg.var_lag)
        .param("max_iter", cfg.fit.max_iter)
        .param("tol", cfg.fit.tol);
    if let Some(m) = table {
        prov = prov.param("table", m);
    }
    Ok(Report {
        name: "forecast",
        provenance: prov,
        csv,
        json: serde_json::to_value(&report).map_err(|e| CliError::new("json", e))?,
        warnings: report.skipped.len() + input.rejected,
    })
}

fn parse_tasks(s: &str) -> Result<Vec<Task>, CliError> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Task::ALL.to_vec());
    }
    s.split(',').map(|t| t.parse::<Task>().map_err(CliError)).collect()
}

pub fn classify_report(input: &Input, tasks: &[Task], cfg: &TaskConfig) -> Result<Report, CliError> {
    let mut reports = Vec::new();
    let mut warnings = input.rejected;
    for task in tasks {
        for p in input.dataset.providers() {
            match run_task(&input.dataset, &input.catalog, &p, *task, cfg) {
                Ok(r) => {
                    if r.unconverged_folds > 0 {
                        eprintln!(
                            "note: {task} {p}: {} folds stopped at the iteration budget",
                            r.unconverged_folds
                        );
                    }
                    reports.push(r);
                }
                Err(e) => {
                    warnings += 1;
                    warn(format_args!("{task} {p}: {e}"));
                }
            }
        }
    }
    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf).map_err(|e| CliError::new("csv", e))?;
    let names: Vec<String> = tasks.iter().map(|t| t.to_string()).collect();
    Ok(Report {
        name: "classify",
        provenance: Provenance::new("classify", &input.digest, Some(cfg.seed))
            .param("tasks", names.join(","))
            .param("folds", cfg.folds)
            .param("tz", cfg.tz)
            .param("lambda", cfg.hyperparams.lambda)
            .param("iterations", cfg.hyperparams.iterations)
            .param("shuffle_labels", cfg.shuffle_labels),
        csv: String::from_utf8(buf).map_err(|e| CliError::new("csv", e))?,
        json: serde_json::to_value(&reports).map_err(|e| CliError::new("json", e))?,
        warnings,
    })
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    config: String,
    config_sha256: String,
    seed: u64,
    clock: ClockMode,
    store: String,
    start_round: u64,
    stop_round: u64,
    vms: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    campaign_start: Option<&'a DateTime<Utc>>,
}

pub fn run_command(args: &RunArgs) -> Result<Report, CliError> {
    if args.stop <= args.start {
        return Err(CliError(format!("empty round range {}..{}", args.start, args.stop)));
    }
    let bytes = fs::read(&args.config).map_err(|e| CliError::new(&format!("config {}", args.config.display()), e))?;
    let config = CampaignConfig::load(&args.config)?;
    if config.vms.is_empty() {
        return Err(CliError("config: no VMs".into()));
    }
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let vms: Vec<_> = config.vms.iter().map(VmDescriptor::key).collect();
    let bins = Bins::open(&args.store).map_err(|e| CliError::new("store", e))?;
    let existing = bins.load_all().map_err(|e| CliError::new("store", e))?;
    if let Some(r) = existing
        .iter()
        .find(|r| vms.contains(&r.vm) && (args.start..args.stop).contains(&r.round_index))
    {
        return Err(CliError(format!(
            "store already holds round {} of {}",
            r.round_index, r.vm
        )));
    }

    let period = Duration::seconds(config.suite.round_period_secs as i64);
    let suite = &config.suite;
    let summary = match args.clock {
        ClockMode::Accelerated => {
            let t0 = config.start.unwrap_or_else(simulate::epoch) + period * args.start as i32;
            run_campaign(
                suite,
                &vms,
                args.start..args.stop,
                seed,
                t0,
                |_| SimulatedClock::new(t0, Duration::seconds(1)),
                |_| SuiteBackend::new(suite),
                &bins,
            )
        }
        ClockMode::Real => {
            let t0 = Utc::now()
                .duration_trunc(Duration::seconds(1))
                .unwrap_or_else(|_| Utc::now());
            run_campaign(
                suite,
                &vms,
                args.start..args.stop,
                seed,
                t0,
                |_| SystemClock,
                |_| SuiteBackend::new(suite),
                &bins,
            )
        }
    }
    .map_err(|e| CliError::new("run", e))?;

    let manifest = RunManifest {
        config: args.config.display().to_string(),
        config_sha256: sha256_hex(&bytes),
        seed,
        clock: args.clock,
        store: args.store.display().to_string(),
        start_round: args.start,
        stop_round: args.stop,
        vms: vms.iter().map(|v| v.to_string()).collect(),
        campaign_start: config.start.as_ref(),
    };
    let manifest_path = args.store.join(format!("manifest-{}-{}.json", args.start, args.stop));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::new("json", e))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| CliError::new("manifest", e))?;

    let csv = csv_string(|w| {
        w.write_record(["rounds", "trial_errors", "provider_errors", "store"])?;
        w.write_record([
            summary.rounds.to_string(),
            summary.trial_errors.to_string(),
            summary.provider_errors.to_string(),
            args.store.display().to_string(),
        ])
    })?;
    Ok(Report {
        name: "run",
        provenance: Provenance::new("run", &sha256_hex(&bytes), Some(seed))
            .param("clock", format!("{:?}", args.clock).to_lowercase())
            .param("rounds", format!("{}..{}", args.start, args.stop)),
        csv,
        json: json!({
            "rounds": summary.rounds,
            "trial_errors": summary.trial_errors,
            "provider_errors": summary.provider_errors,
            "store": args.store.display().to_string(),
        }),
        warnings: summary.trial_errors + summary.provider_errors,
    })
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::new(&format!("write {}", path.display()), e)),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::new("stdout", e))
        }
    }
}

fn eval_config(args: &ForecastArgs) -> Result<EvalConfig, CliError> {
    let models = args
        .models
        .split(',')
        .map(|m| m.parse::<ModelKind>().map_err(CliError))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalConfig {
        models,
        horizon: args.horizon,
        order: args.order,
        min_points: args.min_points,
        ..EvalConfig::default()
    })
}

/// Runs a parsed command line and returns the total warning count.
pub fn execute(cli: &Cli) -> Result<usize, CliError> {
    let report = match &cli.command {
        Command::Run(a) => run_command(a)?,
        Command::Export(a) => export_report(&load_input(a)?)?,
        Command::Vi(a) => {
            if !(a.threshold >= 0.0) {
                return Err(CliError(format!("threshold must be non-negative, got {}", a.threshold)));
            }
            vi_report(&load_input(&a.input)?, a.weights, a.threshold, a.series)?
        }
        Command::Analyze(AnalyzeCmd::Rsd(a)) => rsd_report(&load_input(&a.input)?, &a.provider)?,
        Command::Analyze(AnalyzeCmd::Corr(a)) => corr_report(&load_input(&a.input)?, &a.provider)?,
        Command::Analyze(AnalyzeCmd::Coincidence(a)) => {
            coincidence_report(&load_input(&a.input)?, &a.a, &a.b, a.n, a.threshold)?
        }
        Command::Analyze(AnalyzeCmd::Cpr(a)) => cpr_report(&load_input(&a.input)?, &a.provider)?,
        Command::Forecast(a) => {
            let table = a
                .table
                .as_deref()
                .map(|t| t.parse::<ModelKind>().map_err(CliError))
                .transpose()?;
            forecast_report(&load_input(&a.input)?, &eval_config(a)?, table)?
        }
        Command::Classify(a) => {
            let cfg = TaskConfig {
                folds: a.folds,
                seed: a.seed,
                tz: a.tz,
                hyperparams: Hyperparams::default(),
                shuffle_labels: a.shuffle_labels,
            };
            classify_report(&load_input(&a.input)?, &parse_tasks(&a.task)?, &cfg)?
        }
        Command::Report(a) => return report_bundle(a, cli.json),
    };
    write_out(&cli.out, &report.render(cli.json))?;
    Ok(report.warnings)
}

fn report_bundle(args: &ReportArgs, as_json: bool) -> Result<usize, CliError> {
    let input = load_input(&args.input)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::new("out-dir", e))?;
    let cfg = TaskConfig {
        folds: args.folds,
        seed: args.seed,
        tz: args.tz,
        ..TaskConfig::default()
    };
    let mut reports = vec![
        vi_report(&input, ViWeights::equal(), 0.0, false)?,
        rsd_report(&input, &None)?,
        corr_report(&input, &None)?,
        coincidence_report(&input, &None, &None, 100, 0.6)?,
    ];
    if input.config.is_some() {
        reports.push(cpr_report(&input, &None)?);
    }
    let eval = EvalConfig::default();
    reports.push(forecast_report(&input, &eval, None)?);
    let mut table = forecast_report(&input, &eval, Some(ModelKind::Arima))?;
    table.name = "forecast_arima_table";
    table.warnings = 0;
    reports.push(table);
    reports.push(classify_report(&input, &Task::ALL, &cfg)?);

    let ext = if as_json { "json" } else { "csv" };
    let mut warnings = 0;
    for r in &reports {
        let path = args.out_dir.join(format!("{}.{ext}", r.name));
        fs::write(&path, r.render(as_json)).map_err(|e| CliError::new(&format!("write {}", path.display()), e))?;
        warnings += r.warnings;
    }
    Ok(warnings)
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 success, 1 warnings (skipped series, failed trials), 2 usage or
/// configuration errors.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    WARNINGS_SHOWN.store(0, Ordering::Relaxed);
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(0) => 0,
        Ok(n) => {
            let shown = WARNINGS_SHOWN.load(Ordering::Relaxed).min(SHOWN_WARNINGS).min(n);
            eprintln!("{n} warnings ({shown} shown)");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(main_with_args(std::env::args_os()) as u8)
}
