//! Domain types shared by every other module: the metric catalog, VM
//! descriptors, measurements, per-round series and round results.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: unknown metric `{id}`")]
    UnknownMetric { line: usize, id: String },
    #[error("line {line}: non-finite value")]
    NonFiniteValue { line: usize },
    #[error("no measurements for the requested selection")]
    EmptySelection,
    #[error("{} rejected row(s), first: {}", .0.len(), .0[0])]
    Rejected(Vec<ModelError>),
    #[error("invalid VM descriptor: {0}")]
    InvalidDescriptor(String),
}

/// Optimization direction of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    /// Higher is better (throughput, rates).
    Hib,
    /// Lower is better (durations, latencies).
    Lib,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Hib => f.write_str("HIB"),
            Direction::Lib => f.write_str("LIB"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub id: String,
    pub benchmark: String,
    pub meaning: String,
    pub unit: String,
    pub direction: Direction,
}

impl MetricSpec {
    fn new(id: &str, benchmark: &str, meaning: &str, unit: &str, direction: Direction) -> Self {
        Self {
            id: id.to_string(),
            benchmark: benchmark.to_string(),
            meaning: meaning.to_string(),
            unit: unit.to_string(),
            direction,
        }
    }
}

/// The 28 metrics produced by the default benchmark suite.
pub fn catalog_default() -> Vec<MetricSpec> {
    use Direction::{Hib, Lib};
    let m = MetricSpec::new;
    vec![
        m("CPU_EVENTS", "Sysbench", "events (e) per second", "e/s", Hib),
        m("CPU_LAT", "Sysbench", "avg latency", "ms", Lib),
        m("CPU_TH_LAT", "Sysbench", "threads avg latency", "ms", Lib),
        m("CPU_SHA256", "Nench", "SHA256 execution", "s", Lib),
        m("CPU_BZIP2", "Nench", "bzip2 execution", "s", Lib),
        m("CPU_AES", "Nench", "AES execution", "s", Lib),
        m("CPU_DUR", "CPUBench", "mean duration", "s", Lib),
        m("NET_1", "Nench", "DL - Cachefly CDN", "MiB/s", Hib),
        m("NET_2", "Nench", "DL - Leaseweb (NL)", "MiB/s", Hib),
        m("NET_3", "Nench", "DL - Softlayer DAL (US)", "MiB/s", Hib),
        m("NET_4", "Nench", "DL - Online.net (FR)", "MiB/s", Hib),
        m("NET_5", "Nench", "DL - OVH BHS (CA)", "MiB/s", Hib),
        m("NETB_1", "DownloadBench", "DL - url 1 (1 GB)", "MiB/s", Hib),
        m("NETB_2", "DownloadBench", "DL - url 2 (100 MB)", "MiB/s", Hib),
        m("MEM_SPEED", "Sysbench", "speed", "MiB/s", Hib),
        m("MEM_LAT", "Sysbench", "avg latency", "ms", Lib),
        m("DISK_FILE_R", "Sysbench", "file op - read", "reads/s", Hib),
        m("DISK_FILE_W", "Sysbench", "file op - write", "writes/s", Hib),
        m("DISK_FILE_F", "Sysbench", "file op - fsync", "fsyncs/s", Hib),
        m("DISK_THR_R", "Sysbench", "throughput - read", "MiB/s", Hib),
        m("DISK_THR_W", "Sysbench", "throughput - write", "MiB/s", Hib),
        m("DISK_LAT", "Sysbench", "avg latency", "ms", Lib),
        m("DISK_SEEK", "Nench", "ioping - avg seek rate", "us", Lib),
        m("DISK_SEQ_R", "Nench", "ioping - seq. read speed", "MiB/s", Hib),
        m("DISK_SEQ_W", "Nench", "dd - avg seq. write speed", "MiB/s", Hib),
        m("DISKB_LAT", "DDBench", "dd - s. blk (latency)", "MB/s", Lib),
        m("DISKB_THR", "DDBench", "dd - l. blk (throughput)", "MB/s", Hib),
        m("APPB", "WebBench", "requests per second", "req/s", Hib),
    ]
}

/// Metric lookup table. Order is the catalog order and is used for feature
/// vectors and report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub metrics: Vec<MetricSpec>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self {
            metrics: catalog_default(),
        }
    }
}

impl Catalog {
    pub fn new(metrics: Vec<MetricSpec>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for m in &metrics {
            if !seen.insert(m.id.as_str()) {
                return Err(ModelError::InvalidDescriptor(format!("duplicate metric id {}", m.id)));
            }
        }
        Ok(Self { metrics })
    }

    pub fn get(&self, id: &str) -> Option<&MetricSpec> {
        self.metrics.iter().find(|m| m.id == id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.metrics.iter().map(|m| m.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VmClass {
    C1,
    C2,
    C3,
    C4,
}

impl fmt::Display for VmClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VmClass::C1 => "C1",
            VmClass::C2 => "C2",
            VmClass::C3 => "C3",
            VmClass::C4 => "C4",
        };
        f.write_str(s)
    }
}

impl FromStr for VmClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "C1" | "c1" => Ok(VmClass::C1),
            "C2" | "c2" => Ok(VmClass::C2),
            "C3" | "c3" => Ok(VmClass::C3),
            "C4" | "c4" => Ok(VmClass::C4),
            other => Err(format!("unknown VM class `{other}`")),
        }
    }
}

/// Identity of one VM instance: the key every measurement is attributed to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VmKey {
    pub provider: String,
    pub vm_class: VmClass,
    pub vm_type: String,
    pub instance: u32,
}

impl fmt::Display for VmKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}-{}", self.provider, self.vm_type, self.instance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmDescriptor {
    pub provider: String,
    pub vm_class: VmClass,
    pub type_name: String,
    pub instance_ordinal: u32,
    pub vcpus: u32,
    pub ram_gib: f64,
    /// Price per hour; 0 for free providers.
    pub cost_per_hour: f64,
}

impl VmDescriptor {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.instance_ordinal == 0 {
            return Err(ModelError::InvalidDescriptor(
                "instance_ordinal must be positive".into(),
            ));
        }
        if self.vcpus == 0 {
            return Err(ModelError::InvalidDescriptor("vcpus must be positive".into()));
        }
        if !(self.ram_gib > 0.0) {
            return Err(ModelError::InvalidDescriptor("ram_gib must be positive".into()));
        }
        if !(self.cost_per_hour >= 0.0) || !self.cost_per_hour.is_finite() {
            return Err(ModelError::InvalidDescriptor(
                "cost_per_hour must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn key(&self) -> VmKey {
        VmKey {
            provider: self.provider.clone(),
            vm_class: self.vm_class,
            vm_type: self.type_name.clone(),
            instance: self.instance_ordinal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub metric: String,
    pub vm: VmKey,
    pub round_index: u64,
    pub trial_index: u32,
    pub timestamp: DateTime<Utc>,
    pub value: f64,
}

/// A bag of measurements, typically one provider campaign.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub measurements: Vec<Measurement>,
}

impl Dataset {
    pub fn new(measurements: Vec<Measurement>) -> Self {
        Self { measurements }
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn vms(&self) -> BTreeSet<VmKey> {
        self.measurements.iter().map(|m| m.vm.clone()).collect()
    }

    pub fn providers(&self) -> BTreeSet<String> {
        self.measurements.iter().map(|m| m.vm.provider.clone()).collect()
    }

    pub fn metrics(&self) -> BTreeSet<String> {
        self.measurements.iter().map(|m| m.metric.clone()).collect()
    }

    pub fn for_provider(&self, provider: &str) -> Dataset {
        Dataset::new(
            self.measurements
                .iter()
                .filter(|m| m.vm.provider == provider)
                .cloned()
                .collect(),
        )
    }

    /// Start instant of every round of `vm`, i.e. the earliest timestamp seen
    /// in that round across all metrics.
    pub fn round_starts(&self, vm: &VmKey) -> BTreeMap<u64, DateTime<Utc>> {
        let mut starts: BTreeMap<u64, DateTime<Utc>> = BTreeMap::new();
        for m in self.measurements.iter().filter(|m| &m.vm == vm) {
            starts
                .entry(m.round_index)
                .and_modify(|t| {
                    if m.timestamp < *t {
                        *t = m.timestamp
                    }
                })
                .or_insert(m.timestamp);
        }
        starts
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for m in &self.measurements {
            w.write_record([
                m.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
                m.vm.provider.clone(),
                m.vm.vm_class.to_string(),
                m.vm.vm_type.clone(),
                m.vm.instance.to_string(),
                m.round_index.to_string(),
                m.trial_index.to_string(),
                m.metric.clone(),
                format_value(m.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same f64.
pub fn format_value(v: f64) -> String {
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().ok(), Some(v));
    s
}

pub const CSV_HEADER: [&str; 9] = [
    "timestamp",
    "provider",
    "vm_class",
    "vm_type",
    "instance",
    "round",
    "trial",
    "metric",
    "value",
];

/// Parses a measurement CSV, returning the accepted rows together with every
/// rejected row. Line numbers are 1-based and count the header. Lines
/// starting with `#` are comments.
pub fn ingest_csv_lenient<R: Read>(mut stream: R, catalog: &Catalog) -> Result<(Dataset, Vec<ModelError>), ModelError> {
    let mut bytes = Vec::new();
    stream.read_to_end(&mut bytes).map_err(|e| ModelError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    // the reader's own line counter ignores comment lines, and a record's
    // position may point at comments just before it; count from bytes
    let line_at = |pos: Option<&csv::Position>, fallback: usize| {
        pos.map_or(fallback, |p| {
            let mut at = p.byte() as usize;
            while bytes.get(at) == Some(&b'#') {
                at += bytes[at..]
                    .iter()
                    .position(|b| *b == b'\n')
                    .map_or(bytes.len() - at, |n| n + 1);
            }
            1 + bytes[..at.min(bytes.len())].iter().filter(|b| **b == b'\n').count()
        })
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(bytes.as_slice());

    let header = reader.headers().map_err(|e| ModelError::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(ModelError::MalformedRow {
            line: 1,
            reason: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    let mut measurements = Vec::new();
    let mut rejected = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(ModelError::MalformedRow {
                    line: line_at(e.position(), i + 2),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = line_at(record.position(), i + 2);
        match parse_row(&record, line, catalog) {
            Ok(m) => measurements.push(m),
            Err(e) => rejected.push(e),
        }
    }
    Ok((Dataset::new(measurements), rejected))
}

/// Strict ingestion: any rejected row fails the whole stream.
pub fn ingest_csv<R: Read>(stream: R, catalog: &Catalog) -> Result<Dataset, ModelError> {
    let (dataset, rejected) = ingest_csv_lenient(stream, catalog)?;
    if rejected.is_empty() {
        Ok(dataset)
    } else {
        Err(ModelError::Rejected(rejected))
    }
}

fn parse_row(record: &csv::StringRecord, line: usize, catalog: &Catalog) -> Result<Measurement, ModelError> {
    let malformed = |reason: String| ModelError::MalformedRow { line, reason };
    if record.len() != CSV_HEADER.len() {
        return Err(malformed(format!(
            "expected {} fields, found {}",
            CSV_HEADER.len(),
            record.len()
        )));
    }
    let timestamp = DateTime::parse_from_rfc3339(&record[0])
        .map_err(|e| malformed(format!("timestamp: {e}")))?
        .with_timezone(&Utc);
    let vm_class = record[2].parse::<VmClass>().map_err(malformed)?;
    let instance = record[4]
        .parse::<u32>()
        .map_err(|e| malformed(format!("instance: {e}")))?;
    let round_index = record[5].parse::<u64>().map_err(|e| malformed(format!("round: {e}")))?;
    let trial_index = record[6].parse::<u32>().map_err(|e| malformed(format!("trial: {e}")))?;
    let metric = record[7].to_string();
    if catalog.get(&metric).is_none() {
        return Err(ModelError::UnknownMetric { line, id: metric });
    }
    let value = record[8].parse::<f64>().map_err(|e| malformed(format!("value: {e}")))?;
    if !value.is_finite() {
        return Err(ModelError::NonFiniteValue { line });
    }
    Ok(Measurement {
        metric,
        vm: VmKey {
            provider: record[1].to_string(),
            vm_class,
            vm_type: record[3].to_string(),
            instance,
        },
        round_index,
        trial_index,
        timestamp,
        value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub round_index: u64,
    pub timestamp: DateTime<Utc>,
    /// Mean over the round's trials.
    pub value: f64,
    pub trials: usize,
}

/// Per-round representative values of one metric on one VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub metric: String,
    pub vm: VmKey,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Collapses the trials of each round into their mean and orders the rounds by
/// their start time.
pub fn to_series(dataset: &Dataset, metric: &str, vm: &VmKey) -> Result<Series, ModelError> {
    let mut rounds: BTreeMap<u64, (DateTime<Utc>, Vec<f64>)> = BTreeMap::new();
    for m in dataset
        .measurements
        .iter()
        .filter(|m| m.metric == metric && &m.vm == vm)
    {
        let entry = rounds.entry(m.round_index).or_insert_with(|| (m.timestamp, Vec::new()));
        if m.timestamp < entry.0 {
            entry.0 = m.timestamp;
        }
        entry.1.push(m.value);
    }
    if rounds.is_empty() {
        return Err(ModelError::EmptySelection);
    }
    let starts = dataset.round_starts(vm);
    let mut points: Vec<SeriesPoint> = rounds
        .into_iter()
        .map(|(round_index, (first, mut values))| {
            // trial order must not leak into the mean
            values.sort_by(f64::total_cmp);
            SeriesPoint {
                round_index,
                timestamp: starts.get(&round_index).copied().unwrap_or(first),
                value: stats::mean(&values),
                trials: values.len(),
            }
        })
        .collect();
    points.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.round_index.cmp(&b.round_index)));
    Ok(Series {
        metric: metric.to_string(),
        vm: vm.clone(),
        points,
    })
}

/// Every (metric, vm) series present in the dataset, in key order.
pub fn all_series(dataset: &Dataset) -> Vec<Series> {
    let mut keys: BTreeSet<(VmKey, String)> = BTreeSet::new();
    for m in &dataset.measurements {
        keys.insert((m.vm.clone(), m.metric.clone()));
    }
    keys.into_iter()
        .filter_map(|(vm, metric)| to_series(dataset, &metric, &vm).ok())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialStatus {
    Parsed { values: Vec<(String, f64)> },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub benchmark: String,
    pub repetition: u32,
    /// Position in the round's schedule.
    pub position: u32,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub raw_output: String,
    #[serde(flatten)]
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn is_failed(&self) -> bool {
        matches!(self.status, TrialStatus::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub vm: VmKey,
    pub round_index: u64,
    pub started_at: DateTime<Utc>,
    pub seed: u64,
    pub planned_trials: usize,
    pub trials: Vec<TrialRecord>,
    /// Number of failed trial records.
    pub errors: usize,
    /// Set when the round was aborted by a lifecycle hook.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
}

impl RoundResult {
    /// Flattens the parsed trial values into measurements stamped with each
    /// trial's start time.
    pub fn measurements(&self) -> Vec<Measurement> {
        let mut out = Vec::new();
        for trial in &self.trials {
            if let TrialStatus::Parsed { values } = &trial.status {
                for (metric, value) in values {
                    out.push(Measurement {
                        metric: metric.clone(),
                        vm: self.vm.clone(),
                        round_index: self.round_index,
                        trial_index: trial.position,
                        timestamp: trial.started_at,
                        value: *value,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp,provider,vm_class,vm_type,instance,round,trial,metric,value\n";

    fn vm() -> VmKey {
        VmKey {
            provider: "aws".into(),
            vm_class: VmClass::C1,
            vm_type: "a1.large".into(),
            instance: 1,
        }
    }

    #[test]
    fn catalog_has_28_classified_metrics() {
        let cat = catalog_default();
        assert_eq!(cat.len(), 28);
        let events = cat.iter().find(|m| m.id == "CPU_EVENTS").unwrap();
        assert_eq!(events.meaning, "events (e) per second");
        assert_eq!(events.unit, "e/s");
        assert_eq!(events.direction, Direction::Hib);
        let lat = cat.iter().find(|m| m.id == "DISK_LAT").unwrap();
        assert_eq!((lat.meaning.as_str(), lat.unit.as_str()), ("avg latency", "ms"));
        assert_eq!(lat.direction, Direction::Lib);
        assert!(Catalog::new(cat).is_ok());
    }

    #[test]
    fn catalog_serde_round_trip() {
        let cat = Catalog::default();
        let json = serde_json::to_string(&cat).unwrap();
        let back: Catalog = serde_json::from_str(&json).unwrap();
        assert_eq!(cat, back);
        let toml_text = toml::to_string(&cat).unwrap();
        let back: Catalog = toml::from_str(&toml_text).unwrap();
        assert_eq!(cat, back);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = catalog_default();
        m.push(m[0].clone());
        assert!(Catalog::new(m).is_err());
    }

    #[test]
    fn ingest_single_row() {
        let text = format!("{HEADER}2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,CPU_EVENTS,927.41\n");
        let ds = ingest_csv(text.as_bytes(), &Catalog::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.measurements[0].value, 927.41);
        assert_eq!(ds.measurements[0].vm, vm());
    }

    #[test]
    fn ingest_unknown_metric() {
        let text = format!("{HEADER}2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,XXX,1\n");
        let (_, rejected) = ingest_csv_lenient(text.as_bytes(), &Catalog::default()).unwrap();
        assert_eq!(
            rejected,
            vec![ModelError::UnknownMetric {
                line: 2,
                id: "XXX".into()
            }]
        );
        assert!(ingest_csv(text.as_bytes(), &Catalog::default()).is_err());
    }

    #[test]
    fn ingest_rejects_non_finite() {
        for v in ["NaN", "inf", "-inf"] {
            let text = format!("{HEADER}2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,CPU_LAT,{v}\n");
            let (ds, rejected) = ingest_csv_lenient(text.as_bytes(), &Catalog::default()).unwrap();
            assert!(ds.is_empty());
            assert_eq!(rejected, vec![ModelError::NonFiniteValue { line: 2 }]);
        }
    }

    #[test]
    fn ingest_malformed_rows_are_line_indexed() {
        let text = format!(
            "{HEADER}2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,CPU_LAT,1\nnot,a,row\n2020-04-03T14:00:05Z,aws,C9,x,1,0,0,CPU_LAT,1\n"
        );
        let (ds, rejected) = ingest_csv_lenient(text.as_bytes(), &Catalog::default()).unwrap();
        assert_eq!(ds.len(), 1);
        let lines: Vec<usize> = rejected
            .iter()
            .map(|e| match e {
                ModelError::MalformedRow { line, .. } => *line,
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(lines, vec![3, 4]);
    }

    #[test]
    fn comment_lines_are_skipped_and_counted() {
        let text = format!(
            "# tool: cloudvar\n# seed: 1\n{HEADER}2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,CPU_LAT,1\n# note\n2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,NOPE,1\n"
        );
        let (ds, rejected) = ingest_csv_lenient(text.as_bytes(), &Catalog::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(
            matches!(&rejected[..], [ModelError::UnknownMetric { line: 6, .. }]),
            "{rejected:?}"
        );
    }

    #[test]
    fn bad_header_fails() {
        let text = "a,b,c\n1,2,3\n";
        assert!(matches!(
            ingest_csv(text.as_bytes(), &Catalog::default()),
            Err(ModelError::MalformedRow { line: 1, .. })
        ));
    }

    fn meas(round: u64, trial: u32, secs: i64, value: f64) -> Measurement {
        Measurement {
            metric: "CPU_LAT".into(),
            vm: vm(),
            round_index: round,
            trial_index: trial,
            timestamp: DateTime::from_timestamp(1_585_922_400 + secs, 0).unwrap(),
            value,
        }
    }

    #[test]
    fn series_uses_round_mean() {
        let ds = Dataset::new(vec![meas(0, 0, 0, 10.0), meas(0, 1, 5, 20.0)]);
        let s = to_series(&ds, "CPU_LAT", &vm()).unwrap();
        assert_eq!(s.values(), vec![15.0]);
        assert_eq!(s.points[0].trials, 2);
    }

    #[test]
    fn series_one_point_per_round() {
        let ds = Dataset::new(vec![meas(0, 0, 0, 4.0), meas(1, 0, 3600, 6.0), meas(2, 0, 7200, 5.0)]);
        assert_eq!(to_series(&ds, "CPU_LAT", &vm()).unwrap().values(), vec![4.0, 6.0, 5.0]);
    }

    #[test]
    fn series_sorted_by_timestamp() {
        // rows listed out of file order; oracle sorts (timestamp, value) pairs
        let rows = vec![
            meas(3, 0, 3 * 3600, 7.0),
            meas(0, 0, 0, 1.0),
            meas(2, 0, 2 * 3600, 3.0),
            meas(1, 0, 3600, 2.0),
        ];
        let mut expected: Vec<(i64, f64)> = rows.iter().map(|m| (m.timestamp.timestamp(), m.value)).collect();
        expected.sort_by_key(|p| p.0);
        let s = to_series(&Dataset::new(rows), "CPU_LAT", &vm()).unwrap();
        let got: Vec<(i64, f64)> = s.points.iter().map(|p| (p.timestamp.timestamp(), p.value)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_selection() {
        let ds = Dataset::new(vec![meas(0, 0, 0, 1.0)]);
        assert_eq!(to_series(&ds, "CPU_EVENTS", &vm()), Err(ModelError::EmptySelection));
    }

    #[test]
    fn descriptor_validation() {
        let mut d = VmDescriptor {
            provider: "egi".into(),
            vm_class: VmClass::C1,
            type_name: "T1".into(),
            instance_ordinal: 1,
            vcpus: 2,
            ram_gib: 4.0,
            cost_per_hour: 0.0,
        };
        assert!(d.validate().is_ok());
        d.cost_per_hour = -1.0;
        assert!(d.validate().is_err());
        d.cost_per_hour = 0.1;
        d.vcpus = 0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn csv_export_round_trip() {
        let ds = Dataset::new(vec![meas(0, 0, 0, 0.1 + 0.2), meas(1, 3, 3600, 1e-9)]);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = ingest_csv(buf.as_slice(), &Catalog::default()).unwrap();
        assert_eq!(back, ds);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn rows() -> impl Strategy<Value = Vec<(u64, u32, f64)>> {
            prop::collection::vec((0u64..8, 0u32..4, 0.1f64..1000.0), 1..40)
        }

        proptest! {
            #[test]
            fn to_series_permutation_invariant(rows in rows(), seed in any::<u64>()) {
                let build = |rs: &[(u64, u32, f64)]| Dataset::new(
                    rs.iter().map(|&(r, t, v)| meas(r, t, r as i64 * 3600 + t as i64, v)).collect()
                );
                let ds = build(&rows);
                let mut shuffled = rows.clone();
                use rand::{seq::SliceRandom, SeedableRng};
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = to_series(&ds, "CPU_LAT", &vm()).unwrap();
                let b = to_series(&build(&shuffled), "CPU_LAT", &vm()).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn trial_counts_account_for_every_accepted_row(rows in rows(), bad in 0usize..5) {
                let mut text = String::from(HEADER);
                for &(r, t, v) in &rows {
                    text.push_str(&format!("2020-04-03T14:00:05Z,aws,C1,a1.large,1,{r},{t},CPU_LAT,{v}\n"));
                }
                for _ in 0..bad {
                    text.push_str("2020-04-03T14:00:05Z,aws,C1,a1.large,1,0,0,CPU_LAT,NaN\n");
                }
                let (ds, rejected) = ingest_csv_lenient(text.as_bytes(), &Catalog::default()).unwrap();
                prop_assert_eq!(rejected.len(), bad);
                let counted: usize = all_series(&ds).iter()
                    .flat_map(|s| s.points.iter().map(|p| p.trials))
                    .sum();
                prop_assert_eq!(counted, rows.len() + bad - rejected.len());
            }
        }
    }
}
