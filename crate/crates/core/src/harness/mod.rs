//! Benchmark orchestration: randomized round planning (RMT), probe execution,
//! output parsing and the append-only round store.
//!
//! A round runs every benchmark of the suite as many times as its repetition
//! count, in an order freshly permuted for each round. Trials run strictly one
//! after the other; a failed trial is recorded and the round continues.

mod parser;
mod runner;
mod schedule;
mod store;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Catalog;

pub use parser::{parse_output, ParserId};
pub use runner::{
    run_campaign, run_hook, run_round, CampaignSummary, Clock, CommandBackend, ProbeBackend, SimulatedClock,
    SuiteBackend, SystemClock, TrialContext,
};
pub use schedule::{plan_round, ScheduleEntry, TrialSchedule};
pub use store::{export_dataset, Bins, RoundStore};
pub use synthetic::{synth_probe, synth_value, Diurnal, Spike, SyntheticMetric, SyntheticProfile};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("parser `{0}` could not extract any value")]
    UnparseableOutput(String),
    #[error("unknown parser `{0}`")]
    UnknownParser(String),
    #[error("{hook} hook failed: {message}")]
    LifecycleHookFailed { hook: &'static str, message: String },
    #[error("probe backend cannot resolve benchmark `{0}`")]
    UnresolvedBenchmark(String),
    #[error("store corrupt at byte offset {offset}: {reason}")]
    StoreCorrupt { offset: u64, reason: String },
    #[error("store I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// How a benchmark is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    /// Shell command template. `{vm}`, `{round}`, `{position}`, `{repetition}`
    /// and `{benchmark}` are substituted before execution.
    Command(String),
    /// Name of a synthetic profile in the suite.
    Synthetic(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub id: String,
    pub probe: Probe,
    pub repetitions: u32,
    pub parser: String,
    /// Metric ids this benchmark is expected to produce.
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LifecycleHooks {
    pub power_on: Option<String>,
    pub power_off: Option<String>,
}

fn default_period() -> u64 {
    3600
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub benchmarks: Vec<BenchmarkSpec>,
    #[serde(default = "default_period")]
    pub round_period_secs: u64,
    #[serde(default)]
    pub hooks: LifecycleHooks,
    #[serde(default)]
    pub profiles: BTreeMap<String, SyntheticProfile>,
}

impl SuiteConfig {
    pub fn planned_trials(&self) -> usize {
        self.benchmarks.iter().map(|b| b.repetitions as usize).sum()
    }

    pub fn benchmark(&self, id: &str) -> Option<&BenchmarkSpec> {
        self.benchmarks.iter().find(|b| b.id == id)
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::InvalidSuite(m));
        if self.benchmarks.is_empty() {
            return invalid("no benchmarks".into());
        }
        if self.round_period_secs == 0 {
            return invalid("round period must be positive".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for b in &self.benchmarks {
            if !ids.insert(b.id.as_str()) {
                return invalid(format!("duplicate benchmark id `{}`", b.id));
            }
            if b.repetitions == 0 {
                return invalid(format!("benchmark `{}` has zero repetitions", b.id));
            }
            if b.parser.parse::<ParserId>().is_err() {
                return invalid(format!("benchmark `{}` uses unknown parser `{}`", b.id, b.parser));
            }
            for m in &b.metrics {
                if catalog.get(m).is_none() {
                    return invalid(format!("benchmark `{}` lists unknown metric `{m}`", b.id));
                }
            }
            if let Probe::Synthetic(name) = &b.probe {
                let Some(profile) = self.profiles.get(name) else {
                    return invalid(format!("benchmark `{}` references missing profile `{name}`", b.id));
                };
                profile.validate().map_err(HarnessError::InvalidSuite)?;
            }
        }
        Ok(())
    }

    /// Default suite driving the real benchmark tools: 34 trials per round.
    /// Command templates assume the tools are installed on the VM.
    pub fn default_suite() -> Self {
        let cmd = |c: &str| Probe::Command(c.to_string());
        Self {
            benchmarks: default_layout()
                .into_iter()
                .map(|(id, reps, parser, metrics, command)| BenchmarkSpec {
                    id: id.into(),
                    probe: cmd(command),
                    repetitions: reps,
                    parser: parser.into(),
                    metrics: metrics.iter().map(|m| m.to_string()).collect(),
                })
                .collect(),
            round_period_secs: 3600,
            hooks: LifecycleHooks::default(),
            profiles: BTreeMap::new(),
        }
    }

    /// Same layout as [`SuiteConfig::default_suite`] but every benchmark is
    /// backed by a synthetic profile emitting `kv` output.
    pub fn synthetic_default(seed: u64) -> Self {
        let mut profiles = BTreeMap::new();
        let benchmarks = default_layout()
            .into_iter()
            .enumerate()
            .map(|(i, (id, reps, _, metrics, _))| {
                profiles.insert(
                    id.to_string(),
                    SyntheticProfile::typical(seed.wrapping_add(i as u64), metrics),
                );
                BenchmarkSpec {
                    id: id.into(),
                    probe: Probe::Synthetic(id.into()),
                    repetitions: reps,
                    parser: "kv".into(),
                    metrics: metrics.iter().map(|m| m.to_string()).collect(),
                }
            })
            .collect();
        Self {
            benchmarks,
            round_period_secs: 3600,
            hooks: LifecycleHooks::default(),
            profiles,
        }
    }
}

type Layout = (&'static str, u32, &'static str, &'static [&'static str], &'static str);

// DDBench and DownloadBench run two configurations five times each.
fn default_layout() -> Vec<Layout> {
    vec![
        (
            "ddbench-small",
            5,
            "dd-small",
            &["DISKB_LAT"],
            "dd if=/dev/zero of=/tmp/ddbench bs=512 count=1000 oflag=dsync 2>&1",
        ),
        (
            "ddbench-large",
            5,
            "dd-large",
            &["DISKB_THR"],
            "dd if=/dev/zero of=/tmp/ddbench bs=1G count=1 oflag=dsync 2>&1",
        ),
        (
            "download-1g",
            5,
            "download",
            &["NETB_1"],
            "wget -O /dev/null http://speedtest.example.net/1GB.bin 2>&1",
        ),
        (
            "download-100m",
            5,
            "download",
            &["NETB_2"],
            "wget -O /dev/null http://speedtest.example.net/100MB.bin 2>&1",
        ),
        ("cpubench", 5, "cpubench", &["CPU_DUR"], "cpubench"),
        (
            "sysbench",
            3,
            "sysbench",
            &[
                "CPU_EVENTS",
                "CPU_LAT",
                "CPU_TH_LAT",
                "MEM_SPEED",
                "MEM_LAT",
                "DISK_FILE_R",
                "DISK_FILE_W",
                "DISK_FILE_F",
                "DISK_THR_R",
                "DISK_THR_W",
                "DISK_LAT",
            ],
            "sysbench cpu run; sysbench threads run; sysbench memory run; \
             sysbench fileio --file-test-mode=rndrw prepare >/dev/null; \
             sysbench fileio --file-test-mode=rndrw run; sysbench fileio cleanup >/dev/null",
        ),
        (
            "nench",
            3,
            "nench",
            &[
                "CPU_SHA256",
                "CPU_BZIP2",
                "CPU_AES",
                "NET_1",
                "NET_2",
                "NET_3",
                "NET_4",
                "NET_5",
                "DISK_SEEK",
                "DISK_SEQ_R",
                "DISK_SEQ_W",
            ],
            "curl -s wget.racing/nench.sh | bash",
        ),
        (
            "webbench",
            3,
            "wrk",
            &["APPB"],
            "wrk -t2 -c100 -d30s http://127.0.0.1:8000/",
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_has_34_trials() {
        let suite = SuiteConfig::default_suite();
        assert_eq!(suite.planned_trials(), 34);
        suite.validate(&Catalog::default()).unwrap();
        let synth = SuiteConfig::synthetic_default(1);
        assert_eq!(synth.planned_trials(), 34);
        synth.validate(&Catalog::default()).unwrap();
    }

    #[test]
    fn default_suite_covers_catalog() {
        let suite = SuiteConfig::default_suite();
        let mut produced: Vec<&str> = suite
            .benchmarks
            .iter()
            .flat_map(|b| b.metrics.iter().map(String::as_str))
            .collect();
        produced.sort();
        let cat = Catalog::default();
        let mut ids: Vec<&str> = cat.metrics.iter().map(|m| m.id.as_str()).collect();
        ids.sort();
        assert_eq!(produced, ids);
    }

    #[test]
    fn validation_errors() {
        let cat = Catalog::default();
        let mut s = SuiteConfig::synthetic_default(1);
        s.benchmarks[0].repetitions = 0;
        assert!(s.validate(&cat).is_err());

        let mut s = SuiteConfig::synthetic_default(1);
        s.benchmarks[0].parser = "nope".into();
        assert!(s.validate(&cat).is_err());

        let mut s = SuiteConfig::synthetic_default(1);
        s.profiles.clear();
        assert!(s.validate(&cat).is_err());
    }

    #[test]
    fn suite_toml_round_trip() {
        let s = SuiteConfig::synthetic_default(9);
        let text = toml::to_string(&s).unwrap();
        let back: SuiteConfig = toml::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
