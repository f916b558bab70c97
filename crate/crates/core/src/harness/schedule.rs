use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SuiteConfig;
use crate::seeds;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub benchmark: String,
    pub repetition: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSchedule {
    pub round_index: u64,
    pub entries: Vec<ScheduleEntry>,
    pub seed: u64,
}

/// Permutes the full multiset of planned trials. Repetitions of one benchmark
/// are interleaved with everything else, not kept as a block.
pub fn plan_round(suite: &SuiteConfig, round_index: u64, seed: u64) -> TrialSchedule {
    let mut entries: Vec<ScheduleEntry> = suite
        .benchmarks
        .iter()
        .flat_map(|b| {
            (0..b.repetitions).map(move |r| ScheduleEntry {
                benchmark: b.id.clone(),
                repetition: r,
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, round_index]));
    entries.shuffle(&mut rng);
    TrialSchedule {
        round_index,
        entries,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{BenchmarkSpec, Probe};
    use std::collections::BTreeMap;

    fn single() -> SuiteConfig {
        SuiteConfig {
            benchmarks: vec![BenchmarkSpec {
                id: "b".into(),
                probe: Probe::Command("true".into()),
                repetitions: 1,
                parser: "kv".into(),
                metrics: vec![],
            }],
            round_period_secs: 3600,
            hooks: Default::default(),
            profiles: Default::default(),
        }
    }

    #[test]
    fn singleton() {
        assert_eq!(plan_round(&single(), 0, 1).entries.len(), 1);
    }

    #[test]
    fn default_suite_length_and_multiset() {
        let suite = SuiteConfig::default_suite();
        let s = plan_round(&suite, 3, 42);
        assert_eq!(s.entries.len(), 34);
        let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
        for e in &s.entries {
            *counts.entry(e.benchmark.as_str()).or_default() += 1;
        }
        for b in &suite.benchmarks {
            assert_eq!(counts[b.id.as_str()], b.repetitions);
        }
    }

    #[test]
    fn deterministic_and_varies_by_round() {
        let suite = SuiteConfig::default_suite();
        let mut distinct = 0;
        for r in 0..100 {
            assert_eq!(plan_round(&suite, r, 7), plan_round(&suite, r, 7));
            if plan_round(&suite, r, 7).entries != plan_round(&suite, r + 1, 7).entries {
                distinct += 1;
            }
        }
        assert_eq!(distinct, 100);
    }

    #[test]
    fn positions_are_uniform() {
        // chi-square over 34 positions for a 3-repetition benchmark
        let suite = SuiteConfig::default_suite();
        let rounds = 3000u64;
        let mut hits = vec![0f64; 34];
        for r in 0..rounds {
            for (pos, e) in plan_round(&suite, r, 11).entries.iter().enumerate() {
                if e.benchmark == "sysbench" {
                    hits[pos] += 1.0;
                }
            }
        }
        let expected = rounds as f64 * 3.0 / 34.0;
        let chi2: f64 = hits.iter().map(|h| (h - expected).powi(2) / expected).sum();
        // 33 degrees of freedom, p = 0.001 critical value
        assert!(chi2 < 63.87, "chi2 = {chi2}");
    }
}
