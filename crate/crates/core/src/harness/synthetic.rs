//! Synthetic probe: deterministic pseudo-measurements with optional daily
//! cycle, weekend offset and spikes. Lets the whole pipeline run without
//! touching real machines.

use chrono::{DateTime, Datelike, Timelike, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::model::format_value;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diurnal {
    /// Relative amplitude, e.g. 0.2 for +-20%.
    pub amplitude: f64,
    /// Hour of day (UTC, fractional) at which the cycle peaks.
    pub peak_hour: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub probability: f64,
    /// Relative magnitude added when a spike fires.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMetric {
    pub metric: String,
    pub base: f64,
    /// Standard deviation of the relative Gaussian noise.
    #[serde(default)]
    pub noise: f64,
    /// Degrees of freedom of a Student-t noise law (scaled to the same
    /// standard deviation); Gaussian when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_df: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diurnal: Option<Diurnal>,
    /// Relative offset applied on Saturdays and Sundays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weekend_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike: Option<Spike>,
}

impl SyntheticMetric {
    pub fn flat(metric: &str, base: f64, noise: f64) -> Self {
        Self {
            metric: metric.to_string(),
            base,
            noise,
            tail_df: None,
            diurnal: None,
            weekend_offset: None,
            spike: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub seed: u64,
    pub metrics: Vec<SyntheticMetric>,
}

impl SyntheticProfile {
    pub fn validate(&self) -> Result<(), String> {
        for m in &self.metrics {
            if !(m.base > 0.0) {
                return Err(format!("{}: base must be positive", m.metric));
            }
            if !(m.noise >= 0.0) {
                return Err(format!("{}: noise must be non-negative", m.metric));
            }
            if m.tail_df.is_some_and(|df| !(df > 2.0)) {
                return Err(format!("{}: tail_df must exceed 2", m.metric));
            }
            if let Some(s) = m.spike {
                if !(0.0..=1.0).contains(&s.probability) {
                    return Err(format!("{}: spike probability outside [0, 1]", m.metric));
                }
            }
        }
        Ok(())
    }

    /// Plausible magnitudes for the catalog metrics with a few percent of noise.
    /// Network metrics also get a mild daily cycle.
    pub fn typical(seed: u64, metrics: &[&str]) -> Self {
        let metrics = metrics
            .iter()
            .map(|id| {
                let base = typical_base(id);
                let mut m = SyntheticMetric::flat(id, base, 0.03);
                if id.starts_with("NET") {
                    m.diurnal = Some(Diurnal {
                        amplitude: 0.08,
                        peak_hour: 4.0,
                    });
                    m.noise = 0.06;
                }
                if id.starts_with("DISKB") {
                    m.spike = Some(Spike {
                        probability: 0.02,
                        magnitude: -0.4,
                    });
                }
                m
            })
            .collect();
        Self { seed, metrics }
    }

    /// Copy with the seed folded with a key (e.g. the VM name), so that each
    /// VM draws its own noise.
    pub fn reseeded(&self, key: &str) -> Self {
        Self {
            seed: seeds::mix(&[self.seed, seeds::hash_str(key)]),
            metrics: self.metrics.clone(),
        }
    }
}

fn typical_base(id: &str) -> f64 {
    match id {
        "CPU_EVENTS" => 927.0,
        "CPU_LAT" => 1.08,
        "CPU_TH_LAT" => 0.79,
        "CPU_SHA256" => 1.68,
        "CPU_BZIP2" => 5.34,
        "CPU_AES" => 1.42,
        "CPU_DUR" => 12.0,
        "NET_1" => 89.6,
        "NET_2" => 45.6,
        "NET_3" => 6.2,
        "NET_4" => 55.8,
        "NET_5" => 10.7,
        "NETB_1" => 60.0,
        "NETB_2" => 55.0,
        "MEM_SPEED" => 4929.0,
        "MEM_LAT" => 0.12,
        "DISK_FILE_R" => 1234.0,
        "DISK_FILE_W" => 823.0,
        "DISK_FILE_F" => 2634.0,
        "DISK_THR_R" => 19.3,
        "DISK_THR_W" => 12.9,
        "DISK_LAT" => 0.21,
        "DISK_SEEK" => 173.0,
        "DISK_SEQ_R" => 576.0,
        "DISK_SEQ_W" => 436.0,
        "DISKB_LAT" => 12.0,
        "DISKB_THR" => 458.0,
        "APPB" => 1200.0,
        _ => 100.0,
    }
}

fn hour_of_day(at: DateTime<Utc>) -> f64 {
    at.hour() as f64 + at.minute() as f64 / 60.0 + at.second() as f64 / 3600.0
}

/// Value of metric `index` of the profile at instant `at`:
/// `base * (1 + diurnal + weekend + noise + spike)`.
pub fn synth_value(profile: &SyntheticProfile, index: usize, at: DateTime<Utc>) -> f64 {
    let m = &profile.metrics[index];
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[profile.seed, index as u64, at.timestamp() as u64]));
    let diurnal = m.diurnal.map_or(0.0, |d| {
        let phase = 2.0 * std::f64::consts::PI * (hour_of_day(at) - d.peak_hour) / 24.0;
        d.amplitude * phase.cos()
    });
    let weekend = match (m.weekend_offset, at.weekday()) {
        (Some(off), Weekday::Sat | Weekday::Sun) => off,
        _ => 0.0,
    };
    let noise = match (m.noise > 0.0, m.tail_df) {
        (false, _) => 0.0,
        (true, None) => Normal::new(0.0, m.noise).expect("validated noise").sample(&mut rng),
        (true, Some(df)) => {
            let t = StudentT::new(df).expect("validated tail").sample(&mut rng);
            m.noise * t * ((df - 2.0) / df).sqrt()
        }
    };
    let spike = match m.spike {
        Some(s) if rng.random::<f64>() < s.probability => s.magnitude,
        _ => 0.0,
    };
    m.base * (1.0 + diurnal + weekend + noise + spike)
}

/// Raw `kv` text for every metric of the profile.
pub fn synth_probe(profile: &SyntheticProfile, at: DateTime<Utc>) -> String {
    let mut out = String::from("# synthetic probe\n");
    for (i, m) in profile.metrics.iter().enumerate() {
        out.push_str(&m.metric);
        out.push_str(": ");
        out.push_str(&format_value(synth_value(profile, i, at)));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_output;

    fn at(s: &str) -> DateTime<Utc> {
        s.parse().unwrap()
    }

    #[test]
    fn flat_profile_is_exact() {
        let p = SyntheticProfile {
            seed: 3,
            metrics: vec![SyntheticMetric::flat("CPU_LAT", 1.25, 0.0)],
        };
        let raw = synth_probe(&p, at("2020-04-03T14:00:05Z"));
        assert_eq!(parse_output(&raw, "kv").unwrap(), vec![("CPU_LAT".into(), 1.25)]);
    }

    #[test]
    fn diurnal_peaks_at_noon() {
        let mut m = SyntheticMetric::flat("APPB", 100.0, 0.0);
        m.diurnal = Some(Diurnal {
            amplitude: 0.2,
            peak_hour: 12.0,
        });
        let p = SyntheticProfile {
            seed: 1,
            metrics: vec![m],
        };
        let noon = synth_value(&p, 0, at("2020-04-03T12:00:00Z"));
        let midnight = synth_value(&p, 0, at("2020-04-03T00:00:00Z"));
        assert!((noon - 120.0).abs() < 1e-9);
        assert!((midnight - 80.0).abs() < 1e-9);
        assert!(noon > midnight);
    }

    #[test]
    fn weekend_offset_applies() {
        let mut m = SyntheticMetric::flat("APPB", 100.0, 0.0);
        m.weekend_offset = Some(-0.1);
        let p = SyntheticProfile {
            seed: 1,
            metrics: vec![m],
        };
        assert_eq!(synth_value(&p, 0, at("2020-04-04T10:00:00Z")), 90.0); // Saturday
        assert_eq!(synth_value(&p, 0, at("2020-04-06T10:00:00Z")), 100.0); // Monday
    }

    #[test]
    fn noise_mean_within_three_sigma() {
        let p = SyntheticProfile {
            seed: 17,
            metrics: vec![SyntheticMetric::flat("CPU_LAT", 50.0, 0.05)],
        };
        let start = at("2020-04-01T00:00:00Z");
        let draws: Vec<f64> = (0..1000)
            .map(|i| synth_value(&p, 0, start + chrono::Duration::hours(i)))
            .collect();
        let mean = draws.iter().sum::<f64>() / 1000.0;
        let sigma_of_mean = 50.0 * 0.05 / (1000f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * sigma_of_mean, "mean {mean}");
    }

    #[test]
    fn student_noise_matches_scale() {
        let mut m = SyntheticMetric::flat("CPU_LAT", 100.0, 0.05);
        m.tail_df = Some(5.0);
        let p = SyntheticProfile {
            seed: 3,
            metrics: vec![m],
        };
        let start = at("2020-04-01T00:00:00Z");
        let draws: Vec<f64> = (0..4000)
            .map(|i| synth_value(&p, 0, start + chrono::Duration::hours(i)))
            .collect();
        let sd = crate::stats::pop_std(&draws);
        assert!((sd - 5.0).abs() < 0.5, "{sd}");
    }

    #[test]
    fn deterministic() {
        let p = SyntheticProfile::typical(5, &["CPU_EVENTS", "NET_1"]);
        let t = at("2020-04-03T14:00:05Z");
        assert_eq!(synth_probe(&p, t), synth_probe(&p, t));
        assert_ne!(synth_probe(&p, t), synth_probe(&p.reseeded("other-vm"), t));
    }

    #[test]
    fn validation() {
        let mut p = SyntheticProfile::typical(1, &["CPU_LAT"]);
        assert!(p.validate().is_ok());
        p.metrics[0].base = 0.0;
        assert!(p.validate().is_err());
        p.metrics[0].base = 1.0;
        p.metrics[0].noise = -0.1;
        assert!(p.validate().is_err());
        p.metrics[0].noise = 0.1;
        p.metrics[0].tail_df = Some(1.5);
        assert!(p.validate().is_err());
    }
}
