//! Variability Indicator: breadth, dispersion and speed of a series and their
//! weighted combination, plus provider x class aggregation.
//!
//! All components are percentages relative to the series mean. Standard
//! deviations are population (1/N) deviations. The gradient used by `speed`
//! takes central differences on interior points and one-sided differences at
//! both ends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Catalog, Dataset, Direction, VmClass, VmKey};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariabilityError {
    #[error("series mean is zero")]
    ZeroMean,
    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("threshold must be a non-negative fraction, got {0}")]
    InvalidThreshold(f64),
    #[error("group {0} has no computable series")]
    EmptyGroup(String),
}

/// Weights of breadth, dispersion and speed. They sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViWeights {
    pub breadth: f64,
    pub dispersion: f64,
    pub speed: f64,
}

impl Default for ViWeights {
    fn default() -> Self {
        Self::equal()
    }
}

impl ViWeights {
    pub fn new(breadth: f64, dispersion: f64, speed: f64) -> Result<Self, VariabilityError> {
        for (name, w) in [("breadth", breadth), ("dispersion", dispersion), ("speed", speed)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(VariabilityError::InvalidWeights(format!(
                    "{name} weight {w} outside [0, 1]"
                )));
            }
        }
        let sum = breadth + dispersion + speed;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(VariabilityError::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            breadth,
            dispersion,
            speed,
        })
    }

    pub fn equal() -> Self {
        Self {
            breadth: 1.0 / 3.0,
            dispersion: 1.0 / 3.0,
            speed: 1.0 / 3.0,
        }
    }

    /// Weighted sum of the three components.
    pub fn combine(&self, breadth: f64, dispersion: f64, speed: f64) -> f64 {
        self.breadth * breadth + self.dispersion * dispersion + self.speed * speed
    }
}

impl std::str::FromStr for ViWeights {
    type Err = VariabilityError;

    /// Parses `wb,wd,ws` or `equal`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("equal") {
            return Ok(Self::equal());
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| VariabilityError::InvalidWeights(e.to_string()))?;
        match parts.as_slice() {
            [b, d, sp] => ViWeights::new(*b, *d, *sp),
            _ => Err(VariabilityError::InvalidWeights(format!(
                "expected three comma-separated weights, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViResult {
    pub breadth: f64,
    pub dispersion: f64,
    pub speed: f64,
    pub vi: f64,
    pub n_points: usize,
    pub threshold: f64,
    pub weights: ViWeights,
}

fn checked_mean(xs: &[f64], needed: usize) -> Result<f64, VariabilityError> {
    if xs.len() < needed {
        return Err(VariabilityError::TooShort { needed, got: xs.len() });
    }
    let mu = stats::mean(xs);
    if mu == 0.0 {
        return Err(VariabilityError::ZeroMean);
    }
    Ok(mu)
}

/// Percent deviation of every value from the series mean.
pub fn variation_vector(xs: &[f64]) -> Result<Vec<f64>, VariabilityError> {
    let mu = checked_mean(xs, 2)?;
    Ok(xs.iter().map(|x| (x - mu) / mu * 100.0).collect())
}

/// Keeps only the deviations that move in the bad direction by more than
/// `threshold` (a fraction, so 0.1 means 10%); everything else becomes zero.
pub fn change_vector(variations: &[f64], direction: Direction, threshold: f64) -> Vec<f64> {
    let cut = threshold * 100.0;
    variations
        .iter()
        .map(|&v| match direction {
            Direction::Hib if v < -cut => v,
            Direction::Lib if v > cut => v,
            _ => 0.0,
        })
        .collect()
}

/// Magnitude of the mean of a change vector.
pub fn breadth(changes: &[f64]) -> f64 {
    if changes.is_empty() {
        return 0.0;
    }
    stats::mean(changes).abs()
}

/// Relative standard deviation, in percent.
pub fn dispersion(xs: &[f64]) -> Result<f64, VariabilityError> {
    let mu = checked_mean(xs, 2)?;
    Ok(stats::pop_std(xs) / mu.abs() * 100.0)
}

pub fn gradient(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    xs[1] - xs[0]
                } else if i == n - 1 {
                    xs[n - 1] - xs[n - 2]
                } else {
                    (xs[i + 1] - xs[i - 1]) / 2.0
                }
            })
            .collect(),
    }
}

/// Standard deviation of the gradient relative to the series mean, in percent.
pub fn speed(xs: &[f64]) -> Result<f64, VariabilityError> {
    let mu = checked_mean(xs, 3)?;
    Ok(stats::pop_std(&gradient(xs)) / mu.abs() * 100.0)
}

pub fn vi(xs: &[f64], direction: Direction, threshold: f64, weights: ViWeights) -> Result<ViResult, VariabilityError> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(VariabilityError::InvalidThreshold(threshold));
    }
    let speed = speed(xs)?;
    let dispersion = dispersion(xs)?;
    let breadth = breadth(&change_vector(&variation_vector(xs)?, direction, threshold));
    Ok(ViResult {
        breadth,
        dispersion,
        speed,
        vi: weights.combine(breadth, dispersion, speed),
        n_points: xs.len(),
        threshold,
        weights,
    })
}

/// One computed series in a VI report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViSeriesRow {
    pub vm: VmKey,
    pub metric: String,
    pub result: ViResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViSkip {
    pub vm: VmKey,
    pub metric: String,
    pub reason: String,
}

/// Mean components of every (instance, metric) series of one provider/class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViGroupRow {
    pub provider: String,
    pub vm_class: VmClass,
    pub breadth: f64,
    pub dispersion: f64,
    pub speed: f64,
    pub vi: f64,
    pub n_series: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViTable {
    pub series: Vec<ViSeriesRow>,
    pub groups: Vec<ViGroupRow>,
    pub skipped: Vec<ViSkip>,
}

/// Averages the per-series components of each group uniformly.
pub fn mean_of(results: &[ViResult]) -> Option<(f64, f64, f64, f64)> {
    if results.is_empty() {
        return None;
    }
    let col = |f: fn(&ViResult) -> f64| stats::mean(&results.iter().map(f).collect::<Vec<_>>());
    Some((
        col(|r| r.breadth),
        col(|r| r.dispersion),
        col(|r| r.speed),
        col(|r| r.vi),
    ))
}

/// Computes the indicator of every (vm, metric) series and averages them per
/// provider x class. Series that are too short or have zero mean are skipped
/// and counted.
pub fn aggregate_vi(
    dataset: &Dataset,
    catalog: &Catalog,
    threshold: f64,
    weights: ViWeights,
) -> Result<ViTable, VariabilityError> {
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(VariabilityError::InvalidThreshold(threshold));
    }
    let mut series_rows = Vec::new();
    let mut skipped = Vec::new();
    let mut grouped: BTreeMap<(String, VmClass), (Vec<ViResult>, usize)> = BTreeMap::new();

    for series in model::all_series(dataset) {
        let key = (series.vm.provider.clone(), series.vm.vm_class);
        let entry = grouped.entry(key).or_default();
        let Some(spec) = catalog.get(&series.metric) else {
            skipped.push(ViSkip {
                vm: series.vm.clone(),
                metric: series.metric.clone(),
                reason: "metric not in catalog".into(),
            });
            entry.1 += 1;
            continue;
        };
        match vi(&series.values(), spec.direction, threshold, weights) {
            Ok(result) => {
                entry.0.push(result);
                series_rows.push(ViSeriesRow {
                    vm: series.vm,
                    metric: series.metric,
                    result,
                });
            }
            Err(e) => {
                entry.1 += 1;
                skipped.push(ViSkip {
                    vm: series.vm,
                    metric: series.metric,
                    reason: e.to_string(),
                });
            }
        }
    }

    let mut groups = Vec::new();
    for ((provider, vm_class), (results, skip_count)) in grouped {
        let (breadth, dispersion, speed, vi) =
            mean_of(&results).ok_or_else(|| VariabilityError::EmptyGroup(format!("{provider}/{vm_class}")))?;
        groups.push(ViGroupRow {
            provider,
            vm_class,
            breadth,
            dispersion,
            speed,
            vi,
            n_series: results.len(),
            skipped: skip_count,
        });
    }
    Ok(ViTable {
        series: series_rows,
        groups,
        skipped,
    })
}
