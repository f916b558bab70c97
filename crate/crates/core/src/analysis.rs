//! Descriptive analyses: RSD summaries, percentile filtering, correlation
//! matrices, gradient-coincidence isolation checks and cost/performance ratio.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Dataset, Direction, Series, VmKey};
use crate::stats;
use crate::variability::{self, VariabilityError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no series for the requested selection")]
    EmptySelection,
    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("fewer than 3 shared rounds between {0} and {1}")]
    InsufficientOverlap(String, String),
    #[error("performance value must be positive, got {0}")]
    NonPositivePerformance(f64),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Variability(#[from] VariabilityError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsdRow {
    pub metric: String,
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub n_vms: usize,
    /// Same statistics after 5th-95th percentile filtering of every series.
    pub filtered_avg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsdSummary {
    pub provider: String,
    pub rows: Vec<RsdRow>,
}

/// Per metric, the RSD of every VM series of `provider` and their
/// mean/min/max.
pub fn rsd_summary(dataset: &Dataset, provider: &str) -> Result<RsdSummary, AnalysisError> {
    let subset = dataset.for_provider(provider);
    if subset.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    let mut per_metric: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for series in model::all_series(&subset) {
        let values = series.values();
        let Ok(rsd) = variability::dispersion(&values) else {
            continue;
        };
        let entry = per_metric.entry(series.metric.clone()).or_default();
        entry.0.push(rsd);
        if let Ok(filtered) = percentile_filter(&values, 5.0, 95.0) {
            if let Ok(f) = variability::dispersion(&filtered) {
                entry.1.push(f);
            }
        }
    }
    if per_metric.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    let rows = per_metric
        .into_iter()
        .map(|(metric, (rsds, filtered))| RsdRow {
            metric,
            avg: stats::mean(&rsds),
            min: rsds.iter().copied().fold(f64::INFINITY, f64::min),
            max: rsds.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n_vms: rsds.len(),
            filtered_avg: (!filtered.is_empty()).then(|| stats::mean(&filtered)),
        })
        .collect();
    Ok(RsdSummary {
        provider: provider.to_string(),
        rows,
    })
}

/// Keeps the values inside [P_lo, P_hi] (inclusive), preserving order.
pub fn percentile_filter(xs: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>, AnalysisError> {
    if xs.len() < 20 {
        return Err(AnalysisError::TooShort {
            needed: 20,
            got: xs.len(),
        });
    }
    let (p_lo, p_hi) = percentile_bounds(xs, lo, hi);
    Ok(retain_between(xs, p_lo, p_hi))
}

pub fn percentile_bounds(xs: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        stats::percentile_sorted(&sorted, lo),
        stats::percentile_sorted(&sorted, hi),
    )
}

/// Values inside the closed interval `[lo, hi]`, in their original order.
pub fn retain_between(xs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    xs.iter().copied().filter(|x| *x >= lo && *x <= hi).collect()
}

/// Symmetric correlation matrix over a fixed metric order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub metrics: Vec<String>,
    /// Row-major; `None` where a pair has no defined correlation.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a][b]
    }
}

/// Pearson correlation of every metric pair over the rounds both metrics
/// share (pairwise deletion). Series are matched by round index.
pub fn correlation_matrix(series: &[Series]) -> Result<CorrelationMatrix, AnalysisError> {
    let k = series.len();
    let maps: Vec<BTreeMap<u64, f64>> = series
        .iter()
        .map(|s| s.points.iter().map(|p| (p.round_index, p.value)).collect())
        .collect();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        values[i][i] = Some(1.0);
        for j in (i + 1)..k {
            let (a, b): (Vec<f64>, Vec<f64>) = maps[i]
                .iter()
                .filter_map(|(r, x)| maps[j].get(r).map(|y| (*x, *y)))
                .unzip();
            if a.len() < 3 {
                return Err(AnalysisError::InsufficientOverlap(
                    series[i].metric.clone(),
                    series[j].metric.clone(),
                ));
            }
            let rho = stats::pearson(&a, &b);
            values[i][j] = rho;
            values[j][i] = rho;
        }
    }
    Ok(CorrelationMatrix {
        metrics: series.iter().map(|s| s.metric.clone()).collect(),
        values,
    })
}

/// Correlation matrix of one VM over `metrics` (catalog order); metrics that
/// the VM never produced are left out.
pub fn vm_correlation(dataset: &Dataset, vm: &VmKey, metrics: &[&str]) -> Result<CorrelationMatrix, AnalysisError> {
    let series: Vec<Series> = metrics
        .iter()
        .filter_map(|m| model::to_series(dataset, m, vm).ok())
        .collect();
    if series.is_empty() {
        return Err(AnalysisError::EmptySelection);
    }
    correlation_matrix(&series)
}

/// Element-wise mean of per-VM matrices over the union of their metrics.
/// Undefined entries are excluded from the mean of their cell.
pub fn mean_correlation(matrices: &[CorrelationMatrix], order: &[&str]) -> CorrelationMatrix {
    let present: BTreeSet<&str> = matrices
        .iter()
        .flat_map(|m| m.metrics.iter().map(String::as_str))
        .collect();
    let metrics: Vec<String> = order
        .iter()
        .filter(|m| present.contains(*m))
        .map(|m| m.to_string())
        .collect();
    let k = metrics.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in 0..k {
            let cells: Vec<f64> = matrices
                .iter()
                .filter_map(|m| {
                    let a = m.metrics.iter().position(|x| *x == metrics[i])?;
                    let b = m.metrics.iter().position(|x| *x == metrics[j])?;
                    m.values[a][b]
                })
                .collect();
            if !cells.is_empty() {
                values[i][j] = Some(stats::mean(&cells));
            }
        }
    }
    CorrelationMatrix { metrics, values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceVerdict {
    pub metric_a: String,
    pub metric_b: String,
    pub n: usize,
    pub overlap: usize,
    pub threshold: f64,
    pub related: bool,
}

/// Indices (time points) of the `n` largest absolute consecutive differences
/// of the mean-normalized series. Time point `i + 1` labels the step from
/// `i` to `i + 1`; ties go to the earlier time point.
pub fn top_gradient_points(xs: &[f64], n: usize) -> Result<BTreeSet<usize>, AnalysisError> {
    if xs.len() <= n {
        return Err(AnalysisError::TooShort {
            needed: n + 1,
            got: xs.len(),
        });
    }
    let mu = stats::mean(xs);
    if mu == 0.0 {
        return Err(VariabilityError::ZeroMean.into());
    }
    let mut steps: Vec<(usize, f64)> = xs
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 1, (w[1] / mu - w[0] / mu).abs()))
        .collect();
    steps.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(steps.into_iter().take(n).map(|(i, _)| i).collect())
}

/// Compares the time points of the `n` biggest variations of two aligned
/// series; they are related when more than `n * threshold` points coincide.
pub fn gradient_coincidence(a: &[f64], b: &[f64], n: usize, threshold: f64) -> Result<(usize, bool), AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    let ta = top_gradient_points(a, n)?;
    let tb = top_gradient_points(b, n)?;
    let overlap = ta.intersection(&tb).count();
    Ok((overlap, overlap as f64 > n as f64 * threshold))
}

/// Coincidence check between two series of one VM, aligned on the rounds
/// both contain.
pub fn series_coincidence(
    a: &Series,
    b: &Series,
    n: usize,
    threshold: f64,
) -> Result<CoincidenceVerdict, AnalysisError> {
    let bm: BTreeMap<u64, f64> = b.points.iter().map(|p| (p.round_index, p.value)).collect();
    let (xa, xb): (Vec<f64>, Vec<f64>) = a
        .points
        .iter()
        .filter_map(|p| bm.get(&p.round_index).map(|v| (p.value, *v)))
        .unzip();
    let (overlap, related) = gradient_coincidence(&xa, &xb, n, threshold)?;
    Ok(CoincidenceVerdict {
        metric_a: a.metric.clone(),
        metric_b: b.metric.clone(),
        n,
        overlap,
        threshold,
        related,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cpr {
    pub ratio: f64,
    /// Free VMs are not ranked.
    pub excluded: bool,
}

/// Cost/performance ratio, lower is better: cost per unit of performance for
/// HIB metrics, cost times the measured quantity for LIB metrics.
pub fn cpr(mean_value: f64, direction: Direction, cost_per_hour: f64) -> Result<Cpr, AnalysisError> {
    if !(mean_value > 0.0) {
        return Err(AnalysisError::NonPositivePerformance(mean_value));
    }
    if cost_per_hour == 0.0 {
        return Ok(Cpr {
            ratio: 0.0,
            excluded: true,
        });
    }
    let ratio = match direction {
        Direction::Hib => cost_per_hour / mean_value,
        Direction::Lib => cost_per_hour * mean_value,
    };
    Ok(Cpr { ratio, excluded: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Measurement, VmClass};
    use chrono::DateTime;

    fn vm(provider: &str, instance: u32) -> VmKey {
        VmKey {
            provider: provider.into(),
            vm_class: VmClass::C1,
            vm_type: "t".into(),
            instance,
        }
    }

    fn series(metric: &str, values: &[f64]) -> Series {
        let ds = dataset(&[(vm("aws", 1), metric, values)]);
        model::to_series(&ds, metric, &vm("aws", 1)).unwrap()
    }

    fn dataset(specs: &[(VmKey, &str, &[f64])]) -> Dataset {
        let mut out = Vec::new();
        for (vm, metric, values) in specs {
            for (i, v) in values.iter().enumerate() {
                out.push(Measurement {
                    metric: metric.to_string(),
                    vm: vm.clone(),
                    round_index: i as u64,
                    trial_index: 0,
                    timestamp: DateTime::from_timestamp(i as i64 * 3600, 0).unwrap(),
                    value: *v,
                });
            }
        }
        Dataset::new(out)
    }

    #[test]
    fn rsd_single_vm() {
        let ds = dataset(&[(vm("aws", 1), "CPU_LAT", &[8.0, 12.0])]);
        let s = rsd_summary(&ds, "aws").unwrap();
        let r = &s.rows[0];
        assert_eq!((r.avg, r.min, r.max), (r.avg, r.avg, r.avg));
        assert!((r.avg - 20.0).abs() < 1e-12);
    }

    #[test]
    fn rsd_two_vms() {
        // RSD 2% and 4%: [98, 102] and [96, 104]
        let ds = dataset(&[
            (vm("aws", 1), "CPU_LAT", &[98.0, 102.0]),
            (vm("aws", 2), "CPU_LAT", &[96.0, 104.0]),
        ]);
        let r = &rsd_summary(&ds, "aws").unwrap().rows[0];
        assert!((r.avg - 3.0).abs() < 1e-12);
        assert!((r.min - 2.0).abs() < 1e-12);
        assert!((r.max - 4.0).abs() < 1e-12);
        assert_eq!(r.n_vms, 2);
        assert!(matches!(rsd_summary(&ds, "gcp"), Err(AnalysisError::EmptySelection)));
    }

    /// Reference filter: sort, compute the interpolated cut points by hand,
    /// slice.
    fn reference_filter(xs: &[f64], lo: f64, hi: f64) -> Vec<f64> {
        let mut s = xs.to_vec();
        s.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = (s.len() - 1) as f64 * p / 100.0;
            let i = h.floor() as usize;
            s[i] + (h - i as f64) * (s[(i + 1).min(s.len() - 1)] - s[i])
        };
        let (a, b) = (at(lo), at(hi));
        xs.iter().copied().filter(|x| *x >= a && *x <= b).collect()
    }

    #[test]
    fn percentile_filter_examples() {
        assert_eq!(percentile_filter(&[3.0; 100], 5.0, 95.0).unwrap().len(), 100);
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let kept = percentile_filter(&xs, 5.0, 95.0).unwrap();
        assert_eq!(kept, reference_filter(&xs, 5.0, 95.0));
        // P5 = 5.95, P95 = 95.05
        assert_eq!(kept.first(), Some(&6.0));
        assert_eq!(kept.last(), Some(&95.0));
        assert!(matches!(
            percentile_filter(&xs[..10], 5.0, 95.0),
            Err(AnalysisError::TooShort { .. })
        ));
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        let m = correlation_matrix(&[series("A", &x), series("B", &y), series("C", &z)]).unwrap();
        assert_eq!(m.get(0, 0), Some(1.0));
        assert!((m.get(0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.get(0, 2).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(m.get(1, 2), m.get(2, 1));
    }

    #[test]
    fn correlation_needs_overlap() {
        let a = series("A", &[1.0, 2.0]);
        let b = series("B", &[2.0, 1.0]);
        assert!(matches!(
            correlation_matrix(&[a, b]),
            Err(AnalysisError::InsufficientOverlap(..))
        ));
    }

    #[test]
    fn mean_of_matrices() {
        let m1 = CorrelationMatrix {
            metrics: vec!["A".into(), "B".into()],
            values: vec![vec![Some(1.0), Some(0.2)], vec![Some(0.2), Some(1.0)]],
        };
        let m2 = CorrelationMatrix {
            metrics: vec!["A".into(), "B".into()],
            values: vec![vec![Some(1.0), Some(0.6)], vec![Some(0.6), Some(1.0)]],
        };
        let m = mean_correlation(&[m1, m2], &["A", "B", "C"]);
        assert_eq!(m.metrics, vec!["A", "B"]);
        assert!((m.get(0, 1).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn coincidence_identical() {
        let x: Vec<f64> = (0..300).map(|i| 10.0 + ((i * 37) % 11) as f64).collect();
        let (overlap, related) = gradient_coincidence(&x, &x, 100, 0.6).unwrap();
        assert_eq!(overlap, 100);
        assert!(related);
        assert!(matches!(
            gradient_coincidence(&x[..100], &x[..100], 100, 0.6),
            Err(AnalysisError::TooShort { .. })
        ));
    }

    #[test]
    fn cpr_examples() {
        assert_eq!(cpr(4.0, Direction::Hib, 2.0).unwrap().ratio, 0.5);
        assert_eq!(cpr(4.0, Direction::Lib, 2.0).unwrap().ratio, 8.0);
        let free = cpr(4.0, Direction::Hib, 0.0).unwrap();
        assert_eq!(
            free,
            Cpr {
                ratio: 0.0,
                excluded: true
            }
        );
        assert!(cpr(0.0, Direction::Hib, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn filter_is_idempotent(xs in prop::collection::vec(-1e3f64..1e3, 40..200)) {
                let (lo, hi) = percentile_bounds(&xs, 5.0, 95.0);
                let once = percentile_filter(&xs, 5.0, 95.0).unwrap();
                prop_assert_eq!(&once, &retain_between(&xs, lo, hi));
                prop_assert_eq!(&retain_between(&once, lo, hi), &once);
            }

            #[test]
            fn correlation_symmetric_unit_diagonal(
                a in prop::collection::vec(0.0f64..100.0, 5..40),
                scale in 0.1f64..50.0,
                shift in -100.0f64..100.0,
            ) {
                let b: Vec<f64> = a.iter().rev().copied().collect();
                let a2: Vec<f64> = a.iter().map(|v| v * scale + shift).collect();
                let m = correlation_matrix(&[series("A", &a), series("B", &b)]).unwrap();
                let m2 = correlation_matrix(&[series("A", &a2), series("B", &b)]).unwrap();
                prop_assert_eq!(m.get(0, 0), Some(1.0));
                prop_assert_eq!(m.get(0, 1), m.get(1, 0));
                if let (Some(x), Some(y)) = (m.get(0, 1), m2.get(0, 1)) {
                    prop_assert!((-1.0..=1.0).contains(&x));
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }

            #[test]
            fn coincidence_symmetric(
                a in prop::collection::vec(1.0f64..100.0, 30..80),
                b in prop::collection::vec(1.0f64..100.0, 30..80),
            ) {
                let n = a.len().min(b.len());
                let (a, b) = (&a[..n], &b[..n]);
                prop_assert_eq!(
                    gradient_coincidence(a, b, 10, 0.6).unwrap(),
                    gradient_coincidence(b, a, 10, 0.6).unwrap()
                );
            }

            #[test]
            fn cpr_monotone(m1 in 0.01f64..1e4, dm in 0.01f64..1e4, cost in 0.001f64..10.0) {
                let m2 = m1 + dm;
                prop_assert!(cpr(m2, Direction::Hib, cost).unwrap().ratio < cpr(m1, Direction::Hib, cost).unwrap().ratio);
                prop_assert!(cpr(m2, Direction::Lib, cost).unwrap().ratio > cpr(m1, Direction::Lib, cost).unwrap().ratio);
            }
        }
    }
}
