//! Relative standard deviation per metric across the VMs of a provider, with
//! and without 5th-95th percentile filtering of heavy-tailed noise.

use chrono::Duration;
use cloudvar::analysis::{percentile_filter, rsd_summary};
use cloudvar::harness::SyntheticProfile;
use cloudvar::model::Catalog;
use cloudvar::simulate::{epoch, profile_dataset};

fn main() {
    // 40 readings around 10 with one outlier on each side
    let mut xs: Vec<f64> = (0..38).map(|i| 10.0 + 0.1 * (i % 7) as f64).collect();
    xs.extend([60.0, 0.5]);
    let kept = percentile_filter(&xs, 5.0, 95.0).unwrap();
    println!(
        "kept {} of {}, range {:.1}..{:.1}",
        kept.len(),
        xs.len(),
        kept.iter().cloned().fold(f64::MAX, f64::min),
        kept.iter().cloned().fold(f64::MIN, f64::max)
    );

    let catalog = Catalog::default();
    let ids: Vec<&str> = catalog.ids().collect();
    let mut profile = SyntheticProfile::typical(5, &ids);
    for m in profile.metrics.iter_mut() {
        m.tail_df = Some(4.0);
        m.noise = 0.05;
    }
    let ds = profile_dataset("sim", "s1", 6, 500, epoch(), Duration::hours(1), &profile);
    let summary = rsd_summary(&ds, "sim").unwrap();
    println!("\nmetric        avg%   min%   max%  filtered%");
    for r in &summary.rows {
        println!(
            "{:<12} {:5.2}  {:5.2}  {:5.2}  {:9.2}",
            r.metric,
            r.avg,
            r.min,
            r.max,
            r.filtered_avg.unwrap_or(f64::NAN)
        );
    }
    let cut: Vec<f64> = summary
        .rows
        .iter()
        .filter_map(|r| Some(1.0 - r.filtered_avg? / r.avg))
        .collect();
    println!(
        "mean reduction {:.1}%",
        100.0 * cut.iter().sum::<f64>() / cut.len() as f64
    );
}
