//! Variability indicator of single series and of provider x class groups.

use chrono::Duration;
use cloudvar::harness::{Spike, SyntheticProfile};
use cloudvar::model::{Catalog, Direction};
use cloudvar::simulate::{epoch, profile_dataset};
use cloudvar::variability::{aggregate_vi, vi, ViWeights};

fn main() {
    let w = ViWeights::equal();
    let stable = [100.0, 101.0, 99.0, 100.5, 99.5, 100.0];
    let jumpy = [100.0, 130.0, 70.0, 120.0, 60.0, 100.0];
    for (name, xs) in [
        ("stable", &stable[..]),
        ("jumpy", &jumpy[..]),
        ("ideal", &[42.0; 6][..]),
    ] {
        let r = vi(xs, Direction::Hib, 0.0, w).unwrap();
        println!(
            "{name:<7} breadth {:6.2}  dispersion {:6.2}  speed {:6.2}  VI {:6.2}",
            r.breadth, r.dispersion, r.speed, r.vi
        );
    }

    // A threshold ignores adverse deviations smaller than t.
    for t in [0.1, 0.35] {
        let r = vi(&jumpy, Direction::Hib, t, w).unwrap();
        println!("jumpy, t={t}: breadth {:.2}", r.breadth);
    }

    // Two synthetic providers, the second with frequent degradations.
    let catalog = Catalog::default();
    let ids: Vec<&str> = catalog.ids().collect();
    let calm = SyntheticProfile::typical(1, &ids);
    let mut noisy = calm.clone();
    for m in noisy.metrics.iter_mut() {
        m.noise = 0.08;
        m.spike = Some(Spike {
            probability: 0.05,
            magnitude: -0.3,
        });
    }
    let mut ds = profile_dataset("calm", "c1", 3, 168, epoch(), Duration::hours(1), &calm);
    ds.measurements
        .extend(profile_dataset("noisy", "n1", 3, 168, epoch(), Duration::hours(1), &noisy).measurements);

    let table = aggregate_vi(&ds, &catalog, 0.0, w).unwrap();
    println!("\nprovider class  bdth    dis  speed     VI  series");
    for g in &table.groups {
        println!(
            "{:<8} {:<5} {:5.2} {:6.2} {:6.2} {:6.2} {:7}",
            g.provider, g.vm_class, g.breadth, g.dispersion, g.speed, g.vi, g.n_series
        );
    }
}
