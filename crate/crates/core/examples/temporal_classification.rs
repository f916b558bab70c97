//! Does the hour of the day or the weekday show in the metrics? Plants a
//! daily cycle on a few metrics and trains the logistic classifier with
//! stratified 10-fold cross-validation for every task.

use chrono::Duration;
use cloudvar::classification::{run_task, Task, TaskConfig};
use cloudvar::harness::{Diurnal, SyntheticProfile};
use cloudvar::model::Catalog;
use cloudvar::simulate::{epoch, profile_dataset};

fn main() {
    let catalog = Catalog::default();
    let ids: Vec<&str> = catalog.ids().collect();
    let mut profile = SyntheticProfile::typical(3, &ids);
    for (k, m) in profile.metrics.iter_mut().enumerate() {
        m.diurnal = (k < 6).then_some(Diurnal {
            amplitude: 0.2,
            peak_hour: 4.0 * k as f64,
        });
        m.spike = None;
    }
    // 30 days of hourly rounds on one VM
    let ds = profile_dataset("sim", "s1", 1, 720, epoch(), Duration::hours(1), &profile);

    let cfg = TaskConfig::default();
    for task in Task::ALL {
        for shuffle_labels in [false, true] {
            let r = run_task(
                &ds,
                &catalog,
                "sim",
                task,
                &TaskConfig {
                    shuffle_labels,
                    ..cfg.clone()
                },
            )
            .unwrap();
            println!(
                "{task:<8} {:<9} accuracy {:.3} +- {:.3} (random {:.3}, majority {:.3}, {} instances)",
                if shuffle_labels { "shuffled" } else { "" },
                r.mean,
                r.std,
                r.baseline,
                r.majority_baseline,
                r.n_instances
            );
        }
    }
}
