//! Randomized multiple trials: every round executes the 34 trials of the
//! default suite in a fresh seeded order. Runs one round on the synthetic
//! backend and prints the schedule.

use chrono::Duration;
use cloudvar::harness::{plan_round, run_round, SimulatedClock, SuiteBackend, SuiteConfig};
use cloudvar::model::{TrialStatus, VmClass, VmKey};
use cloudvar::simulate::epoch;

fn main() {
    let suite = SuiteConfig::synthetic_default(1);
    let vm = VmKey {
        provider: "sim".into(),
        vm_class: VmClass::C2,
        vm_type: "s2".into(),
        instance: 1,
    };
    for round in 0..3 {
        let schedule = plan_round(&suite, round, 99);
        let order: Vec<String> = schedule
            .entries
            .iter()
            .take(8)
            .map(|e| format!("{}#{}", e.benchmark, e.repetition))
            .collect();
        println!("round {round}: {} ...", order.join(" "));
    }

    let mut clock = SimulatedClock::new(epoch(), Duration::seconds(30));
    let schedule = plan_round(&suite, 0, 99);
    let result = run_round(&suite, &schedule, &vm, &mut SuiteBackend::new(&suite), &mut clock).unwrap();
    println!(
        "\n{} trials, {} failed",
        result.trials.len(),
        result.trials.iter().filter(|t| t.is_failed()).count()
    );
    for t in result.trials.iter().take(5) {
        if let TrialStatus::Parsed { values } = &t.status {
            println!(
                "  {} {} -> {} values, first {:?}",
                t.started_at.format("%H:%M:%S"),
                t.benchmark,
                values.len(),
                values[0]
            );
        }
    }
}
