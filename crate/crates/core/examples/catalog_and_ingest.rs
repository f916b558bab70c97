//! The 28-metric catalog and lenient CSV ingestion: good rows become
//! measurements, bad rows are reported with their line number.

use cloudvar::model::{ingest_csv_lenient, to_series, Catalog};

const CSV: &str = "\
timestamp,provider,vm_class,vm_type,instance,round,trial,metric,value
# provenance comments are skipped
2020-04-06T00:00:00Z,aws,C1,a1.large,1,0,0,CPU_EVENTS,927.1
2020-04-06T00:00:00Z,aws,C1,a1.large,1,0,1,CPU_EVENTS,925.4
2020-04-06T01:00:00Z,aws,C1,a1.large,1,1,0,CPU_EVENTS,931.0
2020-04-06T01:00:00Z,aws,C1,a1.large,1,1,0,GPU_FLOPS,12
2020-04-06T02:00:00Z,aws,C1,a1.large,1,2,0,CPU_EVENTS,not-a-number
2020-04-06T02:00:00Z,aws,C1,a1.large,1,2,0,CPU_EVENTS,929.9
";

fn main() {
    let catalog = Catalog::default();
    println!("{} metrics:", catalog.len());
    for m in &catalog.metrics {
        println!("  {:<12} {:<4} {:<10} {}", m.id, m.direction, m.unit, m.benchmark);
    }

    let (ds, rejected) = ingest_csv_lenient(CSV.as_bytes(), &catalog).expect("header is valid");
    println!("\naccepted {} rows, rejected {}", ds.len(), rejected.len());
    for r in &rejected {
        println!("  {r}");
    }

    // Trials of one round collapse to their mean: one point per round.
    let vm = ds.vms().into_iter().next().unwrap();
    let series = to_series(&ds, "CPU_EVENTS", &vm).unwrap();
    for p in &series.points {
        println!("round {} -> {:.2}", p.round_index, p.value);
    }
}
