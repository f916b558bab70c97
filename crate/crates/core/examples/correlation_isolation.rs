//! Are metrics isolated from each other? Pearson correlations over one VM's
//! rounds, then gradient coincidence: do two metrics jump at the same time?

use chrono::Duration;
use cloudvar::analysis::{gradient_coincidence, vm_correlation};
use cloudvar::model::{VmClass, VmKey};
use cloudvar::simulate::{co_spiking_pair, dataset_from_series, epoch, white_noise};

fn main() {
    let vm = VmKey {
        provider: "sim".into(),
        vm_class: VmClass::C1,
        vm_type: "s1".into(),
        instance: 1,
    };
    let (disk, net) = co_spiking_pair(720, 70, 0.01, 0.5, 1);
    let cpu = white_noise(720, 100.0, 1.0, 2);
    let ds = dataset_from_series(
        &vm,
        epoch(),
        Duration::hours(1),
        &[
            ("DISK_LAT", disk.clone()),
            ("NET_1", net.clone()),
            ("CPU_LAT", cpu.clone()),
        ],
    );
    let m = vm_correlation(&ds, &vm, &["DISK_LAT", "NET_1", "CPU_LAT"]).unwrap();
    println!("{:>10} {}", "", m.metrics.join("  "));
    for (i, name) in m.metrics.iter().enumerate() {
        let row: Vec<String> = (0..m.metrics.len())
            .map(|j| m.get(i, j).map_or("   -   ".into(), |r| format!("{r:7.3}")))
            .collect();
        println!("{name:>10} {}", row.join(" "));
    }

    for (name, b) in [("NET_1", &net), ("CPU_LAT", &cpu)] {
        let (overlap, related) = gradient_coincidence(&disk, b, 100, 0.6).unwrap();
        println!("DISK_LAT vs {name}: {overlap}/100 top variations shared, related = {related}");
    }
}
