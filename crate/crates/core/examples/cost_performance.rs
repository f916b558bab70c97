//! Cost/performance ratio: the mean performance normalized by the hourly
//! price. Higher-is-better metrics divide the price by the mean, lower-is-better
//! metrics multiply. Free VMs are excluded rather than scored zero.

use cloudvar::analysis::cpr;
use cloudvar::model::{Catalog, Direction};

fn main() {
    let catalog = Catalog::default();
    let vms = [("aws a1.large", 0.051), ("azure A2-v2", 0.091), ("egi T1", 0.0)];
    // (metric, mean value per VM)
    let means = [("CPU_EVENTS", [927.0, 610.0, 1010.0]), ("CPU_LAT", [1.08, 1.64, 0.99])];
    for (metric, values) in means {
        let direction = catalog.get(metric).map_or(Direction::Hib, |m| m.direction);
        println!("{metric} ({direction})");
        for ((name, price), mean) in vms.iter().zip(values) {
            let c = cpr(mean, direction, *price).unwrap();
            if c.excluded {
                println!("  {name:<14} free, excluded");
            } else {
                println!("  {name:<14} {:.6}", c.ratio);
            }
        }
    }
}
