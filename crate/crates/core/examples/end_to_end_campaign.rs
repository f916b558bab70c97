//! Whole pipeline through the command-line entry point: a synthetic campaign
//! of 24 accelerated rounds, then every report. Pass a directory to keep the
//! output, otherwise a temporary one is used.
//!
//!     cargo run --release --example end_to_end_campaign -- /tmp/demo

use std::path::PathBuf;

use cloudvar::cli::{main_with_args, CampaignConfig};

fn cloudvar(args: &[&str]) -> i32 {
    let code = main_with_args(std::iter::once("cloudvar").chain(args.iter().copied()));
    println!("cloudvar {} -> exit {code}", args.join(" "));
    code
}

fn main() {
    let keep = std::env::args().nth(1).map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("tempdir");
    let root = keep.unwrap_or_else(|| tmp.path().to_path_buf());
    std::fs::create_dir_all(&root).unwrap();

    let config = root.join("campaign.toml");
    std::fs::write(&config, CampaignConfig::synthetic_demo(7).to_toml().unwrap()).unwrap();
    let store = root.join("store");
    let (config, store) = (config.to_str().unwrap(), store.to_str().unwrap());

    // Two halves of the same campaign; the second must not overlap the first.
    cloudvar(&[
        "run", "--config", config, "--store", store, "--start", "0", "--stop", "12",
    ]);
    cloudvar(&[
        "run", "--config", config, "--store", store, "--start", "12", "--stop", "24",
    ]);
    let refused = cloudvar(&[
        "run", "--config", config, "--store", store, "--start", "10", "--stop", "14",
    ]);
    assert_eq!(refused, 2);

    let out = root.join("reports");
    let out = out.to_str().unwrap();
    // 24 rounds are too short for forecasting and classification, so warnings
    // (exit 1) are expected there.
    cloudvar(&["report", "--input", store, "--config", config, "--out-dir", out]);
    cloudvar(&["vi", "--input", store, "--config", config]);
    for entry in std::fs::read_dir(out).unwrap() {
        println!("  {}", entry.unwrap().path().display());
    }
}
