use std::path::Path;
use std::process::{Command, Output};

use chrono::Duration;
use cloudvar::cli::CampaignConfig;
use cloudvar::model::{Catalog, Dataset, VmClass, VmKey};
use cloudvar::simulate::{ar1_panel, dataset_from_series, epoch};

fn cloudvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudvar"))
        .args(args)
        .env_remove("CLOUDVAR_STORE")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn vm(instance: u32) -> VmKey {
    VmKey {
        provider: "flat".into(),
        vm_class: VmClass::C1,
        vm_type: "f1".into(),
        instance,
    }
}

fn write_dataset(path: &Path, ds: &Dataset) {
    let mut f = std::fs::File::create(path).unwrap();
    ds.write_csv(&mut f).unwrap();
}

// Data rows of a CSV report, provenance comments stripped.
fn rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn constant_fixture_has_zero_vi() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    let catalog = Catalog::default();
    let series: Vec<(&str, Vec<f64>)> = catalog.ids().map(|id| (id, vec![7.5; 48])).collect();
    let mut ds = dataset_from_series(&vm(1), epoch(), Duration::hours(1), &series);
    ds.measurements
        .extend(dataset_from_series(&vm(2), epoch(), Duration::hours(1), &series).measurements);
    write_dataset(&csv, &ds);

    let out = cloudvar(&["vi", "--input", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("# tool: cloudvar"));
    let table = rows(&text);
    assert_eq!(table.len(), 1);
    assert_eq!(table[0][0], "flat");
    for v in &table[0][2..6] {
        assert_eq!(v.parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(table[0][6], "56");

    let series = cloudvar(&["vi", "--series", "--input", csv.to_str().unwrap()]);
    assert_eq!(rows(&stdout(&series)).len(), 56);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cloudvar(&[
        "run",
        "--config",
        dir.path().join("absent.toml").to_str().unwrap(),
        "--store",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.toml"));

    assert_eq!(cloudvar(&["analyze", "nonsense"]).status.code(), Some(2));
    assert_eq!(
        cloudvar(&["vi", "--weights", "0.5,0.5,0.5", "--input", "x.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let mut config = CampaignConfig::synthetic_demo(1);
    config.suite.benchmarks[0].metrics.push("NOT_A_METRIC".into());
    std::fs::write(&cfg, config.to_toml().unwrap()).unwrap();
    let out = cloudvar(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--store",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOT_A_METRIC"));
}

#[test]
fn forecast_naive_and_arima() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ar.csv");
    let catalog = Catalog::default();
    let mut ds = ar1_panel(&vm(1), &catalog, 150, 0.6, 3);
    ds.measurements.retain(|m| m.metric.starts_with("CPU"));
    write_dataset(&csv, &ds);

    let args = ["forecast", "--models", "naive,arima", "--input", csv.to_str().unwrap()];
    let out = cloudvar(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("# models: naive,arima"));
    let table = rows(&text);
    assert_eq!(table.len(), 7 * 2);
    for r in &table {
        assert!(r[2] == "naive" || r[2] == "arima");
        assert!(r[6].parse::<f64>().unwrap() > 0.0, "mase {r:?}");
    }
    // rerun is byte-identical
    assert_eq!(stdout(&cloudvar(&args)), text);

    let json = cloudvar(&[
        "--json",
        "forecast",
        "--models",
        "arima",
        "--input",
        csv.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(doc["provenance"]["command"], "forecast");
    assert_eq!(doc["report"]["rows"].as_array().unwrap().len(), 7);

    let table = cloudvar(&[
        "forecast",
        "--table",
        "arima",
        "--models",
        "arima",
        "--input",
        csv.to_str().unwrap(),
    ]);
    let grid = rows(&stdout(&table));
    // seven metrics plus the mean row
    assert_eq!(grid.len(), 8);
}

#[test]
fn run_refuses_stored_rounds_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CampaignConfig::synthetic_demo(5).to_toml().unwrap()).unwrap();
    let store = dir.path().join("store");
    let (c, s) = (cfg.to_str().unwrap(), store.to_str().unwrap());

    let first = cloudvar(&["run", "--config", c, "--store", s, "--stop", "3"]);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(rows(&stdout(&first))[0][0], "12");
    assert!(store.join("manifest-0-3.json").exists());

    let again = cloudvar(&["run", "--config", c, "--store", s, "--start", "2", "--stop", "4"]);
    assert_eq!(again.status.code(), Some(2));
    let next = cloudvar(&["run", "--config", c, "--store", s, "--start", "3", "--stop", "4"]);
    assert_eq!(next.status.code(), Some(0));

    // the store feeds the analyses through the environment variable as well
    let out = Command::new(env!("CARGO_BIN_EXE_cloudvar"))
        .args(["analyze", "rsd", "--provider", "aws"])
        .env("CLOUDVAR_STORE", s)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&stdout(&out));
    assert_eq!(table.len(), 28);
    assert!(table.iter().all(|r| r[0] == "aws"));
}

#[test]
fn report_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CampaignConfig::synthetic_demo(9).to_toml().unwrap()).unwrap();
    let store = dir.path().join("store");
    let (c, s) = (cfg.to_str().unwrap(), store.to_str().unwrap());
    assert_eq!(
        cloudvar(&["run", "--config", c, "--store", s, "--stop", "6"])
            .status
            .code(),
        Some(0)
    );
    let out_dir = dir.path().join("reports");
    let out = cloudvar(&[
        "report",
        "--input",
        s,
        "--config",
        c,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    // six rounds are too few for forecasting and classification: warnings only
    assert_eq!(out.status.code(), Some(1));
    for name in [
        "vi",
        "rsd",
        "corr",
        "coincidence",
        "cpr",
        "forecast",
        "forecast_arima_table",
        "classify",
    ] {
        let text = std::fs::read_to_string(out_dir.join(format!("{name}.csv"))).unwrap();
        assert!(text.starts_with("# tool: cloudvar"), "{name}");
    }
    let cpr = rows(&std::fs::read_to_string(out_dir.join("cpr.csv")).unwrap());
    // free VMs are excluded rather than scored 0
    assert!(cpr.iter().filter(|r| r[0] == "chameleon").all(|r| r[7] == "true"));
    assert!(cpr.iter().filter(|r| r[0] == "aws").all(|r| r[7] == "false"));
}
