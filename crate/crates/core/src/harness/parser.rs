//! Extraction of metric values from raw benchmark output.
//!
//! Values a benchmark did not print are omitted rather than defaulted; only a
//! completely empty extraction is an error.

use std::str::FromStr;

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParserId {
    /// `METRIC_ID: value` lines, as emitted by the synthetic probe.
    Kv,
    Sysbench,
    Nench,
    CpuBench,
    DdSmall,
    DdLarge,
    /// wget transfer summary.
    Download,
    /// wrk summary.
    Wrk,
}

impl FromStr for ParserId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "kv" => ParserId::Kv,
            "sysbench" => ParserId::Sysbench,
            "nench" => ParserId::Nench,
            "cpubench" => ParserId::CpuBench,
            "dd-small" => ParserId::DdSmall,
            "dd-large" => ParserId::DdLarge,
            "download" => ParserId::Download,
            "wrk" => ParserId::Wrk,
            other => return Err(HarnessError::UnknownParser(other.to_string())),
        })
    }
}

pub fn parse_output(raw: &str, parser_id: &str) -> Result<Vec<(String, f64)>, HarnessError> {
    let parser: ParserId = parser_id.parse()?;
    let values = match parser {
        ParserId::Kv => parse_kv(raw),
        ParserId::Sysbench => parse_sysbench(raw),
        ParserId::Nench => parse_nench(raw),
        ParserId::CpuBench => parse_cpubench(raw),
        ParserId::DdSmall => parse_dd(raw, "DISKB_LAT"),
        ParserId::DdLarge => parse_dd(raw, "DISKB_THR"),
        ParserId::Download => parse_download(raw),
        ParserId::Wrk => after_label(raw, "Requests/sec:")
            .map(|v| vec![("APPB".to_string(), v)])
            .unwrap_or_default(),
    };
    let values: Vec<(String, f64)> = values.into_iter().filter(|(_, v)| v.is_finite()).collect();
    if values.is_empty() {
        return Err(HarnessError::UnparseableOutput(parser_id.to_string()));
    }
    Ok(values)
}

fn first_number(s: &str) -> Option<f64> {
    s.split(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == ',')
        .find_map(|tok| tok.trim_end_matches('s').parse::<f64>().ok())
}

/// Number following the first line that contains `label`.
fn after_label(raw: &str, label: &str) -> Option<f64> {
    raw.lines()
        .find_map(|l| l.find(label).map(|i| &l[i + label.len()..]))
        .and_then(first_number)
}

fn parse_kv(raw: &str) -> Vec<(String, f64)> {
    raw.lines()
        .filter_map(|line| {
            let line = line.trim();
            let (key, value) = line.split_once(':').or_else(|| line.split_once('='))?;
            let key = key.trim();
            let valid = !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
            if !valid {
                return None;
            }
            Some((key.to_string(), value.trim().parse::<f64>().ok()?))
        })
        .collect()
}

/// sysbench prints its banner once per invocation; each section is one test.
fn sysbench_sections(raw: &str) -> Vec<String> {
    let mut sections = vec![String::new()];
    for line in raw.lines() {
        if line.starts_with("sysbench ") && !sections.last().unwrap().trim().is_empty() {
            sections.push(String::new());
        }
        let cur = sections.last_mut().unwrap();
        cur.push_str(line);
        cur.push('\n');
    }
    sections
}

/// `avg:` inside the `Latency (ms):` block.
fn latency_avg(section: &str) -> Option<f64> {
    let start = section.find("Latency (ms):")?;
    after_label(&section[start..], "avg:")
}

fn parse_sysbench(raw: &str) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut push = |id: &str, v: Option<f64>| {
        if let Some(v) = v {
            out.push((id.to_string(), v));
        }
    };
    for section in sysbench_sections(raw) {
        if section.contains("events per second:") {
            push("CPU_EVENTS", after_label(&section, "events per second:"));
            push("CPU_LAT", latency_avg(&section));
        } else if section.contains("MiB transferred") || section.contains("memory speed test") {
            let speed = section
                .lines()
                .find(|l| l.contains("MiB transferred"))
                .and_then(|l| l.split_once('(').map(|(_, r)| r))
                .and_then(first_number);
            push("MEM_SPEED", speed);
            push("MEM_LAT", latency_avg(&section));
        } else if section.contains("File operations:") {
            push("DISK_FILE_R", after_label(&section, "reads/s:"));
            push("DISK_FILE_W", after_label(&section, "writes/s:"));
            push("DISK_FILE_F", after_label(&section, "fsyncs/s:"));
            push("DISK_THR_R", after_label(&section, "read, MiB/s:"));
            push("DISK_THR_W", after_label(&section, "written, MiB/s:"));
            push("DISK_LAT", latency_avg(&section));
        } else if section.contains("Latency (ms):") {
            push("CPU_TH_LAT", latency_avg(&section));
        }
    }
    out
}

/// `<number> <unit>` scaled to the given base units.
fn scaled(value: f64, unit: &str, table: &[(&str, f64)]) -> Option<f64> {
    table
        .iter()
        .find(|(u, _)| unit.eq_ignore_ascii_case(u))
        .map(|(_, f)| value * f)
}

const MIB_RATES: &[(&str, f64)] = &[
    ("B/s", 1.0 / 1_048_576.0),
    ("KiB/s", 1.0 / 1024.0),
    ("MiB/s", 1.0),
    ("GiB/s", 1024.0),
];

/// Last `<number> <unit>/s` pair on the line, in MiB/s.
fn rate_mib(line: &str) -> Option<f64> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    toks.windows(2).rev().find_map(|w| {
        let v = w[0].trim_start_matches('(').parse::<f64>().ok()?;
        scaled(v, w[1].trim_end_matches([',', ')']), MIB_RATES)
    })
}

fn parse_nench(raw: &str) -> Vec<(String, f64)> {
    const TIMINGS: &[(&str, &str)] = &[
        ("SHA256-hashing", "CPU_SHA256"),
        ("bzip2-compressing", "CPU_BZIP2"),
        ("AES-encrypting", "CPU_AES"),
    ];
    const MIRRORS: &[(&str, &str)] = &[
        ("Cachefly CDN:", "NET_1"),
        ("Leaseweb (NL):", "NET_2"),
        ("Softlayer DAL (US):", "NET_3"),
        ("Online.net (FR):", "NET_4"),
        ("OVH BHS (CA):", "NET_5"),
    ];
    let lines: Vec<&str> = raw.lines().collect();
    let next_nonempty = |i: usize| lines[i + 1..].iter().find(|l| !l.trim().is_empty()).copied();
    let mut out = Vec::new();
    let mut in_ipv6 = false;

    for (i, line) in lines.iter().enumerate() {
        let t = line.trim();
        if t.starts_with("IPv6") {
            in_ipv6 = true;
        } else if t.starts_with("IPv4") {
            in_ipv6 = false;
        }
        for (needle, id) in TIMINGS {
            if t.starts_with("CPU:") && t.contains(needle) {
                if let Some(v) = next_nonempty(i).and_then(first_number) {
                    out.push((id.to_string(), v));
                }
            }
        }
        if t.starts_with("ioping: seek rate") {
            // min/avg/max/mdev = 55.4 us / 173.0 us / 6.92 ms / 274.0 us
            let seek = next_nonempty(i)
                .and_then(|l| l.split_once('='))
                .and_then(|(_, rest)| rest.split('/').nth(1))
                .and_then(|avg| {
                    let mut it = avg.split_whitespace();
                    let v = it.next()?.parse::<f64>().ok()?;
                    scaled(v, it.next()?, &[("ns", 1e-3), ("us", 1.0), ("ms", 1e3), ("s", 1e6)])
                });
            if let Some(v) = seek {
                out.push(("DISK_SEEK".into(), v));
            }
        }
        if t.starts_with("ioping: sequential read speed") {
            if let Some(v) = next_nonempty(i).and_then(rate_mib) {
                out.push(("DISK_SEQ_R".into(), v));
            }
        }
        if t.starts_with("average:") {
            if let Some(v) = rate_mib(t) {
                out.push(("DISK_SEQ_W".into(), v));
            }
        }
        if !in_ipv6 {
            for (needle, id) in MIRRORS {
                if let Some(rest) = t.strip_prefix(needle) {
                    if let Some(v) = rate_mib(rest) {
                        out.push((id.to_string(), v));
                    }
                }
            }
        }
    }
    out
}

fn parse_cpubench(raw: &str) -> Vec<(String, f64)> {
    if let Some(v) = after_label(raw, "mean duration:") {
        return vec![("CPU_DUR".into(), v)];
    }
    let runs: Vec<f64> = raw
        .lines()
        .filter_map(|l| l.trim().strip_prefix("duration:").and_then(first_number))
        .collect();
    if runs.is_empty() {
        return Vec::new();
    }
    vec![("CPU_DUR".into(), runs.iter().sum::<f64>() / runs.len() as f64)]
}

/// `... copied, 2.345 s, 458 MB/s` in MB/s (decimal units, as dd prints them).
fn parse_dd(raw: &str, metric: &str) -> Vec<(String, f64)> {
    const MB_RATES: &[(&str, f64)] = &[
        ("B/s", 1e-6),
        ("kB/s", 1e-3),
        ("MB/s", 1.0),
        ("GB/s", 1e3),
        ("KiB/s", 1024.0 / 1e6),
        ("MiB/s", 1_048_576.0 / 1e6),
        ("GiB/s", 1_073_741_824.0 / 1e6),
    ];
    raw.lines()
        .filter(|l| l.contains("copied"))
        .filter_map(|l| {
            let last = l.rsplit(',').next()?.trim();
            let mut it = last.split_whitespace();
            let v = it.next()?.parse::<f64>().ok()?;
            scaled(v, it.next()?, MB_RATES)
        })
        .next_back()
        .map(|v| vec![(metric.to_string(), v)])
        .unwrap_or_default()
}

/// wget: `2020-04-03 14:00:05 (11.2 MB/s) - '/dev/null' saved [...]`.
/// wget's KB/MB/GB are binary multiples.
fn parse_download(raw: &str) -> Vec<(String, f64)> {
    const WGET_RATES: &[(&str, f64)] = &[
        ("B/s", 1.0 / 1_048_576.0),
        ("KB/s", 1.0 / 1024.0),
        ("MB/s", 1.0),
        ("GB/s", 1024.0),
    ];
    let metric = if raw.contains("100MB") { "NETB_2" } else { "NETB_1" };
    raw.lines()
        .filter(|l| l.contains("saved"))
        .filter_map(|l| {
            let inner = l.split_once('(')?.1.split_once(')')?.0;
            let mut it = inner.split_whitespace();
            let v = it.next()?.parse::<f64>().ok()?;
            scaled(v, it.next()?, WGET_RATES)
        })
        .next_back()
        .map(|v| vec![(metric.to_string(), v)])
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYSBENCH_CPU: &str = "\
sysbench 1.0.18 (using system LuaJIT 2.1.0-beta3)

Running the test with following options:
Number of threads: 1
Initializing random number generator from current time


Prime numbers limit: 10000

Initializing worker threads...

Threads started!

CPU speed:
    events per second:   927.41

General statistics:
    total time:                          10.0009s
    total number of events:              9276

Latency (ms):
         min:                                    1.07
         avg:                                    1.08
         max:                                    2.34
         95th percentile:                        1.10
         sum:                                 9997.13

Threads fairness:
    events (avg/stddev):           9276.0000/0.00
    execution time (avg/stddev):   9.9971/0.00
";

    const SYSBENCH_REST: &str = "\
sysbench 1.0.18 (using system LuaJIT 2.1.0-beta3)

Running the test with following options:
Number of threads: 4

General statistics:
    total time:                          10.0011s
    total number of events:              50512

Latency (ms):
         min:                                    0.70
         avg:                                    0.79
         max:                                    8.48

sysbench 1.0.18 (using system LuaJIT 2.1.0-beta3)

Running memory speed test with the following options:
  block size: 1KiB
  operation: write

Total operations: 50484427 (5047557.11 per second)

49301.20 MiB transferred (4929.25 MiB/sec)

Latency (ms):
         min:                                    0.00
         avg:                                    0.12
         max:                                    2.01

sysbench 1.0.18 (using system LuaJIT 2.1.0-beta3)

Extra file open flags: (none)
128 files, 8MiB each

File operations:
    reads/s:                      1234.56
    writes/s:                     823.04
    fsyncs/s:                     2634.01

Throughput:
    read, MiB/s:                  19.29
    written, MiB/s:               12.86

Latency (ms):
         min:                                    0.00
         avg:                                    0.21
         max:                                   15.30
";

    const NENCH: &str = "\
-------------------------------------------------
 nench.sh v2019.07.20 -- https://git.io/nench.sh
-------------------------------------------------

Processor:    Intel(R) Xeon(R) Platinum 8175M CPU @ 2.50GHz
CPU cores:    2

CPU: SHA256-hashing 500 MB
    1.681 seconds
CPU: bzip2-compressing 500 MB
    5.341 seconds
CPU: AES-encrypting 500 MB
    1.420 seconds

ioping: seek rate
    min/avg/max/mdev = 55.4 us / 173.0 us / 6.92 ms / 274.0 us
ioping: sequential read speed
    generated 11.53 k requests in 5.00 s, 2.81 GiB, 2.31 k iops, 576.3 MiB/s

dd: sequential write speed
    1st run:    417.15 MiB/s
    2nd run:    442.41 MiB/s
    3rd run:    448.13 MiB/s
    average:    435.90 MiB/s

IPv4 speedtests
    your IPv4:    18.194.xxxx

    Cachefly CDN:         89.64 MiB/s
    Leaseweb (NL):        45.56 MiB/s
    Softlayer DAL (US):   6.21 MiB/s
    Online.net (FR):      55.84 MiB/s
    OVH BHS (CA):         512.00 KiB/s

IPv6 speedtests
    your IPv6:    2a05:xxxx

    Cachefly CDN:         1.00 MiB/s
";

    fn get(values: &[(String, f64)], id: &str) -> Option<f64> {
        values.iter().find(|(k, _)| k == id).map(|(_, v)| *v)
    }

    #[test]
    fn sysbench_cpu_block() {
        let v = parse_output(SYSBENCH_CPU, "sysbench").unwrap();
        assert_eq!(get(&v, "CPU_EVENTS"), Some(927.41));
        assert_eq!(get(&v, "CPU_LAT"), Some(1.08));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn sysbench_all_sections() {
        let raw = format!("{SYSBENCH_CPU}{SYSBENCH_REST}");
        let v = parse_output(&raw, "sysbench").unwrap();
        let expected = [
            ("CPU_EVENTS", 927.41),
            ("CPU_LAT", 1.08),
            ("CPU_TH_LAT", 0.79),
            ("MEM_SPEED", 4929.25),
            ("MEM_LAT", 0.12),
            ("DISK_FILE_R", 1234.56),
            ("DISK_FILE_W", 823.04),
            ("DISK_FILE_F", 2634.01),
            ("DISK_THR_R", 19.29),
            ("DISK_THR_W", 12.86),
            ("DISK_LAT", 0.21),
        ];
        assert_eq!(v.len(), 11);
        for (id, val) in expected {
            assert_eq!(get(&v, id), Some(val), "{id}");
        }
    }

    #[test]
    fn missing_latency_is_omitted() {
        let raw = SYSBENCH_CPU.replace("         avg:                                    1.08\n", "");
        let v = parse_output(&raw, "sysbench").unwrap();
        assert_eq!(get(&v, "CPU_EVENTS"), Some(927.41));
        assert_eq!(get(&v, "CPU_LAT"), None);
    }

    #[test]
    fn empty_is_unparseable() {
        assert!(matches!(
            parse_output("", "sysbench"),
            Err(HarnessError::UnparseableOutput(p)) if p == "sysbench"
        ));
        assert!(matches!(
            parse_output("x", "bogus"),
            Err(HarnessError::UnknownParser(_))
        ));
    }

    #[test]
    fn nench_block() {
        let v = parse_output(NENCH, "nench").unwrap();
        assert_eq!(get(&v, "CPU_SHA256"), Some(1.681));
        assert_eq!(get(&v, "CPU_BZIP2"), Some(5.341));
        assert_eq!(get(&v, "CPU_AES"), Some(1.420));
        assert_eq!(get(&v, "DISK_SEEK"), Some(173.0));
        assert_eq!(get(&v, "DISK_SEQ_R"), Some(576.3));
        assert_eq!(get(&v, "DISK_SEQ_W"), Some(435.90));
        assert_eq!(get(&v, "NET_1"), Some(89.64));
        assert_eq!(get(&v, "NET_4"), Some(55.84));
        assert_eq!(get(&v, "NET_5"), Some(0.5));
        // the IPv6 block must not override IPv4 values
        assert_eq!(v.iter().filter(|(k, _)| k == "NET_1").count(), 1);
        assert_eq!(v.len(), 11);
    }

    #[test]
    fn small_tools() {
        let dd = "1000+0 records in\n1000+0 records out\n512000 bytes (512 kB, 500 KiB) copied, 1.25 s, 410 kB/s\n";
        let v = parse_output(dd, "dd-small").unwrap();
        assert_eq!(v[0].0, "DISKB_LAT");
        assert!((v[0].1 - 0.41).abs() < 1e-12);
        let dd = "1073741824 bytes (1.1 GB, 1.0 GiB) copied, 2.345 s, 1.2 GB/s\n";
        assert_eq!(
            parse_output(dd, "dd-large").unwrap(),
            vec![("DISKB_THR".into(), 1200.0)]
        );
        let wrk = "Running 30s test @ http://127.0.0.1:8000/\nRequests/sec:   1234.56\nTransfer/sec:      1.2MB\n";
        assert_eq!(parse_output(wrk, "wrk").unwrap(), vec![("APPB".into(), 1234.56)]);
        let wget = "--2020-04-03 14:00:05--  http://x/100MB.bin\n2020-04-03 14:00:15 (11.2 MB/s) - '/dev/null' saved [104857600/104857600]\n";
        assert_eq!(parse_output(wget, "download").unwrap(), vec![("NETB_2".into(), 11.2)]);
        let cpu = "duration: 10.0 s\nduration: 12.0 s\n";
        assert_eq!(parse_output(cpu, "cpubench").unwrap(), vec![("CPU_DUR".into(), 11.0)]);
        let kv = "# synthetic\nCPU_LAT: 1.5\nnot a metric: 3\nAPPB=7\n";
        assert_eq!(
            parse_output(kv, "kv").unwrap(),
            vec![("CPU_LAT".into(), 1.5), ("APPB".into(), 7.0)]
        );
    }
}
