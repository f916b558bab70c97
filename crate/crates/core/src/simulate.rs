//! Seeded generators for synthetic series and datasets. Used by the examples
//! and the test suites.

use chrono::{DateTime, Duration, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::harness::{synth_value, SyntheticProfile};
use crate::model::{Catalog, Dataset, Measurement, VmClass, VmKey};
use crate::seeds;

fn gaussian(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

pub fn white_noise(n: usize, mean: f64, sigma: f64, seed: u64) -> Vec<f64> {
    gaussian(n, sigma, seed).into_iter().map(|e| mean + e).collect()
}

/// `x_t = x_{t-1} + e_t` starting from `start`.
pub fn random_walk(n: usize, start: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let mut level = start;
    gaussian(n, sigma, seed)
        .into_iter()
        .map(|e| {
            level += e;
            level
        })
        .collect()
}

const BURN_IN: usize = 200;

/// `x_t = c + phi x_{t-1} + e_t`, after a burn-in.
pub fn ar1(n: usize, phi: f64, c: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let mut x = if (1.0 - phi).abs() > 1e-12 { c / (1.0 - phi) } else { c };
    let mut out = Vec::with_capacity(n);
    for (t, e) in gaussian(n + BURN_IN, sigma, seed).into_iter().enumerate() {
        x = c + phi * x + e;
        if t >= BURN_IN {
            out.push(x);
        }
    }
    out
}

/// `x_t = mu + e_t + theta e_{t-1}`.
pub fn ma1(n: usize, theta: f64, mu: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let e = gaussian(n + 1, sigma, seed);
    (1..=n).map(|t| mu + e[t] + theta * e[t - 1]).collect()
}

/// One measurement per round per metric, rounds `period` apart from `start`.
pub fn dataset_from_series(vm: &VmKey, start: DateTime<Utc>, period: Duration, series: &[(&str, Vec<f64>)]) -> Dataset {
    let mut measurements = Vec::new();
    for (metric, values) in series {
        for (i, v) in values.iter().enumerate() {
            measurements.push(Measurement {
                metric: metric.to_string(),
                vm: vm.clone(),
                round_index: i as u64,
                trial_index: 0,
                timestamp: start + period * i as i32,
                value: *v,
            });
        }
    }
    Dataset::new(measurements)
}

/// AR(1) panel over every catalog metric, shifted to a positive level.
pub fn ar1_panel(vm: &VmKey, catalog: &Catalog, n: usize, phi: f64, seed: u64) -> Dataset {
    let series: Vec<(&str, Vec<f64>)> = catalog
        .ids()
        .enumerate()
        .map(|(j, id)| {
            let xs = ar1(n, phi, 0.0, 1.0, seeds::mix(&[seed, j as u64]));
            (id, xs.into_iter().map(|x| 100.0 + 5.0 * x).collect())
        })
        .collect();
    dataset_from_series(vm, epoch(), Duration::hours(1), &series)
}

/// Monday 2020-04-06 00:00 UTC, the default start of simulated campaigns.
pub fn epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_586_131_200, 0).expect("valid timestamp")
}

/// `n_vms` VMs of one provider measured for `rounds` rounds of `period`
/// starting at `start`, each metric sampled once per round from `profile`
/// (reseeded per VM).
pub fn profile_dataset(
    provider: &str,
    vm_type: &str,
    n_vms: u32,
    rounds: u64,
    start: DateTime<Utc>,
    period: Duration,
    profile: &SyntheticProfile,
) -> Dataset {
    let mut measurements = Vec::new();
    for instance in 1..=n_vms {
        let vm = VmKey {
            provider: provider.to_string(),
            vm_class: VmClass::C1,
            vm_type: vm_type.to_string(),
            instance,
        };
        let p = profile.reseeded(&vm.to_string());
        for r in 0..rounds {
            let at = start + period * r as i32;
            for (j, m) in p.metrics.iter().enumerate() {
                measurements.push(Measurement {
                    metric: m.metric.clone(),
                    vm: vm.clone(),
                    round_index: r,
                    trial_index: 0,
                    timestamp: at,
                    value: synth_value(&p, j, at),
                });
            }
        }
    }
    Dataset::new(measurements)
}

/// Two noisy series of length `n` around 100 that share `shared` spikes at
/// seeded positions; every other point carries Gaussian noise of relative
/// size `noise`.
pub fn co_spiking_pair(n: usize, shared: usize, noise: f64, spike: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<usize> = (1..n).collect();
    positions.shuffle(&mut rng);
    let mut a = white_noise(n, 100.0, 100.0 * noise, seeds::mix(&[seed, 1]));
    let mut b = white_noise(n, 100.0, 100.0 * noise, seeds::mix(&[seed, 2]));
    for &i in &positions[..shared.min(n - 1)] {
        a[i] += 100.0 * spike;
        b[i] += 100.0 * spike;
    }
    (a, b)
}
