use std::collections::BTreeMap;
use std::ops::Range;
use std::process::Command;

use chrono::{DateTime, Duration, DurationRound, Utc};

use super::{
    parse_output, plan_round, BenchmarkSpec, Bins, HarnessError, Probe, SuiteConfig, SyntheticProfile, TrialSchedule,
};
use crate::model::{RoundResult, TrialRecord, TrialStatus, VmKey};
use crate::seeds;

/// Time source for the round loop. Tests use [`SimulatedClock`] to compress
/// the hourly cadence.
pub trait Clock {
    fn now(&mut self) -> DateTime<Utc>;
    fn sleep_until(&mut self, t: DateTime<Utc>);
}

/// Wall clock at second resolution.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
            .duration_trunc(Duration::seconds(1))
            .unwrap_or_else(|_| Utc::now())
    }

    fn sleep_until(&mut self, t: DateTime<Utc>) {
        let wait = t - Utc::now();
        if let Ok(wait) = wait.to_std() {
            std::thread::sleep(wait);
        }
    }
}

/// Virtual clock: every `now()` returns the current instant and then moves it
/// forward by `tick`, so consecutive readings are strictly increasing.
/// Sleeping jumps straight to the target.
#[derive(Debug, Clone)]
pub struct SimulatedClock {
    now: DateTime<Utc>,
    tick: Duration,
}

impl SimulatedClock {
    pub fn new(start: DateTime<Utc>, tick: Duration) -> Self {
        Self { now: start, tick }
    }
}

impl Clock for SimulatedClock {
    fn now(&mut self) -> DateTime<Utc> {
        let t = self.now;
        self.now += self.tick;
        t
    }

    fn sleep_until(&mut self, t: DateTime<Utc>) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub vm: &'a VmKey,
    pub round_index: u64,
    pub position: u32,
    pub repetition: u32,
    pub at: DateTime<Utc>,
}

/// Executes one trial of a benchmark and returns its raw output.
pub trait ProbeBackend {
    fn execute(&mut self, bench: &BenchmarkSpec, ctx: &TrialContext<'_>) -> Result<String, String>;

    fn resolves(&self, _bench: &BenchmarkSpec) -> bool {
        true
    }
}

/// Runs command templates through `sh -c`.
#[derive(Debug, Default, Clone)]
pub struct CommandBackend;

fn substitute(template: &str, ctx: &TrialContext<'_>, bench: &str) -> String {
    template
        .replace("{vm}", &ctx.vm.to_string())
        .replace("{round}", &ctx.round_index.to_string())
        .replace("{position}", &ctx.position.to_string())
        .replace("{repetition}", &ctx.repetition.to_string())
        .replace("{benchmark}", bench)
}

impl ProbeBackend for CommandBackend {
    fn execute(&mut self, bench: &BenchmarkSpec, ctx: &TrialContext<'_>) -> Result<String, String> {
        let Probe::Command(template) = &bench.probe else {
            return Err(format!("benchmark `{}` is not a command probe", bench.id));
        };
        let out = Command::new("sh")
            .arg("-c")
            .arg(substitute(template, ctx, &bench.id))
            .output()
            .map_err(|e| e.to_string())?;
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        if out.status.success() {
            Ok(stdout)
        } else {
            Err(format!(
                "exit status {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ))
        }
    }

    fn resolves(&self, bench: &BenchmarkSpec) -> bool {
        matches!(bench.probe, Probe::Command(_))
    }
}

/// Dispatches synthetic probes to the suite's profiles (reseeded per VM) and
/// everything else to [`CommandBackend`].
#[derive(Debug, Clone)]
pub struct SuiteBackend {
    profiles: BTreeMap<String, SyntheticProfile>,
    commands: CommandBackend,
}

impl SuiteBackend {
    pub fn new(suite: &SuiteConfig) -> Self {
        Self {
            profiles: suite.profiles.clone(),
            commands: CommandBackend,
        }
    }
}

impl ProbeBackend for SuiteBackend {
    fn execute(&mut self, bench: &BenchmarkSpec, ctx: &TrialContext<'_>) -> Result<String, String> {
        match &bench.probe {
            Probe::Synthetic(name) => {
                let profile = self
                    .profiles
                    .get(name)
                    .ok_or_else(|| format!("missing profile `{name}`"))?;
                Ok(super::synth_probe(&profile.reseeded(&ctx.vm.to_string()), ctx.at))
            }
            Probe::Command(_) => self.commands.execute(bench, ctx),
        }
    }

    fn resolves(&self, bench: &BenchmarkSpec) -> bool {
        match &bench.probe {
            Probe::Synthetic(name) => self.profiles.contains_key(name),
            Probe::Command(_) => true,
        }
    }
}

/// Runs a lifecycle hook command; `{vm}` is substituted.
pub fn run_hook(hook: &'static str, command: &str, vm: &VmKey) -> Result<(), HarnessError> {
    let failed = |message: String| HarnessError::LifecycleHookFailed { hook, message };
    let out = Command::new("sh")
        .arg("-c")
        .arg(command.replace("{vm}", &vm.to_string()))
        .output()
        .map_err(|e| failed(e.to_string()))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(failed(format!(
            "exit status {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )))
    }
}

/// Executes one scheduled round on `vm`: power-on hook, every trial in
/// schedule order, power-off hook.
pub fn run_round<B: ProbeBackend + ?Sized, C: Clock + ?Sized>(
    suite: &SuiteConfig,
    schedule: &TrialSchedule,
    vm: &VmKey,
    backend: &mut B,
    clock: &mut C,
) -> Result<RoundResult, HarnessError> {
    let mut specs = Vec::with_capacity(schedule.entries.len());
    for entry in &schedule.entries {
        let spec = suite
            .benchmark(&entry.benchmark)
            .filter(|b| backend.resolves(b))
            .ok_or_else(|| HarnessError::UnresolvedBenchmark(entry.benchmark.clone()))?;
        specs.push(spec);
    }

    let started_at = clock.now();
    if let Some(cmd) = &suite.hooks.power_on {
        run_hook("power-on", cmd, vm)?;
    }

    let mut trials = Vec::with_capacity(specs.len());
    for (position, (entry, spec)) in schedule.entries.iter().zip(specs).enumerate() {
        let trial_start = clock.now();
        let ctx = TrialContext {
            vm,
            round_index: schedule.round_index,
            position: position as u32,
            repetition: entry.repetition,
            at: trial_start,
        };
        let outcome = backend.execute(spec, &ctx);
        let finished_at = clock.now();
        let (raw_output, status) = match outcome {
            Ok(raw) => {
                let status = match parse_output(&raw, &spec.parser) {
                    Ok(values) => TrialStatus::Parsed { values },
                    Err(e) => TrialStatus::Failed { error: e.to_string() },
                };
                (raw, status)
            }
            Err(error) => (String::new(), TrialStatus::Failed { error }),
        };
        trials.push(TrialRecord {
            benchmark: entry.benchmark.clone(),
            repetition: entry.repetition,
            position: position as u32,
            started_at: trial_start,
            finished_at,
            raw_output,
            status,
        });
    }

    if let Some(cmd) = &suite.hooks.power_off {
        run_hook("power-off", cmd, vm)?;
    }

    let errors = trials.iter().filter(|t| t.is_failed()).count();
    Ok(RoundResult {
        vm: vm.clone(),
        round_index: schedule.round_index,
        started_at,
        seed: schedule.seed,
        planned_trials: suite.planned_trials(),
        trials,
        errors,
        provider_error: None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignSummary {
    pub rounds: usize,
    pub trial_errors: usize,
    pub provider_errors: usize,
}

/// Runs `rounds` on every VM, one worker thread per VM, appending each round
/// to the VM's bin as soon as it completes. Round `i` is due at
/// `start + (i - rounds.start) * period`.
pub fn run_campaign<C, B, FC, FB>(
    suite: &SuiteConfig,
    vms: &[VmKey],
    rounds: Range<u64>,
    seed: u64,
    start: DateTime<Utc>,
    make_clock: FC,
    make_backend: FB,
    bins: &Bins,
) -> Result<CampaignSummary, HarnessError>
where
    C: Clock,
    B: ProbeBackend,
    FC: Fn(&VmKey) -> C + Sync,
    FB: Fn(&VmKey) -> B + Sync,
{
    let period = Duration::seconds(suite.round_period_secs as i64);
    let results: Vec<Result<CampaignSummary, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = vms
            .iter()
            .map(|vm| {
                let rounds = rounds.clone();
                let (make_clock, make_backend) = (&make_clock, &make_backend);
                scope.spawn(move || {
                    let mut clock = make_clock(vm);
                    let mut backend = make_backend(vm);
                    let vm_seed = seeds::mix(&[seed, seeds::hash_str(&vm.to_string())]);
                    let mut summary = CampaignSummary::default();
                    for round in rounds.clone() {
                        clock.sleep_until(start + period * (round - rounds.start) as i32);
                        let schedule = plan_round(suite, round, vm_seed);
                        let result = match run_round(suite, &schedule, vm, &mut backend, &mut clock) {
                            Ok(r) => r,
                            Err(e @ HarnessError::LifecycleHookFailed { .. }) => {
                                summary.provider_errors += 1;
                                RoundResult {
                                    vm: vm.clone(),
                                    round_index: round,
                                    started_at: clock.now(),
                                    seed: vm_seed,
                                    planned_trials: suite.planned_trials(),
                                    trials: Vec::new(),
                                    errors: 0,
                                    provider_error: Some(e.to_string()),
                                }
                            }
                            Err(e) => return Err(e),
                        };
                        summary.trial_errors += result.errors;
                        summary.rounds += 1;
                        bins.append(&result)?;
                    }
                    Ok(summary)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("campaign worker panicked"))
            .collect()
    });

    let mut total = CampaignSummary::default();
    for r in results {
        let r = r?;
        total.rounds += r.rounds;
        total.trial_errors += r.trial_errors;
        total.provider_errors += r.provider_errors;
    }
    Ok(total)
}
