//! Temporal classification: does a round's performance profile reveal when
//! it was measured? Labels come from the round start time; features are the
//! per-round metric means; the classifier is multinomial logistic regression
//! evaluated with stratified k-fold cross-validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, FixedOffset, Timelike, Utc, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Catalog, Dataset, VmKey};
use crate::{seeds, stats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassificationError {
    #[error("no rounds for the requested selection")]
    EmptySelection,
    #[error("{got} instances, need at least {needed}")]
    TooFewInstances { needed: usize, got: usize },
    #[error("class `{class}` has {members} members, fewer than {k} folds")]
    ClassTooSmall { class: String, members: usize, k: usize },
    #[error("training data holds a single class")]
    SingleClass,
    #[error("every feature has zero variance")]
    NoFeatures,
    #[error("k must be at least 2, got {0}")]
    InvalidFolds(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    TimeDay,
    DayWeek,
    Weekend,
}

const TIME_DAY: &[&str] = &["Night", "Morning", "Afternoon", "Evening"];
const DAY_WEEK: &[&str] = &[
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];
const WEEKEND: &[&str] = &["false", "true"];

impl Task {
    pub const ALL: [Task; 3] = [Task::TimeDay, Task::DayWeek, Task::Weekend];

    pub fn classes(&self) -> &'static [&'static str] {
        match self {
            Task::TimeDay => TIME_DAY,
            Task::DayWeek => DAY_WEEK,
            Task::Weekend => WEEKEND,
        }
    }

    /// Accuracy of guessing uniformly at random.
    pub fn baseline(&self) -> f64 {
        1.0 / self.classes().len() as f64
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::TimeDay => "TimeDay",
            Task::DayWeek => "DayWeek",
            Task::Weekend => "Weekend",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "timeday" => Ok(Task::TimeDay),
            "dayweek" => Ok(Task::DayWeek),
            "weekend" => Ok(Task::Weekend),
            _ => Err(format!("unknown task `{s}` (timeday, dayweek, weekend)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    pub task: Task,
    pub index: usize,
}

impl Label {
    pub fn name(&self) -> &'static str {
        self.task.classes()[self.index]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Half-open 6-hour bins starting at midnight, weekdays from Monday, and
/// Saturday/Sunday as weekend, all in local time `tz`.
pub fn derive_label(at: DateTime<Utc>, task: Task, tz: FixedOffset) -> Label {
    let local = at.with_timezone(&tz);
    let index = match task {
        Task::TimeDay => local.hour() as usize / 6,
        Task::DayWeek => local.weekday().num_days_from_monday() as usize,
        Task::Weekend => matches!(local.weekday(), Weekday::Sat | Weekday::Sun) as usize,
    };
    Label { task, index }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub vm: VmKey,
    pub round_index: u64,
    pub timestamp: DateTime<Utc>,
    /// Per-round means in catalog order.
    pub features: Vec<f64>,
    /// Catalog positions filled with the provider-wide mean.
    pub imputed: Vec<usize>,
    pub label: usize,
}

pub const MIN_INSTANCES: usize = 50;

/// One instance per (vm, round) of `provider`, labelled from the round start.
pub fn build_instances(
    dataset: &Dataset,
    catalog: &Catalog,
    provider: &str,
    task: Task,
    tz: FixedOffset,
) -> Result<Vec<LabeledInstance>, ClassificationError> {
    let d = catalog.len();
    let mut cells: BTreeMap<(VmKey, u64), Vec<Vec<f64>>> = BTreeMap::new();
    let mut starts: BTreeMap<(VmKey, u64), DateTime<Utc>> = BTreeMap::new();
    for m in dataset.measurements.iter().filter(|m| m.vm.provider == provider) {
        let Some(j) = catalog.index_of(&m.metric) else {
            continue;
        };
        let key = (m.vm.clone(), m.round_index);
        cells.entry(key.clone()).or_insert_with(|| vec![Vec::new(); d])[j].push(m.value);
        starts
            .entry(key)
            .and_modify(|t| *t = (*t).min(m.timestamp))
            .or_insert(m.timestamp);
    }
    if cells.is_empty() {
        return Err(ClassificationError::EmptySelection);
    }
    if cells.len() < MIN_INSTANCES {
        return Err(ClassificationError::TooFewInstances {
            needed: MIN_INSTANCES,
            got: cells.len(),
        });
    }

    let round_means: Vec<Vec<Option<f64>>> = cells
        .values()
        .map(|per_metric| {
            per_metric
                .iter()
                .map(|vals| {
                    let mut v = vals.clone();
                    v.sort_by(f64::total_cmp);
                    (!v.is_empty()).then(|| stats::mean(&v))
                })
                .collect()
        })
        .collect();
    let provider_means: Vec<f64> = (0..d)
        .map(|j| {
            let col: Vec<f64> = round_means.iter().filter_map(|r| r[j]).collect();
            if col.is_empty() {
                0.0
            } else {
                stats::mean(&col)
            }
        })
        .collect();

    Ok(cells
        .keys()
        .zip(round_means)
        .map(|(key, means)| {
            let imputed: Vec<usize> = (0..d).filter(|j| means[*j].is_none()).collect();
            let at = starts[key];
            LabeledInstance {
                vm: key.0.clone(),
                round_index: key.1,
                timestamp: at,
                features: means
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v.unwrap_or(provider_means[j]))
                    .collect(),
                imputed,
                label: derive_label(at, task, tz).index,
            }
        })
        .collect())
}

/// Shuffles each class with `seed` and deals its members round-robin over
/// the folds, continuing where the previous class stopped so that fold sizes
/// stay within one of each other.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClassificationError> {
    if k < 2 {
        return Err(ClassificationError::InvalidFolds(k));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(ClassificationError::ClassTooSmall {
            class: class.to_string(),
            members: members.len(),
            k,
        });
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for (class, mut members) in by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[seed, class as u64]));
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub iterations: usize,
    /// Step size at iteration t is `step0 / (1 + decay * t)`.
    pub decay: f64,
    pub checkpoint_every: usize,
    /// Gradient max-norm below which the fit counts as converged.
    pub tolerance: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            iterations: 2000,
            decay: 1e-3,
            checkpoint_every: 100,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub n_classes: usize,
    /// Raw feature positions used by the model.
    pub kept: Vec<usize>,
    /// Zero-variance features left out.
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `n_classes x kept.len()`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl LogisticModel {
    fn standardize(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.kept.len(),
            self.kept
                .iter()
                .enumerate()
                .map(|(c, &j)| (x[j] - self.means[c]) / self.stds[c]),
        )
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let z = &self.weights * self.standardize(x) + &self.bias;
        let mut p: Vec<f64> = z.iter().copied().collect();
        softmax_in_place(&mut p);
        p
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let p = self.predict_proba(x);
        (0..p.len()).fold(0, |best, c| if p[c] > p[best] { c } else { best })
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let hits = xs.iter().zip(ys).filter(|(x, y)| self.predict(x) == **y).count();
        hits as f64 / xs.len().max(1) as f64
    }
}

/// Penalized cross-entropy and its gradient for the bias-augmented design.
fn loss_and_grad(x: &DMatrix<f64>, y: &[usize], w: &DMatrix<f64>, lambda: f64) -> (f64, DMatrix<f64>) {
    let n = x.nrows();
    let d = x.ncols() - 1;
    let mut scores = x * w.transpose();
    let mut loss = 0.0;
    for i in 0..n {
        let mut row: Vec<f64> = scores.row(i).iter().copied().collect();
        softmax_in_place(&mut row);
        loss -= row[y[i]].max(f64::MIN_POSITIVE).ln();
        row[y[i]] -= 1.0;
        for (c, v) in row.into_iter().enumerate() {
            scores[(i, c)] = v / n as f64;
        }
    }
    let mut grad = scores.transpose() * x;
    let mut penalty = 0.0;
    for c in 0..w.nrows() {
        for j in 0..d {
            penalty += w[(c, j)] * w[(c, j)];
            grad[(c, j)] += lambda * w[(c, j)];
        }
    }
    (loss / n as f64 + 0.5 * lambda * penalty, grad)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(m.nrows(), 1.0 / (m.nrows() as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..200 {
        let mv = m * &v;
        let norm = mv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = mv / norm;
        if (norm - est).abs() <= 1e-12 * norm {
            return norm;
        }
        est = norm;
    }
    est
}

/// Multinomial logistic regression by full-batch gradient descent on
/// z-scored features. The base step is the inverse of a Lipschitz bound of
/// the gradient, which keeps the loss non-increasing.
pub fn train_logistic(
    xs: &[Vec<f64>],
    ys: &[usize],
    n_classes: usize,
    hp: &Hyperparams,
) -> Result<LogisticModel, ClassificationError> {
    if xs.is_empty() {
        return Err(ClassificationError::EmptySelection);
    }
    let first = ys[0];
    if ys.iter().all(|&y| y == first) || n_classes < 2 {
        return Err(ClassificationError::SingleClass);
    }
    let d_raw = xs[0].len();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for j in 0..d_raw {
        let col: Vec<f64> = xs.iter().map(|x| x[j]).collect();
        let mu = stats::mean(&col);
        let sd = stats::pop_std(&col);
        if sd > 1e-12 * mu.abs().max(1.0) && sd.is_finite() {
            kept.push(j);
            means.push(mu);
            stds.push(sd);
        } else {
            dropped.push(j);
        }
    }
    if kept.is_empty() {
        return Err(ClassificationError::NoFeatures);
    }
    let n = xs.len();
    let d = kept.len();
    let x = DMatrix::from_fn(n, d + 1, |i, c| {
        if c == d {
            1.0
        } else {
            (xs[i][kept[c]] - means[c]) / stds[c]
        }
    });
    let gram = x.transpose() * &x / n as f64;
    let lipschitz = 0.5 * largest_eigenvalue(&gram) + hp.lambda;
    let step0 = (1.0 / lipschitz).min(1.0);

    let mut w = DMatrix::zeros(n_classes, d + 1);
    let mut loss_trace = Vec::new();
    let mut converged = false;
    for t in 0..hp.iterations {
        let (loss, grad) = loss_and_grad(&x, ys, &w, hp.lambda);
        if hp.checkpoint_every > 0 && t % hp.checkpoint_every == 0 {
            loss_trace.push(loss);
        }
        if grad.amax() < hp.tolerance {
            converged = true;
            loss_trace.push(loss);
            break;
        }
        w -= grad * (step0 / (1.0 + hp.decay * t as f64));
    }
    if !converged {
        loss_trace.push(loss_and_grad(&x, ys, &w, hp.lambda).0);
    }
    Ok(LogisticModel {
        n_classes,
        kept,
        dropped,
        means,
        stds,
        weights: w.columns(0, d).into_owned(),
        bias: w.column(d).into_owned(),
        loss_trace,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub folds: usize,
    pub seed: u64,
    #[serde(with = "offset_seconds")]
    pub tz: FixedOffset,
    pub hyperparams: Hyperparams,
    /// Permutes the labels before cross-validation (null check).
    pub shuffle_labels: bool,
}

mod offset_seconds {
    use chrono::FixedOffset;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tz: &FixedOffset, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i32(tz.local_minus_utc())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FixedOffset, D::Error> {
        let secs = i32::deserialize(d)?;
        FixedOffset::east_opt(secs).ok_or_else(|| serde::de::Error::custom("offset out of range"))
    }
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            tz: FixedOffset::east_opt(0).expect("zero offset"),
            hyperparams: Hyperparams::default(),
            shuffle_labels: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub provider: String,
    pub task: Task,
    pub n_instances: usize,
    pub imputed_instances: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub baseline: f64,
    /// Share of the most frequent class: what a classifier that ignores the
    /// features scores. Differs from `baseline` when classes are unbalanced
    /// (Weekend: 5/7 of the days are weekdays).
    pub majority_baseline: f64,
    /// Raw features dropped for zero variance in at least one fold.
    pub dropped_features: Vec<String>,
    /// Folds whose fit did not reach the gradient tolerance.
    pub unconverged_folds: usize,
}

/// Stratified k-fold accuracy of the logistic classifier for one provider
/// and task. Folds are trained in parallel and reduced in fold order.
pub fn run_task(
    dataset: &Dataset,
    catalog: &Catalog,
    provider: &str,
    task: Task,
    cfg: &TaskConfig,
) -> Result<TaskReport, ClassificationError> {
    let instances = build_instances(dataset, catalog, provider, task, cfg.tz)?;
    let xs: Vec<Vec<f64>> = instances.iter().map(|i| i.features.clone()).collect();
    let mut ys: Vec<usize> = instances.iter().map(|i| i.label).collect();
    if cfg.shuffle_labels {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(&[cfg.seed, 0x5348_5546]));
        ys.shuffle(&mut rng);
    }
    let folds = stratified_kfold(&ys, cfg.folds, cfg.seed)?;
    let n_classes = task.classes().len();

    // (accuracy, dropped features, converged) per fold
    type FoldOutcome = Result<(f64, Vec<usize>, bool), ClassificationError>;
    let results: Vec<FoldOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = folds
            .iter()
            .map(|test| {
                let (xs, ys) = (&xs, &ys);
                scope.spawn(move || {
                    let mut in_test = vec![false; xs.len()];
                    test.iter().for_each(|&i| in_test[i] = true);
                    let train: Vec<usize> = (0..xs.len()).filter(|i| !in_test[*i]).collect();
                    let tx: Vec<Vec<f64>> = train.iter().map(|&i| xs[i].clone()).collect();
                    let ty: Vec<usize> = train.iter().map(|&i| ys[i]).collect();
                    let model = train_logistic(&tx, &ty, n_classes, &cfg.hyperparams)?;
                    let vx: Vec<Vec<f64>> = test.iter().map(|&i| xs[i].clone()).collect();
                    let vy: Vec<usize> = test.iter().map(|&i| ys[i]).collect();
                    Ok((model.accuracy(&vx, &vy), model.dropped, model.converged))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("fold worker panicked"))
            .collect()
    });

    let mut fold_accuracies = Vec::with_capacity(folds.len());
    let mut dropped = std::collections::BTreeSet::new();
    let mut unconverged_folds = 0;
    for r in results {
        let (acc, d, converged) = r?;
        fold_accuracies.push(acc);
        dropped.extend(d);
        unconverged_folds += usize::from(!converged);
    }
    let ids: Vec<&str> = catalog.ids().collect();
    Ok(TaskReport {
        provider: provider.to_string(),
        task,
        n_instances: instances.len(),
        imputed_instances: instances.iter().filter(|i| !i.imputed.is_empty()).count(),
        mean: stats::mean(&fold_accuracies),
        std: stats::pop_std(&fold_accuracies),
        fold_accuracies,
        baseline: task.baseline(),
        majority_baseline: majority_share(&ys, n_classes),
        dropped_features: dropped.into_iter().map(|j| ids[j].to_string()).collect(),
        unconverged_folds,
    })
}

fn majority_share(ys: &[usize], n_classes: usize) -> f64 {
    let mut counts = vec![0usize; n_classes];
    for &y in ys {
        counts[y] += 1;
    }
    counts.into_iter().max().unwrap_or(0) as f64 / ys.len().max(1) as f64
}

/// Task, provider, mean and std accuracy, and the two baselines.
pub fn write_reports_csv<W: std::io::Write>(reports: &[TaskReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "task",
        "provider",
        "mean",
        "std",
        "baseline",
        "majority_baseline",
        "instances",
    ])?;
    for r in reports {
        w.write_record([
            r.task.to_string(),
            r.provider.clone(),
            format!("{:.4}", r.mean),
            format!("{:.4}", r.std),
            format!("{:.4}", r.baseline),
            format!("{:.4}", r.majority_baseline),
            r.n_instances.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
