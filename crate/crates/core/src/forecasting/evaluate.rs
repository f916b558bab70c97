use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    adf_check, fit_arima, fit_var, forecast, forecast_var, mae, naive_denominator, preprocess_gappy, ArimaOrder,
    FitOptions, ForecastError, TransformRecord,
};
use crate::model::{to_series, Catalog, Dataset, VmKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Naive,
    Var,
    Arima,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Naive => "naive",
            ModelKind::Var => "var",
            ModelKind::Arima => "arima",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(ModelKind::Naive),
            "var" => Ok(ModelKind::Var),
            "arima" => Ok(ModelKind::Arima),
            other => Err(format!("unknown model `{other}` (naive, var, arima)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub models: Vec<ModelKind>,
    pub horizon: usize,
    pub order: ArimaOrder,
    pub var_lag: usize,
    pub min_points: usize,
    pub fit: FitOptions,
    pub adf_max_lag: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Naive, ModelKind::Var, ModelKind::Arima],
            horizon: 5,
            order: ArimaOrder::default(),
            var_lag: 1,
            min_points: 100,
            fit: FitOptions::default(),
            adf_max_lag: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub vm: VmKey,
    pub metric: String,
    pub model: ModelKind,
    pub horizon: usize,
    /// On the original scale.
    pub mae: f64,
    /// On the training window's min-max scale.
    pub mae_normalized: f64,
    pub mase: f64,
    pub naive_denominator: f64,
    /// ADF verdict on the transformed training window.
    pub stationary: Option<bool>,
}

impl ForecastRow {
    /// Table marker: double dagger below 0.02 normalized MAE, dagger below 0.05.
    pub fn flag(&self) -> &'static str {
        if self.mae_normalized < 0.02 {
            "‡"
        } else if self.mae_normalized < 0.05 {
            "†"
        } else {
            ""
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSkip {
    pub vm: VmKey,
    pub metric: String,
    pub model: ModelKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastAggregate {
    pub scope: String,
    pub model: ModelKind,
    pub mean_mase: f64,
    pub mean_mae: f64,
    pub mean_mae_normalized: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub config: EvalConfig,
    pub rows: Vec<ForecastRow>,
    pub skipped: Vec<ForecastSkip>,
    pub per_vm: Vec<ForecastAggregate>,
    pub per_provider: Vec<ForecastAggregate>,
}

impl ForecastReport {
    pub fn mean_mase(&self, model: ModelKind) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.model == model).map(|r| r.mase).collect();
        (!v.is_empty()).then(|| crate::stats::mean(&v))
    }

    /// Metric rows by VM columns of MASE with MAE flags, and a closing row of
    /// per-VM means.
    pub fn write_table_csv<W: std::io::Write>(&self, model: ModelKind, out: W) -> csv::Result<()> {
        let rows: Vec<&ForecastRow> = self.rows.iter().filter(|r| r.model == model).collect();
        let vms: BTreeSet<&VmKey> = rows.iter().map(|r| &r.vm).collect();
        let mut metrics: Vec<&str> = Vec::new();
        for r in &rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
        let cell: BTreeMap<(&str, &VmKey), &ForecastRow> =
            rows.iter().map(|r| ((r.metric.as_str(), &r.vm), *r)).collect();

        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string()];
        header.extend(vms.iter().map(|v| v.to_string()));
        header.push("mean".into());
        w.write_record(&header)?;
        for m in &metrics {
            let mut rec = vec![m.to_string()];
            let mut vals = Vec::new();
            for vm in &vms {
                match cell.get(&(*m, *vm)) {
                    Some(r) => {
                        vals.push(r.mase);
                        rec.push(format!("{:.3}{}", r.mase, r.flag()));
                    }
                    None => rec.push(String::new()),
                }
            }
            rec.push(format!("{:.3}", crate::stats::mean(&vals)));
            w.write_record(&rec)?;
        }
        let mut rec = vec!["mean".to_string()];
        for vm in &vms {
            let vals: Vec<f64> = rows.iter().filter(|r| &r.vm == *vm).map(|r| r.mase).collect();
            rec.push(format!("{:.3}", crate::stats::mean(&vals)));
        }
        let all: Vec<f64> = rows.iter().map(|r| r.mase).collect();
        rec.push(format!("{:.3}", crate::stats::mean(&all)));
        w.write_record(&rec)?;
        w.flush()?;
        Ok(())
    }
}

struct Prepared {
    metric: String,
    z: Vec<f64>,
    record: TransformRecord,
    train: Vec<f64>,
    test: Vec<f64>,
    denominator: f64,
    stationary: Option<bool>,
}

fn row(
    p: &Prepared,
    vm: &VmKey,
    model: ModelKind,
    pred: &[f64],
    cfg: &EvalConfig,
) -> Result<ForecastRow, ForecastError> {
    let err = mae(&p.test, pred)?;
    if !err.is_finite() {
        return Err(ForecastError::NonFinite);
    }
    Ok(ForecastRow {
        vm: vm.clone(),
        metric: p.metric.clone(),
        model,
        horizon: cfg.horizon,
        mae: err,
        mae_normalized: err / (p.record.max - p.record.min),
        mase: err / p.denominator,
        naive_denominator: p.denominator,
        stationary: if model == ModelKind::Naive { None } else { p.stationary },
    })
}

fn evaluate_vm(
    dataset: &Dataset,
    metrics: &[String],
    vm: &VmKey,
    cfg: &EvalConfig,
) -> (Vec<ForecastRow>, Vec<ForecastSkip>) {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let skip_all = |skipped: &mut Vec<ForecastSkip>, metric: &str, reason: String| {
        for m in &cfg.models {
            skipped.push(ForecastSkip {
                vm: vm.clone(),
                metric: metric.to_string(),
                model: *m,
                reason: reason.clone(),
            });
        }
    };

    // align every metric on the union of round indices
    let series: Vec<_> = metrics.iter().filter_map(|m| to_series(dataset, m, vm).ok()).collect();
    let rounds: BTreeSet<u64> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.round_index))
        .collect();
    let position: BTreeMap<u64, usize> = rounds.iter().enumerate().map(|(i, r)| (*r, i)).collect();
    let n = rounds.len();
    let h = cfg.horizon;

    let mut prepared = Vec::new();
    for s in &series {
        let mut aligned = vec![None; n];
        for p in &s.points {
            aligned[position[&p.round_index]] = Some(p.value);
        }
        let present = aligned.iter().flatten().count();
        if present < cfg.min_points || n <= h {
            skip_all(
                &mut skipped,
                &s.metric,
                format!("{present} points, need {}", cfg.min_points),
            );
            continue;
        }
        let (train_gappy, test_gappy) = aligned.split_at(n - h);
        let Some(test) = test_gappy.iter().copied().collect::<Option<Vec<f64>>>() else {
            skip_all(&mut skipped, &s.metric, "gap in the holdout window".into());
            continue;
        };
        let (z, record) = match preprocess_gappy(train_gappy, cfg.order.d) {
            Ok(v) => v,
            Err(e) => {
                skip_all(&mut skipped, &s.metric, e.to_string());
                continue;
            }
        };
        let train: Vec<f64> = train_gappy.iter().map(|x| x.unwrap_or(record.fill)).collect();
        let denominator = match naive_denominator(&train) {
            Ok(d) => d,
            Err(e) => {
                skip_all(&mut skipped, &s.metric, e.to_string());
                continue;
            }
        };
        let stationary = adf_check(&z, cfg.adf_max_lag).ok().map(|r| r.stationary);
        prepared.push(Prepared {
            metric: s.metric.clone(),
            z,
            record,
            train,
            test,
            denominator,
            stationary,
        });
    }

    // per model, in the configured order; VAR shares one fit across metrics
    let mut by_model: Vec<(ModelKind, Vec<Result<ForecastRow, String>>)> = Vec::new();
    for &model in &cfg.models {
        let results: Vec<Result<ForecastRow, String>> = match model {
            ModelKind::Naive => prepared
                .iter()
                .map(|p| {
                    let last = *p.train.last().expect("non-empty training window");
                    row(p, vm, model, &vec![last; h], cfg).map_err(|e| e.to_string())
                })
                .collect(),
            ModelKind::Arima => prepared
                .iter()
                .map(|p| {
                    fit_arima(&p.z, cfg.order, cfg.fit)
                        .and_then(|m| row(p, vm, model, &forecast(&m, &p.record, h), cfg))
                        .map_err(|e| e.to_string())
                })
                .collect(),
            ModelKind::Var => {
                let panel: Vec<Vec<f64>> = prepared.iter().map(|p| p.z.clone()).collect();
                let records: Vec<TransformRecord> = prepared.iter().map(|p| p.record.clone()).collect();
                match fit_var(&panel, cfg.var_lag) {
                    Ok(m) => prepared
                        .iter()
                        .zip(forecast_var(&m, &records, h))
                        .map(|(p, pred)| row(p, vm, model, &pred, cfg).map_err(|e| e.to_string()))
                        .collect(),
                    Err(e) => prepared.iter().map(|_| Err(e.to_string())).collect(),
                }
            }
        };
        by_model.push((model, results));
    }
    for (i, p) in prepared.iter().enumerate() {
        for (model, results) in &by_model {
            match &results[i] {
                Ok(r) => rows.push(r.clone()),
                Err(reason) => skipped.push(ForecastSkip {
                    vm: vm.clone(),
                    metric: p.metric.clone(),
                    model: *model,
                    reason: reason.clone(),
                }),
            }
        }
    }
    (rows, skipped)
}

fn aggregate<'a>(groups: impl Iterator<Item = (String, ModelKind, &'a ForecastRow)>) -> Vec<ForecastAggregate> {
    let mut acc: BTreeMap<(String, ModelKind), Vec<&ForecastRow>> = BTreeMap::new();
    for (scope, model, r) in groups {
        acc.entry((scope, model)).or_default().push(r);
    }
    acc.into_iter()
        .map(|((scope, model), rs)| {
            let pick = |f: fn(&ForecastRow) -> f64| crate::stats::mean(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            ForecastAggregate {
                scope,
                model,
                mean_mase: pick(|r| r.mase),
                mean_mae: pick(|r| r.mae),
                mean_mae_normalized: pick(|r| r.mae_normalized),
                n: rs.len(),
            }
        })
        .collect()
}

/// Holds out the last `horizon` points of every (vm, metric) series, fits on
/// the rest and scores each configured model. VMs are evaluated in parallel;
/// rows come back in VM order, then catalog metric order, then model order.
pub fn evaluate_all(dataset: &Dataset, catalog: &Catalog, cfg: &EvalConfig) -> ForecastReport {
    let present = dataset.metrics();
    let metrics: Vec<String> = catalog
        .ids()
        .filter(|m| present.contains(*m))
        .map(String::from)
        .collect();
    let vms: Vec<VmKey> = dataset.vms().into_iter().collect();

    let per_vm: Vec<(Vec<ForecastRow>, Vec<ForecastSkip>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = vms
            .iter()
            .map(|vm| {
                let metrics = &metrics;
                let subset = Dataset::new(dataset.measurements.iter().filter(|m| &m.vm == vm).cloned().collect());
                scope.spawn(move || evaluate_vm(&subset, metrics, vm, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("forecast worker panicked"))
            .collect()
    });

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in per_vm {
        rows.extend(r);
        skipped.extend(s);
    }
    let vm_aggs = aggregate(rows.iter().map(|r| (r.vm.to_string(), r.model, r)));
    // provider means are means of the per-VM means
    let vm_provider: BTreeMap<String, String> = vms.iter().map(|v| (v.to_string(), v.provider.clone())).collect();
    let mut prov: BTreeMap<(String, ModelKind), Vec<&ForecastAggregate>> = BTreeMap::new();
    for a in &vm_aggs {
        prov.entry((vm_provider[&a.scope].clone(), a.model))
            .or_default()
            .push(a);
    }
    let per_provider = prov
        .into_iter()
        .map(|((scope, model), aggs)| {
            let pick =
                |f: fn(&ForecastAggregate) -> f64| crate::stats::mean(&aggs.iter().map(|a| f(a)).collect::<Vec<_>>());
            ForecastAggregate {
                scope,
                model,
                mean_mase: pick(|a| a.mean_mase),
                mean_mae: pick(|a| a.mean_mae),
                mean_mae_normalized: pick(|a| a.mean_mae_normalized),
                n: aggs.iter().map(|a| a.n).sum(),
            }
        })
        .collect();
    ForecastReport {
        config: cfg.clone(),
        rows,
        skipped,
        per_vm: vm_aggs,
        per_provider,
    }
}
