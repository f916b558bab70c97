//! Forecasting step by step: preprocessing, stationarity check, ARIMA fit,
//! forecast on the original scale and MASE against the naive model. Then the
//! full naive / VAR / ARIMA evaluation of a small panel.

use cloudvar::forecasting::{
    adf_check, evaluate_all, fit_arima, forecast, mase, preprocess, ArimaOrder, EvalConfig, FitOptions, ModelKind,
};
use cloudvar::model::{Catalog, VmClass, VmKey};
use cloudvar::simulate::{ar1, ar1_panel};

fn main() {
    let xs: Vec<f64> = ar1(300, 0.7, 0.0, 1.0, 8).into_iter().map(|x| 50.0 + 2.0 * x).collect();
    let (train, test) = xs.split_at(xs.len() - 5);

    let order = ArimaOrder { p: 1, d: 1, q: 1 };
    let (z, record) = preprocess(train, order.d).unwrap();
    let adf = adf_check(&z, 1).unwrap();
    println!(
        "ADF on the differenced series: {:.2} vs {:.2} -> stationary {}",
        adf.statistic, adf.critical_value, adf.stationary
    );
    let model = fit_arima(&z, order, FitOptions::default()).unwrap();
    println!(
        "ARIMA({order}): ar {:?} ma {:?} after {} iterations",
        model.ar, model.ma, model.iterations
    );
    let pred = forecast(&model, &record, 5);
    let naive = vec![*train.last().unwrap(); 5];
    println!(
        "actual   {:?}",
        test.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()
    );
    println!(
        "arima    {:?}",
        pred.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>()
    );
    println!(
        "MASE arima {:.3}, naive {:.3}",
        mase(test, &pred, train).unwrap(),
        mase(test, &naive, train).unwrap()
    );

    let catalog = Catalog::default();
    let mut ds = ar1_panel(
        &VmKey {
            provider: "sim".into(),
            vm_class: VmClass::C1,
            vm_type: "s1".into(),
            instance: 1,
        },
        &catalog,
        300,
        0.6,
        1,
    );
    ds.measurements.extend(
        ar1_panel(
            &VmKey {
                provider: "sim".into(),
                vm_class: VmClass::C1,
                vm_type: "s1".into(),
                instance: 2,
            },
            &catalog,
            300,
            0.6,
            2,
        )
        .measurements,
    );
    let report = evaluate_all(&ds, &catalog, &EvalConfig::default());
    for model in [ModelKind::Naive, ModelKind::Var, ModelKind::Arima] {
        println!(
            "{model:<6} mean MASE {:.3}",
            report.mean_mase(model).unwrap_or(f64::NAN)
        );
    }
    let flagged = report.rows.iter().filter(|r| !r.flag().is_empty()).count();
    println!("{} rows, {flagged} with a normalized MAE below 0.05", report.rows.len());
}
