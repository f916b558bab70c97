//! Per-metric forecasting: min-max + differencing preprocessing, a
//! Dickey-Fuller stationarity check, ARIMA fitted by conditional sum of
//! squares, VAR fitted by least squares, and MAE/MASE evaluation.

mod adf;
mod arima;
mod evaluate;
mod metrics;
mod preprocess;
mod var;

pub use adf::{adf_check, adf_critical_value, AdfResult};
pub use arima::{fit_arima, forecast, ArimaModel, ArimaOrder, FitOptions};
pub use evaluate::{evaluate_all, EvalConfig, ForecastAggregate, ForecastReport, ForecastRow, ForecastSkip, ModelKind};
pub use metrics::{mae, mase, naive_denominator};
pub use preprocess::{preprocess, preprocess_gappy, TransformRecord};
pub use var::{fit_var, forecast_var, VarModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForecastError {
    #[error("series too short: need {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("degenerate range: training window is constant")]
    DegenerateRange,
    #[error("differencing order {0} outside 0..=2")]
    InvalidOrder(usize),
    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),
    #[error("singular system")]
    Singular,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("naive denominator is zero (constant training series)")]
    ZeroDenominator,
    #[error("series contains non-finite values")]
    NonFinite,
}
