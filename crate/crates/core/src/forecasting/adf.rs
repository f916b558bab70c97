use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::linalg::ols;

pub const MIN_LENGTH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub stationary: bool,
    pub lags: usize,
    pub n_obs: usize,
}

/// 5% critical value of the Dickey-Fuller t statistic with a constant and
/// no trend, MacKinnon response surface for `n_obs` observations.
pub fn adf_critical_value(n_obs: usize) -> f64 {
    let t = n_obs as f64;
    -2.86154 - 2.8903 / t - 4.234 / (t * t) - 40.040 / (t * t * t)
}

/// Regression `dy_t = a + g y_{t-1} + sum_i b_i dy_{t-i} + e_t`; the series
/// is declared stationary when the t statistic of `g` falls below the 5%
/// critical value.
pub fn adf_check(xs: &[f64], max_lag: usize) -> Result<AdfResult, ForecastError> {
    if xs.len() < MIN_LENGTH.max(max_lag + 4) {
        return Err(ForecastError::TooShort {
            needed: MIN_LENGTH.max(max_lag + 4),
            got: xs.len(),
        });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let dy: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // rows t = max_lag..dy.len(); dy[t] is the response, xs[t] the lagged level
    let rows = dy.len() - max_lag;
    let cols = 2 + max_lag;
    let mut x = DMatrix::zeros(rows, cols);
    let mut y = DVector::zeros(rows);
    for (r, t) in (max_lag..dy.len()).enumerate() {
        y[r] = dy[t];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = xs[t];
        for i in 1..=max_lag {
            x[(r, 1 + i)] = dy[t - i];
        }
    }
    let fit = ols(&x, &y).ok_or(ForecastError::Singular)?;
    let se = fit.std_errors[1];
    if !(se > 0.0) {
        return Err(ForecastError::Singular);
    }
    let statistic = fit.coefficients[1] / se;
    let critical_value = adf_critical_value(rows);
    Ok(AdfResult {
        statistic,
        critical_value,
        stationary: statistic < critical_value,
        lags: max_lag,
        n_obs: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{random_walk, white_noise};

    #[test]
    fn critical_value_large_sample() {
        assert!((adf_critical_value(1_000_000) + 2.86154).abs() < 1e-4);
        assert!(adf_critical_value(100) < adf_critical_value(1000));
    }

    #[test]
    fn white_noise_is_stationary() {
        let r = adf_check(&white_noise(1000, 5.0, 1.0, 3), 1).unwrap();
        assert!(r.stationary);
        assert!(r.statistic < -10.0, "{}", r.statistic);
    }

    #[test]
    fn differenced_walk_is_stationary() {
        let walk = random_walk(1000, 0.0, 1.0, 8);
        let diff: Vec<f64> = walk.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(adf_check(&diff, 1).unwrap().stationary);
    }

    #[test]
    fn walks_are_mostly_non_stationary() {
        let non = (0..40)
            .filter(|s| !adf_check(&random_walk(1000, 0.0, 1.0, *s), 1).unwrap().stationary)
            .count();
        assert!(non >= 34, "{non}/40");
    }

    #[test]
    fn too_short() {
        assert!(matches!(adf_check(&[1.0; 10], 1), Err(ForecastError::TooShort { .. })));
    }
}
