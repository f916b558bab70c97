use nalgebra::{DMatrix, DVector};

use super::{ForecastError, TransformRecord};
use crate::linalg::{full_column_rank, ols};

/// `z_t = c + sum_l A_l z_{t-l} + e_t` for `k` aligned series.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    pub lag: usize,
    /// One k x k matrix per lag; row i holds the coefficients of equation i.
    pub coefficients: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    /// Last `lag` observations, oldest first.
    pub history: Vec<DVector<f64>>,
}

impl VarModel {
    pub fn k(&self) -> usize {
        self.intercept.len()
    }

    /// Iterated forecasts, returned per series.
    pub fn forecast_transformed(&self, h: usize) -> Vec<Vec<f64>> {
        let mut hist = self.history.clone();
        let mut out = vec![Vec::with_capacity(h); self.k()];
        for _ in 0..h {
            let mut next = self.intercept.clone();
            for (l, a) in self.coefficients.iter().enumerate() {
                next += a * &hist[hist.len() - 1 - l];
            }
            for (series, v) in out.iter_mut().zip(next.iter()) {
                series.push(*v);
            }
            hist.push(next);
        }
        out
    }
}

/// Per-equation least squares on `[1, z_{t-1}, .., z_{t-lag}]`. `panel[i]`
/// is series i; all series must have the same length.
pub fn fit_var(panel: &[Vec<f64>], lag: usize) -> Result<VarModel, ForecastError> {
    let k = panel.len();
    if k == 0 || lag == 0 {
        return Err(ForecastError::TooShort { needed: 1, got: 0 });
    }
    let n = panel[0].len();
    if let Some(s) = panel.iter().find(|s| s.len() != n) {
        return Err(ForecastError::LengthMismatch(n, s.len()));
    }
    let needed = (10 * k * lag).max(k * lag + 2);
    if n < needed {
        return Err(ForecastError::TooShort { needed, got: n });
    }
    if panel.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let rows = n - lag;
    let x = DMatrix::from_fn(rows, 1 + k * lag, |r, col| {
        if col == 0 {
            1.0
        } else {
            let (l, j) = ((col - 1) / k, (col - 1) % k);
            panel[j][lag + r - 1 - l]
        }
    });
    if !full_column_rank(&x) {
        return Err(ForecastError::Singular);
    }
    let mut coefficients = vec![DMatrix::zeros(k, k); lag];
    let mut intercept = DVector::zeros(k);
    for (i, series) in panel.iter().enumerate() {
        let y = DVector::from_column_slice(&series[lag..]);
        let fit = ols(&x, &y).ok_or(ForecastError::Singular)?;
        intercept[i] = fit.coefficients[0];
        for (l, a) in coefficients.iter_mut().enumerate() {
            for j in 0..k {
                a[(i, j)] = fit.coefficients[1 + l * k + j];
            }
        }
    }
    let history = (n - lag..n)
        .map(|t| DVector::from_iterator(k, panel.iter().map(|s| s[t])))
        .collect();
    Ok(VarModel {
        lag,
        coefficients,
        intercept,
        history,
    })
}

/// Forecasts of every series on its original scale.
pub fn forecast_var(model: &VarModel, records: &[TransformRecord], h: usize) -> Vec<Vec<f64>> {
    model
        .forecast_transformed(h)
        .iter()
        .zip(records)
        .map(|(z, rec)| rec.extend(z))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasting::{fit_arima, ArimaOrder, FitOptions};
    use crate::simulate::ar1;

    #[test]
    fn independent_series_have_small_cross_terms() {
        let panel = vec![ar1(1000, 0.5, 0.0, 1.0, 1), ar1(1000, -0.3, 0.0, 1.0, 2)];
        let m = fit_var(&panel, 1).unwrap();
        let a = &m.coefficients[0];
        assert!(a[(0, 1)].abs() < 0.1 && a[(1, 0)].abs() < 0.1, "{a}");
        assert!((a[(0, 0)] - 0.5).abs() < 0.1);
        assert!((a[(1, 1)] + 0.3).abs() < 0.1);
    }

    #[test]
    fn duplicated_series_is_singular() {
        let s = ar1(200, 0.5, 0.0, 1.0, 1);
        assert_eq!(fit_var(&[s.clone(), s], 1).unwrap_err(), ForecastError::Singular);
    }

    #[test]
    fn single_series_matches_ar1_ols() {
        let s = ar1(500, 0.4, 0.2, 1.0, 9);
        let var = fit_var(std::slice::from_ref(&s), 1).unwrap();
        // the CSS fit of AR(1) is the same least-squares problem
        let ar = fit_arima(&s, ArimaOrder { p: 1, d: 0, q: 0 }, FitOptions::default()).unwrap();
        assert!((var.coefficients[0][(0, 0)] - ar.ar[0]).abs() < 1e-6);
        assert!((var.intercept[0] - ar.intercept).abs() < 1e-6);
        let f = var.forecast_transformed(3);
        assert!((f[0][0] - ar.forecast_transformed(1)[0]).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_var(&[vec![1.0; 5]], 1),
            Err(ForecastError::TooShort { .. })
        ));
        assert!(matches!(
            fit_var(&[vec![1.0; 50], vec![1.0; 40]], 1),
            Err(ForecastError::LengthMismatch(50, 40))
        ));
    }
}
