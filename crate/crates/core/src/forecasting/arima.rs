use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ForecastError, TransformRecord};
use crate::linalg::ols;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self { p: 1, d: 1, q: 1 }
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.p, self.d, self.q)
    }
}

impl FromStr for ArimaOrder {
    type Err = String;

    /// `p,d,q`, e.g. `1,1,1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("bad order `{s}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [p, d, q] if d <= 2 => Ok(Self { p, d, q }),
            [_, d, _] => Err(format!("differencing order {d} outside 0..=2")),
            _ => Err(format!("expected p,d,q, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

/// ARMA(p, q) with intercept on an already differenced series:
/// `z_t = c + sum_i ar_i z_{t-i} + e_t + sum_j ma_j e_{t-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub n_train: usize,
    pub iterations: usize,
    /// Last `p` training values, oldest first.
    pub history: Vec<f64>,
    /// Last `q` in-sample residuals, oldest first.
    pub residual_tail: Vec<f64>,
}

impl ArimaModel {
    /// Iterated one-step forecasts on the transformed scale; future shocks are 0.
    pub fn forecast_transformed(&self, h: usize) -> Vec<f64> {
        let mut z = self.history.clone();
        let mut e = self.residual_tail.clone();
        let mut out = Vec::with_capacity(h);
        for _ in 0..h {
            let mut v = self.intercept;
            for (i, phi) in self.ar.iter().enumerate() {
                v += phi * z[z.len() - 1 - i];
            }
            for (j, theta) in self.ma.iter().enumerate() {
                v += theta * e[e.len() - 1 - j];
            }
            z.push(v);
            e.push(0.0);
            out.push(v);
        }
        out
    }
}

/// `h` forecasts on the original scale.
pub fn forecast(model: &ArimaModel, record: &TransformRecord, h: usize) -> Vec<f64> {
    record.extend(&model.forecast_transformed(h))
}

/// Conditional residuals (zero before index `p`) and their Jacobian with
/// respect to `[c, ar.., ma..]`.
fn css_residuals(z: &[f64], p: usize, q: usize, params: &[f64], jacobian: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
    let n = z.len();
    let k = 1 + p + q;
    let (c, ar, ma) = (params[0], &params[1..1 + p], &params[1 + p..]);
    let mut e = vec![0.0; n];
    let mut de = if jacobian { vec![vec![0.0; k]; n] } else { Vec::new() };
    for t in p..n {
        let mut v = z[t] - c;
        for i in 0..p {
            v -= ar[i] * z[t - 1 - i];
        }
        for j in 0..q {
            if t > j {
                v -= ma[j] * e[t - 1 - j];
            }
        }
        e[t] = v;
        if jacobian {
            let mut row = vec![0.0; k];
            row[0] = -1.0;
            for i in 0..p {
                row[1 + i] = -z[t - 1 - i];
            }
            for j in 0..q {
                if t > j {
                    row[1 + p + j] = -e[t - 1 - j];
                }
            }
            for j in 0..q {
                if t > j {
                    let prev = &de[t - 1 - j];
                    for (r, d) in row.iter_mut().zip(prev) {
                        *r -= ma[j] * d;
                    }
                }
            }
            de[t] = row;
        }
    }
    let jac = jacobian.then(|| DMatrix::from_fn(n - p, k, |r, col| de[p + r][col]));
    (e, jac)
}

/// Largest root modulus of `z^m - c_1 z^{m-1} - .. - c_m`.
fn root_radius(c: &[f64]) -> f64 {
    match c.len() {
        0 => 0.0,
        1 => c[0].abs(),
        m => {
            let companion = DMatrix::from_fn(m, m, |r, col| {
                if r == 0 {
                    c[col]
                } else if col + 1 == r {
                    1.0
                } else {
                    0.0
                }
            });
            companion
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        }
    }
}

/// Stationary AR part and invertible MA part.
fn admissible(params: &[f64], p: usize) -> bool {
    let neg_ma: Vec<f64> = params[1 + p..].iter().map(|t| -t).collect();
    root_radius(&params[1..1 + p]) < 1.0 && root_radius(&neg_ma) < 1.0
}

fn sse(e: &[f64], p: usize) -> f64 {
    e[p..].iter().map(|v| v * v).sum()
}

fn initial_params(z: &[f64], p: usize, q: usize) -> Result<Vec<f64>, ForecastError> {
    let mut params = vec![0.0; 1 + p + q];
    if p == 0 {
        params[0] = crate::stats::mean(z);
        return Ok(params);
    }
    let rows = z.len() - p;
    let x = DMatrix::from_fn(rows, 1 + p, |r, col| if col == 0 { 1.0 } else { z[p + r - col] });
    let y = DVector::from_fn(rows, |r, _| z[p + r]);
    let fit = ols(&x, &y).ok_or(ForecastError::Singular)?;
    params[..=p].copy_from_slice(fit.coefficients.as_slice());
    if !admissible(&params, p) {
        // start from the mean when least squares lands on an explosive root
        params.iter_mut().for_each(|v| *v = 0.0);
        params[0] = crate::stats::mean(z);
    }
    Ok(params)
}

/// Minimizes the conditional sum of squares with Levenberg-Marquardt,
/// starting from the least-squares AR fit with zero MA terms. Steps leaving
/// the stationary/invertible region are rejected.
pub fn fit_arima(z: &[f64], order: ArimaOrder, opts: FitOptions) -> Result<ArimaModel, ForecastError> {
    let (p, q) = (order.p, order.q);
    let k = 1 + p + q;
    if z.len() < 10 * k {
        return Err(ForecastError::TooShort {
            needed: 10 * k,
            got: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    let mut params = initial_params(z, p, q)?;
    let (mut e, _) = css_residuals(z, p, q, &params, false);
    let mut cost = sse(&e, p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: for iter in 1..=opts.max_iter {
        iterations = iter;
        let (_, jac) = css_residuals(z, p, q, &params, true);
        let jac = jac.expect("jacobian requested");
        let r = DVector::from_column_slice(&e[p..]);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * r;
        if grad.amax() <= opts.tol * (1.0 + cost) {
            converged = true;
            break;
        }
        loop {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    return Err(ForecastError::Singular);
                }
                continue;
            };
            let candidate: Vec<f64> = params.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (e_new, _) = css_residuals(z, p, q, &candidate, false);
            let cost_new = if admissible(&candidate, p) {
                sse(&e_new, p)
            } else {
                f64::INFINITY
            };
            if cost_new.is_finite() && cost_new <= cost {
                let small_step = step.amax() <= opts.tol * (1.0 + params.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                let small_gain = cost - cost_new <= opts.tol * (cost + opts.tol);
                params = candidate;
                e = e_new;
                cost = cost_new;
                lambda = (lambda / 10.0).max(1e-12);
                if small_step || small_gain {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // no descent direction left: at a minimum to working precision
                converged = true;
                break 'outer;
            }
        }
    }
    if !converged {
        return Err(ForecastError::NonConvergence(opts.max_iter));
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite);
    }

    let m = z.len() - p;
    Ok(ArimaModel {
        order,
        ar: params[1..1 + p].to_vec(),
        ma: params[1 + p..].to_vec(),
        intercept: params[0],
        sigma2: cost / (m.saturating_sub(k)).max(1) as f64,
        n_train: z.len(),
        iterations,
        history: z[z.len() - p..].to_vec(),
        residual_tail: e[e.len() - q..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasting::preprocess;
    use crate::simulate::{ar1, ma1, white_noise};

    fn order(p: usize, q: usize) -> ArimaOrder {
        ArimaOrder { p, d: 0, q }
    }

    #[test]
    fn recovers_ar1() {
        let z = ar1(1000, 0.6, 0.0, 1.0, 11);
        let m = fit_arima(&z, order(1, 0), FitOptions::default()).unwrap();
        assert!((0.55..=0.65).contains(&m.ar[0]), "{}", m.ar[0]);
    }

    #[test]
    fn white_noise_has_no_ar() {
        let z = white_noise(1000, 0.0, 1.0, 4);
        let m = fit_arima(&z, order(1, 0), FitOptions::default()).unwrap();
        assert!(m.ar[0].abs() < 0.1);
    }

    #[test]
    fn recovers_ma1() {
        let z = ma1(1000, 0.5, 0.0, 1.0, 21);
        let m = fit_arima(&z, order(0, 1), FitOptions::default()).unwrap();
        assert!((0.4..=0.6).contains(&m.ma[0]), "{}", m.ma[0]);
    }

    #[test]
    fn arma11_fits() {
        let z = ar1(2000, 0.5, 0.1, 1.0, 2);
        let m = fit_arima(&z, order(1, 1), FitOptions::default()).unwrap();
        assert!(m.iterations >= 1 && m.sigma2 > 0.0);
        assert_eq!(m.history.len(), 1);
        assert_eq!(m.residual_tail.len(), 1);
    }

    #[test]
    fn consistency_improves_with_length() {
        let err = |n: usize| {
            (0..10)
                .map(|s| {
                    let z = ar1(n, 0.6, 0.0, 1.0, 100 + s);
                    (fit_arima(&z, order(1, 0), FitOptions::default()).unwrap().ar[0] - 0.6).abs()
                })
                .sum::<f64>()
                / 10.0
        };
        let (e200, e1000, e5000) = (err(200), err(1000), err(5000));
        assert!(e200 > e1000 && e1000 > e5000, "{e200} {e1000} {e5000}");
    }

    #[test]
    fn memoryless_forecast_is_intercept() {
        let m = ArimaModel {
            order: order(1, 0),
            ar: vec![0.0],
            ma: vec![],
            intercept: 0.3,
            sigma2: 0.0,
            n_train: 50,
            iterations: 0,
            history: vec![0.9],
            residual_tail: vec![],
        };
        assert_eq!(m.forecast_transformed(5), vec![0.3; 5]);
    }

    #[test]
    fn ramp_continues() {
        let xs: Vec<f64> = (0..60).map(|i| 3.0 + 0.25 * i as f64).collect();
        let (z, rec) = preprocess(&xs, 1).unwrap();
        let m = fit_arima(&z, ArimaOrder { p: 0, d: 1, q: 0 }, FitOptions::default()).unwrap();
        let f = forecast(&m, &rec, 5);
        for (k, v) in f.iter().enumerate() {
            let expected = 3.0 + 0.25 * (60 + k) as f64;
            assert!((v - expected).abs() < 1e-6, "{v} vs {expected}");
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_arima(&[1.0; 15], order(1, 1), FitOptions::default()),
            Err(ForecastError::TooShort { .. })
        ));
        assert_eq!(
            fit_arima(&[1.0; 50], order(1, 0), FitOptions::default()).unwrap_err(),
            ForecastError::Singular
        );
        let z = ar1(500, 0.5, 0.0, 1.0, 1);
        let capped = FitOptions { max_iter: 1, tol: 0.0 };
        assert_eq!(
            fit_arima(&z, order(1, 1), capped).unwrap_err(),
            ForecastError::NonConvergence(1)
        );
    }

    #[test]
    fn over_differenced_ar_stays_invertible() {
        let xs: Vec<f64> = ar1(150, 0.5, 0.0, 1.0, crate::seeds::mix(&[1, 0]));
        let (z, _) = preprocess(&xs, 1).unwrap();
        let m = fit_arima(&z, ArimaOrder::default(), FitOptions::default()).unwrap();
        assert!(m.ma[0] > -1.0 && m.ar[0].abs() < 1.0);
    }

    #[test]
    fn root_radius_matches_quadratic() {
        // z^2 - 0.5 z - 0.06 = (z - 0.6)(z + 0.1)
        assert!((root_radius(&[0.5, 0.06]) - 0.6).abs() < 1e-12);
        assert!(root_radius(&[0.0, -1.44]) > 1.19);
    }

    #[test]
    fn order_parsing() {
        assert_eq!("2,1,0".parse::<ArimaOrder>().unwrap(), ArimaOrder { p: 2, d: 1, q: 0 });
        assert!("1,3,1".parse::<ArimaOrder>().is_err());
        assert!("1,1".parse::<ArimaOrder>().is_err());
    }
}
