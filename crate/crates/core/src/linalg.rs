//! Ordinary least squares on top of nalgebra.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Residual variance with `n - k` degrees of freedom.
    pub sigma2: f64,
    /// Standard error of every coefficient.
    pub std_errors: DVector<f64>,
}

/// Returns None when the design matrix is rank deficient.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<OlsFit> {
    let (n, k) = x.shape();
    if n <= k || k == 0 {
        return None;
    }
    if !full_column_rank(x) {
        return None;
    }
    let xtx = x.transpose() * x;
    let chol = xtx.clone().cholesky()?;
    let coefficients = chol.solve(&(x.transpose() * y));
    let residuals = y - x * &coefficients;
    let sigma2 = residuals.norm_squared() / (n - k) as f64;
    let inv = chol.inverse();
    let std_errors = DVector::from_iterator(k, (0..k).map(|i| (sigma2 * inv[(i, i)]).sqrt()));
    Some(OlsFit {
        coefficients,
        residuals,
        sigma2,
        std_errors,
    })
}

/// Rank test on column-scaled singular values.
pub fn full_column_rank(x: &DMatrix<f64>) -> bool {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return false;
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min / max > 1e-10
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = ols(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.sigma2 < 1e-20);
    }

    #[test]
    fn collinear_is_none() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(ols(&x, &y).is_none());
    }
}
