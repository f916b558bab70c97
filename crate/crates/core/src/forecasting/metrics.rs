use super::ForecastError;

pub fn mae(real: &[f64], pred: &[f64]) -> Result<f64, ForecastError> {
    if real.len() != pred.len() {
        return Err(ForecastError::LengthMismatch(real.len(), pred.len()));
    }
    if real.is_empty() {
        return Err(ForecastError::TooShort { needed: 1, got: 0 });
    }
    Ok(real.iter().zip(pred).map(|(r, p)| (r - p).abs()).sum::<f64>() / real.len() as f64)
}

/// In-sample MAE of the one-step naive forecast `x_t = x_{t-1}`.
pub fn naive_denominator(train: &[f64]) -> Result<f64, ForecastError> {
    if train.len() < 2 {
        return Err(ForecastError::TooShort {
            needed: 2,
            got: train.len(),
        });
    }
    let d = mae(&train[1..], &train[..train.len() - 1])?;
    if d == 0.0 {
        return Err(ForecastError::ZeroDenominator);
    }
    Ok(d)
}

pub fn mase(real: &[f64], pred: &[f64], train: &[f64]) -> Result<f64, ForecastError> {
    let denom = naive_denominator(train)?;
    Ok(mae(real, pred)? / denom)
}
