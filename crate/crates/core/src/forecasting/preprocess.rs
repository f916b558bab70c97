use serde::{Deserialize, Serialize};

use super::ForecastError;

pub const MIN_WINDOW: usize = 30;

/// Everything needed to map forecasts back to the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub min: f64,
    pub max: f64,
    /// Value used for imputation (training-window mean of observed points).
    pub fill: f64,
    pub imputed: Vec<usize>,
    pub d: usize,
    /// First value of each differencing level, level 0 being the normalized series.
    pub heads: Vec<f64>,
    /// Last value of each differencing level.
    pub anchors: Vec<f64>,
}

impl TransformRecord {
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }

    /// Rebuilds the (imputed) training window from its transformed form.
    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        let mut level = z.to_vec();
        for k in (0..self.d).rev() {
            let mut acc = self.heads[k];
            let mut out = Vec::with_capacity(level.len() + 1);
            out.push(acc);
            for dz in &level {
                acc += dz;
                out.push(acc);
            }
            level = out;
        }
        level.into_iter().map(|v| self.denormalize(v)).collect()
    }

    /// Maps values that follow the training window on the differenced
    /// normalized scale back to the original scale, by cumulative summation
    /// from the last training observation of each level.
    pub fn extend(&self, future: &[f64]) -> Vec<f64> {
        let mut level = future.to_vec();
        for k in (0..self.d).rev() {
            let mut acc = self.anchors[k];
            for v in level.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        level.into_iter().map(|v| self.denormalize(v)).collect()
    }
}

/// [`preprocess_gappy`] for a window without gaps.
pub fn preprocess(xs: &[f64], d: usize) -> Result<(Vec<f64>, TransformRecord), ForecastError> {
    let gappy: Vec<Option<f64>> = xs.iter().map(|&x| Some(x)).collect();
    preprocess_gappy(&gappy, d)
}

/// Mean-imputes missing points, min-max normalizes to [0, 1] with the
/// window's own range, then differences `d` times.
pub fn preprocess_gappy(xs: &[Option<f64>], d: usize) -> Result<(Vec<f64>, TransformRecord), ForecastError> {
    if d > 2 {
        return Err(ForecastError::InvalidOrder(d));
    }
    if xs.len() < MIN_WINDOW {
        return Err(ForecastError::TooShort {
            needed: MIN_WINDOW,
            got: xs.len(),
        });
    }
    let observed: Vec<f64> = xs.iter().flatten().copied().collect();
    if observed.iter().any(|x| !x.is_finite()) {
        return Err(ForecastError::NonFinite);
    }
    if observed.is_empty() {
        return Err(ForecastError::DegenerateRange);
    }
    let fill = crate::stats::mean(&observed);
    let imputed: Vec<usize> = xs
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_none())
        .map(|(i, _)| i)
        .collect();
    let filled: Vec<f64> = xs.iter().map(|x| x.unwrap_or(fill)).collect();
    let min = filled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = filled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(ForecastError::DegenerateRange);
    }
    let mut level: Vec<f64> = filled.iter().map(|x| (x - min) / (max - min)).collect();
    let mut heads = Vec::with_capacity(d);
    let mut anchors = Vec::with_capacity(d);
    for _ in 0..d {
        heads.push(level[0]);
        anchors.push(level[level.len() - 1]);
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok((
        level,
        TransformRecord {
            min,
            max,
            fill,
            imputed,
            d,
            heads,
            anchors,
        },
    ))
}
