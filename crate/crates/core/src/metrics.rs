//! Prediction-performance measures.

use serde::{Deserialize, Serialize};

use crate::error::{BhamError, Result};
use crate::family::Family;

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(BhamError::DimensionMismatch(format!("{} vs {} values", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(BhamError::EmptyFrame);
    }
    Ok(())
}

/// Out-of-sample `1 - SSE / SST`, with SST centered on the mean of `y`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_len(y, yhat)?;
    if y.len() < 2 {
        return Err(BhamError::TooFewObservations { variable: "response".into(), found: y.len(), required: 2 });
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst <= 0.0 {
        return Err(BhamError::ZeroVariance);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

/// Mann-Whitney AUC; tied scores across classes count one half.
pub fn auc(y: &[f64], score: &[f64]) -> Result<f64> {
    check_len(y, score)?;
    let mut idx: Vec<usize> = (0..y.len()).collect();
    idx.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && score[idx[j + 1]] == score[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if y[k] > 0.5 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let n_pos = y.iter().filter(|&&v| v > 0.5).count() as f64;
    let n_neg = y.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return Err(BhamError::SingleClass);
    }
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg))
}

pub fn brier(y: &[f64], p: &[f64]) -> Result<f64> {
    mse(y, p)
}

/// Share of observations with `|y - p| > 0.5`.
pub fn misclass(y: &[f64], p: &[f64]) -> Result<f64> {
    check_len(y, p)?;
    Ok(y.iter().zip(p).filter(|(a, b)| (*a - *b).abs() > 0.5).count() as f64 / y.len() as f64)
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_len(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_len(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MetricReport {
    Gaussian { deviance: f64, r2: f64, mse: f64, mae: f64 },
    Binomial { deviance: f64, auc: f64, brier: f64, misclass: f64 },
}

impl MetricReport {
    /// Metrics of fitted means `mu` against `y`; `phi` enters the Gaussian
    /// deviance.
    pub fn compute(family: Family, y: &[f64], mu: &[f64], phi: f64) -> Result<Self> {
        let deviance = family.deviance(y, mu, phi)?;
        Ok(match family {
            Family::GaussianIdentity => MetricReport::Gaussian {
                deviance,
                r2: r_squared(y, mu)?,
                mse: mse(y, mu)?,
                mae: mae(y, mu)?,
            },
            Family::BinomialLogit => MetricReport::Binomial {
                deviance,
                auc: auc(y, mu)?,
                brier: brier(y, mu)?,
                misclass: misclass(y, mu)?,
            },
        })
    }

    pub fn deviance(&self) -> f64 {
        match self {
            MetricReport::Gaussian { deviance, .. } | MetricReport::Binomial { deviance, .. } => *deviance,
        }
    }
}
