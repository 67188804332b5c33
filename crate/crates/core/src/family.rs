//! Exponential-family outcomes: Gaussian with identity link and binomial with
//! logit link.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{BhamError, Result};

/// Lower/upper clamp applied to binomial means.
pub const MU_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[serde(alias = "gaussian")]
    GaussianIdentity,
    #[serde(alias = "binomial")]
    BinomialLogit,
}

impl Family {
    pub fn has_dispersion(self) -> bool {
        matches!(self, Family::GaussianIdentity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianIdentity => "gaussian",
            Family::BinomialLogit => "binomial",
        }
    }

    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        match self {
            Family::GaussianIdentity => {
                if y.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(BhamError::InvalidResponse("gaussian response must be finite".into()))
                }
            }
            Family::BinomialLogit => {
                if y.iter().all(|&v| v == 0.0 || v == 1.0) {
                    Ok(())
                } else {
                    Err(BhamError::InvalidResponse("binomial response must be 0 or 1".into()))
                }
            }
        }
    }

    pub fn linkinv_scalar(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => {
                let mu = if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                };
                mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP)
            }
        }
    }

    pub fn linkinv(self, eta: &[f64]) -> Vec<f64> {
        eta.iter().map(|&e| self.linkinv_scalar(e)).collect()
    }

    /// Link function applied to a mean (used for intercept starts).
    pub fn link_scalar(self, mu: f64) -> f64 {
        match self {
            Family::GaussianIdentity => mu,
            Family::BinomialLogit => {
                let m = mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP);
                (m / (1.0 - m)).ln()
            }
        }
    }

    /// `-2 log f(y | mu, phi)`, including the Gaussian normalizing constant.
    pub fn deviance(self, y: &[f64], mu: &[f64], phi: f64) -> Result<f64> {
        if y.len() != mu.len() {
            return Err(BhamError::DimensionMismatch(format!(
                "response has {} values, mean has {}",
                y.len(),
                mu.len()
            )));
        }
        Ok(match self {
            Family::GaussianIdentity => {
                let rss: f64 = y.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                y.len() as f64 * (2.0 * PI * phi).ln() + rss / phi
            }
            Family::BinomialLogit => {
                -2.0 * y
                    .iter()
                    .zip(mu)
                    .map(|(&yi, &m)| {
                        let mut ll = 0.0;
                        if yi > 0.0 {
                            ll += yi * m.ln();
                        }
                        if yi < 1.0 {
                            ll += (1.0 - yi) * (1.0 - m).ln();
                        }
                        ll
                    })
                    .sum::<f64>()
            }
        })
    }

    /// IWLS working response and weight at a single observation:
    /// `z = eta - L'/L''`, `w = -L''`.
    pub fn pseudo_scalar(self, y: f64, eta: f64, phi: f64) -> (f64, f64) {
        match self {
            Family::GaussianIdentity => (y, 1.0 / phi),
            Family::BinomialLogit => {
                let mu = self.linkinv_scalar(eta);
                let w = mu * (1.0 - mu);
                (eta + (y - mu) / w, w)
            }
        }
    }

    pub fn pseudo_data(self, y: &[f64], eta: &[f64], phi: f64) -> (Vec<f64>, Vec<f64>) {
        y.iter()
            .zip(eta)
            .map(|(&yi, &e)| self.pseudo_scalar(yi, e, phi))
            .unzip()
    }
}
