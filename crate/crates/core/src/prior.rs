//! The two-part spike-and-slab spline prior and its E-step quantities.

use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{BhamError, Result};
use crate::reparam::TermBlock;

pub const THETA_MIN: f64 = 1e-6;
pub const THETA_MAX: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Double-exponential spike and slab; `s0`, `s1` are DE scales.
    #[default]
    DeMixture,
    /// Normal spike and slab; `s0`, `s1` are variances.
    NormalMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsPrior {
    pub s0: f64,
    pub s1: f64,
    pub a: f64,
    pub b: f64,
    pub kind: PriorKind,
}

impl SsPrior {
    /// Double-exponential mixture with a uniform Beta(1, 1) on θ.
    ///
    /// `s0 == s1` is accepted: the mixture then collapses to a single
    /// fixed-scale prior, i.e. a plain lasso (or ridge) penalty.
    pub fn new(s0: f64, s1: f64) -> Result<Self> {
        let prior = Self {
            s0,
            s1,
            a: 1.0,
            b: 1.0,
            kind: PriorKind::DeMixture,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn with_kind(mut self, kind: PriorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_beta(mut self, a: f64, b: f64) -> Result<Self> {
        self.a = a;
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    pub fn with_s0(mut self, s0: f64) -> Result<Self> {
        self.s0 = s0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.s0) && ok(self.s1) && self.s0 <= self.s1) {
            return Err(BhamError::InvalidPrior(format!(
                "need 0 < s0 <= s1, got s0={}, s1={}",
                self.s0, self.s1
            )));
        }
        if !(ok(self.a) && ok(self.b)) {
            return Err(BhamError::InvalidPrior(format!(
                "beta shapes must be positive, got a={}, b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    fn ln_density(&self, beta: f64, scale: f64) -> f64 {
        match self.kind {
            PriorKind::DeMixture => ln_de_density(beta, scale),
            PriorKind::NormalMixture => ln_normal_density(beta, scale),
        }
    }

    /// Posterior probability that the slab generated all of `coefs`, given
    /// prior inclusion probability `theta`. Evaluated in log space.
    pub fn inclusion_probability(&self, theta: f64, coefs: &[f64]) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        if theta >= 1.0 {
            return 1.0;
        }
        let slab: f64 = coefs.iter().map(|&c| self.ln_density(c, self.s1)).sum();
        let spike: f64 = coefs.iter().map(|&c| self.ln_density(c, self.s0)).sum();
        let log_odds = theta.ln() + slab - (1.0 - theta).ln() - spike;
        logistic(log_odds)
    }

    /// `(p_j, p*_j)` for one variable's linear and nonlinear coefficients.
    pub fn posterior_inclusion(&self, theta: f64, beta_lin: &[f64], beta_nonlin: &[f64]) -> (f64, f64) {
        (
            self.inclusion_probability(theta, beta_lin),
            self.inclusion_probability(theta, beta_nonlin),
        )
    }

    pub fn expected_inv_scale(&self, p: f64) -> f64 {
        expected_inv_scale(p, self.s0, self.s1)
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn ln_de_density(beta: f64, scale: f64) -> f64 {
    -(2.0 * scale).ln() - beta.abs() / scale
}

/// Double-exponential density `exp(-|beta|/scale) / (2 scale)`.
pub fn de_density(beta: f64, scale: f64) -> f64 {
    ln_de_density(beta, scale).exp()
}

pub fn ln_normal_density(beta: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * PI * variance).ln() - beta * beta / (2.0 * variance)
}

/// `E(S⁻¹) = (1 - p)/s0 + p/s1`.
pub fn expected_inv_scale(p: f64, s0: f64, s1: f64) -> f64 {
    (1.0 - p) / s0 + p / s1
}

/// Beta-binomial conjugate update of θ from the two expected indicators,
/// clamped away from 0 and 1.
pub fn update_theta(p_lin: f64, p_nonlin: f64, a: f64, b: f64) -> f64 {
    ((p_lin + p_nonlin + a - 1.0) / (a + b)).clamp(THETA_MIN, THETA_MAX)
}

/// Per-variable E-step output.
#[derive(Debug, Clone, PartialEq)]
pub struct EStepResult {
    pub p_lin: Vec<f64>,
    pub p_nonlin: Vec<f64>,
    pub inv_scale_lin: Vec<f64>,
    pub inv_scale_nonlin: Vec<f64>,
}

impl EStepResult {
    /// Expands the per-variable expected inverse scales to one penalty per
    /// design column.
    pub fn penalties(&self, blocks: &[TermBlock], n_cols: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n_cols);
        for (j, b) in blocks.iter().enumerate() {
            for c in b.linear_range() {
                out[c] = self.inv_scale_lin[j];
            }
            for c in b.nonlinear_range() {
                out[c] = self.inv_scale_nonlin[j];
            }
        }
        out
    }
}

/// E-step over all variables at coefficients `beta` (design columns only).
pub fn e_step(prior: &SsPrior, blocks: &[TermBlock], beta: &[f64], theta: &[f64]) -> EStepResult {
    let p = blocks.len();
    let mut out = EStepResult {
        p_lin: Vec::with_capacity(p),
        p_nonlin: Vec::with_capacity(p),
        inv_scale_lin: Vec::with_capacity(p),
        inv_scale_nonlin: Vec::with_capacity(p),
    };
    for (b, &th) in blocks.iter().zip(theta) {
        let (pl, pn) = prior.posterior_inclusion(th, &beta[b.linear_range()], &beta[b.nonlinear_range()]);
        out.p_lin.push(pl);
        out.p_nonlin.push(pn);
        out.inv_scale_lin.push(prior.expected_inv_scale(pl));
        out.inv_scale_nonlin.push(prior.expected_inv_scale(pn));
    }
    out
}

pub fn update_thetas(prior: &SsPrior, e: &EStepResult) -> Vec<f64> {
    e.p_lin
        .iter()
        .zip(&e.p_nonlin)
        .map(|(&pl, &pn)| update_theta(pl, pn, prior.a, prior.b))
        .collect()
}
