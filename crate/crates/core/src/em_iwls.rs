//! EM with an iteratively weighted least-squares M-step.
//!
//! The double-exponential prior is written as a scale mixture of normals,
//! `β | τ² ~ N(0, τ²)` with an exponential mixing density on τ². Each
//! iteration replaces `τ⁻²` by its conditional expectation, appends the
//! resulting normal prior to the weighted-normal approximation of the
//! likelihood as pseudo-observations, and solves the augmented least-squares
//! problem. The inverse of the augmented normal matrix gives a coefficient
//! covariance.

use nalgebra::{DMatrix, DVector};

use crate::em_cd::{check_inputs, converged, deviance_at, initial_state, EmSettings, FitState};
use crate::error::Result;
use crate::family::Family;
use crate::linalg::{spd_solve, weighted_gram};
use crate::prior::{e_step, update_thetas, PriorKind, SsPrior};
use crate::reparam::ModelFrame;

/// Smallest |β| used when dividing by it in the τ⁻² update.
pub const BETA_FLOOR: f64 = 1e-8;
/// Prior precision on the intercept (`τ₀² = 1e6`).
pub const INTERCEPT_PRECISION: f64 = 1e-6;

/// An EM-IWLS fit: the shared fit fields plus the latent-variance
/// expectations and the coefficient covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct IwlsState {
    pub fit: FitState,
    /// E(τ⁻²) per design column at the final iteration.
    pub tau2_inv: DVector<f64>,
    /// Covariance of (β₀, β), intercept first.
    pub covariance: DMatrix<f64>,
}

impl IwlsState {
    /// Standard errors of (β₀, β).
    pub fn standard_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// `E(τ⁻² | S, β) = E(S⁻¹) / |β|`, with |β| floored at [`BETA_FLOOR`].
pub fn e_step_tau(inv_scale: f64, beta: f64) -> f64 {
    inv_scale / beta.abs().max(BETA_FLOOR)
}

/// `(X*ᵀ Σ*⁻¹ X*)⁻¹ φ`, where the augmented normal matrix is
/// `Xᵀ W X + φ_prior · diag(precision)` on the intercept-augmented design.
pub fn coefficient_covariance(
    design: &DMatrix<f64>,
    weights: &[f64],
    precision: &DVector<f64>,
    phi_prior: f64,
    phi: f64,
) -> Result<DMatrix<f64>> {
    let xa = with_intercept(design);
    let gram = weighted_gram(&xa, weights);
    let rhs = DVector::zeros(xa.ncols());
    let (_, inv) = spd_solve(&augmented(&gram, precision, phi_prior), &rhs, true)?;
    Ok(inv.expect("inverse requested") * phi)
}

pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}

fn augmented(gram: &DMatrix<f64>, precision: &DVector<f64>, phi: f64) -> DMatrix<f64> {
    let mut a = gram.clone();
    for (i, t) in precision.iter().enumerate() {
        a[(i, i)] += phi * t;
    }
    a
}

/// Fits the spike-and-slab additive model by EM with augmented weighted
/// least squares. Both prior kinds are supported; the normal mixture uses
/// its expected inverse variance as the prior precision directly.
///
/// At the zero start `E(S⁻¹)/|β|` is unbounded, so the first iteration uses
/// the reciprocal prior variance of β, `E(S⁻¹)² / 2`.
pub fn fit_em_iwls(
    frame: &ModelFrame,
    y: &[f64],
    family: Family,
    prior: &SsPrior,
    settings: &EmSettings,
) -> Result<IwlsState> {
    check_inputs(frame, y, family)?;
    prior.validate()?;
    settings.validate()?;
    let n = y.len() as f64;
    let (beta0, beta, mut theta, mut phi) = initial_state(frame, y, family);
    let xa = with_intercept(&frame.design);
    let ncols = xa.ncols();
    let mut coef = beta.clone_owned().insert_row(0, beta0);

    // constant for the Gaussian family
    let fixed_gram = (family == Family::GaussianIdentity).then(|| xa.tr_mul(&xa));

    let mut trace = vec![deviance_at(family, y, &(&xa * &coef), phi)];
    let mut penalties = DVector::zeros(frame.n_cols());
    let mut precision = DVector::zeros(ncols);
    let mut weights = vec![1.0; y.len()];
    let mut m_step_phi = phi;
    let mut iterations = 0;
    let mut done = false;

    while iterations < settings.max_em_iter {
        iterations += 1;
        let b = coef.rows(1, ncols - 1);
        let e = e_step(prior, &frame.blocks, b.as_slice(), &theta);
        penalties = e.penalties(&frame.blocks, frame.n_cols());
        precision[0] = INTERCEPT_PRECISION;
        for c in 0..penalties.len() {
            precision[c + 1] = match prior.kind {
                PriorKind::NormalMixture => penalties[c],
                PriorKind::DeMixture if iterations == 1 => 0.5 * penalties[c] * penalties[c],
                PriorKind::DeMixture => e_step_tau(penalties[c], b[c]),
            };
        }

        let eta = &xa * &coef;
        let (z, w) = family.pseudo_data(y, eta.as_slice(), 1.0);
        let gram = match &fixed_gram {
            Some(g) => g.clone(),
            None => weighted_gram(&xa, &w),
        };
        let wz = DVector::from_iterator(z.len(), z.iter().zip(&w).map(|(a, b)| a * b));
        let rhs = xa.tr_mul(&wz);
        m_step_phi = phi;
        let (sol, _) = spd_solve(&augmented(&gram, &precision, phi), &rhs, false)?;
        coef = sol;
        weights = w;

        if family.has_dispersion() {
            let fitted = &xa * &coef;
            let lik: f64 = (0..z.len())
                .map(|i| weights[i] * (z[i] - fitted[i]).powi(2))
                .sum();
            let pri: f64 = precision.iter().zip(coef.iter()).map(|(t, b)| t * b * b).sum();
            phi = ((lik + m_step_phi * pri) / n).max(1e-10);
        }
        theta = update_thetas(prior, &e);

        let d = deviance_at(family, y, &(&xa * &coef), phi);
        let prev = *trace.last().unwrap();
        trace.push(d);
        if !d.is_finite() {
            break;
        }
        if converged(d, prev, settings.epsilon) {
            done = true;
            break;
        }
    }

    let gram = match fixed_gram {
        Some(g) => g,
        None => weighted_gram(&xa, &weights),
    };
    let (_, inv) = spd_solve(&augmented(&gram, &precision, m_step_phi), &DVector::zeros(ncols), true)?;
    let mut covariance = inv.expect("inverse requested") * phi;
    covariance = (&covariance + covariance.transpose()) * 0.5;

    let beta = coef.rows(1, ncols - 1).into_owned();
    let fin = e_step(prior, &frame.blocks, beta.as_slice(), &theta);
    let fit = FitState {
        beta0: coef[0],
        beta,
        theta,
        p_lin: fin.p_lin,
        p_nonlin: fin.p_nonlin,
        phi,
        deviance_trace: trace,
        iterations,
        converged: done,
        penalties,
        m_step_phi,
    };
    Ok(IwlsState {
        fit,
        tau2_inv: precision.rows(1, ncols - 1).into_owned(),
        covariance,
    })
}
