//! EM with a coordinate-descent M-step.
//!
//! Each iteration computes the inclusion posteriors and expected inverse
//! scales, turns them into one l1 penalty per column, maximizes the penalized
//! log-likelihood by cyclic coordinate descent, re-estimates the dispersion,
//! and updates θ. Iteration stops once the relative change in deviance falls
//! below `epsilon`.

use nalgebra::{DMatrix, DVector};

use crate::error::{BhamError, Result};
use crate::family::Family;
use crate::prior::{e_step, update_thetas, PriorKind, SsPrior};
use crate::reparam::ModelFrame;

const PHI_FLOOR: f64 = 1e-10;
const MAX_NEWTON_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSettings {
    /// Relative deviance change declaring EM convergence.
    pub epsilon: f64,
    pub max_em_iter: usize,
    /// Cap on coordinate-descent passes inside one M-step.
    pub max_cd_iter: usize,
    /// Largest standardized coefficient change tolerated at CD convergence.
    pub cd_tol: f64,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_em_iter: 200,
            max_cd_iter: 1000,
            cd_tol: 1e-7,
        }
    }
}

impl EmSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.cd_tol > 0.0 && self.max_em_iter > 0 && self.max_cd_iter > 0 {
            Ok(())
        } else {
            Err(BhamError::InvalidSettings(format!("{self:?}")))
        }
    }
}

/// Parameters and diagnostics of an EM fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub beta0: f64,
    /// Coefficients in model-frame column order.
    pub beta: DVector<f64>,
    pub theta: Vec<f64>,
    /// Posterior inclusion probabilities at the final (β, θ).
    pub p_lin: Vec<f64>,
    pub p_nonlin: Vec<f64>,
    /// Dispersion; fixed at 1 for binomial.
    pub phi: f64,
    /// Deviance at the starting values followed by one entry per iteration.
    pub deviance_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Per-column penalty used by the last M-step (log-likelihood units).
    pub penalties: DVector<f64>,
    /// Dispersion held fixed while the last M-step solved for β.
    pub m_step_phi: f64,
}

impl FitState {
    pub fn linear_predictor(&self, design: &DMatrix<f64>) -> DVector<f64> {
        linear_predictor(design, self.beta0, &self.beta)
    }

    pub fn final_deviance(&self) -> f64 {
        *self.deviance_trace.last().expect("trace always holds the initial deviance")
    }
}

/// `|d_t - d_prev| / (0.1 + |d_t|) < epsilon`.
pub fn converged(dev_t: f64, dev_prev: f64, epsilon: f64) -> bool {
    (dev_t - dev_prev).abs() / (0.1 + dev_t.abs()) < epsilon
}

pub(crate) fn linear_predictor(design: &DMatrix<f64>, beta0: f64, beta: &DVector<f64>) -> DVector<f64> {
    let mut eta = design * beta;
    eta.add_scalar_mut(beta0);
    eta
}

pub(crate) fn deviance_at(family: Family, y: &[f64], eta: &DVector<f64>, phi: f64) -> f64 {
    let mu = family.linkinv(eta.as_slice());
    family
        .deviance(y, &mu, phi)
        .expect("lengths checked by caller")
}

pub(crate) fn check_inputs(frame: &ModelFrame, y: &[f64], family: Family) -> Result<()> {
    if frame.n() != y.len() {
        return Err(BhamError::DimensionMismatch(format!(
            "frame has {} rows, response has {}",
            frame.n(),
            y.len()
        )));
    }
    family.validate_response(y)
}

pub(crate) fn initial_state(frame: &ModelFrame, y: &[f64], family: Family) -> (f64, DVector<f64>, Vec<f64>, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let phi = match family {
        Family::GaussianIdentity => {
            let v = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            if v > PHI_FLOOR {
                v
            } else {
                1.0
            }
        }
        Family::BinomialLogit => 1.0,
    };
    (
        family.link_scalar(mean),
        DVector::zeros(frame.n_cols()),
        vec![0.5; frame.p()],
        phi,
    )
}

/// Result of one penalized coordinate-descent solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CdSolution {
    pub beta0: f64,
    pub beta: DVector<f64>,
    /// Updated dispersion (`RSS / n` for Gaussian, 1 for binomial).
    pub phi: f64,
    /// Total coordinate passes performed.
    pub passes: usize,
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Weighted l1 coordinate descent on
/// `(1/2n) Σ w_i (z_i - b0 - x_iᵀ b)² + Σ lam_c |b_c|`.
///
/// Dividing each update by the weighted column norm is the same as running
/// on unit-norm columns and back-transforming. Returns the pass count and
/// whether the tolerance was met.
struct WeightedCd<'a> {
    x: &'a DMatrix<f64>,
    w: &'a [f64],
    lam: &'a [f64],
    xsq: Vec<f64>,
    wsum: f64,
}

impl<'a> WeightedCd<'a> {
    fn new(x: &'a DMatrix<f64>, w: &'a [f64], lam: &'a [f64]) -> Self {
        let n = x.nrows() as f64;
        let xsq = x
            .column_iter()
            .map(|col| col.iter().zip(w).map(|(v, wi)| wi * v * v).sum::<f64>() / n)
            .collect();
        Self {
            x,
            w,
            lam,
            xsq,
            wsum: w.iter().sum(),
        }
    }

    fn col(&self, c: usize) -> &[f64] {
        let n = self.x.nrows();
        &self.x.as_slice()[c * n..(c + 1) * n]
    }

    /// One pass over `cols` (plus the intercept); returns the largest
    /// standardized change.
    fn pass(&self, cols: &[usize], beta0: &mut f64, beta: &mut [f64], r: &mut [f64]) -> f64 {
        let n = self.x.nrows() as f64;
        let mut dmax = 0.0f64;
        for &c in cols {
            let xsq = self.xsq[c];
            if xsq <= 0.0 {
                continue;
            }
            let col = self.col(c);
            let old = beta[c];
            let grad = col
                .iter()
                .zip(self.w)
                .zip(r.iter())
                .map(|((x, w), r)| x * w * r)
                .sum::<f64>()
                / n;
            let new = soft_threshold(grad + xsq * old, self.lam[c]) / xsq;
            let delta = new - old;
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(col) {
                    *ri -= xi * delta;
                }
                beta[c] = new;
                dmax = dmax.max(delta.abs() * xsq.sqrt());
            }
        }
        if self.wsum > 0.0 {
            let shift = r.iter().zip(self.w).map(|(r, w)| r * w).sum::<f64>() / self.wsum;
            if shift != 0.0 {
                r.iter_mut().for_each(|ri| *ri -= shift);
                *beta0 += shift;
                dmax = dmax.max(shift.abs() * (self.wsum / n).sqrt());
            }
        }
        dmax
    }

    fn solve(&self, z: &[f64], beta0: &mut f64, beta: &mut [f64], tol: f64, max_passes: usize) -> (usize, bool) {
        let mut r: Vec<f64> = z.to_vec();
        let eta = linear_predictor(self.x, *beta0, &DVector::from_column_slice(beta));
        r.iter_mut().zip(eta.iter()).for_each(|(ri, e)| *ri -= e);
        let all: Vec<usize> = (0..beta.len()).collect();
        let mut passes = 0;
        while passes < max_passes {
            let d = self.pass(&all, beta0, beta, &mut r);
            passes += 1;
            if d < tol {
                return (passes, true);
            }
            // settle the active set before the next confirming full pass
            let active: Vec<usize> = all.iter().copied().filter(|&c| beta[c] != 0.0).collect();
            while passes < max_passes {
                let d = self.pass(&active, beta0, beta, &mut r);
                passes += 1;
                if d < tol {
                    break;
                }
            }
        }
        (passes, false)
    }
}

/// Maximizes `log f(y | β, φ) - Σ_c penalties_c |β_c|` with the intercept
/// unpenalized and φ held at `phi` during the coefficient updates.
///
/// Gaussian fits use exact coordinate updates and return `φ = RSS / n`.
/// Binomial fits wrap weighted coordinate descent in Newton (IWLS) steps with
/// step halving on the penalized objective.
pub fn cd_solve(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    penalties: &DVector<f64>,
    warm_start: Option<(f64, &DVector<f64>)>,
    phi: f64,
    settings: &EmSettings,
) -> Result<CdSolution> {
    let n = x.nrows();
    let ncols = x.ncols();
    if y.len() != n || penalties.len() != ncols {
        return Err(BhamError::DimensionMismatch(format!(
            "design {}x{}, response {}, penalties {}",
            n,
            ncols,
            y.len(),
            penalties.len()
        )));
    }
    if penalties.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(BhamError::InvalidSettings("penalties must be finite and nonnegative".into()));
    }
    let nf = n as f64;
    let (mut beta0, mut beta) = match warm_start {
        Some((b0, b)) => {
            if b.len() != ncols {
                return Err(BhamError::DimensionMismatch("warm start length".into()));
            }
            (b0, b.clone_owned())
        }
        None => (0.0, DVector::zeros(ncols)),
    };

    match family {
        Family::GaussianIdentity => {
            let lam: Vec<f64> = penalties.iter().map(|p| p * phi / nf).collect();
            let w = vec![1.0; n];
            let cd = WeightedCd::new(x, &w, &lam);
            let (passes, _) = cd.solve(y, &mut beta0, beta.as_mut_slice(), settings.cd_tol, settings.max_cd_iter);
            let eta = linear_predictor(x, beta0, &beta);
            let rss: f64 = y.iter().zip(eta.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(CdSolution {
                beta0,
                beta,
                phi: (rss / nf).max(PHI_FLOOR),
                passes,
            })
        }
        Family::BinomialLogit => {
            let lam: Vec<f64> = penalties.iter().map(|p| p / nf).collect();
            let objective = |b0: f64, b: &DVector<f64>| {
                let eta = linear_predictor(x, b0, b);
                0.5 * deviance_at(family, y, &eta, 1.0) + penalties.dot(&b.abs())
            };
            let mut obj = objective(beta0, &beta);
            let mut passes = 0;
            for _ in 0..MAX_NEWTON_STEPS {
                let eta = linear_predictor(x, beta0, &beta);
                let (z, w) = family.pseudo_data(y, eta.as_slice(), 1.0);
                let cd = WeightedCd::new(x, &w, &lam);
                let (mut nb0, mut nb) = (beta0, beta.clone());
                let (p, _) = cd.solve(&z, &mut nb0, nb.as_mut_slice(), settings.cd_tol, settings.max_cd_iter);
                passes += p;
                let mut new_obj = objective(nb0, &nb);
                let mut halvings = 0;
                while new_obj > obj + 1e-12 * obj.abs() && halvings < 30 {
                    nb0 = 0.5 * (nb0 + beta0);
                    nb = (&nb + &beta) * 0.5;
                    new_obj = objective(nb0, &nb);
                    halvings += 1;
                }
                let mut change = (nb0 - beta0).abs() * (cd.wsum / nf).sqrt();
                for c in 0..ncols {
                    change = change.max((nb[c] - beta[c]).abs() * cd.xsq[c].sqrt());
                }
                beta0 = nb0;
                beta = nb;
                obj = new_obj;
                if change < settings.cd_tol || passes >= settings.max_cd_iter {
                    break;
                }
            }
            Ok(CdSolution {
                beta0,
                beta,
                phi: 1.0,
                passes,
            })
        }
    }
}

/// Fits the spike-and-slab additive model by EM with coordinate descent.
///
/// Starts from `β = 0`, `θ = 0.5` (intercept at the link of the response
/// mean) unless `warm_start` supplies a previous fit on the same frame.
/// Non-convergence is reported through `converged = false`, not an error.
pub fn fit_em_cd(
    frame: &ModelFrame,
    y: &[f64],
    family: Family,
    prior: &SsPrior,
    settings: &EmSettings,
    warm_start: Option<&FitState>,
) -> Result<FitState> {
    check_inputs(frame, y, family)?;
    prior.validate()?;
    settings.validate()?;
    if prior.kind != PriorKind::DeMixture {
        return Err(BhamError::InvalidPrior(
            "coordinate descent needs the double-exponential mixture prior".into(),
        ));
    }
    let (mut beta0, mut beta, mut theta, mut phi) = initial_state(frame, y, family);
    if let Some(w) = warm_start {
        if w.beta.len() != frame.n_cols() || w.theta.len() != frame.p() {
            return Err(BhamError::DimensionMismatch("warm start does not match frame".into()));
        }
        beta0 = w.beta0;
        beta.copy_from(&w.beta);
        theta.clone_from(&w.theta);
        phi = w.phi;
    }

    let x = &frame.design;
    let mut trace = vec![deviance_at(family, y, &linear_predictor(x, beta0, &beta), phi)];
    let mut penalties = DVector::zeros(frame.n_cols());
    let mut m_step_phi = phi;
    let mut iterations = 0;
    let mut done = false;

    while iterations < settings.max_em_iter {
        iterations += 1;
        let e = e_step(prior, &frame.blocks, beta.as_slice(), &theta);
        penalties = e.penalties(&frame.blocks, frame.n_cols());
        m_step_phi = phi;
        let sol = cd_solve(x, y, family, &penalties, Some((beta0, &beta)), phi, settings)?;
        beta0 = sol.beta0;
        beta = sol.beta;
        phi = sol.phi;
        theta = update_thetas(prior, &e);
        let d = deviance_at(family, y, &linear_predictor(x, beta0, &beta), phi);
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

    let fin = e_step(prior, &frame.blocks, beta.as_slice(), &theta);
    Ok(FitState {
        beta0,
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
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_rule() {
        assert!(converged(123.4, 123.4, 1e-12));
        assert!(!converged(100.0, 101.0, 1e-5));
        assert!(converged(100.0, 100.0005, 1e-5));
    }

    #[test]
    fn soft_threshold_one_dimensional() {
        // single standardized column: beta = S(x'y/n, lambda)
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);

        let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let y = [4.0, -2.0, 2.0, -4.0]; // x'y/n = 3, mean 0
        let n = 4.0;
        // per-observation lambda 1 with phi = 1
        let pen = DVector::from_element(1, n);
        let sol = cd_solve(&x, &y, Family::GaussianIdentity, &pen, None, 1.0, &EmSettings::default()).unwrap();
        assert!((sol.beta[0] - 2.0).abs() < 1e-12);
        assert!(sol.beta0.abs() < 1e-12);
    }

    #[test]
    fn zero_penalty_gives_least_squares() {
        let n = 30;
        let x = DMatrix::from_fn(n, 3, |i, j| ((i * (j + 2) * 13) % 17) as f64 / 7.0 - 1.0 + 0.1 * j as f64);
        let y: Vec<f64> = (0..n).map(|i| 0.5 + x[(i, 0)] - 2.0 * x[(i, 2)] + ((i * 7) % 5) as f64 * 0.1).collect();
        let settings = EmSettings { cd_tol: 1e-12, max_cd_iter: 100_000, ..Default::default() };
        let sol = cd_solve(&x, &y, Family::GaussianIdentity, &DVector::zeros(3), None, 1.0, &settings).unwrap();
        let xa = DMatrix::from_fn(n, 4, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let yv = DVector::from_column_slice(&y);
        let ols = (xa.transpose() * &xa).cholesky().unwrap().solve(&(xa.transpose() * yv));
        assert!((sol.beta0 - ols[0]).abs() < 1e-8);
        for j in 0..3 {
            assert!((sol.beta[j] - ols[j + 1]).abs() < 1e-8);
        }
    }

    #[test]
    fn dimension_errors() {
        let x = DMatrix::zeros(3, 2);
        let r = cd_solve(&x, &[1.0, 2.0], Family::GaussianIdentity, &DVector::zeros(2), None, 1.0, &EmSettings::default());
        assert!(matches!(r, Err(BhamError::DimensionMismatch(_))));
    }
}
