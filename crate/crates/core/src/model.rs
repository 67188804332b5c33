//! A fitted model bundled with everything needed to predict on new data,
//! and its JSON file format.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisMeta, SmoothSpec};
use crate::data::Dataset;
use crate::em_cd::{fit_em_cd, EmSettings, FitState};
use crate::em_iwls::fit_em_iwls;
use crate::error::{BhamError, Result};
use crate::family::Family;
use crate::prior::SsPrior;
use crate::reparam::{frame_from_terms, ModelFrame, TermBlock, TermTransform};
use crate::selection::{curve, Curve, SelectionReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    EmCd,
    EmIwls,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::EmCd => "em_cd",
            Solver::EmIwls => "em_iwls",
        }
    }
}

/// Solver output common to both algorithms.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted {
    pub state: FitState,
    /// Covariance of (β₀, β); EM-IWLS only.
    pub covariance: Option<DMatrix<f64>>,
}

/// Runs `solver` on a frame. `warm_start` is honored by EM-CD only.
pub fn run_solver(
    solver: Solver,
    frame: &ModelFrame,
    y: &[f64],
    family: Family,
    prior: &SsPrior,
    settings: &EmSettings,
    warm_start: Option<&FitState>,
) -> Result<Fitted> {
    match solver {
        Solver::EmCd => Ok(Fitted {
            state: fit_em_cd(frame, y, family, prior, settings, warm_start)?,
            covariance: None,
        }),
        Solver::EmIwls => {
            let s = fit_em_iwls(frame, y, family, prior, settings)?;
            Ok(Fitted {
                state: s.fit,
                covariance: Some(s.covariance),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BhamModel {
    pub family: Family,
    pub solver: Solver,
    pub prior: SsPrior,
    pub terms: Vec<TermTransform>,
    pub blocks: Vec<TermBlock>,
    pub fit: FitState,
    pub covariance: Option<DMatrix<f64>>,
    /// Spike scale chosen by cross-validation, if tuning was run.
    pub selected_s0: Option<f64>,
}

impl BhamModel {
    /// Builds the frame from `specs` on `data` and fits it.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        data: &Dataset,
        specs: &[SmoothSpec],
        y: &[f64],
        family: Family,
        prior: &SsPrior,
        solver: Solver,
        settings: &EmSettings,
    ) -> Result<Self> {
        let frame = ModelFrame::from_data(data, specs)?;
        Self::fit_frame(frame, y, family, prior, solver, settings)
    }

    pub fn fit_frame(
        frame: ModelFrame,
        y: &[f64],
        family: Family,
        prior: &SsPrior,
        solver: Solver,
        settings: &EmSettings,
    ) -> Result<Self> {
        let fitted = run_solver(solver, &frame, y, family, prior, settings, None)?;
        Ok(Self {
            family,
            solver,
            prior: *prior,
            terms: frame.terms,
            blocks: frame.blocks,
            fit: fitted.state,
            covariance: fitted.covariance,
            selected_s0: None,
        })
    }

    pub fn variable_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.variable_name()).collect()
    }

    pub fn frame(&self, data: &Dataset) -> Result<ModelFrame> {
        frame_from_terms(&self.terms, data)
    }

    pub fn predict_eta(&self, data: &Dataset) -> Result<Vec<f64>> {
        let frame = self.frame(data)?;
        Ok(self.fit.linear_predictor(&frame.design).iter().copied().collect())
    }

    /// Predicted means (probabilities for binomial).
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.family.linkinv(&self.predict_eta(data)?))
    }

    pub fn selection(&self, threshold: f64) -> SelectionReport {
        SelectionReport::from_fit(&self.blocks, &self.fit, threshold)
    }

    /// Fitted smooth of term `j` on `x`, with standard errors when a
    /// covariance is available.
    pub fn curve(&self, j: usize, x: &[f64]) -> Result<Curve> {
        let b = &self.blocks[j];
        let coef: Vec<f64> = self.fit.beta.rows(b.start, b.len()).iter().copied().collect();
        // covariance rows/columns are offset by the intercept
        let cov = self
            .covariance
            .as_ref()
            .map(|c| c.view((b.start + 1, b.start + 1), (b.len(), b.len())).into_owned());
        curve(&self.terms[j], &coef, cov.as_ref(), x)
    }

    pub fn to_saved(&self) -> SavedModel {
        SavedModel {
            format_version: FORMAT_VERSION,
            family: self.family,
            solver: self.solver,
            prior: self.prior,
            selected_s0: self.selected_s0,
            terms: self
                .terms
                .iter()
                .map(|t| SavedTerm {
                    meta: t.meta.clone(),
                    n_linear: t.n_linear,
                    eigenvalues: t.eigenvalues.clone(),
                    u: SavedMatrix::from(&t.u),
                })
                .collect(),
            intercept: self.fit.beta0,
            coefficients: self.fit.beta.iter().copied().collect(),
            theta: self.fit.theta.clone(),
            p_lin: self.fit.p_lin.clone(),
            p_nonlin: self.fit.p_nonlin.clone(),
            phi: self.fit.phi,
            covariance: self.covariance.as_ref().map(SavedMatrix::from),
            diagnostics: Diagnostics {
                iterations: self.fit.iterations,
                converged: self.fit.converged,
                deviance_trace: self.fit.deviance_trace.clone(),
                penalties: self.fit.penalties.iter().copied().collect(),
                m_step_phi: self.fit.m_step_phi,
            },
        }
    }

    pub fn from_saved(saved: SavedModel) -> Result<Self> {
        if saved.format_version != FORMAT_VERSION {
            return Err(BhamError::ModelFormat(format!(
                "format version {} (expected {FORMAT_VERSION})",
                saved.format_version
            )));
        }
        let mut terms = Vec::with_capacity(saved.terms.len());
        let mut blocks = Vec::with_capacity(saved.terms.len());
        let mut start = 0;
        for t in saved.terms {
            let u = t.u.to_matrix()?;
            let k = u.ncols();
            if t.eigenvalues.len() != k || t.n_linear > k || u.nrows() != k {
                return Err(BhamError::ModelFormat(format!(
                    "inconsistent term `{}`",
                    t.meta.spec.variable_name
                )));
            }
            blocks.push(TermBlock {
                name: t.meta.spec.variable_name.clone(),
                start,
                n_linear: t.n_linear,
                n_nonlinear: k - t.n_linear,
            });
            start += k;
            terms.push(TermTransform {
                meta: t.meta,
                u,
                eigenvalues: t.eigenvalues,
                n_linear: t.n_linear,
            });
        }
        let p = terms.len();
        if saved.coefficients.len() != start
            || saved.theta.len() != p
            || saved.p_lin.len() != p
            || saved.p_nonlin.len() != p
            || saved.diagnostics.penalties.len() != start
        {
            return Err(BhamError::ModelFormat("coefficient lengths do not match the terms".into()));
        }
        let covariance = match saved.covariance {
            Some(c) => {
                let m = c.to_matrix()?;
                if m.nrows() != start + 1 || m.ncols() != start + 1 {
                    return Err(BhamError::ModelFormat("covariance has the wrong size".into()));
                }
                Some(m)
            }
            None => None,
        };
        Ok(Self {
            family: saved.family,
            solver: saved.solver,
            prior: saved.prior,
            terms,
            blocks,
            fit: FitState {
                beta0: saved.intercept,
                beta: DVector::from_vec(saved.coefficients),
                theta: saved.theta,
                p_lin: saved.p_lin,
                p_nonlin: saved.p_nonlin,
                phi: saved.phi,
                deviance_trace: saved.diagnostics.deviance_trace,
                iterations: saved.diagnostics.iterations,
                converged: saved.diagnostics.converged,
                penalties: DVector::from_vec(saved.diagnostics.penalties),
                m_step_phi: saved.diagnostics.m_step_phi,
            },
            covariance,
            selected_s0: saved.selected_s0,
        })
    }

    /// Pretty-printed JSON. Floats are written in shortest round-trip form,
    /// so save → load → save reproduces the same bytes.
    pub fn to_json(&self) -> Result<String> {
        let saved = self.to_saved();
        if !saved.all_finite() {
            return Err(BhamError::ModelFormat("model contains non-finite values".into()));
        }
        serde_json::to_string_pretty(&saved).map_err(|e| BhamError::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: SavedModel = serde_json::from_str(text).map_err(|e| BhamError::ModelFormat(e.to_string()))?;
        Self::from_saved(saved)
    }
}

/// Dense matrix stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for SavedMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl SavedMatrix {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(BhamError::ModelFormat("matrix data has the wrong length".into()));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedTerm {
    pub meta: BasisMeta,
    pub n_linear: usize,
    pub eigenvalues: Vec<f64>,
    pub u: SavedMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub converged: bool,
    pub deviance_trace: Vec<f64>,
    pub penalties: Vec<f64>,
    pub m_step_phi: f64,
}

/// On-disk model representation (`format_version` 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format_version: u32,
    pub family: Family,
    pub solver: Solver,
    pub prior: SsPrior,
    pub selected_s0: Option<f64>,
    pub terms: Vec<SavedTerm>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_lin: Vec<f64>,
    pub p_nonlin: Vec<f64>,
    pub phi: f64,
    pub covariance: Option<SavedMatrix>,
    pub diagnostics: Diagnostics,
}

impl SavedModel {
    fn all_finite(&self) -> bool {
        let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
        self.intercept.is_finite()
            && self.phi.is_finite()
            && fin(&self.coefficients)
            && fin(&self.theta)
            && fin(&self.p_lin)
            && fin(&self.p_nonlin)
            && fin(&self.diagnostics.deviance_trace)
            && self.covariance.as_ref().is_none_or(|c| fin(&c.data))
            && self
                .terms
                .iter()
                .all(|t| fin(&t.eigenvalues) && fin(&t.u.data) && fin(&t.meta.knots) && fin(&t.meta.center_offsets))
    }
}
