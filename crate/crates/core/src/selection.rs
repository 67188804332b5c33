//! Bi-level selection from inclusion probabilities, and fitted-curve export.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::em_cd::FitState;
use crate::error::Result;
use crate::reparam::{TermBlock, TermTransform};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Ordered so that `Null < Linear < Nonlinear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Null,
    Linear,
    Nonlinear,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Null => "null",
            Category::Linear => "linear",
            Category::Nonlinear => "nonlinear",
        }
    }
}

/// A selected nonlinear part always brings its linear part along.
pub fn classify(p_lin: f64, p_nonlin: f64, threshold: f64) -> Category {
    if p_nonlin > threshold {
        Category::Nonlinear
    } else if p_lin > threshold {
        Category::Linear
    } else {
        Category::Null
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSelection {
    pub variable: String,
    pub p_lin: f64,
    pub p_nonlin: f64,
    pub category: Category,
    /// Coefficients of this variable that are exactly zero.
    pub zero_coefficients: usize,
    pub num_coefficients: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub threshold: f64,
    pub variables: Vec<VariableSelection>,
}

impl SelectionReport {
    pub fn from_fit(blocks: &[TermBlock], fit: &FitState, threshold: f64) -> Self {
        let variables = blocks
            .iter()
            .enumerate()
            .map(|(j, b)| VariableSelection {
                variable: b.name.clone(),
                p_lin: fit.p_lin[j],
                p_nonlin: fit.p_nonlin[j],
                category: classify(fit.p_lin[j], fit.p_nonlin[j], threshold),
                zero_coefficients: fit.beta.rows(b.start, b.len()).iter().filter(|v| **v == 0.0).count(),
                num_coefficients: b.len(),
            })
            .collect();
        Self { threshold, variables }
    }

    pub fn category(&self, variable: &str) -> Option<Category> {
        self.variables.iter().find(|v| v.variable == variable).map(|v| v.category)
    }

    pub fn selected(&self) -> impl Iterator<Item = &VariableSelection> {
        self.variables.iter().filter(|v| v.category != Category::Null)
    }
}

/// A fitted smooth on a grid, with ±2 SE bands when a covariance is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub variable: String,
    pub x: Vec<f64>,
    pub fit: Vec<f64>,
    pub se: Option<Vec<f64>>,
}

impl Curve {
    pub fn lower(&self) -> Option<Vec<f64>> {
        self.se
            .as_ref()
            .map(|se| self.fit.iter().zip(se).map(|(f, s)| f - 2.0 * s).collect())
    }

    pub fn upper(&self) -> Option<Vec<f64>> {
        self.se
            .as_ref()
            .map(|se| self.fit.iter().zip(se).map(|(f, s)| f + 2.0 * s).collect())
    }
}

/// `points` equally spaced values from `lo` to `hi` inclusive.
pub fn grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Evaluates `B_j(x) = C(x) β_j` on `x`. `covariance` is the block of the
/// coefficient covariance for this term's columns.
pub fn curve(
    term: &TermTransform,
    coef: &[f64],
    covariance: Option<&DMatrix<f64>>,
    x: &[f64],
) -> Result<Curve> {
    let cols = term.columns_at(x)?;
    let fit = &cols * DVector::from_column_slice(coef);
    let se = covariance.map(|v| {
        let cv = &cols * v;
        (0..x.len())
            .map(|i| cv.row(i).dot(&cols.row(i)).max(0.0).sqrt())
            .collect()
    });
    Ok(Curve {
        variable: term.variable_name().to_string(),
        x: x.to_vec(),
        fit: fit.iter().copied().collect(),
        se,
    })
}
