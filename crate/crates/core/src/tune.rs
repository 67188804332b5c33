//! Spike-scale path and k-fold cross-validation.
//!
//! Every fold rebuilds bases, centering and eigenvectors from its training
//! rows alone, fits the whole s0 path in ascending order (EM-CD warm-starts
//! each point from the previous one) and scores the held-out rows. Folds run
//! in parallel; results are gathered in fold order so the table is
//! deterministic.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SmoothSpec;
use crate::data::Dataset;
use crate::em_cd::{EmSettings, FitState};
use crate::error::{BhamError, Result};
use crate::family::Family;
use crate::metrics;
use crate::model::{run_solver, Solver};
use crate::prior::SsPrior;
use crate::reparam::ModelFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Held-out `-2 log-likelihood`, using the training dispersion.
    Deviance,
    Mse,
    Auc,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Deviance => "deviance",
            Criterion::Mse => "mse",
            Criterion::Auc => "auc",
        }
    }

    pub fn larger_is_better(self) -> bool {
        matches!(self, Criterion::Auc)
    }

    /// Value recorded for a cell whose fit or evaluation failed.
    pub fn worst(self) -> f64 {
        if self.larger_is_better() {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn evaluate(self, family: Family, y: &[f64], mu: &[f64], phi: f64) -> Result<f64> {
        match self {
            Criterion::Deviance => family.deviance(y, mu, phi),
            Criterion::Mse => metrics::mse(y, mu),
            Criterion::Auc => metrics::auc(y, mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    /// Strictly increasing spike scales, all below `s1`.
    pub s0_values: Vec<f64>,
    pub s1: f64,
    pub folds: usize,
    pub seed: u64,
    pub criterion: Criterion,
}

pub const DEFAULT_S0_MIN: f64 = 0.001;
pub const DEFAULT_S0_MAX: f64 = 0.5;
pub const DEFAULT_S0_COUNT: usize = 20;

impl TuneGrid {
    /// 20 log-spaced values on [0.001, 0.5], `s1 = 1`, 5 folds, deviance.
    pub fn default_grid(_family: Family) -> Self {
        Self {
            s0_values: log_spaced(DEFAULT_S0_MIN, DEFAULT_S0_MAX, DEFAULT_S0_COUNT),
            s1: 1.0,
            folds: 5,
            seed: 1,
            criterion: Criterion::Deviance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.s0_values;
        if v.is_empty() {
            return Err(BhamError::InvalidGrid("no s0 values".into()));
        }
        if !(v[0] > 0.0) || !v.iter().all(|x| x.is_finite()) {
            return Err(BhamError::InvalidGrid("s0 values must be positive and finite".into()));
        }
        if v.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BhamError::InvalidGrid("s0 values must be strictly increasing".into()));
        }
        if !(v[v.len() - 1] < self.s1) || !self.s1.is_finite() {
            return Err(BhamError::InvalidGrid("s0 values must lie below s1".into()));
        }
        if self.folds < 2 {
            return Err(BhamError::InvalidGrid("at least two folds are needed".into()));
        }
        Ok(())
    }
}

/// `count` values geometrically spaced from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    // pin the endpoints exactly
    out[0] = lo;
    out[count - 1] = hi;
    out
}

/// Fold label (0..k) for each of `n` rows: a seeded shuffle dealt round-robin,
/// so fold sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(BhamError::BadK { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Best mean criterion; exact ties go to the larger s0.
    MinMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub s0: f64,
    pub fold: usize,
    pub value: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub criterion: Criterion,
    pub s0_values: Vec<f64>,
    pub folds: usize,
    /// Ordered by s0, then fold.
    pub cells: Vec<CvCell>,
    pub mean: Vec<f64>,
    /// Standard error of the mean across folds.
    pub se: Vec<f64>,
    pub selected_index: usize,
    pub selected_s0: f64,
    pub selection_rule: SelectionRule,
}

impl CvResult {
    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.failed)
    }

    pub fn fold_values(&self, s0_index: usize) -> Vec<f64> {
        self.cells[s0_index * self.folds..(s0_index + 1) * self.folds]
            .iter()
            .map(|c| c.value)
            .collect()
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Index of the best mean; among exact ties the larger s0 wins.
pub fn select_index(means: &[f64], criterion: Criterion) -> usize {
    let mut best = 0;
    for (i, &m) in means.iter().enumerate().skip(1) {
        let b = means[best];
        let better_or_tied = if criterion.larger_is_better() { m >= b } else { m <= b };
        if better_or_tied || b.is_nan() {
            best = i;
        }
    }
    best
}

/// Cross-validated s0 path. `prior` supplies `s1`, the Beta hyperparameters
/// and the prior kind; its `s0` is replaced along the grid, and `grid.s1`
/// overrides its slab scale.
#[allow(clippy::too_many_arguments)]
pub fn cv_path(
    data: &Dataset,
    specs: &[SmoothSpec],
    y: &[f64],
    family: Family,
    prior: &SsPrior,
    grid: &TuneGrid,
    solver: Solver,
    settings: &EmSettings,
) -> Result<CvResult> {
    grid.validate()?;
    if data.n_rows() != y.len() {
        return Err(BhamError::RowCountMismatch { expected: data.n_rows(), found: y.len() });
    }
    family.validate_response(y)?;
    let base = SsPrior { s1: grid.s1, ..*prior };
    let priors: Vec<SsPrior> = grid
        .s0_values
        .iter()
        .map(|&s0| base.with_s0(s0))
        .collect::<Result<_>>()?;
    let assignment = kfold_split(y.len(), grid.folds, grid.seed)?;

    let per_fold: Vec<Vec<(f64, bool)>> = (0..grid.folds)
        .into_par_iter()
        .map(|f| fold_path(data, specs, y, family, &priors, grid.criterion, solver, settings, &assignment, f))
        .collect();

    let k = grid.folds;
    let mut cells = Vec::with_capacity(k * priors.len());
    let mut mean = Vec::with_capacity(priors.len());
    let mut se = Vec::with_capacity(priors.len());
    for (i, &s0) in grid.s0_values.iter().enumerate() {
        let vals: Vec<f64> = (0..k).map(|f| per_fold[f][i].0).collect();
        for (f, fold) in per_fold.iter().enumerate() {
            cells.push(CvCell { s0, fold: f, value: fold[i].0, failed: fold[i].1 });
        }
        let (m, s) = mean_and_se(&vals);
        mean.push(m);
        se.push(s);
    }
    let selected_index = select_index(&mean, grid.criterion);
    Ok(CvResult {
        criterion: grid.criterion,
        s0_values: grid.s0_values.clone(),
        folds: k,
        cells,
        mean,
        se,
        selected_index,
        selected_s0: grid.s0_values[selected_index],
        selection_rule: SelectionRule::MinMean,
    })
}

#[allow(clippy::too_many_arguments)]
fn fold_path(
    data: &Dataset,
    specs: &[SmoothSpec],
    y: &[f64],
    family: Family,
    priors: &[SsPrior],
    criterion: Criterion,
    solver: Solver,
    settings: &EmSettings,
    assignment: &[usize],
    fold: usize,
) -> Vec<(f64, bool)> {
    let failed = vec![(criterion.worst(), true); priors.len()];
    let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == fold).collect();
    let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let Ok(frame) = ModelFrame::from_data(&data.select_rows(&train), specs) else {
        return failed;
    };
    let Ok(test_frame) = frame.predict_frame(&data.select_rows(&test)) else {
        return failed;
    };

    let mut warm: Option<FitState> = None;
    priors
        .iter()
        .map(|prior| {
            let fitted = match run_solver(solver, &frame, &y_train, family, prior, settings, warm.as_ref()) {
                Ok(f) => f,
                Err(_) => return (criterion.worst(), true),
            };
            let eta = fitted.state.linear_predictor(&test_frame.design);
            let mu = family.linkinv(eta.as_slice());
            let score = criterion.evaluate(family, &y_test, &mu, fitted.state.phi);
            warm = Some(fitted.state);
            match score {
                Ok(v) if v.is_finite() => (v, false),
                _ => (criterion.worst(), true),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = TuneGrid::default_grid(Family::GaussianIdentity);
        assert_eq!(g.s0_values.len(), 20);
        assert_eq!(g.s0_values[0], 0.001);
        assert_eq!(g.s0_values[19], 0.5);
        let r = g.s0_values[1] / g.s0_values[0];
        for w in g.s0_values.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
        assert!(g.s0_values.iter().all(|&v| v < g.s1));
        g.validate().unwrap();
    }

    #[test]
    fn grid_validation() {
        let mut g = TuneGrid::default_grid(Family::BinomialLogit);
        g.s0_values = vec![0.1, 0.1];
        assert!(g.validate().is_err());
        g.s0_values = vec![0.1, 1.5];
        assert!(g.validate().is_err());
        g.s0_values = vec![0.0, 0.2];
        assert!(g.validate().is_err());
    }

    #[test]
    fn kfold_examples() {
        let sizes = |a: &[usize], k: usize| {
            let mut s = vec![0; k];
            a.iter().for_each(|&f| s[f] += 1);
            s
        };
        assert_eq!(sizes(&kfold_split(10, 5, 3).unwrap(), 5), vec![2; 5]);
        let mut s7 = sizes(&kfold_split(7, 5, 3).unwrap(), 5);
        s7.sort();
        assert_eq!(s7, vec![1, 1, 1, 2, 2]);
        assert_eq!(kfold_split(50, 4, 9).unwrap(), kfold_split(50, 4, 9).unwrap());
        assert_eq!(kfold_split(3, 5, 1), Err(BhamError::BadK { n: 3, k: 5 }));
        assert_eq!(kfold_split(3, 1, 1), Err(BhamError::BadK { n: 3, k: 1 }));
    }

    #[test]
    fn selection_prefers_larger_s0_on_ties() {
        assert_eq!(select_index(&[3.0, 1.0, 1.0, 2.0], Criterion::Deviance), 2);
        assert_eq!(select_index(&[0.7, 0.9, 0.9, 0.8], Criterion::Auc), 2);
        assert_eq!(select_index(&[5.0, 4.0, 6.0], Criterion::Mse), 1);
    }

    #[test]
    fn mean_se_arithmetic() {
        let (m, s) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
