//! Eigen-reparameterization of each smooth and assembly of the model frame.
//!
//! For a penalty `S = U D Uᵀ` (eigenvalues ascending) the basis `X U` splits
//! into null-space ("linear") columns and range-space ("nonlinear") columns;
//! the nonlinear columns are divided by `sqrt(d_k)` so the penalty on their
//! coefficients becomes the identity.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::basis::{build_basis, BasisExpansion, BasisMeta, SmoothSpec};
use crate::data::Dataset;
use crate::error::{BhamError, Result};
use crate::linalg::sym_eigen_ascending;

/// Relative threshold below which an eigenvalue counts as zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;

/// The fitted, data-independent part of a reparameterized term: enough to
/// rebuild its columns on any data.
#[derive(Debug, Clone, PartialEq)]
pub struct TermTransform {
    pub meta: BasisMeta,
    /// K x K orthonormal eigenvectors, columns in ascending eigenvalue order.
    pub u: DMatrix<f64>,
    /// Ascending eigenvalues; null-space entries clipped to zero.
    pub eigenvalues: Vec<f64>,
    /// Number of null-space (linear) columns.
    pub n_linear: usize,
}

impl TermTransform {
    pub fn variable_name(&self) -> &str {
        &self.meta.spec.variable_name
    }

    pub fn num_columns(&self) -> usize {
        self.u.ncols()
    }

    pub fn n_nonlinear(&self) -> usize {
        self.num_columns() - self.n_linear
    }

    /// Maps a basis design `X` to `[X U⁰ : X U* D^{-1/2}]`.
    pub fn apply(&self, design: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = design * &self.u;
        for k in self.n_linear..self.num_columns() {
            let s = 1.0 / self.eigenvalues[k].sqrt();
            out.column_mut(k).scale_mut(s);
        }
        out
    }

    /// Reparameterized columns evaluated at new predictor values.
    pub fn columns_at(&self, x_new: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.apply(&self.meta.evaluate(x_new)?))
    }

    /// Coefficients on the original (centered B-spline) basis that produce
    /// the same fitted function as `coef` on the reparameterized columns.
    pub fn to_basis_coefficients(&self, coef: &[f64]) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            coef.len(),
            coef.iter().enumerate().map(|(k, c)| {
                if k < self.n_linear {
                    *c
                } else {
                    c / self.eigenvalues[k].sqrt()
                }
            }),
        );
        &self.u * scaled
    }

    /// Inverse of [`Self::to_basis_coefficients`].
    pub fn from_basis_coefficients(&self, basis_coef: &DVector<f64>) -> DVector<f64> {
        let mut b = self.u.transpose() * basis_coef;
        for k in self.n_linear..self.num_columns() {
            b[k] *= self.eigenvalues[k].sqrt();
        }
        b
    }
}

/// A reparameterized term together with its training columns.
#[derive(Debug, Clone)]
pub struct ReparamBasis {
    pub transform: TermTransform,
    /// n x d0 null-space columns.
    pub x0: DMatrix<f64>,
    /// n x (K - d0) scaled range-space columns.
    pub xstar: DMatrix<f64>,
}

impl ReparamBasis {
    pub fn variable_name(&self) -> &str {
        self.transform.variable_name()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.transform.u
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.transform.eigenvalues
    }

    pub fn nrows(&self) -> usize {
        self.x0.nrows().max(self.xstar.nrows())
    }
}

pub fn reparameterize(expansion: &BasisExpansion) -> Result<ReparamBasis> {
    let s = &expansion.penalty;
    let k = s.nrows();
    if s.ncols() != k || expansion.design.ncols() != k {
        return Err(BhamError::DimensionMismatch(format!(
            "penalty {}x{} for a design with {} columns",
            k,
            s.ncols(),
            expansion.design.ncols()
        )));
    }
    let scale = s.amax();
    let asym = (s - s.transpose()).amax();
    if scale > 0.0 && asym > SYMMETRY_TOL * scale {
        return Err(BhamError::AsymmetricPenalty(asym / scale));
    }
    let (mut values, u) = sym_eigen_ascending(s);
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max = values.last().copied().unwrap_or(0.0);
    if let Some(&bad) = values.iter().find(|&&d| d < -ZERO_EIGEN_TOL * max_abs) {
        return Err(BhamError::NegativeEigenvalueBeyondTolerance { value: bad, max });
    }
    let threshold = ZERO_EIGEN_TOL * max.max(0.0);
    let mut n_linear = 0;
    for d in values.iter_mut() {
        if *d < threshold || *d <= 0.0 {
            *d = 0.0;
            n_linear += 1;
        }
    }
    let transform = TermTransform {
        meta: expansion.meta.clone(),
        u,
        eigenvalues: values,
        n_linear,
    };
    let full = transform.apply(&expansion.design);
    let x0 = full.columns(0, n_linear).into_owned();
    let xstar = full.columns(n_linear, k - n_linear).into_owned();
    Ok(ReparamBasis {
        transform,
        x0,
        xstar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ColumnRole {
    Linear(usize),
    Nonlinear(usize),
}

/// Column bookkeeping for one variable inside the full design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermBlock {
    pub name: String,
    pub start: usize,
    pub n_linear: usize,
    pub n_nonlinear: usize,
}

impl TermBlock {
    pub fn len(&self) -> usize {
        self.n_linear + self.n_nonlinear
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear_range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.n_linear
    }

    pub fn nonlinear_range(&self) -> std::ops::Range<usize> {
        self.start + self.n_linear..self.start + self.len()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len()
    }
}

/// The assembled design for the additive predictor (intercept implicit).
#[derive(Debug, Clone)]
pub struct ModelFrame {
    pub terms: Vec<TermTransform>,
    pub blocks: Vec<TermBlock>,
    /// n x Σ K_j design, blocks in variable order.
    pub design: DMatrix<f64>,
    pub column_index: BTreeMap<(String, ColumnRole), usize>,
}

impl ModelFrame {
    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_cols(&self) -> usize {
        self.design.ncols()
    }

    /// Builds bases on `data`, reparameterizes, and assembles in spec order.
    pub fn from_data(data: &Dataset, specs: &[SmoothSpec]) -> Result<Self> {
        let mut bases = Vec::with_capacity(specs.len());
        for spec in specs {
            let x = data.column(&spec.variable_name)?;
            bases.push(reparameterize(&build_basis(x, spec)?)?);
        }
        assemble_frame(bases)
    }

    /// Rebuilds the frame on new data with the stored knots, offsets and
    /// eigenvectors; nothing is re-estimated.
    pub fn predict_frame(&self, data: &Dataset) -> Result<Self> {
        frame_from_terms(&self.terms, data)
    }
}

pub(crate) fn frame_from_terms(terms: &[TermTransform], data: &Dataset) -> Result<ModelFrame> {
    let mut bases = Vec::with_capacity(terms.len());
    for t in terms {
        let x = data.column(t.variable_name())?;
        let full = t.columns_at(x)?;
        let k = t.num_columns();
        bases.push(ReparamBasis {
            transform: t.clone(),
            x0: full.columns(0, t.n_linear).into_owned(),
            xstar: full.columns(t.n_linear, k - t.n_linear).into_owned(),
        });
    }
    assemble_frame(bases)
}

pub fn assemble_frame(bases: Vec<ReparamBasis>) -> Result<ModelFrame> {
    let first = bases.first().ok_or(BhamError::EmptyFrame)?;
    let n = first.nrows();
    let mut total = 0;
    for b in &bases {
        if b.x0.nrows() != n || b.xstar.nrows() != n {
            return Err(BhamError::RowCountMismatch {
                expected: n,
                found: if b.x0.nrows() != n {
                    b.x0.nrows()
                } else {
                    b.xstar.nrows()
                },
            });
        }
        total += b.transform.num_columns();
    }
    let mut design = DMatrix::zeros(n, total);
    let mut blocks = Vec::with_capacity(bases.len());
    let mut column_index = BTreeMap::new();
    let mut start = 0;
    for b in &bases {
        let name = b.variable_name().to_string();
        let (d0, dn) = (b.x0.ncols(), b.xstar.ncols());
        design.columns_mut(start, d0).copy_from(&b.x0);
        design.columns_mut(start + d0, dn).copy_from(&b.xstar);
        for j in 0..d0 {
            column_index.insert((name.clone(), ColumnRole::Linear(j)), start + j);
        }
        for j in 0..dn {
            column_index.insert((name.clone(), ColumnRole::Nonlinear(j)), start + d0 + j);
        }
        blocks.push(TermBlock {
            name,
            start,
            n_linear: d0,
            n_nonlinear: dn,
        });
        start += d0 + dn;
    }
    Ok(ModelFrame {
        terms: bases.into_iter().map(|b| b.transform).collect(),
        blocks,
        design,
        column_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{SmoothKind, SmoothSpec};

    fn expansion(design: DMatrix<f64>, penalty: DMatrix<f64>) -> BasisExpansion {
        let k = design.ncols();
        BasisExpansion {
            meta: BasisMeta {
                spec: SmoothSpec {
                    variable_name: "v".into(),
                    kind: SmoothKind::CubicSpline,
                    num_bases: k,
                    knot_rule: Default::default(),
                },
                knots: vec![],
                center_offsets: vec![0.0; k],
            },
            design,
            penalty,
            penalty_scale: 1.0,
            warnings: vec![],
        }
    }

    fn toy_data(n: usize, p: usize) -> Dataset {
        let names = (0..p).map(|j| format!("x{j}")).collect();
        let cols = (0..p)
            .map(|j| {
                (0..n)
                    .map(|i| ((i * (j + 3) * 37) % 101) as f64 / 25.0 - 2.0 + 0.01 * i as f64)
                    .collect()
            })
            .collect();
        Dataset::new(names, cols).unwrap()
    }

    #[test]
    fn parametric_term_is_all_linear() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let b = reparameterize(&build_basis(&x, &SmoothSpec::linear("x")).unwrap()).unwrap();
        assert_eq!(b.transform.n_linear, 1);
        assert_eq!(b.xstar.ncols(), 0);
        assert_eq!(b.x0.column(0).as_slice(), &[-2.5, -1.5, 0.5, 3.5]);
    }

    #[test]
    fn diagonal_penalty_splits_and_scales() {
        let pen = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0]));
        let b = reparameterize(&expansion(DMatrix::identity(2, 2), pen)).unwrap();
        assert_eq!(b.transform.n_linear, 1);
        assert_eq!(b.x0.column(0).as_slice(), &[1.0, 0.0]);
        let s = 1.0 / 2f64.sqrt();
        assert!((b.xstar[(0, 0)]).abs() < 1e-15);
        assert!((b.xstar[(1, 0)] - s).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_penalties() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(
            reparameterize(&expansion(DMatrix::identity(2, 2), asym)),
            Err(BhamError::AsymmetricPenalty(_))
        ));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            reparameterize(&expansion(DMatrix::identity(2, 2), neg)),
            Err(BhamError::NegativeEigenvalueBeyondTolerance { .. })
        ));
    }

    #[test]
    fn frame_layout() {
        let data = toy_data(80, 4);
        let specs: Vec<_> = (0..4).map(|j| SmoothSpec::cubic(format!("x{j}"), 10)).collect();
        let frame = ModelFrame::from_data(&data, &specs).unwrap();
        assert_eq!(frame.n_cols(), 40);
        assert_eq!(frame.column_index.len(), 40);
        let mut seen: Vec<usize> = frame.column_index.values().copied().collect();
        seen.sort();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
        for (j, b) in frame.blocks.iter().enumerate() {
            assert_eq!(b.start, 10 * j);
            assert_eq!(b.n_linear, 1);
            assert_eq!(frame.column_index[&(b.name.clone(), ColumnRole::Linear(0))], b.start);
        }
        assert!(matches!(assemble_frame(vec![]), Err(BhamError::EmptyFrame)));
    }

    #[test]
    fn predict_frame_identity_and_single_row() {
        let data = toy_data(60, 2);
        let specs = [SmoothSpec::cubic("x0", 6), SmoothSpec::linear("x1")];
        let frame = ModelFrame::from_data(&data, &specs).unwrap();
        let again = frame.predict_frame(&data).unwrap();
        assert!((again.design - &frame.design).amax() < 1e-10);
        let one = frame.predict_frame(&data.select_rows(&[7])).unwrap();
        assert_eq!(one.design.shape(), (1, 7));
        assert!((one.design.row(0) - frame.design.row(7)).amax() < 1e-10);

        let renamed = Dataset::new(vec!["q".into()], vec![vec![0.0; 3]]).unwrap();
        assert!(matches!(
            frame.predict_frame(&renamed),
            Err(BhamError::MissingVariable(_))
        ));
    }

    #[test]
    fn row_mismatch_is_rejected() {
        let a = reparameterize(&build_basis(&[1.0, 2.0, 3.0], &SmoothSpec::linear("a")).unwrap()).unwrap();
        let b = reparameterize(&build_basis(&[1.0, 2.0], &SmoothSpec::linear("b")).unwrap()).unwrap();
        assert!(matches!(
            assemble_frame(vec![a, b]),
            Err(BhamError::RowCountMismatch { expected: 3, found: 2 })
        ));
    }
}
