//! Per-variable spline bases and their second-derivative smoothing penalties.
//!
//! A cubic smooth with `K` columns is built from `K + 1` clamped cubic
//! B-splines. The constant function (the all-ones coefficient vector, by the
//! partition of unity) is projected out with a Householder contrast, and the
//! resulting columns are centered on their training means. The penalty is the
//! exact Gram matrix of second derivatives mapped through the same contrast,
//! so its null space is the one-dimensional linear trend.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BhamError, Result};

const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    CubicSpline,
    ParametricLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    #[default]
    Quantile,
    Uniform,
}

/// How one predictor enters the additive predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub variable_name: String,
    pub kind: SmoothKind,
    pub num_bases: usize,
    #[serde(default)]
    pub knot_rule: KnotRule,
}

impl SmoothSpec {
    pub const DEFAULT_BASES: usize = 10;

    pub fn cubic(name: impl Into<String>, num_bases: usize) -> Self {
        Self {
            variable_name: name.into(),
            kind: SmoothKind::CubicSpline,
            num_bases,
            knot_rule: KnotRule::Quantile,
        }
    }

    pub fn linear(name: impl Into<String>) -> Self {
        Self {
            variable_name: name.into(),
            kind: SmoothKind::ParametricLinear,
            num_bases: 1,
            knot_rule: KnotRule::Quantile,
        }
    }

    pub fn with_knot_rule(mut self, rule: KnotRule) -> Self {
        self.knot_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| BhamError::InvalidSmoothSpec {
            variable: self.variable_name.clone(),
            reason: reason.to_string(),
        };
        match self.kind {
            SmoothKind::CubicSpline if self.num_bases < 3 => {
                Err(bad("cubic splines need at least 3 bases"))
            }
            SmoothKind::ParametricLinear if self.num_bases != 1 => {
                Err(bad("parametric linear terms have exactly 1 basis"))
            }
            _ => Ok(()),
        }
    }

    /// Length of the full (boundary-repeated) knot vector for this spec.
    pub fn knot_count(&self) -> usize {
        match self.kind {
            SmoothKind::CubicSpline => self.num_bases + 1 + ORDER,
            SmoothKind::ParametricLinear => 0,
        }
    }
}

/// Everything needed to re-evaluate a basis on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMeta {
    pub spec: SmoothSpec,
    pub knots: Vec<f64>,
    pub center_offsets: Vec<f64>,
}

impl BasisMeta {
    pub fn num_bases(&self) -> usize {
        self.spec.num_bases
    }

    /// Evaluates the stored basis at `x_new`, reusing the training knots and
    /// centering offsets. Cubic smooths continue linearly past the boundary
    /// knots.
    pub fn evaluate(&self, x_new: &[f64]) -> Result<DMatrix<f64>> {
        check_finite(&self.spec.variable_name, x_new)?;
        let k = self.num_bases();
        let mut out = DMatrix::zeros(x_new.len(), k);
        match self.spec.kind {
            SmoothKind::ParametricLinear => {
                for (i, &x) in x_new.iter().enumerate() {
                    out[(i, 0)] = x - self.center_offsets[0];
                }
            }
            SmoothKind::CubicSpline => {
                let spline = BSpline::new(self.knots.clone());
                let contrast = sum_to_zero_contrast(spline.num_basis());
                let raw = spline.design(x_new);
                out = raw * contrast;
                for (j, mut col) in out.column_iter_mut().enumerate() {
                    col.add_scalar_mut(-self.center_offsets[j]);
                }
            }
        }
        Ok(out)
    }
}

/// A basis evaluated on training data together with its penalty.
#[derive(Debug, Clone)]
pub struct BasisExpansion {
    pub meta: BasisMeta,
    /// n x K centered basis evaluations.
    pub design: DMatrix<f64>,
    /// K x K symmetric positive semi-definite smoothing penalty, normalized
    /// so that its 1-norm equals the squared infinity norm of `design`.
    pub penalty: DMatrix<f64>,
    /// Factor applied to the integrated squared second-derivative penalty.
    pub penalty_scale: f64,
    /// Notes about adjustments made while building (e.g. collapsed knots).
    pub warnings: Vec<String>,
}

impl BasisExpansion {
    pub fn knots(&self) -> &[f64] {
        &self.meta.knots
    }

    pub fn center_offsets(&self) -> &[f64] {
        &self.meta.center_offsets
    }

    pub fn evaluate(&self, x_new: &[f64]) -> Result<DMatrix<f64>> {
        self.meta.evaluate(x_new)
    }
}

fn check_finite(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BhamError::NonFiniteInput(format!("variable `{name}`")))
    }
}

/// Builds the centered basis and smoothing penalty for one predictor.
pub fn build_basis(x: &[f64], spec: &SmoothSpec) -> Result<BasisExpansion> {
    spec.validate()?;
    check_finite(&spec.variable_name, x)?;
    let n = x.len();
    match spec.kind {
        SmoothKind::ParametricLinear => {
            if n < 2 {
                return Err(BhamError::TooFewObservations {
                    variable: spec.variable_name.clone(),
                    found: n,
                    required: 2,
                });
            }
            let mean = x.iter().sum::<f64>() / n as f64;
            let design = DMatrix::from_iterator(n, 1, x.iter().map(|v| v - mean));
            Ok(BasisExpansion {
                meta: BasisMeta {
                    spec: spec.clone(),
                    knots: Vec::new(),
                    center_offsets: vec![mean],
                },
                design,
                penalty: DMatrix::zeros(1, 1),
                penalty_scale: 1.0,
                warnings: Vec::new(),
            })
        }
        SmoothKind::CubicSpline => build_cubic(x, spec),
    }
}

fn build_cubic(x: &[f64], spec: &SmoothSpec) -> Result<BasisExpansion> {
    let requested = spec.num_bases;
    let n = x.len();
    if n < requested + 1 {
        return Err(BhamError::TooFewObservations {
            variable: spec.variable_name.clone(),
            found: n,
            required: requested + 1,
        });
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < requested {
        return Err(BhamError::TooFewDistinctValues {
            variable: spec.variable_name.clone(),
            found: distinct.len(),
            required: requested,
        });
    }

    let lo = sorted[0];
    let hi = sorted[n - 1];
    // K columns come from K + 1 B-splines, i.e. K - 3 interior knots.
    let n_interior = requested - 3;
    let mut interior: Vec<f64> = (1..=n_interior)
        .map(|i| {
            let prob = i as f64 / (n_interior + 1) as f64;
            match spec.knot_rule {
                KnotRule::Quantile => quantile_sorted(&sorted, prob),
                KnotRule::Uniform => lo + prob * (hi - lo),
            }
        })
        .collect();
    let tol = 1e-12 * (hi - lo).abs().max(1.0);
    interior.dedup_by(|b, a| (*b - *a).abs() <= tol);
    interior.retain(|&k| k - lo > tol && hi - k > tol);

    let mut warnings = Vec::new();
    let num_bases = n_interior.min(interior.len()) + 3;
    if num_bases != requested {
        warnings.push(format!(
            "variable `{}`: tied quantile knots collapsed, bases reduced from {} to {}",
            spec.variable_name, requested, num_bases
        ));
    }

    let mut knots = Vec::with_capacity(interior.len() + 2 * ORDER);
    knots.extend(std::iter::repeat_n(lo, ORDER));
    knots.extend(interior);
    knots.extend(std::iter::repeat_n(hi, ORDER));

    let spline = BSpline::new(knots.clone());
    let contrast = sum_to_zero_contrast(spline.num_basis());
    let mut design = spline.design(x) * &contrast;
    let mut offsets = Vec::with_capacity(num_bases);
    for mut col in design.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
        offsets.push(mean);
    }
    let gram = spline.second_derivative_gram();
    let mut penalty = contrast.transpose() * gram * &contrast;
    symmetrize(&mut penalty);
    // rescale so ||S||_1 = ||X||_inf^2, putting every smooth's penalty on
    // the scale of its own design whatever the units of x
    let x_inf = design
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s_one = penalty
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let penalty_scale = if s_one > 0.0 { x_inf * x_inf / s_one } else { 1.0 };
    penalty *= penalty_scale;

    let mut actual = spec.clone();
    actual.num_bases = num_bases;
    Ok(BasisExpansion {
        meta: BasisMeta {
            spec: actual,
            knots,
            center_offsets: offsets,
        },
        design,
        penalty,
        penalty_scale,
        warnings,
    })
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Orthonormal `m x (m-1)` basis of the complement of the ones vector, taken
/// from the Householder reflection that maps `1` onto `-sqrt(m) e_1`.
pub fn sum_to_zero_contrast(m: usize) -> DMatrix<f64> {
    let root = (m as f64).sqrt();
    let mut v = DVector::from_element(m, 1.0);
    v[0] += root;
    let vtv = v.norm_squared();
    DMatrix::from_fn(m, m - 1, |i, j| {
        let col = j + 1;
        let delta = if i == col { 1.0 } else { 0.0 };
        delta - 2.0 * v[i] * v[col] / vtv
    })
}

/// Clamped cubic B-spline basis over a full knot vector.
#[derive(Debug, Clone)]
pub struct BSpline {
    knots: Vec<f64>,
}

impl BSpline {
    pub fn new(knots: Vec<f64>) -> Self {
        debug_assert!(knots.len() >= 2 * ORDER);
        Self { knots }
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - ORDER
    }

    fn lower(&self) -> f64 {
        self.knots[DEGREE]
    }

    fn upper(&self) -> f64 {
        self.knots[self.num_basis()]
    }

    /// Index `i` of the knot span with `knots[i] <= x < knots[i + 1]`; the
    /// upper boundary belongs to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let last = self.num_basis() - 1;
        if x >= self.knots[last + 1] {
            return last;
        }
        if x <= self.knots[DEGREE] {
            return DEGREE;
        }
        // upper_bound over knots[DEGREE..=last+1]
        let slice = &self.knots[DEGREE..=last + 1];
        let pos = slice.partition_point(|&k| k <= x);
        DEGREE + pos - 1
    }

    /// Nonzero basis values and first two derivatives at `x` inside the knot
    /// range. Returns the span index and `ders[d][r]` for basis `span-3+r`.
    fn ders(&self, x: f64) -> (usize, [[f64; ORDER]; 3]) {
        let t = &self.knots;
        let span = self.span(x);
        let mut ndu = [[0.0; ORDER]; ORDER];
        let mut left = [0.0; ORDER];
        let mut right = [0.0; ORDER];
        ndu[0][0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = [[0.0; ORDER]; 3];
        for (j, d) in ders[0].iter_mut().enumerate() {
            *d = ndu[j][DEGREE];
        }
        let mut a = [[0.0; ORDER]; 2];
        for r in 0..=DEGREE {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=2usize {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = DEGREE - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize) - 1 <= pk as isize {
                    k - 1
                } else {
                    DEGREE - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = DEGREE as f64;
        for row in ders.iter_mut().skip(1) {
            for v in row.iter_mut() {
                *v *= factor;
            }
            factor *= (DEGREE - 1) as f64;
        }
        (span, ders)
    }

    /// Writes all basis values at `x` into `row`, extrapolating linearly
    /// outside `[lower, upper]`.
    pub fn eval_into(&self, x: f64, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        let (lo, hi) = (self.lower(), self.upper());
        let (anchor, slope_mult) = if x < lo {
            (lo, x - lo)
        } else if x > hi {
            (hi, x - hi)
        } else {
            (x, 0.0)
        };
        let (span, d) = self.ders(anchor);
        for r in 0..ORDER {
            row[span - DEGREE + r] = d[0][r] + slope_mult * d[1][r];
        }
    }

    /// Second derivatives of all basis functions at `x` (inside the range).
    pub fn second_derivatives(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis()];
        let (span, d) = self.ders(x);
        for r in 0..ORDER {
            out[span - DEGREE + r] = d[2][r];
        }
        out
    }

    pub fn design(&self, x: &[f64]) -> DMatrix<f64> {
        let m = self.num_basis();
        let mut out = DMatrix::zeros(x.len(), m);
        let mut row = vec![0.0; m];
        for (i, &xi) in x.iter().enumerate() {
            self.eval_into(xi, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        out
    }

    /// `G[i][k] = ∫ B_i''(t) B_k''(t) dt` over the knot range. Second
    /// derivatives are linear on each span, so two-point Gauss-Legendre is
    /// exact per span.
    pub fn second_derivative_gram(&self) -> DMatrix<f64> {
        let m = self.num_basis();
        let mut gram = DMatrix::zeros(m, m);
        let offset = 0.5 / 3f64.sqrt();
        for s in DEGREE..m {
            let (a, b) = (self.knots[s], self.knots[s + 1]);
            let h = b - a;
            if h <= 0.0 {
                continue;
            }
            let mid = 0.5 * (a + b);
            for node in [mid - offset * h, mid + offset * h] {
                let (span, d) = self.ders(node);
                for r in 0..ORDER {
                    for q in 0..ORDER {
                        gram[(span - DEGREE + r, span - DEGREE + q)] += 0.5 * h * d[2][r] * d[2][q];
                    }
                }
            }
        }
        gram
    }
}
