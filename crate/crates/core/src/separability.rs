//! Overlap / quasi-complete / complete separation of labelled points.
//!
//! Each observation contributes the signed row `y_i·(1, x_i)`, rescaled to unit
//! Euclidean norm so that the tolerances below are dimensionless. Two linear
//! programs over the box `[-1, 1]^(p+1)` classify the data:
//!
//! 1. maximise the total margin `Σ ŵ_iᵀc` subject to `ŵ_iᵀc ≥ 0`. An optimum
//!    at or below `zero_tol` means the origin is the only feasible direction,
//!    i.e. the points overlap and the MLE exists.
//! 2. otherwise maximise the smallest margin `m ≤ 1` subject to `ŵ_iᵀc ≥ m`.
//!    A positive optimum is a strict (complete) separator; zero means the best
//!    achievable direction leaves at least one point on the boundary.
//!
//! Rescaling a row by a positive factor does not change the sign of its
//! margin, so certificates apply unchanged to the raw `(1, x_i)` rows.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::glm::Dataset;
use crate::simplex::{solve_box_lp_with, BoxLp, LpError, LpSolution, SimplexOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeparationError {
    #[error("need at least one observation")]
    Empty,
    #[error("{rows} covariate rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(f64),
    #[error("non-finite covariate value")]
    NonFinite,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Tolerances of the two classification programs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpTolerance {
    /// Primal/dual feasibility tolerance handed to the simplex.
    pub feas_tol: f64,
    /// Optimum values at or below this count as zero.
    pub zero_tol: f64,
}

impl Default for LpTolerance {
    fn default() -> Self {
        LpTolerance { feas_tol: 1e-9, zero_tol: 1e-6 }
    }
}

impl LpTolerance {
    pub fn is_valid(&self) -> bool {
        self.feas_tol > 0.0 && self.feas_tol < self.zero_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeparationKind {
    Overlap,
    QuasiComplete,
    Complete,
}

impl SeparationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeparationKind::Overlap => "Overlap",
            SeparationKind::QuasiComplete => "QuasiComplete",
            SeparationKind::Complete => "Complete",
        }
    }
}

impl std::fmt::Display for SeparationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationStatus {
    pub kind: SeparationKind,
    /// `(intercept, slope…)` of a separating direction; absent on overlap.
    pub certificate: Option<Vec<f64>>,
    /// Optimum of the deciding program (total margin, or minimum margin).
    pub lp_objective: f64,
}

impl SeparationStatus {
    pub fn mle_exists(&self) -> bool {
        self.kind == SeparationKind::Overlap
    }
}

fn signed_unit_rows(x: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, usize), SeparationError> {
    let n = x.nrows();
    if n == 0 {
        return Err(SeparationError::Empty);
    }
    if y.len() != n {
        return Err(SeparationError::LengthMismatch { rows: n, labels: y.len() });
    }
    let d = x.ncols() + 1;
    let mut rows = Vec::with_capacity(n * d);
    for (i, &yi) in y.iter().enumerate() {
        if yi != 1.0 && yi != -1.0 {
            return Err(SeparationError::BadLabel(yi));
        }
        let start = rows.len();
        rows.push(yi);
        for j in 0..x.ncols() {
            let v = x[(i, j)];
            if !v.is_finite() {
                return Err(SeparationError::NonFinite);
            }
            rows.push(yi * v);
        }
        let norm = rows[start..].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut rows[start..] {
            *v /= norm;
        }
    }
    Ok((rows, d))
}

fn lp_options(tol: &LpTolerance) -> SimplexOptions {
    SimplexOptions { feas_tol: tol.feas_tol, pivot_tol: tol.feas_tol, ..SimplexOptions::default() }
}

fn total_margin(w: &[f64], d: usize, n: usize, opts: &SimplexOptions) -> Result<LpSolution, SeparationError> {
    let mut total = vec![0.0; d];
    for row in w.chunks(d) {
        for (t, v) in total.iter_mut().zip(row) {
            *t += v;
        }
    }
    let lp = BoxLp {
        objective: total,
        a: w.iter().map(|v| -v).collect(),
        rhs: vec![0.0; n],
        lower: vec![-1.0; d],
        upper: vec![1.0; d],
    };
    Ok(solve_box_lp_with(&lp, opts)?)
}

/// Existence only: solves the total-margin program and skips the split
/// between quasi-complete and complete separation.
pub fn mle_exists_xy(x: &DMatrix<f64>, y: &[f64], tol: &LpTolerance) -> Result<bool, SeparationError> {
    let (w, d) = signed_unit_rows(x, y)?;
    Ok(total_margin(&w, d, y.len(), &lp_options(tol))?.objective <= tol.zero_tol)
}

/// Classify raw covariates `x` (n×p) with ±1 labels `y`.
pub fn detect_separation_xy(x: &DMatrix<f64>, y: &[f64], tol: &LpTolerance) -> Result<SeparationStatus, SeparationError> {
    let (w, d) = signed_unit_rows(x, y)?;
    let n = y.len();
    let opts = lp_options(tol);
    let first = total_margin(&w, d, n, &opts)?;
    if first.objective <= tol.zero_tol {
        return Ok(SeparationStatus { kind: SeparationKind::Overlap, certificate: None, lp_objective: first.objective });
    }

    // variables (c, m): −ŵ_iᵀc + m ≤ 0
    let mut a = Vec::with_capacity(n * (d + 1));
    for row in w.chunks(d) {
        a.extend(row.iter().map(|v| -v));
        a.push(1.0);
    }
    let mut objective = vec![0.0; d + 1];
    objective[d] = 1.0;
    let mut lower = vec![-1.0; d + 1];
    lower[d] = 0.0;
    let stage2 = BoxLp { objective, a, rhs: vec![0.0; n], lower, upper: vec![1.0; d + 1] };
    let second = solve_box_lp_with(&stage2, &opts)?;
    if second.objective > tol.zero_tol {
        Ok(SeparationStatus {
            kind: SeparationKind::Complete,
            certificate: Some(second.x[..d].to_vec()),
            lp_objective: second.objective,
        })
    } else {
        Ok(SeparationStatus {
            kind: SeparationKind::QuasiComplete,
            certificate: Some(first.x),
            lp_objective: first.objective,
        })
    }
}

pub fn detect_separation(data: &Dataset, tol: &LpTolerance) -> Result<SeparationStatus, SeparationError> {
    detect_separation_xy(&data.x, &data.y, tol)
}

pub fn mle_exists(data: &Dataset, tol: &LpTolerance) -> Result<bool, SeparationError> {
    mle_exists_xy(&data.x, &data.y, tol)
}

/// Which side of the threshold carries the positive labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    PositiveAbove,
    PositiveBelow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateSeparation {
    pub separable: bool,
    /// No point lies on the threshold.
    pub strict: bool,
    /// Absent when not separable or when only one label is present.
    pub threshold: Option<f64>,
    pub orientation: Option<Orientation>,
}

/// Separation by intercept and a single covariate, in one pass over the data.
///
/// With both labels present the points are separable iff every negative lies
/// at or below every positive (or the mirror image), and not all points share
/// one covariate value.
pub fn univariate_separation(x: &[f64], y: &[f64]) -> UnivariateSeparation {
    assert_eq!(x.len(), y.len(), "covariate and label lengths differ");
    let mut max_neg = f64::NEG_INFINITY;
    let mut min_neg = f64::INFINITY;
    let mut max_pos = f64::NEG_INFINITY;
    let mut min_pos = f64::INFINITY;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (&xi, &yi) in x.iter().zip(y) {
        if yi > 0.0 {
            max_pos = max_pos.max(xi);
            min_pos = min_pos.min(xi);
        } else {
            max_neg = max_neg.max(xi);
            min_neg = min_neg.min(xi);
        }
        lo = lo.min(xi);
        hi = hi.max(xi);
    }
    let none = UnivariateSeparation { separable: false, strict: false, threshold: None, orientation: None };
    if x.is_empty() {
        return none;
    }
    if max_pos == f64::NEG_INFINITY || max_neg == f64::NEG_INFINITY {
        return UnivariateSeparation { separable: true, strict: true, threshold: None, orientation: None };
    }
    if lo == hi {
        return none;
    }
    let found = |low_max: f64, high_min: f64, orientation| {
        (low_max <= high_min).then_some(UnivariateSeparation {
            separable: true,
            strict: low_max < high_min,
            threshold: Some(0.5 * (low_max + high_min)),
            orientation: Some(orientation),
        })
    };
    found(max_neg, min_pos, Orientation::PositiveAbove)
        .or_else(|| found(max_pos, min_neg, Orientation::PositiveBelow))
        .unwrap_or(none)
}
