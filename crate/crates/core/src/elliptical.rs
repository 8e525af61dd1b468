//! Elliptical covariates `X = μ + R·A·U` and the scalar projection `U^(p)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use thiserror::Error;

use crate::radial::{RadialError, RadialSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EllipticalError {
    #[error("location vector has length {got}, expected {expected}")]
    LocationLength { expected: usize, got: usize },
    #[error("mixing matrix is {rows}x{cols}, expected {p}x{p}")]
    MixingShape { rows: usize, cols: usize, p: usize },
    #[error("mixing matrix is rank deficient (smallest/largest singular value {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error(transparent)]
    Radial(#[from] RadialError),
}

/// Linear map `A` applied to the uniform direction.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixing {
    Identity,
    Matrix(DMatrix<f64>),
}

/// Relative singular-value floor for an explicit mixing matrix.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalSpec {
    p: usize,
    mu: Vec<f64>,
    mix: Mixing,
    radial: RadialSpec,
}

impl EllipticalSpec {
    pub fn new(p: usize, mu: Vec<f64>, mix: Mixing, radial: RadialSpec) -> Result<Self, EllipticalError> {
        if p == 0 {
            return Err(EllipticalError::ZeroDimension);
        }
        if mu.len() != p {
            return Err(EllipticalError::LocationLength { expected: p, got: mu.len() });
        }
        if let Mixing::Matrix(a) = &mix {
            if a.nrows() != p || a.ncols() != p {
                return Err(EllipticalError::MixingShape { rows: a.nrows(), cols: a.ncols(), p });
            }
            let sv = a.singular_values();
            let max = sv.max();
            let min = sv.min();
            if max.is_nan() || max <= 0.0 || min <= RANK_TOLERANCE * max {
                return Err(EllipticalError::RankDeficient { ratio: if max > 0.0 { min / max } else { 0.0 } });
            }
        }
        Ok(EllipticalSpec { p, mu, mix, radial })
    }

    /// Centred, spherical case `E_p(0, I_p, F_R)`.
    pub fn spherical(p: usize, radial: RadialSpec) -> Result<Self, EllipticalError> {
        Self::new(p, vec![0.0; p], Mixing::Identity, radial)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn mix(&self) -> &Mixing {
        &self.mix
    }

    pub fn radial(&self) -> &RadialSpec {
        &self.radial
    }
}

/// Gaussian `p×p` matrix shifted by `(‖A‖₂/10000)·I` to keep it invertible.
pub fn random_full_rank_mixing<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm2 = a.singular_values().max();
    for i in 0..p {
        a[(i, i)] += norm2 / 10_000.0;
    }
    a
}

/// Uniform point on the unit sphere in `R^p` (normalised Gaussian vector).
pub fn sample_sphere<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<f64> {
    assert!(p >= 1, "sphere dimension must be positive");
    loop {
        let g: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// First coordinate of a uniform point on `S^{p-1}`, in constant time.
pub fn sphere_first_coordinate<R: Rng + ?Sized>(p: usize, rng: &mut R) -> f64 {
    assert!(p >= 1, "sphere dimension must be positive");
    let rest = (p > 1).then(|| ChiSquared::new((p - 1) as f64).expect("positive degrees of freedom"));
    loop {
        let first: f64 = rng.sample(StandardNormal);
        let ss = first * first + rest.as_ref().map_or(0.0, |c| rng.sample(c));
        if ss > 0.0 {
            return first / ss.sqrt();
        }
    }
}

/// `n` i.i.d. rows `μ + R_i·A·U_i`, returned as an `n×p` matrix.
pub fn sample_elliptical<R: Rng + ?Sized>(spec: &EllipticalSpec, n: usize, rng: &mut R) -> DMatrix<f64> {
    let p = spec.p;
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let r = spec.radial.sample(rng);
        let u = sample_sphere(p, rng);
        match &spec.mix {
            Mixing::Identity => {
                for j in 0..p {
                    x[(i, j)] = spec.mu[j] + r * u[j];
                }
            }
            Mixing::Matrix(a) => {
                let au = a * DVector::from_vec(u);
                for j in 0..p {
                    x[(i, j)] = spec.mu[j] + r * au[j];
                }
            }
        }
    }
    x
}

/// One draw of `U^(p) = R·S₁`, a coordinate of `E_p(0, I_p, F_R)`.
pub fn sample_projection<R: Rng + ?Sized>(radial: &RadialSpec, p: usize, rng: &mut R) -> f64 {
    let r = radial.sample(rng);
    r * sphere_first_coordinate(p, rng)
}

/// `E S₁^k` for the first coordinate of a uniform point on `S^{p-1}`.
pub fn sphere_coordinate_moment(p: usize, k: u32) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut m = 1.0;
    for i in 0..k / 2 {
        m *= (2 * i + 1) as f64 / (p as f64 + 2.0 * i as f64);
    }
    m
}

/// `m_{p,k} = E R^k · E S₁^k`.
pub fn projection_moment(radial: &RadialSpec, p: usize, k: u32) -> Result<f64, RadialError> {
    assert!(k >= 1, "moment order must be positive");
    let r = radial.moment(k)?;
    if k % 2 == 1 {
        return Ok(0.0);
    }
    Ok(r * sphere_coordinate_moment(p, k))
}

/// Heuristic reading of the Carleman series `Σ m_{2k}^{-1/(2k)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarlemanVerdict {
    /// Terms decay no faster than `1/k` over the tail window.
    DivergesLikely,
    /// Terms shrink geometrically (successive ratio below 0.9) over the tail window.
    ConvergesLikely,
    Inconclusive,
}

impl CarlemanVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            CarlemanVerdict::DivergesLikely => "diverges-likely",
            CarlemanVerdict::ConvergesLikely => "converges-likely",
            CarlemanVerdict::Inconclusive => "inconclusive",
        }
    }
}

/// Moments of `U^(p)` with Carleman partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMoments {
    pub p: usize,
    /// `m_{p,1}, …, m_{p,2K}`.
    pub moments: Vec<f64>,
    /// `Σ_{k≤j} m_{2k}^{-1/(2k)}` for `j = 1..K`.
    pub carleman_partial_sums: Vec<f64>,
    pub verdict: CarlemanVerdict,
}

const CARLEMAN_WINDOW: usize = 5;
const GEOMETRIC_RATIO: f64 = 0.9;

/// Partial sums and verdict from the even moments `m_2, m_4, …, m_{2K}`.
pub fn carleman_from_even_moments(even: &[f64]) -> (Vec<f64>, CarlemanVerdict) {
    let terms: Vec<f64> = even
        .iter()
        .enumerate()
        .map(|(i, &m)| m.powf(-1.0 / (2.0 * (i + 1) as f64)))
        .collect();
    let mut acc = 0.0;
    let sums = terms
        .iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    (sums, carleman_verdict(&terms))
}

fn carleman_verdict(terms: &[f64]) -> CarlemanVerdict {
    if terms.len() < CARLEMAN_WINDOW {
        return CarlemanVerdict::Inconclusive;
    }
    let start = terms.len() - CARLEMAN_WINDOW;
    let pairs: Vec<(usize, f64, f64)> = (start..terms.len() - 1).map(|i| (i + 1, terms[i], terms[i + 1])).collect();
    if pairs.iter().all(|&(_, a, b)| b < GEOMETRIC_RATIO * a) {
        return CarlemanVerdict::ConvergesLikely;
    }
    // k·t_k nondecreasing means the terms fall off no faster than 1/k
    if pairs.iter().all(|&(k, a, b)| (k + 1) as f64 * b >= k as f64 * a) {
        return CarlemanVerdict::DivergesLikely;
    }
    CarlemanVerdict::Inconclusive
}

/// Closed-form moments of `U^(p)` up to order `2K` and the Carleman diagnostic.
pub fn carleman_partial_sums(radial: &RadialSpec, p: usize, max_order: usize) -> Result<ProjectionMoments, RadialError> {
    assert!(max_order >= 1, "need at least one even moment");
    let moments = (1..=2 * max_order as u32)
        .map(|k| projection_moment(radial, p, k))
        .collect::<Result<Vec<_>, _>>()?;
    let even: Vec<f64> = moments.iter().skip(1).step_by(2).copied().collect();
    let (carleman_partial_sums, verdict) = carleman_from_even_moments(&even);
    Ok(ProjectionMoments { p, moments, carleman_partial_sums, verdict })
}
