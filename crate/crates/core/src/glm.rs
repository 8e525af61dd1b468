//! Binary-response GLM: links, coefficient construction and data generation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::elliptical::{random_full_rank_mixing, sample_elliptical, sample_projection, EllipticalError, EllipticalSpec, Mixing};
use crate::radial::{RadialError, RadialSpec};
use crate::seeding::stream;
use crate::stats::normal_cdf;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("invalid model parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("sample size and dimension must be positive (n = {n}, p = {p})")]
    EmptyShape { n: usize, p: usize },
    #[error(transparent)]
    Elliptical(#[from] EllipticalError),
    #[error(transparent)]
    Radial(#[from] RadialError),
}

/// Inverse link `σ`, mapping the linear predictor to `P(y = +1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkFn {
    Logit,
    Probit,
    Cloglog,
}

impl LinkFn {
    pub const ALL: [LinkFn; 3] = [LinkFn::Logit, LinkFn::Probit, LinkFn::Cloglog];

    /// `σ(t)`.
    pub fn eval(self, t: f64) -> f64 {
        match self {
            LinkFn::Logit => {
                if t >= 0.0 {
                    1.0 / (1.0 + (-t).exp())
                } else {
                    let e = t.exp();
                    e / (1.0 + e)
                }
            }
            LinkFn::Probit => normal_cdf(t),
            LinkFn::Cloglog => -(-t.exp()).exp_m1(),
        }
    }

    /// `1 − σ(t)`, evaluated without cancellation.
    pub fn complement(self, t: f64) -> f64 {
        match self {
            LinkFn::Logit => LinkFn::Logit.eval(-t),
            LinkFn::Probit => normal_cdf(-t),
            LinkFn::Cloglog => (-t.exp()).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LinkFn::Logit => "logit",
            LinkFn::Probit => "probit",
            LinkFn::Cloglog => "cloglog",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Some(LinkFn::Logit),
            "probit" => Some(LinkFn::Probit),
            "cloglog" => Some(LinkFn::Cloglog),
            _ => None,
        }
    }
}

/// Limits `α0` (radial scale), `β0` (intercept) and `γ0` (signal strength).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl ModelParams {
    pub fn new(alpha0: f64, beta0: f64, gamma0: f64) -> Result<Self, GlmError> {
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(GlmError::InvalidParameter { name: "alpha0", value: alpha0 });
        }
        if !beta0.is_finite() {
            return Err(GlmError::InvalidParameter { name: "beta0", value: beta0 });
        }
        if !(gamma0.is_finite() && gamma0 >= 0.0) {
            return Err(GlmError::InvalidParameter { name: "gamma0", value: gamma0 });
        }
        Ok(ModelParams { alpha0, beta0, gamma0 })
    }

    /// `p₊(x) = σ(β0 + (γ0/α0)·x)`.
    pub fn p_plus(&self, link: LinkFn, x: f64) -> f64 {
        link.eval(self.beta0 + self.gamma0 / self.alpha0 * x)
    }

    /// `p₋(x) = 1 − p₊(x)`.
    pub fn p_minus(&self, link: LinkFn, x: f64) -> f64 {
        link.complement(self.beta0 + self.gamma0 / self.alpha0 * x)
    }
}

/// Simulated design with ±1 responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n×p` covariates.
    pub x: DMatrix<f64>,
    /// Responses in `{−1, +1}`.
    pub y: Vec<f64>,
    pub params: ModelParams,
    pub link: LinkFn,
    pub seed: u64,
    /// Coefficients used to draw the responses.
    pub beta: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Linear predictor `β0 + x_iᵀβ` for every row.
    pub fn linear_predictor(&self) -> Vec<f64> {
        let eta = &self.x * nalgebra::DVector::from_column_slice(&self.beta);
        eta.iter().map(|e| self.params.beta0 + e).collect()
    }
}

/// Mixing applied to the covariates of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum MixSpec {
    Identity,
    /// Fresh Gaussian matrix per dataset, shifted to be full rank.
    RandomFullRank,
    Fixed(DMatrix<f64>),
}

/// `β = (W/‖W‖₂ + 1/p)·γ0/α0` with `W ~ N(0, I_p)`.
pub fn make_beta<R: Rng + ?Sized>(p: usize, params: &ModelParams, rng: &mut R) -> Vec<f64> {
    assert!(p >= 1, "dimension must be positive");
    let scale = params.gamma0 / params.alpha0;
    let w: Vec<f64> = loop {
        let w: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        if w.iter().any(|v| *v != 0.0) {
            break w;
        }
    };
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let shift = 1.0 / p as f64;
    w.into_iter().map(|v| (v / norm + shift) * scale).collect()
}

/// Everything needed to simulate one dataset apart from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub n: usize,
    pub p: usize,
    pub params: ModelParams,
    pub link: LinkFn,
    pub radial: RadialSpec,
    pub mix: MixSpec,
}

/// Draw a labelled dataset: covariates from the elliptical law, then
/// `y_i = +1` with probability `σ(β0 + x_iᵀβ)`.
///
/// With a mixing matrix `A` the coefficients are rescaled so that `‖Aᵀβ‖`
/// equals the norm drawn for `A = I`; the signal variance `Var(xᵀβ)` is then
/// the same for every mixing.
///
/// The stream is `stream(seed, [])`; draw order is coefficients, mixing matrix
/// (if random), covariates, labels. Equal seeds reproduce the dataset exactly.
pub fn generate_dataset(design: &Design, seed: u64) -> Result<Dataset, GlmError> {
    let Design { n, p, params, link, radial, mix } = design;
    let (n, p, link) = (*n, *p, *link);
    if n == 0 || p == 0 {
        return Err(GlmError::EmptyShape { n, p });
    }
    let mut rng = stream(seed, &[]);
    let rng = &mut rng;
    let mut beta = make_beta(p, params, rng);
    let mixing = match mix {
        MixSpec::Identity => Mixing::Identity,
        MixSpec::RandomFullRank => Mixing::Matrix(random_full_rank_mixing(p, rng)),
        MixSpec::Fixed(a) => Mixing::Matrix(a.clone()),
    };
    if let Mixing::Matrix(a) = &mixing {
        let b = nalgebra::DVector::from_column_slice(&beta);
        let mixed = a.tr_mul(&b).norm();
        if mixed > 0.0 {
            let scale = b.norm() / mixed;
            beta.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let spec = EllipticalSpec::new(p, vec![0.0; p], mixing, *radial)?;
    let x = sample_elliptical(&spec, n, rng);
    let eta = &x * nalgebra::DVector::from_column_slice(&beta);
    let y = eta
        .iter()
        .map(|e| {
            let prob = link.eval(params.beta0 + e);
            if rng.random::<f64>() < prob {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(Dataset { x, y, params: *params, link, seed, beta })
}

/// `n` draws `(Y, X) = (V, V·U)` from the projected law: `U` is a coordinate of
/// `E_p(0, I_p, F_R)` and `P(V = 1 | U) = σ(β0 + γ0·U/α0)`.
pub fn project_samples<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let u = sample_projection(radial, p, rng);
            let v = if rng.random::<f64>() < params.p_plus(link, u) { 1.0 } else { -1.0 };
            (v, v * u)
        })
        .collect()
}
