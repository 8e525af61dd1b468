//! Sample-average approximation of the existence threshold
//!
//! ```text
//! h = min over (λ0, λ1) of E (λ0·Y + λ1·X − Z)₊²
//! ```
//!
//! where `(Y, X)` follows the projected law of the model and `Z ~ N(0, 1)`
//! independently. Each replicate draws a fresh sample of size `n`, minimises
//! the empirical objective with a damped Newton method, and the replicate
//! minima are averaged.
//!
//! The empirical objective is convex and continuously differentiable but only
//! piecewise quadratic, so Newton directions use the generalized Hessian (the
//! sum over currently active residuals) plus a tiny ridge, and an Armijo line
//! search keeps every step a descent step.

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::glm::{project_samples, LinkFn, ModelParams};
use crate::radial::{calibrate_radial, RadialError, RadialFamily};
use crate::seeding::{derive_seed, stream};
use crate::stats::{compensated_sum, mean_sd};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HmleError {
    #[error("sample vectors have different lengths ({y}, {x}, {z})")]
    LengthMismatch { y: usize, x: usize, z: usize },
    #[error("labels must be +1 or -1, found {0}")]
    BadLabel(f64),
    #[error("sample size and replicate count must be positive")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error(transparent)]
    Radial(#[from] RadialError),
}

/// Paired draws `(y_i, x_i)` from the projected law and independent `z_i ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaaSample {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl SaaSample {
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: Vec<f64>) -> Result<Self, HmleError> {
        if y.len() != x.len() || y.len() != z.len() {
            return Err(HmleError::LengthMismatch { y: y.len(), x: x.len(), z: z.len() });
        }
        if y.is_empty() {
            return Err(HmleError::Empty);
        }
        if let Some(&bad) = y.iter().find(|v| v.abs() != 1.0) {
            return Err(HmleError::BadLabel(bad));
        }
        Ok(SaaSample { y, x, z })
    }

    /// Draw `n` triples at dimension `p`.
    pub fn draw<R: Rng + ?Sized>(
        n: usize,
        p: usize,
        params: &ModelParams,
        link: LinkFn,
        radial: &crate::radial::RadialSpec,
        rng: &mut R,
    ) -> Self {
        let pairs = project_samples(n, p, params, link, radial, rng);
        let z = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let (y, x) = pairs.into_iter().unzip();
        SaaSample { y, x, z }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// True when every `(y_i, x_i)` lies in one closed half-plane through the
    /// origin, i.e. some direction `d ≠ 0` has `d·(y_i, x_i) ≤ 0` for all `i`.
    pub fn has_recession_direction(&self) -> bool {
        let mut angles: Vec<f64> = self.y.iter().zip(&self.x).map(|(y, x)| x.atan2(*y)).collect();
        angles.sort_by(f64::total_cmp);
        let tau = std::f64::consts::TAU;
        let mut widest = angles[0] + tau - angles[angles.len() - 1];
        for w in angles.windows(2) {
            widest = widest.max(w[1] - w[0]);
        }
        widest >= std::f64::consts::PI - 1e-12
    }
}

/// Objective value, gradient and generalized Hessian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

pub fn empirical_objective(lambda: [f64; 2], sample: &SaaSample) -> ObjectiveEval {
    let n = sample.len() as f64;
    let (mut v, mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&y, &x), &z) in sample.y.iter().zip(&sample.x).zip(&sample.z) {
        let r = lambda[0] * y + lambda[1] * x - z;
        if r > 0.0 {
            v += r * r;
            g0 += r * y;
            g1 += r * x;
            h00 += y * y;
            h01 += y * x;
            h11 += x * x;
        }
    }
    ObjectiveEval {
        value: v / n,
        gradient: [2.0 * g0 / n, 2.0 * g1 / n],
        hessian: [[2.0 * h00 / n, 2.0 * h01 / n], [2.0 * h01 / n, 2.0 * h11 / n]],
    }
}

fn objective_value(lambda: [f64; 2], sample: &SaaSample) -> f64 {
    let mut v = 0.0;
    for ((&y, &x), &z) in sample.y.iter().zip(&sample.x).zip(&sample.z) {
        let r = lambda[0] * y + lambda[1] * x - z;
        if r > 0.0 {
            v += r * r;
        }
    }
    v / sample.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when the gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
    pub armijo_slope: f64,
    pub backtrack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iter: 500, ridge: 1e-10, armijo_slope: 1e-4, backtrack: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    /// The objective reached zero; `unbounded_direction` reports whether the
    /// zero set is unbounded.
    ZeroObjective { unbounded_direction: bool },
    IterationLimit,
    /// The line search could not make progress.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaaSolution {
    pub value: f64,
    pub minimizer: [f64; 2],
    pub iterations: usize,
    pub status: SolveStatus,
}

impl SaaSolution {
    pub fn is_clean(&self) -> bool {
        matches!(self.status, SolveStatus::Converged | SolveStatus::ZeroObjective { .. })
    }
}

const RECESSION_RUN: usize = 30;
const RECESSION_NORM: f64 = 1e6;
const RECESSION_VALUE: f64 = 1e-12;

/// Damped Newton minimisation of the empirical objective from the origin.
pub fn minimize_saa(sample: &SaaSample, opts: &SolverOptions) -> SaaSolution {
    let mut lambda = [0.0, 0.0];
    let mut eval = empirical_objective(lambda, sample);
    let mut tiny_run = 0;
    for iter in 0..opts.max_iter {
        if eval.value == 0.0 {
            let status = SolveStatus::ZeroObjective { unbounded_direction: sample.has_recession_direction() };
            return SaaSolution { value: 0.0, minimizer: lambda, iterations: iter, status };
        }
        let [g0, g1] = eval.gradient;
        if g0.hypot(g1) <= opts.tol {
            if eval.value < RECESSION_VALUE {
                let status = SolveStatus::ZeroObjective { unbounded_direction: sample.has_recession_direction() };
                return SaaSolution { value: 0.0, minimizer: lambda, iterations: iter, status };
            }
            return SaaSolution { value: eval.value, minimizer: lambda, iterations: iter, status: SolveStatus::Converged };
        }
        let a = eval.hessian[0][0] + opts.ridge;
        let b = eval.hessian[0][1];
        let c = eval.hessian[1][1] + opts.ridge;
        let det = a * c - b * b;
        let mut dir = [-(c * g0 - b * g1) / det, -(a * g1 - b * g0) / det];
        let mut slope = dir[0] * g0 + dir[1] * g1;
        if !slope.is_finite() || slope >= 0.0 {
            dir = [-g0, -g1];
            slope = -(g0 * g0 + g1 * g1);
        }

        let mut t = 1.0;
        let mut next = None;
        for _ in 0..200 {
            let trial = [lambda[0] + t * dir[0], lambda[1] + t * dir[1]];
            let v = objective_value(trial, sample);
            if v <= eval.value + opts.armijo_slope * t * slope {
                next = Some(trial);
                break;
            }
            t *= opts.backtrack;
        }
        let Some(trial) = next else {
            return SaaSolution { value: eval.value, minimizer: lambda, iterations: iter, status: SolveStatus::Stalled };
        };
        lambda = trial;
        eval = empirical_objective(lambda, sample);

        if eval.value < RECESSION_VALUE && lambda[0].hypot(lambda[1]) > RECESSION_NORM {
            tiny_run += 1;
            if tiny_run >= RECESSION_RUN {
                let status = SolveStatus::ZeroObjective { unbounded_direction: true };
                return SaaSolution { value: 0.0, minimizer: lambda, iterations: iter + 1, status };
            }
        } else {
            tiny_run = 0;
        }
    }
    SaaSolution { value: eval.value, minimizer: lambda, iterations: opts.max_iter, status: SolveStatus::IterationLimit }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmleEstimate {
    /// Mean of the replicate minima.
    pub value: f64,
    /// Mean of the replicate minimizers `(λ0, λ1)`.
    pub minimizer: [f64; 2],
    pub n: usize,
    pub replicates: usize,
    /// Standard deviation of the replicate minima.
    pub spread: f64,
    pub p_used: usize,
    /// Replicates that hit the iteration limit or stalled.
    pub unconverged: usize,
}

/// Settings for [`estimate_hmle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmleSettings {
    pub n: usize,
    pub replicates: usize,
    pub solver: SolverOptions,
}

impl Default for HmleSettings {
    fn default() -> Self {
        HmleSettings { n: 4000, replicates: 100, solver: SolverOptions::default() }
    }
}

/// Estimate the threshold at dimension `p` with the radial family calibrated
/// to `p`. Replicate `r` uses the stream `stream(seed, [r])`, so the result
/// does not depend on the number of worker threads.
pub fn estimate_hmle(
    params: &ModelParams,
    link: LinkFn,
    family: RadialFamily,
    p: usize,
    settings: &HmleSettings,
    seed: u64,
) -> Result<HmleEstimate, HmleError> {
    if p == 0 {
        return Err(HmleError::ZeroDimension);
    }
    if settings.n == 0 || settings.replicates == 0 {
        return Err(HmleError::Empty);
    }
    let radial = calibrate_radial(family, p, params.alpha0)?;
    let solutions: Vec<SaaSolution> = (0..settings.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, &[rep as u64]);
            let sample = SaaSample::draw(settings.n, p, params, link, &radial, &mut rng);
            minimize_saa(&sample, &settings.solver)
        })
        .collect();
    let unconverged = solutions.iter().filter(|s| !s.is_clean()).count();
    if unconverged > 0 {
        warn!("h_MLE at p = {p}: {unconverged} of {} replicates did not converge cleanly", settings.replicates);
    }
    let values: Vec<f64> = solutions.iter().map(|s| s.value).collect();
    let (value, spread) = mean_sd(&values);
    let count = solutions.len() as f64;
    let minimizer = [
        compensated_sum(solutions.iter().map(|s| s.minimizer[0])) / count,
        compensated_sum(solutions.iter().map(|s| s.minimizer[1])) / count,
    ];
    Ok(HmleEstimate { value, minimizer, n: settings.n, replicates: settings.replicates, spread, p_used: p, unconverged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceProfile {
    pub entries: Vec<HmleEstimate>,
    /// Mean estimate over entries with `p/n ≥ 0.3`, or over all entries when none qualify.
    pub plateau: f64,
}

pub const PLATEAU_MIN_RATIO: f64 = 0.3;

/// Estimates over a list of dimensions; entry `p` uses `derive_seed(seed, [p])`.
pub fn hmle_convergence_profile(
    params: &ModelParams,
    link: LinkFn,
    family: RadialFamily,
    dims: &[usize],
    settings: &HmleSettings,
    seed: u64,
) -> Result<ConvergenceProfile, HmleError> {
    if dims.is_empty() {
        return Err(HmleError::Empty);
    }
    let entries = dims
        .iter()
        .map(|&p| estimate_hmle(params, link, family, p, settings, derive_seed(seed, &[p as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let plateau = plateau_average(&entries);
    Ok(ConvergenceProfile { entries, plateau })
}

pub fn plateau_average(entries: &[HmleEstimate]) -> f64 {
    let tail: Vec<f64> = entries
        .iter()
        .filter(|e| e.p_used as f64 / e.n as f64 >= PLATEAU_MIN_RATIO)
        .map(|e| e.value)
        .collect();
    let chosen: Vec<f64> = if tail.is_empty() { entries.iter().map(|e| e.value).collect() } else { tail };
    compensated_sum(chosen.iter().copied()) / chosen.len() as f64
}
