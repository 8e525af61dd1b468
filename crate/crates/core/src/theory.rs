//! Side conditions of the phase-transition threshold, checked by Monte Carlo.
//!
//! With `p₊(x) = σ(β0 + γ0·x/α0)`, `p₋ = 1 − p₊` and `f` the density of the
//! projected covariate `U^(p)`:
//!
//! ```text
//! G₊(x) = ∫_{z ≤ x} p₊ f,   Ḡ₊(x) = ∫_{z > x} p₊ f     (likewise G₋, Ḡ₋)
//! ```
//!
//! `G₋(x) + Ḡ₊(x)` is the probability that a point labelled by the model lands
//! on the "separable" side of a threshold at `x` (negatives below, positives
//! above). All four functions come from one sorted Monte Carlo sample with
//! prefix sums, so each evaluation is a binary search.

use std::io::{self, Write};

use rand::Rng;
use thiserror::Error;

use crate::elliptical::sample_projection;
use crate::glm::{LinkFn, ModelParams};
use crate::radial::RadialSpec;
use crate::separability::univariate_separation;
use crate::stats::mean_sd;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("evaluation grid is empty")]
    EmptyGrid,
    #[error("Monte Carlo sample size must be positive")]
    NoSamples,
    #[error("list of sample sizes is empty")]
    EmptySizes,
    #[error("sample size n must be at least 1")]
    ZeroN,
}

/// Empirical G-functions from draws of the projected covariate.
#[derive(Debug, Clone)]
pub struct EmpiricalG {
    sorted: Vec<f64>,
    /// Prefix sums over the sorted draws; entry `k` covers the first `k`.
    plus: Vec<f64>,
    minus: Vec<f64>,
    plus_sq: Vec<f64>,
    minus_sq: Vec<f64>,
}

/// One evaluation of the four functions at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GValues {
    pub g_plus: f64,
    pub g_minus: f64,
    pub gbar_plus: f64,
    pub gbar_minus: f64,
    /// Monte Carlo standard error of `G₋ + Ḡ₊`.
    pub se_minus_plus: f64,
    /// Monte Carlo standard error of `G₊ + Ḡ₋`.
    pub se_plus_minus: f64,
}

impl GValues {
    /// `G₋ + Ḡ₊`: negatives at or below, positives above.
    pub fn minus_plus(&self) -> f64 {
        self.g_minus + self.gbar_plus
    }

    /// `G₊ + Ḡ₋`: positives at or below, negatives above.
    pub fn plus_minus(&self) -> f64 {
        self.g_plus + self.gbar_minus
    }
}

impl EmpiricalG {
    pub fn from_draws(mut draws: Vec<f64>, params: &ModelParams, link: LinkFn) -> Result<Self, TheoryError> {
        if draws.is_empty() {
            return Err(TheoryError::NoSamples);
        }
        draws.sort_by(f64::total_cmp);
        let n = draws.len();
        let mut plus = Vec::with_capacity(n + 1);
        let mut minus = Vec::with_capacity(n + 1);
        let mut plus_sq = Vec::with_capacity(n + 1);
        let mut minus_sq = Vec::with_capacity(n + 1);
        let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
        plus.push(a);
        minus.push(b);
        plus_sq.push(c);
        minus_sq.push(d);
        for &u in &draws {
            let pp = params.p_plus(link, u);
            let pm = params.p_minus(link, u);
            a += pp;
            b += pm;
            c += pp * pp;
            d += pm * pm;
            plus.push(a);
            minus.push(b);
            plus_sq.push(c);
            minus_sq.push(d);
        }
        Ok(EmpiricalG { sorted: draws, plus, minus, plus_sq, minus_sq })
    }

    pub fn sample<R: Rng + ?Sized>(
        params: &ModelParams,
        link: LinkFn,
        radial: &RadialSpec,
        p: usize,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<Self, TheoryError> {
        let draws = (0..mc_samples).map(|_| sample_projection(radial, p, rng)).collect();
        Self::from_draws(draws, params, link)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean_p_plus(&self) -> f64 {
        self.plus[self.len()] / self.len() as f64
    }

    pub fn mean_p_minus(&self) -> f64 {
        self.minus[self.len()] / self.len() as f64
    }

    pub fn eval(&self, x: f64) -> GValues {
        let n = self.len();
        let nf = n as f64;
        let k = self.sorted.partition_point(|&u| u <= x);
        let g_plus = self.plus[k] / nf;
        let g_minus = self.minus[k] / nf;
        let gbar_plus = (self.plus[n] - self.plus[k]) / nf;
        let gbar_minus = (self.minus[n] - self.minus[k]) / nf;
        // the summands are p₋·1{u ≤ x} + p₊·1{u > x}, so their squares split the same way
        let se = |mean: f64, below_sq: f64, above_sq: f64| {
            if n < 2 {
                return 0.0;
            }
            let second = (below_sq + above_sq) / nf;
            ((second - mean * mean).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
        };
        let se_minus_plus = se(g_minus + gbar_plus, self.minus_sq[k], self.plus_sq[n] - self.plus_sq[k]);
        let se_plus_minus = se(g_plus + gbar_minus, self.plus_sq[k], self.minus_sq[n] - self.minus_sq[k]);
        GValues { g_plus, g_minus, gbar_plus, gbar_minus, se_minus_plus, se_plus_minus }
    }
}

/// The four G-functions tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GFunctionEstimate {
    pub x_grid: Vec<f64>,
    pub values: Vec<GValues>,
    pub mc_samples: usize,
    pub mean_p_plus: f64,
    pub mean_p_minus: f64,
}

impl GFunctionEstimate {
    pub fn g_plus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.g_plus).collect()
    }

    pub fn g_minus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.g_minus).collect()
    }

    pub fn gbar_plus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.gbar_plus).collect()
    }

    pub fn gbar_minus(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.gbar_minus).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,G_plus,G_minus,Gbar_plus,Gbar_minus,se_minus_plus,se_plus_minus")?;
        for (x, v) in self.x_grid.iter().zip(&self.values) {
            writeln!(
                out,
                "{x},{},{},{},{},{},{}",
                v.g_plus, v.g_minus, v.gbar_plus, v.gbar_minus, v.se_minus_plus, v.se_plus_minus
            )?;
        }
        Ok(())
    }
}

pub fn estimate_g_functions<R: Rng + ?Sized>(
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    p: usize,
    x_grid: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<GFunctionEstimate, TheoryError> {
    if x_grid.is_empty() {
        return Err(TheoryError::EmptyGrid);
    }
    let g = EmpiricalG::sample(params, link, radial, p, mc_samples, rng)?;
    Ok(GFunctionEstimate {
        x_grid: x_grid.to_vec(),
        values: x_grid.iter().map(|&x| g.eval(x)).collect(),
        mc_samples,
        mean_p_plus: g.mean_p_plus(),
        mean_p_minus: g.mean_p_minus(),
    })
}

/// Which combination attains the supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combination {
    /// `G₋ + Ḡ₊`
    MinusPlus,
    /// `G₊ + Ḡ₋`
    PlusMinus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgSuffCheck {
    pub sup: f64,
    pub argmax: f64,
    pub combination: Combination,
    /// Monte Carlo standard error at the maximiser.
    pub se: f64,
    /// `1 − sup`.
    pub epsilon: f64,
    /// `sup < 1 − 3·se`.
    pub holds: bool,
}

/// Supremum over the grid of `max(G₋ + Ḡ₊, G₊ + Ḡ₋)`.
pub fn check_pgsuff(g: &GFunctionEstimate) -> PgSuffCheck {
    let mut best: Option<PgSuffCheck> = None;
    for (x, v) in g.x_grid.iter().zip(&g.values) {
        for (value, se, combination) in [
            (v.minus_plus(), v.se_minus_plus, Combination::MinusPlus),
            (v.plus_minus(), v.se_plus_minus, Combination::PlusMinus),
        ] {
            if best.is_none_or(|b| value > b.sup) {
                best = Some(PgSuffCheck {
                    sup: value,
                    argmax: *x,
                    combination,
                    se,
                    epsilon: 1.0 - value,
                    holds: value < 1.0 - 3.0 * se,
                });
            }
        }
    }
    best.expect("grid is nonempty")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgRow {
    pub n: usize,
    /// `n·E[p₊(X)(G₋(X) + Ḡ₊(X))^{n−1}]`
    pub plus_term: f64,
    /// `n·E[p₋(X)(G₊(X) + Ḡ₋(X))^{n−1}]`
    pub minus_term: f64,
    /// Monte Carlo standard error of `plus_term + minus_term`.
    pub se: f64,
}

impl PgRow {
    /// Probability that `n` labelled points are separable by a threshold.
    pub fn total(&self) -> f64 {
        self.plus_term + self.minus_term
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgTable {
    pub rows: Vec<PgRow>,
    /// Each total falls below its predecessor by more than twice their
    /// combined Monte Carlo standard error.
    pub decreasing: bool,
}

impl PgTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,plus_term,minus_term,total,se")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.n, r.plus_term, r.minus_term, r.total(), r.se)?;
        }
        Ok(())
    }
}

/// The standard error combines the outer-sample spread with the first-order
/// (influence function) contribution of the draws behind the G-functions.
fn pg_row(g: &EmpiricalG, outer: &[f64], params: &ModelParams, link: LinkFn, n: usize) -> PgRow {
    let exponent = (n - 1) as i32;
    let m = outer.len();
    let mut plus_terms = Vec::with_capacity(m);
    let mut minus_terms = Vec::with_capacity(m);
    let mut totals = Vec::with_capacity(m);
    // derivative weights of each outer term with respect to its two combinations
    let mut slopes = Vec::with_capacity(m);
    for &x in outer {
        let v = g.eval(x);
        let (pp, pm) = (params.p_plus(link, x), params.p_minus(link, x));
        let (cmp, cpm) = (v.minus_plus(), v.plus_minus());
        let a = pp * cmp.powi(exponent);
        let b = pm * cpm.powi(exponent);
        plus_terms.push(a);
        minus_terms.push(b);
        totals.push(a + b);
        if n >= 2 {
            let d = (n - 1) as f64;
            slopes.push((x, pp * d * cmp.powi(exponent - 1), pm * d * cpm.powi(exponent - 1)));
        }
    }
    let nf = n as f64;
    let (_, sd) = mean_sd(&totals);
    let outer_var = sd * sd / m as f64;
    let inner_var = if slopes.is_empty() { 0.0 } else { inner_variance(g, &mut slopes, params, link) };
    PgRow {
        n,
        plus_term: nf * mean_sd(&plus_terms).0,
        minus_term: nf * mean_sd(&minus_terms).0,
        se: nf * (outer_var + inner_var).sqrt(),
    }
}

/// Variance of the outer mean induced by the G-function draws. A draw `u`
/// adds `p₋(u)` to `G₋ + Ḡ₊` at every `x ≥ u` and `p₊(u)` at every `x < u`
/// (and the mirror image for `G₊ + Ḡ₋`), so its influence is a pair of
/// prefix sums over the outer points sorted by `x`.
fn inner_variance(g: &EmpiricalG, slopes: &mut [(f64, f64, f64)], params: &ModelParams, link: LinkFn) -> f64 {
    slopes.sort_by(|l, r| l.0.total_cmp(&r.0));
    let m = slopes.len() as f64;
    let total_a: f64 = slopes.iter().map(|s| s.1).sum();
    let total_b: f64 = slopes.iter().map(|s| s.2).sum();
    let (mut below_a, mut below_b) = (0.0, 0.0);
    let mut k = 0;
    let influence: Vec<f64> = g
        .sorted
        .iter()
        .map(|&u| {
            while k < slopes.len() && slopes[k].0 < u {
                below_a += slopes[k].1;
                below_b += slopes[k].2;
                k += 1;
            }
            let (pp, pm) = (params.p_plus(link, u), params.p_minus(link, u));
            (pm * (total_a - below_a) + pp * below_a + pp * (total_b - below_b) + pm * below_b) / m
        })
        .collect();
    let (_, sd) = mean_sd(&influence);
    sd * sd / influence.len() as f64
}

/// The G-functions come from one sample of `mc_samples` draws and the outer
/// expectation from a second, independent sample of the same size.
fn g_and_outer<R: Rng + ?Sized>(
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    p: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<(EmpiricalG, Vec<f64>), TheoryError> {
    let g = EmpiricalG::sample(params, link, radial, p, mc_samples, rng)?;
    let outer = (0..mc_samples).map(|_| sample_projection(radial, p, rng)).collect();
    Ok((g, outer))
}

pub fn check_pg_condition<R: Rng + ?Sized>(
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    p: usize,
    n_list: &[usize],
    mc_samples: usize,
    rng: &mut R,
) -> Result<PgTable, TheoryError> {
    if n_list.is_empty() {
        return Err(TheoryError::EmptySizes);
    }
    if n_list.contains(&0) {
        return Err(TheoryError::ZeroN);
    }
    let (g, outer) = g_and_outer(params, link, radial, p, mc_samples, rng)?;
    let rows: Vec<PgRow> = n_list.iter().map(|&n| pg_row(&g, &outer, params, link, n)).collect();
    let decreasing = rows.windows(2).all(|w| w[1].total() + 2.0 * w[0].se.hypot(w[1].se) < w[0].total());
    Ok(PgTable { rows, decreasing })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub se: f64,
}

/// Probability that `n` model-labelled points can be separated by the
/// intercept and one covariate: each separable labelling is counted once by
/// its extreme point of the upper class.
pub fn univariate_separation_probability<R: Rng + ?Sized>(
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    p: usize,
    n: usize,
    mc_samples: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate, TheoryError> {
    if n == 0 {
        return Err(TheoryError::ZeroN);
    }
    let (g, outer) = g_and_outer(params, link, radial, p, mc_samples, rng)?;
    let row = pg_row(&g, &outer, params, link, n);
    Ok(ProbabilityEstimate { value: row.total(), se: row.se })
}

/// Direct simulation of the same event: draw `trials` datasets of `n`
/// labelled projections and count the separable ones.
pub fn simulate_univariate_separation<R: Rng + ?Sized>(
    params: &ModelParams,
    link: LinkFn,
    radial: &RadialSpec,
    p: usize,
    n: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ProbabilityEstimate, TheoryError> {
    if n == 0 {
        return Err(TheoryError::ZeroN);
    }
    if trials == 0 {
        return Err(TheoryError::NoSamples);
    }
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let mut hits = 0usize;
    for _ in 0..trials {
        for i in 0..n {
            x[i] = sample_projection(radial, p, rng);
            y[i] = if rng.random::<f64>() < params.p_plus(link, x[i]) { 1.0 } else { -1.0 };
        }
        hits += univariate_separation(&x, &y).separable as usize;
    }
    let value = hits as f64 / trials as f64;
    Ok(ProbabilityEstimate { value, se: (value * (1.0 - value) / trials as f64).sqrt() })
}
