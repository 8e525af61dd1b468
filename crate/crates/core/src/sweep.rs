//! Grid experiments over `(γ0, κ)`: existence proportions, the empirical
//! threshold `h_{0.5}`, uncertainty bands and image/CSV exports.
//!
//! Every `(γ0 index, κ index, replicate)` triple is an independent task whose
//! dataset seed is `derive_seed(master_seed, [gi, ki, rep])`. Tasks run on the
//! current rayon pool and results are gathered in index order, so a grid is
//! bit-identical for any number of worker threads.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

use crate::glm::{generate_dataset, Design, LinkFn, MixSpec, ModelParams};
use crate::hmle::{hmle_convergence_profile, HmleError, HmleSettings};
use crate::radial::{calibrate_radial, RadialFamily};
use crate::seeding::derive_seed;
use crate::separability::{mle_exists, LpTolerance};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("transition summary needs at least two kappa values, got {0}")]
    TooFewKappa(usize),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Hmle(#[from] HmleError),
}

/// Evenly spaced grid `start, start + step, …` up to `stop` inclusive.
/// Points are computed as `start + i·step` and rounded to 12 decimals.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let count = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=count.max(-1)).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub gamma0_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub replicates: usize,
    pub link: LinkFn,
    pub family: RadialFamily,
    pub alpha0: f64,
    pub beta0: f64,
    pub mix: MixSpec,
    pub master_seed: u64,
    pub tolerance: LpTolerance,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig::full_scale()
    }
}

impl SweepConfig {
    /// Full-resolution experiment: n = 1000, γ0 ∈ {0.01, …, 10}, κ ∈ {0.005, …, 0.6}.
    pub fn full_scale() -> Self {
        SweepConfig {
            n: 1000,
            gamma0_grid: linspace_step(0.01, 10.0, 0.01),
            kappa_grid: linspace_step(0.005, 0.6, 0.005),
            replicates: 100,
            link: LinkFn::Logit,
            family: RadialFamily::Gamma { shape: 1.0 },
            alpha0: 1.0,
            beta0: 0.0,
            mix: MixSpec::Identity,
            master_seed: 0,
            tolerance: LpTolerance::default(),
        }
    }

    /// Small 8×8 grid at n = 200 with 10 replicates.
    pub fn desk() -> Self {
        SweepConfig {
            n: 200,
            gamma0_grid: vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0],
            kappa_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.45, 0.5, 0.6],
            replicates: 10,
            ..SweepConfig::full_scale()
        }
    }

    pub fn p_for(&self, kappa: f64) -> usize {
        (kappa * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |msg: String| Err(SweepError::Config(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be positive".into());
        }
        for (name, grid) in [("gamma0_grid", &self.gamma0_grid), ("kappa_grid", &self.kappa_grid)] {
            if grid.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} has a non-finite entry"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("{name} must be strictly increasing"));
            }
        }
        if self.gamma0_grid[0] < 0.0 {
            return bad("gamma0_grid entries must be nonnegative".into());
        }
        if let Some(&k) = self.kappa_grid.iter().find(|&&k| self.p_for(k) < 1) {
            return bad(format!("kappa = {k} gives p = 0 at n = {}", self.n));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return bad("alpha0 must be positive".into());
        }
        if !self.beta0.is_finite() {
            return bad("beta0 must be finite".into());
        }
        if !self.tolerance.is_valid() {
            return bad("LP tolerances must satisfy 0 < feas_tol < zero_tol".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub gamma0: f64,
    pub kappa: f64,
    pub p: usize,
    /// Replicates whose MLE exists.
    pub exists: usize,
    /// Replicates lost to generation or LP errors.
    pub failed: usize,
}

impl Cell {
    pub fn completed(&self, replicates: usize) -> usize {
        replicates - self.failed
    }

    /// Fraction of completed replicates with an MLE; `None` if none completed.
    pub fn proportion(&self, replicates: usize) -> Option<f64> {
        let done = self.completed(replicates);
        (done > 0).then(|| self.exists as f64 / done as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub gamma0_grid: Vec<f64>,
    pub kappa_grid: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    /// Row-major by γ0: cell `(gi, ki)` sits at `gi·|κ grid| + ki`.
    pub cells: Vec<Cell>,
}

impl PhaseGrid {
    pub fn cell(&self, gi: usize, ki: usize) -> &Cell {
        &self.cells[gi * self.kappa_grid.len() + ki]
    }

    pub fn column(&self, gi: usize) -> &[Cell] {
        let k = self.kappa_grid.len();
        &self.cells[gi * k..(gi + 1) * k]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "gamma0,kappa,p,n,replicates,proportion,failed")?;
        for c in &self.cells {
            let prop = c.proportion(self.replicates).map_or_else(|| "nan".to_string(), |v| v.to_string());
            writeln!(out, "{},{},{},{},{},{},{}", c.gamma0, c.kappa, c.p, self.n, self.replicates, prop, c.failed)?;
        }
        Ok(())
    }
}

fn replicate_exists(config: &SweepConfig, gi: usize, ki: usize, rep: usize) -> Result<bool, String> {
    let gamma0 = config.gamma0_grid[gi];
    let p = config.p_for(config.kappa_grid[ki]);
    let params = ModelParams::new(config.alpha0, config.beta0, gamma0).map_err(|e| e.to_string())?;
    let radial = calibrate_radial(config.family, p, config.alpha0).map_err(|e| e.to_string())?;
    let design = Design { n: config.n, p, params, link: config.link, radial, mix: config.mix.clone() };
    let seed = derive_seed(config.master_seed, &[gi as u64, ki as u64, rep as u64]);
    let data = generate_dataset(&design, seed).map_err(|e| e.to_string())?;
    mle_exists(&data, &config.tolerance).map_err(|e| e.to_string())
}

/// Simulate every cell of the grid on the current rayon pool.
pub fn run_sweep(config: &SweepConfig) -> Result<PhaseGrid, SweepError> {
    config.validate()?;
    let (ng, nk, reps) = (config.gamma0_grid.len(), config.kappa_grid.len(), config.replicates);
    let outcomes: Vec<Option<bool>> = (0..ng * nk * reps)
        .into_par_iter()
        .map(|task| {
            let (gi, rest) = (task / (nk * reps), task % (nk * reps));
            let (ki, rep) = (rest / reps, rest % reps);
            match replicate_exists(config, gi, ki, rep) {
                Ok(v) => Some(v),
                Err(e) => {
                    warn!("cell (gamma0 = {}, kappa = {}) replicate {rep}: {e}", config.gamma0_grid[gi], config.kappa_grid[ki]);
                    None
                }
            }
        })
        .collect();
    let cells = outcomes
        .chunks(reps)
        .enumerate()
        .map(|(idx, chunk)| {
            let (gi, ki) = (idx / nk, idx % nk);
            let kappa = config.kappa_grid[ki];
            Cell {
                gamma0: config.gamma0_grid[gi],
                kappa,
                p: config.p_for(kappa),
                exists: chunk.iter().filter(|o| **o == Some(true)).count(),
                failed: chunk.iter().filter(|o| o.is_none()).count(),
            }
        })
        .collect();
    Ok(PhaseGrid {
        gamma0_grid: config.gamma0_grid.clone(),
        kappa_grid: config.kappa_grid.clone(),
        n: config.n,
        replicates: reps,
        cells,
    })
}

/// Weighted least-squares fit that is nonincreasing in the index
/// (pool-adjacent-violators).
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, l1 + l2));
        }
    }
    blocks.into_iter().flat_map(|(m, _, l)| std::iter::repeat_n(m, l)).collect()
}

/// Where a nonincreasing piecewise-linear curve first drops below `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Crossing {
    /// Already below at the first point.
    Before,
    At(f64),
    /// Never below.
    After,
}

fn first_drop_below(kappa: &[f64], smooth: &[f64], level: f64) -> Crossing {
    match smooth.iter().position(|&s| s < level) {
        None => Crossing::After,
        Some(0) => Crossing::Before,
        Some(k) => {
            let (s0, s1) = (smooth[k - 1], smooth[k]);
            let (k0, k1) = (kappa[k - 1], kappa[k]);
            Crossing::At(k0 + (k1 - k0) * (s0 - level) / (s0 - s1))
        }
    }
}

/// Linear interpolation of an `h_MLE` curve over γ0.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCurve {
    pub gamma0: Vec<f64>,
    pub h_mle: Vec<f64>,
}

impl TheoryCurve {
    pub fn new(gamma0: Vec<f64>, h_mle: Vec<f64>) -> Result<Self, SweepError> {
        if gamma0.is_empty() || gamma0.len() != h_mle.len() {
            return Err(SweepError::Config("theory curve needs matching, nonempty gamma0 and h_mle lists".into()));
        }
        if gamma0.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SweepError::Config("theory curve gamma0 values must be strictly increasing".into()));
        }
        Ok(TheoryCurve { gamma0, h_mle })
    }

    /// `None` outside the tabulated range.
    pub fn value_at(&self, gamma0: f64) -> Option<f64> {
        let g = &self.gamma0;
        if gamma0 < g[0] || gamma0 > g[g.len() - 1] {
            return None;
        }
        let k = g.partition_point(|&v| v < gamma0);
        if g[k] == gamma0 {
            return Some(self.h_mle[k]);
        }
        let t = (gamma0 - g[k - 1]) / (g[k] - g[k - 1]);
        Some(self.h_mle[k - 1] + t * (self.h_mle[k] - self.h_mle[k - 1]))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "gamma0,h_mle")?;
        for (g, h) in self.gamma0.iter().zip(&self.h_mle) {
            writeln!(out, "{g},{h}")?;
        }
        Ok(())
    }
}

/// Theory curve from the plateau of an `h_MLE` profile over `dims` at each
/// γ0; point `i` uses `derive_seed(seed, [i])`.
#[allow(clippy::too_many_arguments)]
pub fn theory_curve(
    gamma0: &[f64],
    alpha0: f64,
    beta0: f64,
    link: LinkFn,
    family: RadialFamily,
    dims: &[usize],
    settings: &HmleSettings,
    seed: u64,
) -> Result<TheoryCurve, SweepError> {
    let mut h = Vec::with_capacity(gamma0.len());
    for (i, &g) in gamma0.iter().enumerate() {
        let params = ModelParams::new(alpha0, beta0, g).map_err(|e| SweepError::Config(e.to_string()))?;
        h.push(hmle_convergence_profile(&params, link, family, dims, settings, derive_seed(seed, &[i as u64]))?.plateau);
    }
    TheoryCurve::new(gamma0.to_vec(), h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub gamma0: f64,
    /// Isotonic fit of the column; `NaN` where no replicate completed.
    pub smoothed: Vec<f64>,
    /// `None` when the smoothed column never drops below one half.
    pub h05: Option<f64>,
    /// κ-range where the smoothed column lies strictly between `1/R` and `1 − 1/R`.
    pub band: Option<(f64, f64)>,
    pub h_mle_theory: Option<f64>,
}

impl TransitionRow {
    pub fn band_width(&self) -> Option<f64> {
        self.band.map(|(lo, hi)| hi - lo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSummary {
    pub rows: Vec<TransitionRow>,
    /// Mean band width over columns with a crossing.
    pub miw: Option<f64>,
    /// Mean `|h_MLE − h_{0.5}|` over columns with both values.
    pub md: Option<f64>,
}

impl TransitionSummary {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "gamma0,h05,band_lo,band_hi,h_mle_theory")?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.gamma0,
                opt(r.h05),
                opt(r.band.map(|b| b.0)),
                opt(r.band.map(|b| b.1)),
                opt(r.h_mle_theory)
            )?;
        }
        Ok(())
    }
}

fn summarize_column(kappa: &[f64], cells: &[Cell], replicates: usize) -> (Vec<f64>, Option<f64>, Option<(f64, f64)>) {
    let mut ks = Vec::new();
    let mut props = Vec::new();
    let mut weights = Vec::new();
    let mut slots = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        if let Some(prop) = c.proportion(replicates) {
            ks.push(kappa[i]);
            props.push(prop);
            weights.push(c.completed(replicates) as f64);
            slots.push(i);
        }
    }
    let fitted = isotonic_nonincreasing(&props, &weights);
    debug_assert!(fitted.windows(2).all(|w| w[1] <= w[0]));
    let mut smoothed = vec![f64::NAN; cells.len()];
    for (&slot, &v) in slots.iter().zip(&fitted) {
        smoothed[slot] = v;
    }
    let h05 = match first_drop_below(&ks, &fitted, 0.5) {
        Crossing::At(h) => Some(h),
        Crossing::Before | Crossing::After => None,
    };
    let band = h05.filter(|_| replicates >= 2).map(|h| {
        let r = 1.0 / replicates as f64;
        let lo = match first_drop_below(&ks, &fitted, 1.0 - r) {
            Crossing::At(v) => v.min(h),
            Crossing::Before => ks[0],
            Crossing::After => h,
        };
        let hi = match first_drop_below(&ks, &fitted, r) {
            Crossing::At(v) => v.max(h),
            Crossing::Before => h,
            Crossing::After => ks[ks.len() - 1],
        };
        (lo, hi)
    });
    (smoothed, h05, band)
}

pub fn summarize_transition(grid: &PhaseGrid, theory: Option<&TheoryCurve>) -> Result<TransitionSummary, SweepError> {
    if grid.kappa_grid.len() < 2 {
        return Err(SweepError::TooFewKappa(grid.kappa_grid.len()));
    }
    let rows: Vec<TransitionRow> = grid
        .gamma0_grid
        .iter()
        .enumerate()
        .map(|(gi, &gamma0)| {
            let (smoothed, h05, band) = summarize_column(&grid.kappa_grid, grid.column(gi), grid.replicates);
            TransitionRow { gamma0, smoothed, h05, band, h_mle_theory: theory.and_then(|t| t.value_at(gamma0)) }
        })
        .collect();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let miw = mean(rows.iter().filter_map(|r| r.band_width()).collect());
    let md = mean(rows.iter().filter_map(|r| Some((r.h_mle_theory? - r.h05?).abs())).collect());
    Ok(TransitionSummary { rows, miw, md })
}

/// Colormap endpoints for proportions 0 and 1.
pub const COLOR_LOW: [u8; 3] = [68, 1, 84];
pub const COLOR_HIGH: [u8; 3] = [253, 231, 37];
/// Cells with no completed replicate.
pub const COLOR_MISSING: [u8; 3] = [128, 128, 128];
/// Theory overlay.
pub const COLOR_THEORY: [u8; 3] = [255, 0, 0];

pub fn proportion_color(prop: f64) -> [u8; 3] {
    let t = prop.clamp(0.0, 1.0);
    let mut rgb = [0u8; 3];
    for (c, (lo, hi)) in rgb.iter_mut().zip(COLOR_LOW.iter().zip(&COLOR_HIGH)) {
        *c = (*lo as f64 + t * (*hi as f64 - *lo as f64)).round() as u8;
    }
    rgb
}

/// Index of the κ value closest to `h` (the lower one on ties).
pub fn nearest_kappa_index(kappa: &[f64], h: f64) -> usize {
    let mut best = 0;
    for (i, &k) in kappa.iter().enumerate() {
        if (k - h).abs() < (kappa[best] - h).abs() {
            best = i;
        }
    }
    best
}

/// RGB raster, one pixel per cell: γ0 runs left to right, κ bottom to top.
pub fn heatmap_pixels(grid: &PhaseGrid, theory: Option<&TheoryCurve>) -> (usize, usize, Vec<u8>) {
    let (width, height) = (grid.gamma0_grid.len(), grid.kappa_grid.len());
    let mut pixels = vec![0u8; width * height * 3];
    let mut put = |gi: usize, ki: usize, rgb: [u8; 3]| {
        let row = height - 1 - ki;
        let at = (row * width + gi) * 3;
        pixels[at..at + 3].copy_from_slice(&rgb);
    };
    for gi in 0..width {
        for ki in 0..height {
            let rgb = grid.cell(gi, ki).proportion(grid.replicates).map_or(COLOR_MISSING, proportion_color);
            put(gi, ki, rgb);
        }
        if let Some(h) = theory.and_then(|t| t.value_at(grid.gamma0_grid[gi])) {
            put(gi, nearest_kappa_index(&grid.kappa_grid, h), COLOR_THEORY);
        }
    }
    (width, height, pixels)
}

pub fn write_ppm<W: Write>(grid: &PhaseGrid, theory: Option<&TheoryCurve>, mut out: W) -> io::Result<()> {
    let (w, h, pixels) = heatmap_pixels(grid, theory);
    write!(out, "P6\n{w} {h}\n255\n")?;
    out.write_all(&pixels)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), SweepError> {
    let wrap = |source| SweepError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut out).and_then(|_| out.flush()).map_err(wrap)
}

/// Write the cell CSV and the pixmap.
pub fn export_heatmap(
    grid: &PhaseGrid,
    theory: Option<&TheoryCurve>,
    csv_path: &Path,
    ppm_path: &Path,
) -> Result<(), SweepError> {
    write_file(csv_path, |out| grid.write_csv(out))?;
    write_file(ppm_path, |out| write_ppm(grid, theory, out))
}

pub fn export_summary(summary: &TransitionSummary, path: &Path) -> Result<(), SweepError> {
    write_file(path, |out| summary.write_csv(out))
}
