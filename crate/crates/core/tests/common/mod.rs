//! Oracle checks shared by the integration suites and the acceptance report.
//! Each returns a one-line summary on success and the first violation otherwise.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use phaseglm_core::elliptical::sample_projection;
use phaseglm_core::glm::{generate_dataset, Design, MixSpec};
use phaseglm_core::hmle::{empirical_objective, minimize_saa, SaaSample, SolverOptions};
use phaseglm_core::radial::calibrate_radial;
use phaseglm_core::seeding::stream;
use phaseglm_core::separability::{detect_separation_xy, univariate_separation};
use phaseglm_core::theory::univariate_separation_probability;
use phaseglm_core::{LinkFn, LpTolerance, ModelParams, RadialFamily, RadialSpec, SeparationKind};
use rand::Rng;

pub type Check = Result<String, String>;

fn cross(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [i64; 3], b: [i64; 3]) -> i64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Exact classification of integer rows `y_i·(1, x_i)` padded to three
/// coordinates. Every extreme ray of `{c : W c ≥ 0}` (modulo its lineality
/// space) is a row, a cross product of two rows, or the cross product of a row
/// with a normal of the row span, so checking those candidates is exhaustive.
pub fn brute_force_kind(rows: &[[i64; 3]]) -> SeparationKind {
    let mut cands: Vec<[i64; 3]> = rows.to_vec();
    let mut normals = Vec::new();
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            let c = cross(a, b);
            if c != [0, 0, 0] {
                cands.push(c);
                normals.push(c);
            }
        }
    }
    for &nrm in &normals {
        for &r in rows {
            cands.push(cross(r, nrm));
        }
    }
    // rows spanning a line: anything orthogonal to that line is a normal
    for &r in rows {
        for e in [[1, 0, 0], [0, 1, 0], [0, 0, 1]] {
            let c = cross(r, e);
            if c != [0, 0, 0] {
                for &s in rows {
                    cands.push(cross(s, c));
                }
            }
        }
    }
    let mut any_nonzero = false;
    let mut covered = vec![false; rows.len()];
    for c in cands {
        for s in [1, -1] {
            let c = [s * c[0], s * c[1], s * c[2]];
            let margins: Vec<i64> = rows.iter().map(|&r| dot(r, c)).collect();
            if margins.iter().all(|&m| m >= 0) && margins.iter().any(|&m| m > 0) {
                any_nonzero = true;
                for (cov, m) in covered.iter_mut().zip(&margins) {
                    *cov |= *m > 0;
                }
            }
        }
    }
    if !any_nonzero {
        SeparationKind::Overlap
    } else if covered.iter().all(|&c| c) {
        SeparationKind::Complete
    } else {
        SeparationKind::QuasiComplete
    }
}

/// Random integer instances with `n ≤ 8`, `p ≤ 2`, including certificate checks.
pub fn trichotomy_vs_enumeration(cases: usize) -> Check {
    let mut rng = stream(12, &[]);
    let tol = LpTolerance::default();
    let mut seen = HashMap::new();
    for case in 0..cases {
        let n = rng.random_range(1..=8usize);
        let p = rng.random_range(1..=2usize);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-3..=3) as f64);
        let y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let rows: Vec<[i64; 3]> = (0..n)
            .map(|i| {
                let s = y[i] as i64;
                let mut r = [s, 0, 0];
                for j in 0..p {
                    r[j + 1] = s * x[(i, j)] as i64;
                }
                r
            })
            .collect();
        let expected = brute_force_kind(&rows);
        let got = detect_separation_xy(&x, &y, &tol).map_err(|e| format!("case {case}: {e}"))?;
        if got.kind != expected {
            return Err(format!("case {case}: LP {} vs enumeration {expected}; x={x} y={y:?}", got.kind));
        }
        *seen.entry(expected).or_insert(0) += 1;
        if let Some(c) = &got.certificate {
            for i in 0..n {
                let m = y[i] * (c[0] + (0..p).map(|j| x[(i, j)] * c[j + 1]).sum::<f64>());
                let ok = match got.kind {
                    SeparationKind::Complete => m > tol.zero_tol,
                    _ => m >= -1e-8,
                };
                if !ok {
                    return Err(format!("case {case}: certificate margin {m} at row {i}"));
                }
            }
        }
    }
    if seen.len() != 3 {
        return Err(format!("not all three kinds occurred: {seen:?}"));
    }
    Ok(format!("{cases} instances agree ({seen:?})"))
}

pub fn simulated(n: usize, p: usize, gamma0: f64, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let params = ModelParams::new(1.0, 0.0, gamma0).unwrap();
    let radial = calibrate_radial(RadialFamily::ChiDf, p, 1.0).unwrap();
    let design = Design { n, p, params, link: LinkFn::Logit, radial, mix: MixSpec::Identity };
    let data = generate_dataset(&design, seed).unwrap();
    (data.x, data.y)
}

/// Status is unchanged by `X ↦ X·Mᵀ` for well-conditioned invertible `M`.
pub fn affine_invariance(cases: u64) -> Check {
    let tol = LpTolerance::default();
    let mut rng = stream(13, &[]);
    let mut kinds = HashSet::new();
    for case in 0..cases {
        let p = 2 + (case % 4) as usize;
        let n = 2 * p + rng.random_range(0..3 * p);
        let (x, y) = simulated(n, p, 1.0, case);
        let m = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.0 } + 0.3 * rng.random_range(-1.0..1.0));
        if m.clone().svd(false, false).singular_values.min() <= 0.2 {
            return Err(format!("case {case}: transform is ill-conditioned"));
        }
        let base = detect_separation_xy(&x, &y, &tol).map_err(|e| e.to_string())?;
        let mapped = detect_separation_xy(&(&x * m.transpose()), &y, &tol).map_err(|e| e.to_string())?;
        if base.kind != mapped.kind {
            return Err(format!("case {case}: {} became {}", base.kind, mapped.kind));
        }
        kinds.insert(base.kind);
    }
    if !(kinds.contains(&SeparationKind::Overlap) && kinds.contains(&SeparationKind::Complete)) {
        return Err(format!("degenerate instance mix: {kinds:?}"));
    }
    Ok(format!("{cases} transformed datasets keep their status"))
}

pub fn saa_sample(n: usize, gamma0: f64, link: LinkFn, family: RadialFamily, seed: u64) -> SaaSample {
    let params = ModelParams::new(1.0, 0.0, gamma0).unwrap();
    let radial = calibrate_radial(family, 20, 1.0).unwrap();
    SaaSample::draw(n, 20, &params, link, &radial, &mut stream(seed, &[]))
}

fn objective(sample: &SaaSample, lambda: [f64; 2]) -> f64 {
    empirical_objective(lambda, sample).value
}

/// Analytic gradient vs central differences (step 1e-5) at 100 points on each of 20 samples.
pub fn gradient_vs_differences() -> Check {
    let mut rng = stream(12, &[]);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let sample = saa_sample(200, 1.0 + s as f64 * 0.3, LinkFn::Cloglog, RadialFamily::ParetoI { tail: 3.5 }, 200 + s);
        for _ in 0..100 {
            let l = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let g = empirical_objective(l, &sample).gradient;
            let d0 = (objective(&sample, [l[0] + h, l[1]]) - objective(&sample, [l[0] - h, l[1]])) / (2.0 * h);
            let d1 = (objective(&sample, [l[0], l[1] + h]) - objective(&sample, [l[0], l[1] - h])) / (2.0 * h);
            let err = (g[0] - d0).abs().max((g[1] - d1).abs());
            if err > 1e-6 {
                return Err(format!("sample {s} at {l:?}: gradient {g:?} vs ({d0}, {d1})"));
            }
            worst = worst.max(err);
        }
    }
    Ok(format!("2000 points, worst error {worst:.2e}"))
}

/// Midpoint convexity over 1000 random triples.
pub fn convexity_midpoints() -> Check {
    let mut rng = stream(11, &[]);
    let samples: Vec<SaaSample> =
        (0..10).map(|s| saa_sample(100, 2.0, LinkFn::Logit, RadialFamily::Gamma { shape: 0.5 }, s)).collect();
    for k in 0..1000 {
        let sample = &samples[k % samples.len()];
        let a = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let b = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let t: f64 = rng.random_range(0.0..1.0);
        let mid = [t * a[0] + (1.0 - t) * b[0], t * a[1] + (1.0 - t) * b[1]];
        let lhs = objective(sample, mid);
        let rhs = t * objective(sample, a) + (1.0 - t) * objective(sample, b);
        if lhs > rhs + 1e-12 {
            return Err(format!("triple {k}: {lhs} > {rhs}"));
        }
    }
    Ok("1000 triples satisfy the midpoint inequality".into())
}

/// Every solve returns a value in `[0, objective at the origin]`.
pub fn bounded_by_value_at_zero(solves: u64) -> Check {
    for s in 0..solves {
        let n = 5 + (s as usize % 7) * 30;
        let family = [RadialFamily::ChiDf, RadialFamily::LogNormal, RadialFamily::Gamma { shape: 2.0 }][s as usize % 3];
        let sample = saa_sample(n, (s % 10) as f64, LinkFn::Logit, family, 300 + s);
        let sol = minimize_saa(&sample, &SolverOptions::default());
        let at_zero = objective(&sample, [0.0, 0.0]);
        if !(sol.value >= 0.0 && sol.value <= at_zero) {
            return Err(format!("solve {s}: value {} outside [0, {at_zero}]", sol.value));
        }
    }
    Ok(format!("{solves} solves bounded by the value at the origin"))
}

/// 20 quantile bins of the linear predictor: observed positive fraction vs
/// the bin-average link probability, within 4 binomial standard errors.
pub fn label_calibration(n: usize) -> Check {
    let p = 20;
    let params = ModelParams::new(1.0, 0.2, 1.0).unwrap();
    for link in [LinkFn::Logit, LinkFn::Probit, LinkFn::Cloglog] {
        let design = Design {
            n,
            p,
            params,
            link,
            radial: calibrate_radial(RadialFamily::ChiDf, p, 1.0).unwrap(),
            mix: MixSpec::Identity,
        };
        let data = generate_dataset(&design, 4).map_err(|e| e.to_string())?;
        let mut scored: Vec<(f64, f64)> = data.linear_predictor().into_iter().zip(data.y.iter().copied()).collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (b, bin) in scored.chunks(n / 20).enumerate() {
            let observed = bin.iter().filter(|(_, y)| *y > 0.0).count() as f64 / bin.len() as f64;
            let probs: Vec<f64> = bin.iter().map(|(t, _)| link.eval(*t)).collect();
            let expected = probs.iter().sum::<f64>() / bin.len() as f64;
            let var = probs.iter().map(|q| q * (1.0 - q)).sum::<f64>() / (bin.len() as f64).powi(2);
            if (observed - expected).abs() > 4.0 * var.sqrt() + 1e-12 {
                return Err(format!("{} bin {b}: observed {observed} vs expected {expected}", link.name()));
            }
        }
    }
    Ok(format!("20 bins x 3 links calibrated at n = {n}"))
}

fn simulated_frequency(params: &ModelParams, link: LinkFn, radial: &RadialSpec, p: usize, n: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = stream(seed, &[]);
    let mut hits = 0;
    let (mut u, mut v) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..trials {
        for i in 0..n {
            u[i] = sample_projection(radial, p, &mut rng);
            v[i] = if rng.random::<f64>() < params.p_plus(link, u[i]) { 1.0 } else { -1.0 };
        }
        hits += univariate_separation(&u, &v).separable as usize;
    }
    hits as f64 / trials as f64
}

/// Exact univariate separation probability vs direct simulation at
/// `(n, p) = (20, 5)` for three links and three radial families.
pub fn formula_vs_simulation() -> Check {
    let (n, p, trials) = (20, 5, 100_000);
    let params = ModelParams::new(1.0, 0.0, 8.0).unwrap();
    let families = [RadialFamily::ChiDf, RadialFamily::Gamma { shape: 1.0 }, RadialFamily::ParetoI { tail: 3.5 }];
    let mut worst: f64 = 0.0;
    for (li, link) in [LinkFn::Logit, LinkFn::Probit, LinkFn::Cloglog].into_iter().enumerate() {
        for (fi, family) in families.into_iter().enumerate() {
            let radial = calibrate_radial(family, p, 1.0).map_err(|e| e.to_string())?;
            let mut rng = stream(1, &[li as u64, fi as u64]);
            let exact = univariate_separation_probability(&params, link, &radial, p, n, 1_000_000, &mut rng)
                .map_err(|e| e.to_string())?;
            let freq = simulated_frequency(&params, link, &radial, p, n, trials, 1000 + (li * 3 + fi) as u64);
            if !(exact.value > 0.01 && exact.value < 0.99) {
                return Err(format!("{} {}: uninformative probability {}", link.name(), family.name(), exact.value));
            }
            let se = (exact.value * (1.0 - exact.value) / trials as f64).sqrt().hypot(exact.se);
            let z = (freq - exact.value).abs() / se;
            if z > 3.0 {
                return Err(format!("{} {}: simulation {freq} vs formula {} ({z:.2} SE)", link.name(), family.name(), exact.value));
            }
            println!("{} {}: formula {:.4} ± {:.4}, simulation {freq:.4}", link.name(), family.name(), exact.value, exact.se);
            worst = worst.max(z);
        }
    }
    Ok(format!("9 cases agree, largest deviation {worst:.2} SE"))
}
