use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use phaseglm_core::elliptical::{carleman_from_even_moments, projection_moment};
use phaseglm_core::hmle::{hmle_convergence_profile, HmleSettings, SolverOptions};
use phaseglm_core::radial::{calibrate_radial, RadialError};
use phaseglm_core::seeding::{derive_seed, stream};
use phaseglm_core::separability::detect_separation_xy;
use phaseglm_core::sweep::{export_heatmap, export_summary, run_sweep, summarize_transition, theory_curve, TheoryCurve};
use phaseglm_core::theory::{
    check_pg_condition, check_pgsuff, estimate_g_functions, simulate_univariate_separation,
    univariate_separation_probability, Combination,
};
use phaseglm_core::{LinkFn, ModelParams, RadialFamily, RadialSpec, SweepConfig};
use serde::Serialize;

use crate::config::{Config, Entry, Profile};
use crate::dataset::read_dataset;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Everything a command needs besides its own arguments.
pub struct RunContext {
    pub command: &'static str,
    pub config: Config,
    pub profile: Profile,
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub started: Instant,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    profile: Profile,
    master_seed: u64,
    threads: usize,
    config: &'a BTreeMap<String, Entry>,
    wall_time_seconds: f64,
    outputs: Vec<String>,
}

impl RunContext {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn prepare_out_dir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    /// Write `manifest.json` listing `outputs` (file names inside the output directory).
    fn finish(&self, mut outputs: Vec<String>) -> Result<(), CliError> {
        for name in &outputs {
            if !self.path(name).is_file() {
                return Err(CliError::runtime(format!("expected output {name} was not written")));
            }
        }
        outputs.push(MANIFEST.to_string());
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            profile: self.profile,
            master_seed: self.seed,
            threads: self.threads,
            config: self.config.entries(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            outputs,
        };
        write_text(&self.path(MANIFEST), |out| {
            serde_json::to_writer_pretty(&mut *out, &manifest).map_err(io::Error::other)?;
            writeln!(out)
        })
    }
}

fn write_text(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let wrap = |e: io::Error| CliError::runtime(format!("cannot write {}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(wrap)?);
    body(&mut out).and_then(|_| out.flush()).map_err(wrap)
}

/// Plain decimal for ordinary magnitudes, scientific notation otherwise.
fn num(v: f64) -> String {
    if v != 0.0 && v.is_finite() && !(1e-6..1e15).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

struct Model {
    alpha0: f64,
    beta0: f64,
    link: LinkFn,
    family: RadialFamily,
}

fn model(cfg: &Config) -> Result<Model, CliError> {
    Ok(Model {
        alpha0: cfg.positive_f64("model.alpha0")?,
        beta0: cfg.finite_f64("model.beta0")?,
        link: cfg.link()?,
        family: cfg.family()?,
    })
}

impl Model {
    fn params(&self, gamma0: f64, key: &str) -> Result<ModelParams, CliError> {
        ModelParams::new(self.alpha0, self.beta0, gamma0).map_err(|e| CliError::config(key, e.to_string()))
    }

    fn radial(&self, p: usize) -> Result<RadialSpec, CliError> {
        calibrate_radial(self.family, p, self.alpha0).map_err(|e| match e {
            RadialError::NoSecondMoment { .. } => CliError::config("radial.shape", e.to_string()),
            other => CliError::runtime(other),
        })
    }
}

fn nonnegative(values: Vec<f64>, key: &str) -> Result<Vec<f64>, CliError> {
    if values.iter().any(|&v| v < 0.0) {
        return Err(CliError::config(key, "entries must be nonnegative"));
    }
    Ok(values)
}

fn hmle_settings(cfg: &Config) -> Result<HmleSettings, CliError> {
    Ok(HmleSettings {
        n: cfg.positive_usize("hmle.n")?,
        replicates: cfg.positive_usize("hmle.replicates")?,
        solver: SolverOptions {
            tol: cfg.positive_f64("hmle.tol")?,
            max_iter: cfg.positive_usize("hmle.max_iter")?,
            ..SolverOptions::default()
        },
    })
}

/// Dimensions `round(κ·n)` for the ratios under `key`.
fn dims_from_ratios(cfg: &Config, key: &str, n: usize) -> Result<Vec<usize>, CliError> {
    cfg.increasing_list(key)?
        .into_iter()
        .map(|k| {
            let p = (k * n as f64).round();
            if p >= 1.0 {
                Ok(p as usize)
            } else {
                Err(CliError::config(key, format!("ratio {k} gives dimension 0 at n = {n}")))
            }
        })
        .collect()
}

pub fn sweep(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let m = model(cfg)?;
    let config = SweepConfig {
        n: cfg.positive_usize("sweep.n")?,
        gamma0_grid: nonnegative(cfg.increasing_list("sweep.gamma0")?, "sweep.gamma0")?,
        kappa_grid: cfg.increasing_list("sweep.kappa")?,
        replicates: cfg.positive_usize("sweep.replicates")?,
        link: m.link,
        family: m.family,
        alpha0: m.alpha0,
        beta0: m.beta0,
        mix: cfg.mix()?,
        master_seed: ctx.seed,
        tolerance: cfg.tolerance()?,
    };
    if config.kappa_grid.len() < 2 {
        return Err(CliError::config("sweep.kappa", "need at least two ratios to locate a transition"));
    }
    if let Some(&k) = config.kappa_grid.iter().find(|&&k| config.p_for(k) < 1) {
        return Err(CliError::config("sweep.kappa", format!("ratio {k} gives dimension 0 at n = {}", config.n)));
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    m.radial(config.p_for(*config.kappa_grid.last().unwrap()))?;
    let overlay = cfg.bool("sweep.theory")?;
    let theory_inputs = if overlay {
        let settings = hmle_settings(cfg)?;
        Some((dims_from_ratios(cfg, "theory.kappa", settings.n)?, settings))
    } else {
        None
    };
    ctx.prepare_out_dir()?;

    info!(
        "sweep: {} x {} cells, {} replicates, n = {}",
        config.gamma0_grid.len(),
        config.kappa_grid.len(),
        config.replicates,
        config.n
    );
    let grid = run_sweep(&config).map_err(CliError::runtime)?;
    let mut outputs = vec!["grid.csv".to_string(), "summary.csv".to_string(), "heatmap.ppm".to_string()];
    let theory: Option<TheoryCurve> = match theory_inputs {
        Some((dims, settings)) => {
            info!("theory overlay at {} signal strengths", config.gamma0_grid.len());
            let curve = theory_curve(
                &config.gamma0_grid,
                m.alpha0,
                m.beta0,
                m.link,
                m.family,
                &dims,
                &settings,
                derive_seed(ctx.seed, &[1]),
            )
            .map_err(CliError::runtime)?;
            write_text(&ctx.path("theory.csv"), |out| curve.write_csv(out))?;
            outputs.push("theory.csv".to_string());
            Some(curve)
        }
        None => None,
    };
    let summary = summarize_transition(&grid, theory.as_ref()).map_err(CliError::runtime)?;
    export_heatmap(&grid, theory.as_ref(), &ctx.path("grid.csv"), &ctx.path("heatmap.ppm")).map_err(CliError::runtime)?;
    export_summary(&summary, &ctx.path("summary.csv")).map_err(CliError::runtime)?;
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    println!("MIW {}", show(summary.miw));
    println!("MD {}", show(summary.md));
    ctx.finish(outputs)
}

pub fn hmle(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let m = model(cfg)?;
    let settings = hmle_settings(cfg)?;
    let gamma0 = nonnegative(cfg.list("hmle.gamma0")?, "hmle.gamma0")?;
    let dims = match cfg.raw("hmle.p") {
        Some(_) => cfg.usize_list("hmle.p")?,
        None => dims_from_ratios(cfg, "hmle.kappa", settings.n)?,
    };
    let params = gamma0.iter().map(|&g| m.params(g, "hmle.gamma0")).collect::<Result<Vec<_>, _>>()?;
    m.radial(*dims.iter().max().unwrap())?;
    ctx.prepare_out_dir()?;

    let mut rows = Vec::new();
    let mut plateaus = Vec::new();
    for (gi, p) in params.iter().enumerate() {
        info!("h_MLE at gamma0 = {} over {} dimensions", p.gamma0, dims.len());
        let profile = hmle_convergence_profile(p, m.link, m.family, &dims, &settings, derive_seed(ctx.seed, &[gi as u64]))
            .map_err(CliError::runtime)?;
        plateaus.push((p.gamma0, profile.plateau));
        rows.extend(profile.entries.into_iter().map(|e| (p.gamma0, e)));
    }
    write_text(&ctx.path("hmle.csv"), |out| {
        writeln!(out, "gamma0,kappa,p,n,replicates,h_mle,spread,unconverged")?;
        for (g, e) in &rows {
            let kappa = e.p_used as f64 / e.n as f64;
            writeln!(out, "{g},{kappa},{},{},{},{},{},{}", e.p_used, e.n, e.replicates, e.value, e.spread, e.unconverged)?;
        }
        Ok(())
    })?;
    write_text(&ctx.path("hmle_plateau.csv"), |out| {
        writeln!(out, "gamma0,h_mle")?;
        for (g, h) in &plateaus {
            writeln!(out, "{g},{h}")?;
        }
        Ok(())
    })?;
    for (g, h) in &plateaus {
        println!("gamma0 {g}: h_MLE {h:.4}");
    }
    ctx.finish(vec!["hmle.csv".into(), "hmle_plateau.csv".into()])
}

pub fn separate(path: &Path, tolerance: &Config) -> Result<(), CliError> {
    let data = read_dataset(path)?;
    let tol = tolerance.tolerance()?;
    let status = detect_separation_xy(&data.x, &data.y, &tol).map_err(CliError::runtime)?;
    println!("kind: {}", status.kind);
    println!("mle_exists: {}", status.mle_exists());
    match &status.certificate {
        Some(c) => println!("certificate: {}", c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
        None => println!("certificate: none"),
    }
    println!("lp_objective: {}", status.lp_objective);
    println!("n: {}", data.y.len());
    println!("p: {}", data.x.ncols());
    Ok(())
}

/// Moments of the projected covariate up to the first divergent one, with
/// the Carleman reading of the even moments when all of them exist.
struct MomentReport {
    p: usize,
    moments: Vec<f64>,
    partial_sums: Vec<f64>,
    verdict: String,
}

fn moment_report(m: &Model, cfg: &Config) -> Result<MomentReport, CliError> {
    let p = cfg.positive_usize("moments.p")?;
    let max_order = cfg.positive_usize("moments.max_order")?;
    let radial = m.radial(p)?;
    let mut moments = Vec::new();
    for k in 1..=2 * max_order as u32 {
        match projection_moment(&radial, p, k) {
            Ok(v) if v.is_finite() => moments.push(v),
            Ok(_) | Err(RadialError::NoMoment { .. }) => break,
            Err(e) => return Err(CliError::runtime(e)),
        }
    }
    if moments.len() < 2 * max_order {
        let verdict = format!("moments-diverge (order {} is infinite)", moments.len() + 1);
        return Ok(MomentReport { p, moments, partial_sums: Vec::new(), verdict });
    }
    let even: Vec<f64> = moments.iter().skip(1).step_by(2).copied().collect();
    let (partial_sums, verdict) = carleman_from_even_moments(&even);
    Ok(MomentReport { p, moments, partial_sums, verdict: verdict.as_str().to_string() })
}

fn write_moment_files(ctx: &RunContext, report: &MomentReport) -> Result<Vec<String>, CliError> {
    write_text(&ctx.path("moments.csv"), |out| {
        writeln!(out, "order,moment")?;
        for (i, v) in report.moments.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, num(*v))?;
        }
        Ok(())
    })?;
    write_text(&ctx.path("carleman.csv"), |out| {
        writeln!(out, "k,even_moment,partial_sum")?;
        for (i, s) in report.partial_sums.iter().enumerate() {
            writeln!(out, "{},{},{}", i + 1, num(report.moments[2 * i + 1]), num(*s))?;
        }
        Ok(())
    })?;
    Ok(vec!["moments.csv".into(), "carleman.csv".into()])
}

pub fn moments(ctx: &RunContext) -> Result<(), CliError> {
    let m = model(&ctx.config)?;
    let report = moment_report(&m, &ctx.config)?;
    ctx.prepare_out_dir()?;
    let outputs = write_moment_files(ctx, &report)?;
    println!("carleman at p = {}: {}", report.p, report.verdict);
    ctx.finish(outputs)
}

pub fn check(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let m = model(cfg)?;
    let p = cfg.positive_usize("check.p")?;
    let params = m.params(cfg.finite_f64("check.gamma0")?, "check.gamma0")?;
    let x_grid = cfg.list("check.x_grid")?;
    let mc = cfg.positive_usize("check.mc_samples")?;
    let n_list = cfg.usize_list("check.n_list")?;
    let sstd_n = cfg.usize_list("check.sstd_n")?;
    let trials = cfg.positive_usize("check.sim_trials")?;
    let radial = m.radial(p)?;
    let moments = moment_report(&m, cfg)?;
    ctx.prepare_out_dir()?;

    info!("G-functions on {} points from {mc} draws", x_grid.len());
    let g = estimate_g_functions(&params, m.link, &radial, p, &x_grid, mc, &mut stream(ctx.seed, &[0])).map_err(CliError::runtime)?;
    write_text(&ctx.path("g_functions.csv"), |out| g.write_csv(out))?;
    let suff = check_pgsuff(&g);

    info!("pG table for {} sample sizes", n_list.len());
    let table = check_pg_condition(&params, m.link, &radial, p, &n_list, mc, &mut stream(ctx.seed, &[1])).map_err(CliError::runtime)?;
    write_text(&ctx.path("pg_table.csv"), |out| table.write_csv(out))?;

    let mut outputs = vec!["g_functions.csv".to_string(), "pg_table.csv".to_string()];
    outputs.extend(write_moment_files(ctx, &moments)?);

    let mut comparisons = Vec::new();
    for (i, &n) in sstd_n.iter().enumerate() {
        info!("separation probability at n = {n}: formula vs {trials} simulated datasets");
        let formula = univariate_separation_probability(&params, m.link, &radial, p, n, mc, &mut stream(ctx.seed, &[2, i as u64]))
            .map_err(CliError::runtime)?;
        let sim = simulate_univariate_separation(&params, m.link, &radial, p, n, trials, &mut stream(ctx.seed, &[3, i as u64]))
            .map_err(CliError::runtime)?;
        let diff = (formula.value - sim.value).abs();
        let se = formula.se.hypot(sim.se);
        let z = if diff == 0.0 { 0.0 } else { diff / se };
        comparisons.push((n, formula, sim, z));
    }
    write_text(&ctx.path("separation_probability.csv"), |out| {
        writeln!(out, "n,p,formula,formula_se,simulation,simulation_se,z")?;
        for (n, f, s, z) in &comparisons {
            writeln!(out, "{n},{p},{},{},{},{},{}", f.value, f.se, s.value, s.se, z)?;
        }
        Ok(())
    })?;
    outputs.push("separation_probability.csv".into());

    let combination = match suff.combination {
        Combination::MinusPlus => "G_minus+Gbar_plus",
        Combination::PlusMinus => "G_plus+Gbar_minus",
    };
    let mut verdicts = vec![
        format!("pgsuff: {}", if suff.holds { "holds" } else { "fails" }),
        format!("pgsuff_sup: {}", suff.sup),
        format!("pgsuff_argmax: {}", suff.argmax),
        format!("pgsuff_combination: {combination}"),
        format!("pgsuff_se: {}", suff.se),
        format!("pg: {}", if table.decreasing { "decreasing" } else { "not-decreasing" }),
        format!("carleman: {}", moments.verdict),
        format!("carleman_p: {}", moments.p),
    ];
    for (n, _, _, z) in &comparisons {
        verdicts.push(format!("separation_probability_n{n}: {}", if *z <= 3.0 { "agrees" } else { "disagrees" }));
    }
    write_text(&ctx.path("verdicts.txt"), |out| verdicts.iter().try_for_each(|line| writeln!(out, "{line}")))?;
    outputs.push("verdicts.txt".into());
    for line in &verdicts {
        println!("{line}");
    }
    ctx.finish(outputs)
}
