//! Command-line front end: `nldirac <subcommand> --config run.toml`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::concentration::{multiplicity_experiment, summarize, BarycenterConfig, ConcentrationError};
use crate::config::{ConfigError, RunConfig};
use crate::discretization::{assemble, spectral_split, DiscretizationError, Spinor};
use crate::energy::{EnergyContext, EnergyError};
use crate::model::{validate_f, validate_v};
use crate::nehari::{c_eps, ground_level_d, LevelEstimate, NehariError, NehariOptions, NehariSolver};
use crate::output::{svg_plot, Manifest, Series, Table};
use crate::row;
use crate::verification::{
    energy_gradient_check, gap_check, interval_convergence, lemma21_scan, lemma32_scan, reduced_gradient_check, OracleReport,
};

#[derive(Debug, Parser)]
#[command(name = "nldirac", version, about = "Ground states of nonlinear Dirac equations on metric graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `run.output`).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues of the discretized operator.
    Spectrum,
    /// Check the nonlinearity and potential assumptions.
    Validate,
    /// Ground state at `run.lambda`.
    Ground,
    /// Ground level over `run.lambdas`.
    Dcurve,
    /// Semiclassical level over `run.eps`.
    Ceps,
    /// Localized solutions near every well over `run.eps`.
    Concentrate,
    /// Run the independent oracles.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Validate => "validate",
            Command::Ground => "ground",
            Command::Dcurve => "dcurve",
            Command::Ceps => "ceps",
            Command::Concentrate => "concentrate",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("validation failed:\n{0}")]
    Validation(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Solver(_) => 2,
            _ => 1,
        }
    }
}

impl From<EnergyError> for RunError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Discretization(DiscretizationError::EigenResidual { .. }) => RunError::Solver(e.to_string()),
            other => RunError::Validation(other.to_string()),
        }
    }
}

impl From<NehariError> for RunError {
    fn from(e: NehariError) -> Self {
        match e {
            NehariError::AssumptionViolated(_) => RunError::Validation(e.to_string()),
            NehariError::Energy(inner) => inner.into(),
            other => RunError::Solver(other.to_string()),
        }
    }
}

impl From<DiscretizationError> for RunError {
    fn from(e: DiscretizationError) -> Self {
        EnergyError::Discretization(e).into()
    }
}

/// Everything a subcommand produces, before anything touches the disk.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub tables: Vec<(String, Table)>,
    pub svgs: Vec<(String, String)>,
    pub report: String,
    pub seeds: Vec<u64>,
    /// 0 on success, 1 if a reported check failed.
    pub exit_code: u8,
}

impl Artifacts {
    fn table(&mut self, name: &str, t: Table) {
        self.tables.push((name.into(), t));
    }

    fn svg(&mut self, cfg: &RunConfig, name: &str, s: String) {
        if cfg.run.svg {
            self.svgs.push((name.into(), s));
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.report.push_str(s.as_ref());
        self.report.push('\n');
    }

    pub fn csv(&self, name: &str) -> Option<String> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t.to_csv())
    }
}

fn context(cfg: &RunConfig, with_potential: bool) -> Result<EnergyContext, RunError> {
    let g = cfg.graph.build().map_err(|e| RunError::Validation(format!("graph: {e}")))?;
    let potential = if with_potential { cfg.potential.clone() } else { None };
    Ok(EnergyContext::new(g, cfg.solver, cfg.nonlinearity.build(), potential)?)
}

fn reference_context(cfg: &RunConfig) -> Result<EnergyContext, RunError> {
    match &cfg.run.reference_graph {
        Some(gc) => {
            let g = gc.build().map_err(|e| RunError::Validation(format!("reference graph: {e}")))?;
            Ok(EnergyContext::new(g, cfg.solver, cfg.nonlinearity.build(), None)?)
        }
        None => context(cfg, false),
    }
}

fn check_nonlinearity(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), RunError> {
    let rep = validate_f(&cfg.nonlinearity.build(), 10.0, 2001);
    if !rep.passed() {
        return Err(RunError::Validation(rep.to_text()));
    }
    out.seeds.extend((0..cfg.nehari.multistart as u64).map(|i| cfg.nehari.seed.wrapping_add(i)));
    Ok(())
}

fn profile_table(ctx: &EnergyContext, u: &Spinor) -> Table {
    let mut t = Table::new(&["edge", "s", "abs_u1", "abs_u2"]);
    for (p, a, b) in ctx.op.slot_moduli(u) {
        t.push(row![p.edge, p.s, a, b]);
    }
    t
}

fn profile_series(ctx: &EnergyContext, u: &Spinor, label: &str) -> Vec<Series> {
    let moduli = ctx.op.slot_moduli(u);
    (0..ctx.graph.edges.len())
        .map(|e| {
            let pts = moduli
                .iter()
                .filter(|(p, _, _)| p.edge == e)
                .map(|(p, a, b)| (p.s, (a * a + b * b).sqrt()))
                .collect();
            Series::line(&format!("{label}edge {e}"), pts)
        })
        .collect()
}

fn starts_table(est: &LevelEstimate) -> Table {
    let mut t = Table::new(&["start", "level", "status"]);
    for (i, r) in est.starts.iter().enumerate() {
        match r {
            Ok(l) => t.push(row![i, *l, "converged"]),
            Err(msg) => t.push(row![i, f64::NAN, msg.clone()]),
        }
    }
    t
}

fn spectrum(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    let g = cfg.graph.build().map_err(|e| RunError::Validation(format!("graph: {e}")))?;
    let op = assemble(&g, &cfg.solver)?;
    let split = spectral_split(&op)?;
    let mut idx: Vec<usize> = (0..split.dim()).collect();
    if let Some(n) = cfg.run.spectrum_count {
        idx.sort_by(|&a, &b| split.eigenvalues[a].abs().total_cmp(&split.eigenvalues[b].abs()).then(a.cmp(&b)));
        idx.truncate(n);
        idx.sort();
    }
    let mut t = Table::new(&["index", "lambda"]);
    for &k in &idx {
        t.push(row![k, split.eigenvalues[k]]);
    }
    let pts: Vec<(f64, f64)> = idx.iter().map(|&k| (k as f64, split.eigenvalues[k])).collect();
    let (x0, x1) = (pts.first().map_or(0.0, |p| p.0), pts.last().map_or(1.0, |p| p.0));
    let mc2 = cfg.solver.mc2();
    out.svg(
        cfg,
        "spectrum.svg",
        svg_plot(
            "Spectrum",
            "index",
            "eigenvalue",
            &[
                Series::markers("eigenvalues", pts),
                Series::line("+mc^2", vec![(x0, mc2), (x1, mc2)]),
                Series::line("-mc^2", vec![(x0, -mc2), (x1, -mc2)]),
            ],
        ),
    );
    out.table("spectrum.csv", t);
    let (min, bound) = gap_check(&split, &cfg.solver);
    out.line(format!("dimension            {}", split.dim()));
    out.line(format!("negative / positive  {} / {}", split.n_negative, split.n_positive()));
    out.line(format!("min |lambda|         {min}"));
    out.line(format!("gap bound            {bound} ({})", if min >= bound { "ok" } else { "violated" }));
    out.line(format!("hermiticity defect   {:e}", op.hermiticity_defect()));
    if min < bound {
        out.exit_code = 1;
    }
    Ok(out)
}

fn validate(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    let rep = validate_f(&cfg.nonlinearity.build(), 10.0, 2001);
    out.line(rep.to_text());
    let mut ok = rep.passed();
    if let Some(v) = &cfg.potential {
        let g = cfg.graph.build().map_err(|e| RunError::Validation(format!("graph: {e}")))?;
        let op = assemble(&g, &cfg.solver)?;
        let rep = validate_v(v, &g, &cfg.solver, &op.grid);
        out.line(rep.to_text());
        ok &= rep.passed();
    } else {
        out.line("potential: none configured");
    }
    out.exit_code = if ok { 0 } else { 1 };
    Ok(out)
}

fn ground(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    check_nonlinearity(cfg, &mut out)?;
    let ctx = context(cfg, false)?;
    let lambda = cfg.run.lambda;
    let est = ground_level_d(&ctx, lambda, &cfg.nehari)?;
    let p = &est.best.point;
    let mc2 = cfg.solver.mc2();
    let bound = (2.0 * mc2 * est.level / (mc2 + lambda.abs())).sqrt();
    let mut s = Table::new(&["lambda", "level", "spread", "best_start", "iterations", "nehari_residual", "minus_residual", "full_gradient", "plus_norm", "plus_bound"]);
    s.push(row![lambda, est.level, est.spread, est.best_start, est.best.iterations, p.nehari_residual, p.minus_residual, p.full_gradient, p.plus_norm, bound]);
    out.table("ground.csv", s);
    out.table("starts.csv", starts_table(&est));
    out.table("profile.csv", profile_table(&ctx, &p.u));
    out.svg(cfg, "profile.svg", svg_plot(&format!("|u| at lambda = {lambda}"), "s", "|u|", &profile_series(&ctx, &p.u, "")));
    out.line(format!("level          {}", est.level));
    out.line(format!("spread         {:e}", est.spread));
    out.line(format!("residuals      nehari {:e}, minus {:e}, full gradient {:e}", p.nehari_residual, p.minus_residual, p.full_gradient));
    out.line(format!("plus norm      {} (lower bound {bound})", p.plus_norm));
    Ok(out)
}

fn dcurve(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    check_nonlinearity(cfg, &mut out)?;
    let ctx = context(cfg, false)?;
    let mc2 = cfg.solver.mc2();
    let mut t = Table::new(&["lambda", "d", "spread", "converged_starts", "plus_norm", "plus_bound", "nehari_residual", "full_gradient"]);
    let mut pts = Vec::new();
    for &lambda in &cfg.run.lambdas {
        let est = ground_level_d(&ctx, lambda, &cfg.nehari)?;
        let p = &est.best.point;
        let bound = (2.0 * mc2 * est.level / (mc2 + lambda.abs())).sqrt();
        let ok = est.starts.iter().filter(|r| r.is_ok()).count();
        t.push(row![lambda, est.level, est.spread, ok, p.plus_norm, bound, p.nehari_residual, p.full_gradient]);
        pts.push((lambda, est.level));
    }
    let increasing = pts.windows(2).all(|w| w[1].1 > w[0].1);
    let jump = pts.windows(2).map(|w| (w[1].1 - w[0].1).abs() / w[0].1.min(w[1].1)).fold(0.0, f64::max);
    out.line(format!("strictly increasing        {increasing}"));
    out.line(format!("largest relative jump      {jump}"));
    out.table("dcurve.csv", t);
    out.svg(cfg, "dcurve.svg", svg_plot("Ground level", "lambda", "d", &[Series::line("d", pts.clone()), Series::markers("", pts)]));
    Ok(out)
}

/// `(d at the potential minimum, d at infinity)` on the reference graph.
fn reference_levels(cfg: &RunConfig, v0: f64) -> Result<(LevelEstimate, LevelEstimate), RunError> {
    let rctx = reference_context(cfg)?;
    let v_inf = cfg.potential.as_ref().map_or(0.0, |v| v.v_infinity);
    Ok((ground_level_d(&rctx, v0, &cfg.nehari)?, ground_level_d(&rctx, v_inf, &cfg.nehari)?))
}

fn potential_minimum(cfg: &RunConfig, ctx: &EnergyContext) -> Result<f64, RunError> {
    let v = cfg.potential.as_ref().ok_or_else(|| RunError::Validation("no potential configured".into()))?;
    let rep = validate_v(v, &ctx.graph, &ctx.params, &ctx.op.grid);
    if !rep.passed() {
        return Err(RunError::Validation(rep.to_text()));
    }
    Ok(rep.minima.iter().map(|m| m.1).fold(f64::INFINITY, f64::min))
}

fn ceps(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    check_nonlinearity(cfg, &mut out)?;
    let ctx = context(cfg, true)?;
    let v0 = potential_minimum(cfg, &ctx)?;
    for &eps in &cfg.run.eps {
        ctx.check_scale(eps)?;
    }
    let refs = if cfg.run.reference_levels { Some(reference_levels(cfg, v0)?) } else { None };
    let mut t = Table::new(&["eps", "c", "spread", "converged_starts", "gap_to_d_v0", "below_d_vinf", "nehari_residual", "full_gradient"]);
    let mut pts = Vec::new();
    let mut gaps = Vec::new();
    for &eps in &cfg.run.eps {
        let est = c_eps(&ctx, eps, &cfg.nehari)?;
        let p = &est.best.point;
        let ok = est.starts.iter().filter(|r| r.is_ok()).count();
        let (gap, below) = match &refs {
            Some((d0, dinf)) => ((est.level - d0.level).abs(), est.level < dinf.level),
            None => (f64::NAN, false),
        };
        t.push(row![eps, est.level, est.spread, ok, gap, below, p.nehari_residual, p.full_gradient]);
        pts.push((eps, est.level));
        gaps.push(gap);
    }
    out.table("ceps.csv", t);
    let mut series = vec![Series::line("c_eps", pts.clone()), Series::markers("", pts.clone())];
    if let Some((d0, dinf)) = &refs {
        let mut r = Table::new(&["lambda", "d", "spread"]);
        r.push(row![v0, d0.level, d0.spread]);
        r.push(row![cfg.potential.as_ref().map_or(f64::NAN, |v| v.v_infinity), dinf.level, dinf.spread]);
        out.table("reference.csv", r);
        let xs = (cfg.run.eps.last().copied().unwrap_or(0.0), cfg.run.eps.first().copied().unwrap_or(1.0));
        series.push(Series::line("d(V0)", vec![(xs.0, d0.level), (xs.1, d0.level)]));
        series.push(Series::line("d(Vinf)", vec![(xs.0, dinf.level), (xs.1, dinf.level)]));
        let nonincreasing = gaps.windows(2).all(|w| w[1] <= w[0]);
        out.line(format!("d(V0) = {}   d(Vinf) = {}", d0.level, dinf.level));
        out.line(format!("|c - d(V0)| nonincreasing   {nonincreasing}"));
        out.line(format!("final |c - d(V0)| / d(V0)   {}", gaps.last().copied().unwrap_or(f64::NAN) / d0.level));
        out.line(format!("c < d(Vinf) for all eps     {}", pts.iter().all(|p| p.1 < dinf.level)));
    }
    out.svg(cfg, "ceps.svg", svg_plot("Semiclassical level", "eps", "level", &series));
    Ok(out)
}

fn concentrate(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    check_nonlinearity(cfg, &mut out)?;
    let ctx = context(cfg, true)?;
    let v0 = potential_minimum(cfg, &ctx)?;
    for &eps in &cfg.run.eps {
        ctx.check_scale(eps)?;
    }
    let mut bary = BarycenterConfig::from_context(&ctx).map_err(|e| RunError::Validation(e.to_string()))?;
    if let Some(r0) = cfg.barycenter.r0 {
        bary.r0 = r0;
    }
    if let Some(rho0) = cfg.barycenter.rho0 {
        bary.rho0 = rho0;
    }
    bary.check().map_err(|e: ConcentrationError| RunError::Validation(e.to_string()))?;
    let records = multiplicity_experiment(&ctx, &cfg.run.eps, &bary, &cfg.nehari);
    let mut t = Table::new(&[
        "eps", "i", "level", "Qx", "Qy", "dist", "residual", "accepted", "full_gradient", "x_edge", "x_s", "Qx_over_eps", "Qy_over_eps", "reason",
    ]);
    for r in &records {
        for w in &r.wells {
            t.push(row![
                r.eps,
                w.well,
                w.level,
                w.q[0],
                w.q[1],
                w.distance,
                w.nehari_residual,
                w.accepted,
                w.full_gradient,
                w.x_eps.edge,
                w.x_eps.s,
                w.q_over_eps[0],
                w.q_over_eps[1],
                w.reason.clone().unwrap_or_default()
            ]);
        }
    }
    out.table("records.csv", t);
    let mut p = Table::new(&["eps", "i", "j", "relative_l2_distance"]);
    for r in &records {
        for &(i, j, d) in &r.pairwise {
            p.push(row![r.eps, i, j, d]);
        }
    }
    out.table("pairwise.csv", p);
    if let Some(last) = records.last() {
        let series: Vec<Series> = last
            .states
            .iter()
            .flat_map(|(i, u)| profile_series(&ctx, u, &format!("well {i}, ")))
            .collect();
        out.svg(cfg, "profiles.svg", svg_plot(&format!("|u| at eps = {}", last.eps), "s", "|u|", &series));
    }
    let mut b = Table::new(&["rho0", "r0"]);
    b.push(row![bary.rho0, bary.r0]);
    out.table("barycenter.csv", b);
    let d_v0 = if cfg.run.reference_levels {
        let rctx = reference_context(cfg)?;
        let est = ground_level_d(&rctx, v0, &cfg.nehari)?;
        let mut r = Table::new(&["lambda", "d", "spread"]);
        r.push(row![v0, est.level, est.spread]);
        out.table("reference.csv", r);
        out.line(format!("d(V0)                           {}", est.level));
        est.level
    } else {
        f64::NAN
    };
    let s = summarize(&records, &bary, d_v0, 0.1);
    out.line(format!("rho0 = {}   r0 = {}", bary.rho0, bary.r0));
    out.line(format!("all accepted                    {}", s.all_accepted));
    out.line(format!("min pairwise relative distance  {}", s.min_pairwise));
    out.line(format!("|Q - z| nonincreasing (10%)     {}", s.distances_nonincreasing));
    out.line(format!("final |Q - z| < rho0 / 2        {}", s.final_within_half_rho0));
    out.line(format!("|level - d(V0)| decreasing      {}", s.levels_approach_d));
    if !s.all_accepted {
        out.exit_code = 2;
    }
    Ok(out)
}

fn record(out: &mut Artifacts, t: &mut Table, all: &mut bool, rep: OracleReport, label: &str) {
    out.line(format!("{label}: {rep}"));
    *all &= rep.passed();
    let (lo, hi) = rep.order.unwrap_or((f64::NAN, f64::NAN));
    t.push(row![format!("{label}: {}", rep.name), rep.passed(), rep.samples, rep.worst_margin, lo, hi]);
}

fn verify(cfg: &RunConfig) -> Result<Artifacts, RunError> {
    let mut out = Artifacts::default();
    let n = cfg.run.verify_samples;
    let seed = cfg.run.verify_seed;
    out.seeds.push(seed);
    let mut all = true;
    let mut t = Table::new(&["oracle", "passed", "samples", "worst_margin", "order_min", "order_max"]);
    for p in [3.0, 4.0, 6.0] {
        let nl = crate::model::Nonlinearity::pure_power(p);
        record(&mut out, &mut t, &mut all, lemma32_scan(&nl, n, seed), &format!("p = {p}"));
    }
    let pi = std::f64::consts::PI;
    let (errs, orders) = interval_convergence(pi, cfg.solver.mass, cfg.solver.c, &[pi / 200.0, pi / 400.0], 20)?;
    let spectral_ok = errs[1] < 1e-3 && orders[0] >= 1.9;
    all &= spectral_ok;
    out.line(format!(
        "interval spectrum: {} max relative error {:e} at h = pi/400, order {:.3}",
        if spectral_ok { "ok  " } else { "FAIL" },
        errs[1],
        orders[0]
    ));
    t.push(row!["interval spectrum", spectral_ok, 20usize, errs[1], orders[0], orders[0]]);
    for (name, spec) in [
        ("interval", crate::graph::GraphSpec::interval(pi)),
        ("star", crate::graph::GraphSpec::star(3, 20.0)),
        ("tadpole", crate::graph::GraphSpec::tadpole(2.0, 15.0)),
    ] {
        let g = crate::graph::build_graph(&spec).map_err(|e| RunError::Validation(e.to_string()))?;
        let op = assemble(&g, &cfg.solver)?;
        let split = spectral_split(&op)?;
        let (min, bound) = gap_check(&split, &cfg.solver);
        all &= min >= bound;
        out.line(format!("{name} gap: {} min |lambda| = {min} >= {bound}", if min >= bound { "ok  " } else { "FAIL" }));
        t.push(row![format!("{name} gap"), min >= bound, 1usize, min - bound, f64::NAN, f64::NAN]);
        record(&mut out, &mut t, &mut all, lemma21_scan(&op, &split, 1000, seed), name);
    }
    let ctx = context(cfg, false)?;
    let energy = ctx.functional(crate::energy::Functional::Autonomous { lambda: cfg.run.lambda })?;
    record(&mut out, &mut t, &mut all, energy_gradient_check(&energy, 50, [4e-3, 2e-3], seed), "configured graph");
    let solver = NehariSolver::new(&energy, NehariOptions { ..cfg.nehari })?;
    record(&mut out, &mut t, &mut all, reduced_gradient_check(&solver, 50, [2e-2, 1e-2], seed), "configured graph");
    out.table("verify.csv", t);
    out.exit_code = if all { 0 } else { 1 };
    Ok(out)
}

/// Runs a subcommand without touching the filesystem.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<Artifacts, RunError> {
    match command {
        Command::Spectrum => spectrum(cfg),
        Command::Validate => validate(cfg),
        Command::Ground => ground(cfg),
        Command::Dcurve => dcurve(cfg),
        Command::Ceps => ceps(cfg),
        Command::Concentrate => concentrate(cfg),
        Command::Verify => verify(cfg),
    }
}

/// Writes tables, plots, the text report and `manifest.json` into `dir`.
pub fn write_artifacts(dir: &Path, command: Command, cfg: &RunConfig, art: &Artifacts, seconds: f64) -> Result<(), RunError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest::new(command.name(), cfg);
    for (name, t) in &art.tables {
        t.write(&dir.join(name))?;
        manifest.files.push(name.into());
    }
    for (name, s) in &art.svgs {
        std::fs::write(dir.join(name), s)?;
        manifest.files.push(name.into());
    }
    let report = format!("{}.txt", command.name());
    std::fs::write(dir.join(&report), &art.report)?;
    manifest.files.push(report.into());
    manifest.seeds = art.seeds.clone();
    manifest.wall_time_s = seconds;
    manifest.exit_code = art.exit_code as i32;
    std::fs::write(dir.join("manifest.json"), manifest.to_json())?;
    Ok(())
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("NLDIRAC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn run(cli: Cli) -> Result<u8, RunError> {
    configure_threads();
    let path = cli.config.ok_or_else(|| RunError::Validation("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(o) = cli.output {
        cfg.run.output = o;
    }
    let start = Instant::now();
    let art = execute(cli.command, &cfg)?;
    write_artifacts(&cfg.run.output, cli.command, &cfg, &art, start.elapsed().as_secs_f64())?;
    print!("{}", art.report);
    Ok(art.exit_code)
}

pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
