//! Barycenter map, localized searches near each well and the ε sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::Spinor;
use crate::energy::{EnergyContext, EnergyError, Functional};
use crate::graph::{GraphError, GraphPoint, Point2};
use crate::model::validate_v;
use crate::nehari::{bump_direction, par_map, GroundState, NehariError, NehariOptions, NehariSolver};

#[derive(Debug, Error)]
pub enum ConcentrationError {
    #[error("barycenter of the zero spinor")]
    ZeroSpinor,
    #[error("no potential or it failed validation: {0}")]
    BadPotential(String),
    #[error("invalid barycenter configuration: {0}")]
    BadConfig(String),
    #[error("well index {0} out of range")]
    NoSuchWell(usize),
    #[error("search for well {} at eps = {} converged outside its ball (|Q - z| = {:.3e} >= {:.3e})", .row.well, .eps, .row.distance, .rho0)]
    Outside { eps: f64, rho0: f64, row: Box<WellResult> },
    #[error("search for well {} at eps = {} did not converge (gradient {:.3e})", .row.well, .eps, .row.full_gradient)]
    NotConverged { eps: f64, row: Box<WellResult> },
    #[error(transparent)]
    Nehari(#[from] NehariError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Truncation of the plane to the closed `r0` ball.
pub fn chi(x: Point2, r0: f64) -> Point2 {
    let n = x[0].hypot(x[1]);
    if n <= r0 {
        x
    } else {
        [r0 * x[0] / n, r0 * x[1] / n]
    }
}

fn dist(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Barycenter `Q_ε(u)` of the collocated density at ε-scaled embedded positions.
pub fn barycenter_q(ctx: &EnergyContext, eps: f64, r0: f64, u: &Spinor) -> Result<Point2, ConcentrationError> {
    let rho = ctx.op.slot_density(u);
    let (mut num, mut mass) = ([0.0, 0.0], 0.0);
    for (slot, r) in ctx.op.grid.slots.iter().zip(&rho) {
        let x = ctx.graph.centered_position(slot.location);
        let c = chi([eps * x[0], eps * x[1]], r0);
        let m = slot.weight * r;
        num[0] += m * c[0];
        num[1] += m * c[1];
        mass += m;
    }
    if !(mass > 0.0) {
        return Err(ConcentrationError::ZeroSpinor);
    }
    Ok([num[0] / mass, num[1] / mass])
}

/// A potential minimum with its embedded position relative to the origin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WellMinimum {
    pub point: GraphPoint,
    pub z: Point2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BarycenterConfig {
    pub r0: f64,
    pub rho0: f64,
    pub minima: Vec<WellMinimum>,
}

impl BarycenterConfig {
    /// Defaults `ρ0 = min|z_i − z_j| / 3` and `r0 = 2 max|z_i|` from the
    /// validated minima of the context's potential.
    pub fn from_context(ctx: &EnergyContext) -> Result<Self, ConcentrationError> {
        let v = ctx.potential.as_ref().ok_or_else(|| ConcentrationError::BadPotential("no potential".into()))?;
        let report = validate_v(v, &ctx.graph, &ctx.params, &ctx.op.grid);
        if !report.passed() {
            return Err(ConcentrationError::BadPotential(report.to_text()));
        }
        let minima: Vec<WellMinimum> = report
            .minima
            .iter()
            .map(|&(p, _)| WellMinimum { point: p, z: ctx.graph.centered_position(p) })
            .collect();
        let mut sep = f64::INFINITY;
        for (i, a) in minima.iter().enumerate() {
            for b in &minima[i + 1..] {
                sep = sep.min(dist(a.z, b.z));
            }
        }
        let far = minima.iter().map(|m| m.z[0].hypot(m.z[1])).fold(0.0, f64::max);
        let rho0 = if sep.is_finite() { sep / 3.0 } else { far.max(1.0) / 3.0 };
        let cfg = BarycenterConfig { r0: 2.0 * far.max(rho0), rho0, minima };
        cfg.check()?;
        Ok(cfg)
    }

    /// Disjoint `ρ0` balls inside the `r0` ball.
    pub fn check(&self) -> Result<(), ConcentrationError> {
        if !(self.r0 > 0.0 && self.rho0 > 0.0) {
            return Err(ConcentrationError::BadConfig("radii must be positive".into()));
        }
        for (i, a) in self.minima.iter().enumerate() {
            if a.z[0].hypot(a.z[1]) + self.rho0 > self.r0 {
                return Err(ConcentrationError::BadConfig(format!("ball {i} leaves the r0 ball")));
            }
            for (j, b) in self.minima.iter().enumerate().skip(i + 1) {
                if dist(a.z, b.z) <= 2.0 * self.rho0 {
                    return Err(ConcentrationError::BadConfig(format!("balls {i} and {j} overlap")));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one localized search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WellResult {
    pub well: usize,
    pub level: f64,
    pub q: Point2,
    /// `|Q_ε − z_i|`.
    pub distance: f64,
    pub nehari_residual: f64,
    pub full_gradient: f64,
    pub iterations: usize,
    /// Grid location of the largest collocated density.
    pub x_eps: GraphPoint,
    /// `Q_ε / ε`.
    pub q_over_eps: Point2,
    pub accepted: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConcentrationRecord {
    pub eps: f64,
    pub wells: Vec<WellResult>,
    /// `(i, j, ‖u_i − u_j‖ / max(‖u_i‖, ‖u_j‖))` over wells with a solution.
    pub pairwise: Vec<(usize, usize, f64)>,
    /// Accepted solutions by well index.
    #[serde(skip)]
    pub states: Vec<(usize, Spinor)>,
}

fn argmax_location(ctx: &EnergyContext, u: &Spinor) -> GraphPoint {
    let rho = ctx.op.slot_density(u);
    let k = (0..rho.len()).max_by(|&a, &b| rho[a].total_cmp(&rho[b])).unwrap_or(0);
    ctx.op.grid.slots[k].location
}

/// Minimizes on the sphere from a bump at `z_i / ε` and accepts the result
/// iff it converged with `|Q_ε − z_i| < ρ0`.
pub fn localized_search(
    ctx: &EnergyContext,
    eps: f64,
    well: usize,
    cfg: &BarycenterConfig,
    opts: &NehariOptions,
) -> Result<(GroundState, WellResult), ConcentrationError> {
    let target = cfg.minima.get(well).ok_or(ConcentrationError::NoSuchWell(well))?;
    ctx.check_scale(eps)?;
    let energy = ctx.functional(Functional::Semiclassical { eps })?;
    let solver = NehariSolver::new(&energy, *opts)?;
    let seed = bump_direction(ctx, ctx.graph.undilate(target.point, eps)?, opts.bump_width)?;
    let gs = solver.minimize_sphere(&seed)?;
    let q = barycenter_q(ctx, eps, cfg.r0, &gs.point.u)?;
    let distance = dist(q, target.z);
    let mut row = WellResult {
        well,
        level: gs.level,
        q,
        distance,
        nehari_residual: gs.point.nehari_residual,
        full_gradient: gs.point.full_gradient,
        iterations: gs.iterations,
        x_eps: argmax_location(ctx, &gs.point.u),
        q_over_eps: [q[0] / eps, q[1] / eps],
        accepted: false,
        reason: None,
    };
    if !(gs.converged() && gs.point.within(opts.tol_nehari)) {
        row.reason = Some("not converged".into());
        return Err(ConcentrationError::NotConverged { eps, row: Box::new(row) });
    }
    if distance >= cfg.rho0 {
        row.reason = Some("outside the well ball".into());
        return Err(ConcentrationError::Outside { eps, rho0: cfg.rho0, row: Box::new(row) });
    }
    row.accepted = true;
    Ok((gs, row))
}

/// One record per ε, wells searched independently; failures become rejected rows.
pub fn multiplicity_experiment(
    ctx: &EnergyContext,
    eps_list: &[f64],
    cfg: &BarycenterConfig,
    opts: &NehariOptions,
) -> Vec<ConcentrationRecord> {
    let k = cfg.minima.len();
    let cells = par_map(eps_list.len() * k, |c| {
        let (eps, i) = (eps_list[c / k], c % k);
        localized_search(ctx, eps, i, cfg, opts)
    });
    let mut out = Vec::new();
    let mut cells = cells.into_iter();
    for &eps in eps_list {
        let mut wells = Vec::new();
        let mut solutions: Vec<(usize, Spinor)> = Vec::new();
        for i in 0..k {
            match cells.next().expect("one cell per (eps, well)") {
                Ok((gs, row)) => {
                    solutions.push((i, gs.point.u));
                    wells.push(row);
                }
                Err(ConcentrationError::Outside { row, .. }) | Err(ConcentrationError::NotConverged { row, .. }) => {
                    wells.push(*row)
                }
                Err(e) => wells.push(WellResult {
                    well: i,
                    level: f64::NAN,
                    q: [f64::NAN; 2],
                    distance: f64::NAN,
                    nehari_residual: f64::NAN,
                    full_gradient: f64::NAN,
                    iterations: 0,
                    x_eps: cfg.minima[i].point,
                    q_over_eps: [f64::NAN; 2],
                    accepted: false,
                    reason: Some(e.to_string()),
                }),
            }
        }
        let mut pairwise = Vec::new();
        for (a, (i, ui)) in solutions.iter().enumerate() {
            for (j, uj) in &solutions[a + 1..] {
                let d = ctx.op.l2_norm(&ui.sub(uj)) / ctx.op.l2_norm(ui).max(ctx.op.l2_norm(uj));
                pairwise.push((*i, *j, d));
            }
        }
        out.push(ConcentrationRecord { eps, wells, pairwise, states: solutions });
    }
    out
}

/// `true` if each value is at most `(1 + band)` times its predecessor.
pub fn nonincreasing_within(values: &[f64], band: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + band) + 1e-12)
}

/// Trend checks over a sweep ordered by decreasing ε.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplicitySummary {
    pub all_accepted: bool,
    pub min_pairwise: f64,
    pub distances_nonincreasing: bool,
    pub final_within_half_rho0: bool,
    pub levels_approach_d: bool,
}

pub fn summarize(records: &[ConcentrationRecord], cfg: &BarycenterConfig, d_v0: f64, band: f64) -> MultiplicitySummary {
    let k = cfg.minima.len();
    let all_accepted = records.iter().all(|r| r.wells.len() == k && r.wells.iter().all(|w| w.accepted));
    let min_pairwise = records
        .iter()
        .flat_map(|r| r.pairwise.iter().map(|p| p.2))
        .fold(f64::INFINITY, f64::min);
    let column = |i: usize, f: &dyn Fn(&WellResult) -> f64| -> Vec<f64> {
        records.iter().filter_map(|r| r.wells.iter().find(|w| w.well == i)).map(f).collect()
    };
    let mut distances_nonincreasing = all_accepted;
    let mut levels_approach_d = all_accepted;
    let mut final_within_half_rho0 = all_accepted;
    for i in 0..k {
        let d = column(i, &|w| w.distance);
        let gap = column(i, &|w| (w.level - d_v0).abs());
        distances_nonincreasing &= nonincreasing_within(&d, band);
        levels_approach_d &= gap.windows(2).all(|w| w[1] < w[0]);
        final_within_half_rho0 &= d.last().is_some_and(|&x| x < 0.5 * cfg.rho0);
    }
    MultiplicitySummary { all_accepted, min_pairwise, distances_nonincreasing, final_within_half_rho0, levels_approach_d }
}
