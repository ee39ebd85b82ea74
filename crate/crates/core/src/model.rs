//! Nonlinearities `f` (with primitive `F(t) = ∫₀ᵗ f(s) s ds`) and well-shaped
//! potentials, together with report-style assumption checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{SolverParams, StaggeredGrid};
use crate::graph::{GraphError, GraphPoint, MetricGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative argument {0} for the nonlinearity")]
    NegativeArgument(f64),
    #[error("nonlinearity needs at least one power term")]
    NoTerms,
    #[error("nonlinearity fails its growth/superquadratic assumptions: {0}")]
    AssumptionViolated(String),
    #[error("well {index}: {reason}")]
    BadWell { index: usize, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub coefficient: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PurePower,
    PowerSum,
}

/// `f(t) = Σ a_j t^{p_j − 2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub family: Family,
    pub terms: Vec<PowerTerm>,
    /// Superquadratic exponent `θ` with `θ F(t) ≤ f(t) t²`.
    pub theta: f64,
    /// Growth constant with `f(t) ≤ c1 (1 + t^{p_max − 2})`.
    pub c1: f64,
}

impl Nonlinearity {
    pub fn pure_power(p: f64) -> Self {
        Self::from_terms(Family::PurePower, vec![PowerTerm { coefficient: 1.0, exponent: p }])
    }

    pub fn power_sum(terms: Vec<PowerTerm>) -> Self {
        Self::from_terms(Family::PowerSum, terms)
    }

    /// Defaults `θ = min p_j` and `c1 = Σ |a_j|`.
    pub fn from_terms(family: Family, terms: Vec<PowerTerm>) -> Self {
        let theta = terms.iter().map(|t| t.exponent).fold(f64::INFINITY, f64::min);
        let c1 = terms.iter().map(|t| t.coefficient.abs()).sum();
        Nonlinearity { family, terms, theta, c1 }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn max_exponent(&self) -> f64 {
        self.terms.iter().map(|t| t.exponent).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `f(t)` without argument checks, for hot loops.
    #[inline]
    pub fn f_unchecked(&self, t: f64) -> f64 {
        self.terms.iter().map(|k| k.coefficient * t.powf(k.exponent - 2.0)).sum()
    }

    #[inline]
    pub fn primitive_unchecked(&self, t: f64) -> f64 {
        self.terms.iter().map(|k| k.coefficient * t.powf(k.exponent) / k.exponent).sum()
    }

    /// Both `f(√ρ)` and `F(√ρ)` from the squared modulus `ρ`.
    #[inline]
    pub fn eval_sq(&self, rho: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut big = 0.0;
        for k in &self.terms {
            let q = rho.powf(0.5 * k.exponent - 1.0);
            f += k.coefficient * q;
            big += k.coefficient * q * rho / k.exponent;
        }
        (f, big)
    }

    pub fn f(&self, t: f64) -> Result<f64, ModelError> {
        if t < 0.0 {
            return Err(ModelError::NegativeArgument(t));
        }
        Ok(self.f_unchecked(t))
    }

    pub fn primitive(&self, t: f64) -> Result<f64, ModelError> {
        if t < 0.0 {
            return Err(ModelError::NegativeArgument(t));
        }
        Ok(self.primitive_unchecked(t))
    }

    pub fn f_prime(&self, t: f64) -> Result<f64, ModelError> {
        if !(t > 0.0) {
            return Err(ModelError::NegativeArgument(t));
        }
        Ok(self.terms.iter().map(|k| k.coefficient * (k.exponent - 2.0) * t.powf(k.exponent - 3.0)).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Worst sampled margin; negative means violated.
    pub margin: f64,
    pub at: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub subject: String,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Sampled global minima of a potential (empty for nonlinearities).
    pub minima: Vec<(GraphPoint, f64)>,
}

const MARGIN_TOL: f64 = 1e-12;

impl ValidationReport {
    fn new(subject: &str) -> Self {
        ValidationReport { subject: subject.to_string(), checks: Vec::new(), notes: Vec::new(), minima: Vec::new() }
    }

    fn push(&mut self, name: &str, margin: f64, at: String) {
        self.checks.push(Check { name: name.to_string(), margin, at, passed: margin >= -MARGIN_TOL });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("[{}] {}\n", self.subject, if self.passed() { "PASS" } else { "FAIL" });
        for c in &self.checks {
            out.push_str(&format!(
                "  {:<4} {:<28} margin {:+.6e} at {}\n",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.margin,
                c.at
            ));
        }
        for (p, v) in &self.minima {
            out.push_str(&format!("  minimum V = {v:.12} at edge {} s = {:.9}\n", p.edge, p.s));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }
}

/// Worst value of `margin(t)` over `t_i = t_max·i/(n−1)`, skipping `t = 0` if asked.
fn worst<M: Fn(f64) -> f64>(t_max: f64, n: usize, skip_zero: bool, margin: M) -> (f64, f64) {
    let n = n.max(2);
    let mut best = (f64::INFINITY, 0.0);
    for i in usize::from(skip_zero)..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        let m = margin(t);
        if m < best.0 || m.is_nan() {
            best = (m, t);
        }
    }
    best
}

/// Samples the nonlinearity assumptions on `[0, t_max]`. Margins are relative
/// to `1 + |scale|` of the quantities compared.
pub fn validate_f(nl: &Nonlinearity, t_max: f64, n_samples: usize) -> ValidationReport {
    let mut r = ValidationReport::new("nonlinearity");
    if nl.terms.is_empty() {
        r.push("has terms", -1.0, "-".into());
        return r;
    }
    let f = |t: f64| nl.f_unchecked(t);
    let big = |t: f64| nl.primitive_unchecked(t);
    let at = |t: f64| format!("t = {t:.6}");
    let p = nl.max_exponent();

    r.push("exponents > 2", nl.terms.iter().map(|k| k.exponent - 2.0).fold(f64::INFINITY, f64::min), "-".into());
    r.push("theta > 2", nl.theta - 2.0, "-".into());
    r.push("f(0) = 0", -f(0.0).abs(), at(0.0));
    let (m, t) = worst(t_max, n_samples, false, |t| f(t) / (1.0 + f(t).abs()));
    r.push("f >= 0", m, at(t));
    let h = t_max / (n_samples.max(2) - 1) as f64;
    let (m, t) = worst(t_max, n_samples, true, |t| {
        let (a, b) = (f(t - h), f(t));
        (b - a) / (1.0 + b.abs())
    });
    r.push("f nondecreasing", m, at(t));
    let (m, t) = worst(t_max, n_samples, false, |t| {
        let bound = nl.c1 * (1.0 + t.powf(p - 2.0));
        (bound - f(t)) / (1.0 + bound.abs())
    });
    r.push("growth bound", m, at(t));
    let (m, t) = worst(t_max, n_samples, true, |t| nl.theta * big(t) / (1.0 + nl.theta * big(t).abs()));
    r.push("theta F > 0", m, at(t));
    let (m, t) = worst(t_max, n_samples, false, |t| {
        let rhs = f(t) * t * t;
        (rhs - nl.theta * big(t)) / (1.0 + rhs.abs())
    });
    r.push("theta F <= f t^2", m, at(t));
    r
}

/// Constants with `F(t) ≥ A t^θ − B t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma22Constants {
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

const LEMMA22_SAMPLES: usize = 4001;

pub fn lemma22_constants(nl: &Nonlinearity, t_max: f64) -> Result<Lemma22Constants, ModelError> {
    let report = validate_f(nl, t_max.max(1.0), LEMMA22_SAMPLES);
    if !report.passed() {
        let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        return Err(ModelError::AssumptionViolated(failed.join(", ")));
    }
    let a = nl.primitive_unchecked(1.0);
    let theta = nl.theta;
    let mut b = a;
    for i in 1..LEMMA22_SAMPLES {
        let t = t_max * i as f64 / (LEMMA22_SAMPLES - 1) as f64;
        b = b.max((a * t.powf(theta) - nl.primitive_unchecked(t)) / (t * t));
    }
    if !b.is_finite() {
        return Err(ModelError::AssumptionViolated("no finite quadratic constant".into()));
    }
    Ok(Lemma22Constants { a, b, theta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Well {
    pub center: GraphPoint,
    pub depth: f64,
    pub width: f64,
}

/// `V(x) = V∞ − Σ A_i exp(−d(x, z_i)² / s_i²)` in the path metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    pub v_infinity: f64,
    #[serde(default)]
    pub wells: Vec<Well>,
}

impl Potential {
    pub fn constant(v: f64) -> Self {
        Potential { v_infinity: v, wells: Vec::new() }
    }

    pub fn check(&self, g: &MetricGraph) -> Result<(), ModelError> {
        for (index, w) in self.wells.iter().enumerate() {
            if !(w.depth > 0.0 && w.depth.is_finite()) {
                return Err(ModelError::BadWell { index, reason: format!("depth must be positive, got {}", w.depth) });
            }
            if !(w.width > 0.0 && w.width.is_finite()) {
                return Err(ModelError::BadWell { index, reason: format!("width must be positive, got {}", w.width) });
            }
            g.check_point(w.center)?;
        }
        Ok(())
    }

    pub fn eval(&self, g: &MetricGraph, x: GraphPoint) -> f64 {
        self.v_infinity
            - self
                .wells
                .iter()
                .map(|w| {
                    let d = g.path_distance(x, w.center).unwrap_or(f64::INFINITY);
                    w.depth * (-(d * d) / (w.width * w.width)).exp()
                })
                .sum::<f64>()
    }

    /// `V(εx)`, with `εx` the point at distance `ε·d(0, x)` along a shortest path from the origin.
    pub fn eval_scaled(&self, g: &MetricGraph, x: GraphPoint, eps: f64) -> f64 {
        self.eval(g, g.dilate(x, eps))
    }

    /// Lipschitz bound along edges.
    pub fn lipschitz(&self) -> f64 {
        self.wells.iter().map(|w| w.depth * std::f64::consts::SQRT_2 / w.width * (-0.5f64).exp()).sum()
    }

    /// Deepest value among the well centers.
    pub fn nominal_minimum(&self, g: &MetricGraph) -> f64 {
        self.wells.iter().map(|w| self.eval(g, w.center)).fold(self.v_infinity, f64::min)
    }
}

fn golden_min<F: Fn(f64) -> f64>(mut a: f64, mut b: f64, fun: F) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (fun(x1), fun(x2));
    while b - a > 1e-11 * (1.0 + a.abs()) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = fun(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = fun(x2);
        }
    }
    0.5 * (a + b)
}

/// Tolerance for calling two sampled minima equally deep.
pub const EQUAL_DEPTH_TOL: f64 = 1e-8;

/// Samples `V` on the grid nodes, refines interior local minima along their
/// edge and reports the (equal-depth) global minima.
pub fn validate_v(v: &Potential, g: &MetricGraph, params: &SolverParams, grid: &StaggeredGrid) -> ValidationReport {
    let mut r = ValidationReport::new("potential");
    if let Err(e) = v.check(g) {
        r.push("well parameters", -1.0, e.to_string());
        return r;
    }
    let mc2 = params.mc2();
    let mut candidates: Vec<(GraphPoint, f64)> = Vec::new();
    let mut vmin = (f64::INFINITY, GraphPoint::new(0, 0.0));
    let mut vmax = (f64::NEG_INFINITY, GraphPoint::new(0, 0.0));
    let vertex_vals: Vec<f64> = (0..g.num_vertices()).map(|k| v.eval(g, g.vertex_point(k))).collect();

    for e in 0..g.num_edges() {
        let n = grid.intervals[e];
        let h = grid.spacing[e];
        let vals: Vec<f64> = (0..=n).map(|j| v.eval(g, GraphPoint::new(e, j as f64 * h))).collect();
        for (j, &val) in vals.iter().enumerate() {
            let p = GraphPoint::new(e, j as f64 * h);
            if val < vmin.0 {
                vmin = (val, p);
            }
            if val > vmax.0 {
                vmax = (val, p);
            }
            if j > 0 && j < n && val <= vals[j - 1] && val <= vals[j + 1] && val < v.v_infinity {
                let s = golden_min((j as f64 - 1.0) * h, (j as f64 + 1.0) * h, |s| v.eval(g, GraphPoint::new(e, s)));
                let q = GraphPoint::new(e, s);
                candidates.push((q, v.eval(g, q).min(val)));
            }
        }
    }
    for k in 0..g.num_vertices() {
        let val = vertex_vals[k];
        let local = g.incident(k).iter().all(|&(e, end)| {
            let h = grid.spacing[e];
            let s = match end {
                crate::graph::EdgeEnd::Start => h,
                crate::graph::EdgeEnd::End => g.edges[e].length - h,
            };
            val <= v.eval(g, GraphPoint::new(e, s))
        });
        if local && val < v.v_infinity {
            candidates.push((g.vertex_point(k), val));
        }
    }
    for &(q, val) in &candidates {
        if val < vmin.0 {
            vmin = (val, q);
        }
    }
    let at = |p: GraphPoint| format!("edge {} s = {:.6}", p.edge, p.s);
    r.push("min V > -mc^2", vmin.0 + mc2, at(vmin.1));
    r.push("V <= V_inf", v.v_infinity - vmax.0, at(vmax.1));
    r.push("V_inf < mc^2", mc2 - v.v_infinity, "-".into());

    // merge duplicates (same minimum found from two sides of a vertex)
    let mut minima: Vec<(GraphPoint, f64)> = Vec::new();
    for (q, val) in candidates {
        if val <= vmin.0 + EQUAL_DEPTH_TOL * (1.0 + vmin.0.abs())
            && minima.iter().all(|(p, _)| g.path_distance(*p, q).unwrap_or(0.0) > 2.0 * grid.spacing[q.edge])
        {
            minima.push((q, val));
        }
    }
    if minima.is_empty() {
        minima.push((vmin.1, vmin.0));
    }
    r.notes.push(format!("V0 = {:.12}, V_max = {:.12}, {} equal-depth minima", vmin.0, vmax.0, minima.len()));
    r.minima = minima;
    r
}
