//! Staggered-grid discretization of the Dirac operator `-ic σ₁ d/dx + mc² σ₃`
//! with Kirchhoff-type vertex conditions, and its spectral splitting.
//!
//! The upper spinor component lives on grid nodes, the lower one on interval
//! midpoints. Vertex nodes are shared between incident edges, which imposes
//! continuity of the upper component strongly; the signed current condition on
//! the lower component is the natural condition of the Hermitian weak form.
//!
//! Internally the lower component is multiplied by `-i` ("gauged"), which turns
//! the Hermitian matrix into a real symmetric one with the same spectrum. The
//! map is a diagonal unitary that leaves `|u|` untouched pointwise, so only the
//! coefficient transforms ever see it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphPoint, MetricGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("edge {edge} gets only {intervals} grid intervals (need at least 4); decrease h")]
    GridTooCoarse { edge: usize, intervals: usize },
    #[error("edge {edge} has non-finite length")]
    NonFiniteLength { edge: usize },
    #[error("invalid solver parameters: {0}")]
    BadParams(String),
    #[error("eigenpair {index} (λ = {lambda}) has residual {residual:e} above tolerance {tol:e}")]
    EigenResidual { index: usize, lambda: f64, residual: f64, tol: f64 },
    #[error("spinor has dimension {got}, operator has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Lp norm needs p >= 2, got {0}")]
    BadExponent(f64),
}

/// How the artificial end of a truncated half-line is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CapCondition {
    /// Upper component vanishes at the cap (its node carries no unknown).
    /// Truncated half-lines then repel localized states, as infinity does.
    #[default]
    UpperZero,
    /// Kirchhoff condition of a degree-1 vertex: the lower trace vanishes.
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    pub mass: f64,
    pub c: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_eig_tol")]
    pub eig_tol: f64,
    #[serde(default)]
    pub cap_condition: CapCondition,
}

fn default_h() -> f64 {
    0.1
}

fn default_eig_tol() -> f64 {
    1e-9
}

impl SolverParams {
    pub fn new(mass: f64, c: f64, h: f64) -> Self {
        SolverParams { mass, c, h, eig_tol: default_eig_tol(), cap_condition: CapCondition::default() }
    }

    /// The gap edge `mc²`.
    pub fn mc2(&self) -> f64 {
        self.mass * self.c * self.c
    }

    pub fn validate(&self) -> Result<(), DiscretizationError> {
        for (name, v) in [("mass", self.mass), ("c", self.c), ("h", self.h), ("eig_tol", self.eig_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DiscretizationError::BadParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dof {
    pub component: Component,
    pub location: GraphPoint,
}

/// One collocation point of the pointwise modulus: a grid node seen from one
/// incident edge. `|u|² = |u¹|² + Σ coeff·|u²_m|²` over the adjacent midpoints.
#[derive(Debug, Clone, Copy)]
pub struct Slot {
    pub upper: Option<usize>,
    pub lower: [(usize, f64); 2],
    pub n_lower: usize,
    pub weight: f64,
    pub location: GraphPoint,
}

impl Slot {
    pub fn lower(&self) -> &[(usize, f64)] {
        &self.lower[..self.n_lower]
    }
}

#[derive(Debug, Clone)]
pub struct StaggeredGrid {
    pub intervals: Vec<usize>,
    pub spacing: Vec<f64>,
    /// Upper-component unknown of each vertex (`None` for closed caps).
    pub vertex_dof: Vec<Option<usize>>,
    /// Per edge, the upper-component unknown at nodes `0..=n`.
    pub node_dofs: Vec<Vec<Option<usize>>>,
    /// Per edge, the lower-component unknown at midpoints `0..n`.
    pub mid_dofs: Vec<Vec<usize>>,
    pub dofs: Vec<Dof>,
    pub slots: Vec<Slot>,
}

impl StaggeredGrid {
    pub fn build(g: &MetricGraph, params: &SolverParams) -> Result<Self, DiscretizationError> {
        let mut intervals = Vec::with_capacity(g.num_edges());
        for e in &g.edges {
            if !e.length.is_finite() {
                return Err(DiscretizationError::NonFiniteLength { edge: e.id });
            }
            let ratio = e.length / params.h;
            let n = if (ratio - ratio.round()).abs() < 1e-8 * ratio.max(1.0) { ratio.round() } else { ratio.ceil() } as usize;
            if n < 4 {
                return Err(DiscretizationError::GridTooCoarse { edge: e.id, intervals: n });
            }
            intervals.push(n);
        }
        let spacing: Vec<f64> = g.edges.iter().zip(&intervals).map(|(e, &n)| e.length / n as f64).collect();

        let mut dofs = Vec::new();
        let mut vertex_dof = vec![None; g.num_vertices()];
        for v in &g.vertices {
            if v.is_truncation_cap && params.cap_condition == CapCondition::UpperZero {
                continue;
            }
            vertex_dof[v.id] = Some(dofs.len());
            dofs.push(Dof { component: Component::Upper, location: g.vertex_point(v.id) });
        }
        let mut node_dofs = Vec::with_capacity(g.num_edges());
        let mut mid_dofs = Vec::with_capacity(g.num_edges());
        for (e, edge) in g.edges.iter().enumerate() {
            let n = intervals[e];
            let h = spacing[e];
            let mut nodes = vec![None; n + 1];
            let mut mids = Vec::with_capacity(n);
            nodes[0] = vertex_dof[edge.endpoints.0];
            nodes[n] = vertex_dof[edge.endpoints.1];
            for j in 0..n {
                if j > 0 {
                    nodes[j] = Some(dofs.len());
                    dofs.push(Dof { component: Component::Upper, location: GraphPoint::new(e, j as f64 * h) });
                }
                mids.push(dofs.len());
                dofs.push(Dof { component: Component::Lower, location: GraphPoint::new(e, (j as f64 + 0.5) * h) });
            }
            node_dofs.push(nodes);
            mid_dofs.push(mids);
        }

        let mut slots = Vec::new();
        for e in 0..g.num_edges() {
            let n = intervals[e];
            let h = spacing[e];
            for j in 0..=n {
                let (lower, n_lower, weight) = if j == 0 {
                    ([(mid_dofs[e][0], 1.0), (0, 0.0)], 1, h / 2.0)
                } else if j == n {
                    ([(mid_dofs[e][n - 1], 1.0), (0, 0.0)], 1, h / 2.0)
                } else {
                    ([(mid_dofs[e][j - 1], 0.5), (mid_dofs[e][j], 0.5)], 2, h)
                };
                slots.push(Slot {
                    upper: node_dofs[e][j],
                    lower,
                    n_lower,
                    weight,
                    location: GraphPoint::new(e, j as f64 * h),
                });
            }
        }

        Ok(StaggeredGrid { intervals, spacing, vertex_dof, node_dofs, mid_dofs, dofs, slots })
    }

    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_lower(&self, dof: usize) -> bool {
        self.dofs[dof].component == Component::Lower
    }
}

/// A two-component spinor sampled on the staggered grid, in DOF order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spinor(pub DVector<Complex64>);

impl Spinor {
    pub fn zeros(n: usize) -> Self {
        Spinor(DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scale(&self, a: Complex64) -> Spinor {
        Spinor(&self.0 * a)
    }

    pub fn add(&self, other: &Spinor) -> Spinor {
        Spinor(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Spinor) -> Spinor {
        Spinor(&self.0 - &other.0)
    }

    pub fn axpy(&self, a: f64, other: &Spinor) -> Spinor {
        Spinor(&self.0 + &other.0 * Complex64::new(a, 0.0))
    }
}

/// Hermitian weak-form Dirac matrix `H` and diagonal mass matrix on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    /// Nonzero entries `(row, col, value)`, both triangles.
    pub entries: Vec<(usize, usize, Complex64)>,
    pub mass: DVector<f64>,
    pub grid: StaggeredGrid,
    pub params: SolverParams,
}

pub fn assemble(g: &MetricGraph, params: &SolverParams) -> Result<DiscreteOperator, DiscretizationError> {
    params.validate()?;
    let grid = StaggeredGrid::build(g, params)?;
    let n = grid.dim();
    let mc2 = params.mc2();
    let c = params.c;
    let mut mass = DVector::zeros(n);
    let mut entries = Vec::new();
    for e in 0..g.num_edges() {
        let h = grid.spacing[e];
        let nodes = &grid.node_dofs[e];
        for (j, node) in nodes.iter().enumerate() {
            if let Some(d) = node {
                let end = j == 0 || j == nodes.len() - 1;
                mass[*d] += if end { h / 2.0 } else { h };
            }
        }
        for (j, &m) in grid.mid_dofs[e].iter().enumerate() {
            mass[m] += h;
            // weak form of -ic (u¹)' on [x_j, x_{j+1}]
            let left = nodes[j];
            let right = nodes[j + 1];
            let coupling = Complex64::new(0.0, c);
            if let Some(r) = right {
                entries.push((m, r, -coupling));
                entries.push((r, m, coupling));
            }
            if let Some(l) = left {
                entries.push((m, l, coupling));
                entries.push((l, m, -coupling));
            }
        }
    }
    for d in 0..n {
        let sign = if grid.is_lower(d) { -1.0 } else { 1.0 };
        entries.push((d, d, Complex64::new(sign * mc2 * mass[d], 0.0)));
    }
    Ok(DiscreteOperator { entries, mass, grid, params: *params })
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            h[(r, c)] += v;
        }
        h
    }

    /// `max |H_jk − conj(H_kj)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let h = self.to_dense();
        let mut worst = 0.0f64;
        for j in 0..h.nrows() {
            for k in 0..=j {
                worst = worst.max((h[(j, k)] - h[(k, j)].conj()).norm());
            }
        }
        worst
    }

    /// `H u` using the sparse entries.
    pub fn apply(&self, u: &Spinor) -> Spinor {
        let mut out = DVector::zeros(self.dim());
        for &(r, c, v) in &self.entries {
            out[r] += v * u.0[c];
        }
        Spinor(out)
    }

    fn check(&self, u: &Spinor) -> Result<(), DiscretizationError> {
        if u.dim() != self.dim() {
            return Err(DiscretizationError::DimensionMismatch { expected: self.dim(), got: u.dim() });
        }
        Ok(())
    }

    /// `u* M v`.
    pub fn l2_inner(&self, u: &Spinor, v: &Spinor) -> Result<Complex64, DiscretizationError> {
        self.check(u)?;
        self.check(v)?;
        Ok(u.0.iter().zip(v.0.iter()).zip(self.mass.iter()).map(|((a, b), w)| a.conj() * b * *w).sum())
    }

    pub fn l2_norm(&self, u: &Spinor) -> f64 {
        u.0.iter().zip(self.mass.iter()).map(|(a, w)| a.norm_sqr() * w).sum::<f64>().sqrt()
    }

    /// Collocated squared modulus `|u|²` at every slot.
    pub fn slot_density(&self, u: &Spinor) -> Vec<f64> {
        self.grid
            .slots
            .iter()
            .map(|s| {
                let up = s.upper.map_or(0.0, |d| u.0[d].norm_sqr());
                up + s.lower().iter().map(|&(m, a)| a * u.0[m].norm_sqr()).sum::<f64>()
            })
            .collect()
    }

    /// `(location, |u¹|, |u²|)` per collocation slot, with `|u²|` the root
    /// mean square over the adjacent midpoints.
    pub fn slot_moduli(&self, u: &Spinor) -> Vec<(GraphPoint, f64, f64)> {
        self.grid
            .slots
            .iter()
            .map(|s| {
                let up = s.upper.map_or(0.0, |d| u.0[d].norm());
                let low: f64 = s.lower().iter().map(|&(m, a)| a * u.0[m].norm_sqr()).sum();
                (s.location, up, low.sqrt())
            })
            .collect()
    }

    pub fn lp_norm(&self, u: &Spinor, p: f64) -> Result<f64, DiscretizationError> {
        self.check(u)?;
        if !(p >= 2.0) {
            return Err(DiscretizationError::BadExponent(p));
        }
        let sum: f64 = self
            .slot_density(u)
            .iter()
            .zip(&self.grid.slots)
            .map(|(rho, s)| s.weight * rho.powf(p / 2.0))
            .sum();
        Ok(sum.powf(1.0 / p))
    }

    /// `‖u'‖²_{L²}` from first differences along each edge.
    pub fn derivative_norm_sq(&self, u: &Spinor) -> f64 {
        let val = |d: Option<usize>| d.map_or(Complex64::new(0.0, 0.0), |d| u.0[d]);
        let mut total = 0.0;
        for e in 0..self.grid.intervals.len() {
            let h = self.grid.spacing[e];
            let nodes = &self.grid.node_dofs[e];
            for w in nodes.windows(2) {
                total += (val(w[1]) - val(w[0])).norm_sqr() / h;
            }
            for w in self.grid.mid_dofs[e].windows(2) {
                total += (u.0[w[1]] - u.0[w[0]]).norm_sqr() / h;
            }
        }
        total
    }

    /// Real symmetric matrix of the gauged operator.
    fn gauged_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        for &(r, c, v) in &self.entries {
            let g = gauge_factor(self.grid.is_lower(r)).conj() * v * gauge_factor(self.grid.is_lower(c));
            debug_assert!(g.im.abs() <= 1e-14 * g.re.abs().max(1.0));
            h[(r, c)] += g.re;
        }
        h
    }

    pub fn lower_mask(&self) -> Vec<bool> {
        (0..self.dim()).map(|d| self.grid.is_lower(d)).collect()
    }
}

fn gauge_factor(lower: bool) -> Complex64 {
    if lower {
        Complex64::new(0.0, 1.0)
    } else {
        Complex64::new(1.0, 0.0)
    }
}

/// Real two-column block `[Re, Im]` of a gauged spinor.
pub type Field = DMatrix<f64>;

/// Converts a spinor to its gauged real/imaginary field.
pub fn to_field(u: &Spinor, lower: &[bool]) -> Field {
    let mut f = DMatrix::zeros(u.dim(), 2);
    for (j, z) in u.0.iter().enumerate() {
        // lower entries are multiplied by -i
        let (re, im) = if lower[j] { (z.im, -z.re) } else { (z.re, z.im) };
        f[(j, 0)] = re;
        f[(j, 1)] = im;
    }
    f
}

pub fn from_field(f: &Field, lower: &[bool]) -> Spinor {
    Spinor(DVector::from_iterator(
        f.nrows(),
        (0..f.nrows()).map(|j| {
            let (a, b) = (f[(j, 0)], f[(j, 1)]);
            if lower[j] {
                Complex64::new(-b, a)
            } else {
                Complex64::new(a, b)
            }
        }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Full generalized eigendecomposition `H v = λ M v` and the induced
/// splitting into positive and negative spectral subspaces.
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Gauged, `M`-orthonormal eigenvectors as columns.
    pub modes: DMatrix<f64>,
    /// Index of the first nonnegative eigenvalue (= dimension of the negative subspace).
    pub n_negative: usize,
    pub residuals: Vec<f64>,
    pub mass: DVector<f64>,
    pub lower: Vec<bool>,
}

pub fn spectral_split(op: &DiscreteOperator) -> Result<SpectralSplit, DiscretizationError> {
    let n = op.dim();
    let inv_sqrt: DVector<f64> = op.mass.map(|m| 1.0 / m.sqrt());
    let h = op.gauged_dense();
    let mut k = h.clone();
    for j in 0..n {
        for i in 0..n {
            k[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = k.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut modes = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            modes[(r, col)] = eig.eigenvectors[(r, i)] * inv_sqrt[r];
        }
    }
    let n_negative = eigenvalues.iter().take_while(|&&l| l < 0.0).count();

    // residual ‖M^{-1/2}(H φ − λ M φ)‖ = ‖K q − λ q‖
    let hphi = &h * &modes;
    let mut residuals = Vec::with_capacity(n);
    for (col, &lambda) in eigenvalues.iter().enumerate() {
        let r: f64 = (0..n)
            .map(|i| ((hphi[(i, col)] - lambda * op.mass[i] * modes[(i, col)]) * inv_sqrt[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let tol = op.params.eig_tol * (lambda.abs() + 1.0);
        if !(r <= tol) {
            return Err(DiscretizationError::EigenResidual { index: col, lambda, residual: r, tol });
        }
        residuals.push(r);
    }
    Ok(SpectralSplit { eigenvalues, modes, n_negative, residuals, mass: op.mass.clone(), lower: op.lower_mask() })
}

impl SpectralSplit {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_positive(&self) -> usize {
        self.dim() - self.n_negative
    }

    fn check(&self, u: &Spinor) -> Result<(), DiscretizationError> {
        if u.dim() != self.dim() {
            return Err(DiscretizationError::DimensionMismatch { expected: self.dim(), got: u.dim() });
        }
        Ok(())
    }

    /// Eigenvector `k` as a (non-gauged) spinor.
    pub fn eigenvector(&self, k: usize) -> Spinor {
        let mut f = DMatrix::zeros(self.dim(), 2);
        f.set_column(0, &self.modes.column(k));
        from_field(&f, &self.lower)
    }

    /// Eigencoefficients `c_k = v_k* M u` as a two-column `[Re, Im]` block.
    pub fn coefficients_field(&self, f: &Field) -> DMatrix<f64> {
        let mut weighted = f.clone();
        for j in 0..f.nrows() {
            weighted[(j, 0)] *= self.mass[j];
            weighted[(j, 1)] *= self.mass[j];
        }
        self.modes.tr_mul(&weighted)
    }

    pub fn coefficients(&self, u: &Spinor) -> Result<Vec<Complex64>, DiscretizationError> {
        self.check(u)?;
        let c = self.coefficients_field(&to_field(u, &self.lower));
        Ok((0..c.nrows()).map(|k| Complex64::new(c[(k, 0)], c[(k, 1)])).collect())
    }

    pub fn synthesize(&self, coeffs: &[Complex64]) -> Spinor {
        let c = DMatrix::from_fn(coeffs.len(), 2, |k, j| if j == 0 { coeffs[k].re } else { coeffs[k].im });
        from_field(&(&self.modes * c), &self.lower)
    }

    pub fn project(&self, u: &Spinor, sign: Sign) -> Result<Spinor, DiscretizationError> {
        let mut c = self.coefficients(u)?;
        let zero = Complex64::new(0.0, 0.0);
        match sign {
            Sign::Plus => c[..self.n_negative].fill(zero),
            Sign::Minus => c[self.n_negative..].fill(zero),
        }
        Ok(self.synthesize(&c))
    }

    /// `‖u‖ = ‖ |D|^{1/2} u ‖_{L²}`.
    pub fn form_norm(&self, u: &Spinor) -> Result<f64, DiscretizationError> {
        let c = self.coefficients(u)?;
        Ok(c.iter().zip(&self.eigenvalues).map(|(c, l)| l.abs() * c.norm_sqr()).sum::<f64>().sqrt())
    }

    /// `½(‖u⁺‖² − ‖u⁻‖²) = ½ Σ λ_k |c_k|²`.
    pub fn quadratic_form(&self, u: &Spinor) -> Result<f64, DiscretizationError> {
        let c = self.coefficients(u)?;
        Ok(0.5 * c.iter().zip(&self.eigenvalues).map(|(c, l)| l * c.norm_sqr()).sum::<f64>())
    }

    /// Smallest `|λ_k|`.
    pub fn gap(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min)
    }

    /// Index of the lowest positive eigenvalue.
    pub fn lowest_positive(&self) -> usize {
        self.n_negative
    }
}
