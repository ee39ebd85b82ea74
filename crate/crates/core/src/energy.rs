//! The energy functionals
//!
//! `E(u) = ½ Σ_k λ_k |c_k|² + ½ ∫ W |u|² − ∫ F(|u|)`
//!
//! with `W ≡ λ` (autonomous) or `W = V(ε·)` (semiclassical), their Riesz
//! gradients in the mass inner product, and the same quantities in "form
//! coordinates" `a_k = √|λ_k| c_k`, where the form norm is Euclidean.
//!
//! All heavy evaluation works on gauged real fields (see
//! [`crate::discretization`]); `|u|` and hence every local term is gauge
//! independent.

use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::discretization::{
    assemble, from_field, spectral_split, to_field, DiscreteOperator, DiscretizationError, Field, SolverParams,
    SpectralSplit, Spinor,
};
use crate::graph::{GraphError, MetricGraph};
use crate::model::{ModelError, Nonlinearity, Potential};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("|λ| = {lambda} must stay below mc² = {mc2}")]
    LambdaOutOfGap { lambda: f64, mc2: f64 },
    #[error("ε must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("semiclassical functional needs a potential")]
    NoPotential,
    #[error(
        "truncation too short for ε = {eps}: cap {cap} maps to distance {scaled:.3} but the wells extend to {needed:.3}"
    )]
    TruncationTooShort { eps: f64, cap: usize, scaled: f64, needed: f64 },
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `J_λ`: constant potential `λ` with `|λ| < mc²`.
    Autonomous { lambda: f64 },
    /// `I_ε`: potential `V(εx)`.
    Semiclassical { eps: f64 },
}

impl Functional {
    fn key(&self) -> (u8, u64) {
        match *self {
            Functional::Autonomous { lambda } => (0, lambda.to_bits()),
            Functional::Semiclassical { eps } => (1, eps.to_bits()),
        }
    }
}

pub struct EnergyContext {
    pub graph: MetricGraph,
    pub op: DiscreteOperator,
    pub split: SpectralSplit,
    pub nl: Nonlinearity,
    pub potential: Option<Potential>,
    pub params: SolverParams,
    /// `Φ diag(1/√|λ|)`: maps form coordinates to gauged fields.
    scaled_modes: DMatrix<f64>,
    sampled: Mutex<Vec<(SampleKey, Arc<DVector<f64>>)>>,
}

/// Functional tag and bit pattern of λ or ε.
type SampleKey = (u8, u64);

impl std::fmt::Debug for EnergyContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyContext").field("dim", &self.op.dim()).field("nl", &self.nl).finish_non_exhaustive()
    }
}

impl EnergyContext {
    pub fn new(
        graph: MetricGraph,
        params: SolverParams,
        nl: Nonlinearity,
        potential: Option<Potential>,
    ) -> Result<Self, EnergyError> {
        let op = assemble(&graph, &params)?;
        let split = spectral_split(&op)?;
        Self::from_parts(graph, op, split, nl, potential)
    }

    pub fn from_parts(
        graph: MetricGraph,
        op: DiscreteOperator,
        split: SpectralSplit,
        nl: Nonlinearity,
        potential: Option<Potential>,
    ) -> Result<Self, EnergyError> {
        if let Some(v) = &potential {
            v.check(&graph)?;
        }
        let mut scaled_modes = split.modes.clone();
        for (k, mut col) in scaled_modes.column_iter_mut().enumerate() {
            col /= split.eigenvalues[k].abs().sqrt();
        }
        let params = op.params;
        Ok(EnergyContext { graph, op, split, nl, potential, params, scaled_modes, sampled: Mutex::new(Vec::new()) })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn scaled_modes(&self) -> &DMatrix<f64> {
        &self.scaled_modes
    }

    /// Requires every truncation cap to sit, after scaling by `ε`, beyond all wells.
    pub fn check_scale(&self, eps: f64) -> Result<(), EnergyError> {
        let Some(v) = &self.potential else { return Err(EnergyError::NoPotential) };
        let origin = self.graph.origin;
        let needed = v
            .wells
            .iter()
            .map(|w| self.graph.path_distance(origin, w.center).unwrap_or(f64::INFINITY) + 2.0 * w.width)
            .fold(0.0, f64::max);
        for cap in self.graph.caps() {
            let scaled = eps * self.graph.path_distance(origin, self.graph.vertex_point(cap.id))?;
            if scaled < needed {
                return Err(EnergyError::TruncationTooShort { eps, cap: cap.id, scaled, needed });
            }
        }
        Ok(())
    }

    fn sample(&self, functional: Functional) -> Result<Arc<DVector<f64>>, EnergyError> {
        let key = functional.key();
        if let Some((_, v)) = self.sampled.lock().expect("cache lock").iter().find(|(k, _)| *k == key) {
            return Ok(v.clone());
        }
        let values = match functional {
            Functional::Autonomous { lambda } => DVector::from_element(self.dim(), lambda),
            Functional::Semiclassical { eps } => {
                let v = self.potential.as_ref().ok_or(EnergyError::NoPotential)?;
                DVector::from_iterator(
                    self.dim(),
                    self.op.grid.dofs.iter().map(|d| v.eval_scaled(&self.graph, d.location, eps)),
                )
            }
        };
        let values = Arc::new(values);
        self.sampled.lock().expect("cache lock").push((key, values.clone()));
        Ok(values)
    }

    pub fn functional(&self, functional: Functional) -> Result<Energy<'_>, EnergyError> {
        match functional {
            Functional::Autonomous { lambda } => {
                let mc2 = self.params.mc2();
                if !(lambda.abs() < mc2) {
                    return Err(EnergyError::LambdaOutOfGap { lambda, mc2 });
                }
            }
            Functional::Semiclassical { eps } => {
                if !(eps > 0.0 && eps.is_finite()) {
                    return Err(EnergyError::BadEpsilon(eps));
                }
                if self.potential.is_none() {
                    return Err(EnergyError::NoPotential);
                }
            }
        }
        Ok(Energy { ctx: self, functional, weight: self.sample(functional)? })
    }

    /// `J_λ(u)`.
    pub fn j_lambda(&self, lambda: f64, u: &Spinor) -> Result<f64, EnergyError> {
        self.functional(Functional::Autonomous { lambda })?.value(u)
    }

    /// `I_ε(u)`.
    pub fn i_eps(&self, eps: f64, u: &Spinor) -> Result<f64, EnergyError> {
        self.functional(Functional::Semiclassical { eps })?.value(u)
    }

    /// Form coordinates `a_k = √|λ_k| c_k` of a spinor, as an `N × 2` block.
    pub fn form_coords(&self, u: &Spinor) -> Result<DMatrix<f64>, EnergyError> {
        if u.dim() != self.dim() {
            return Err(DiscretizationError::DimensionMismatch { expected: self.dim(), got: u.dim() }.into());
        }
        let mut c = self.split.coefficients_field(&to_field(u, &self.split.lower));
        for k in 0..c.nrows() {
            let s = self.split.eigenvalues[k].abs().sqrt();
            c[(k, 0)] *= s;
            c[(k, 1)] *= s;
        }
        Ok(c)
    }

    pub fn field_from_coords(&self, a: &DMatrix<f64>) -> Field {
        &self.scaled_modes * a
    }

    pub fn spinor_from_coords(&self, a: &DMatrix<f64>) -> Spinor {
        from_field(&self.field_from_coords(a), &self.split.lower)
    }

    /// `+1` on positive modes, `-1` on negative ones.
    pub fn mode_sign(&self, k: usize) -> f64 {
        if k < self.split.n_negative {
            -1.0
        } else {
            1.0
        }
    }
}

/// Local (pointwise) part of an energy and its derivative.
#[derive(Debug, Clone)]
pub struct LocalTerms {
    /// `½ ∫ W |u|² − ∫ F(|u|)`.
    pub energy: f64,
    /// Euclidean derivative with respect to the gauged field: `M (W − κ) u`.
    pub residual: Field,
}

/// Riesz representative of `E'(u)` in the mass inner product, so that
/// `E'(u)[v] = Re ⟨riesz, v⟩`.
#[derive(Debug, Clone)]
pub struct GradientRep {
    pub riesz: Spinor,
    /// Derivative in form coordinates (`N × 2`); its Euclidean norm is the dual form norm.
    pub coords: DMatrix<f64>,
    pub n_negative: usize,
}

impl GradientRep {
    pub fn action(&self, op: &DiscreteOperator, v: &Spinor) -> Result<f64, EnergyError> {
        Ok(op.l2_inner(&self.riesz, v)?.re)
    }

    pub fn dual_norm(&self) -> f64 {
        self.coords.norm()
    }

    /// Restriction to the negative subspace, in form coordinates.
    pub fn minus_norm(&self) -> f64 {
        self.coords.rows(0, self.n_negative).norm()
    }

    pub fn plus_norm(&self) -> f64 {
        let n = self.coords.nrows();
        self.coords.rows(self.n_negative, n - self.n_negative).norm()
    }
}

/// A functional bound to its sampled potential.
#[derive(Clone)]
pub struct Energy<'a> {
    pub ctx: &'a EnergyContext,
    pub functional: Functional,
    weight: Arc<DVector<f64>>,
}

impl<'a> Energy<'a> {
    /// Sampled potential at every DOF.
    pub fn potential_samples(&self) -> &DVector<f64> {
        &self.weight
    }

    /// Local energy and its derivative for a gauged field.
    pub fn local_terms(&self, field: &Field) -> LocalTerms {
        self.local_impl(field, true)
    }

    pub fn local_energy(&self, field: &Field) -> f64 {
        self.local_impl(field, false).energy
    }

    fn local_impl(&self, field: &Field, with_residual: bool) -> LocalTerms {
        let op = &self.ctx.op;
        let nl = &self.ctx.nl;
        let n = field.nrows();
        let sq = |j: usize| field[(j, 0)] * field[(j, 0)] + field[(j, 1)] * field[(j, 1)];
        let mut pot = 0.0;
        for j in 0..n {
            pot += op.mass[j] * self.weight[j] * sq(j);
        }
        let mut kappa = if with_residual { vec![0.0; n] } else { Vec::new() };
        let mut nonlinear = 0.0;
        for s in &op.grid.slots {
            let mut rho = s.upper.map_or(0.0, sq);
            for &(m, a) in s.lower() {
                rho += a * sq(m);
            }
            let (f, big) = nl.eval_sq(rho);
            nonlinear += s.weight * big;
            if with_residual {
                let wf = s.weight * f;
                if let Some(d) = s.upper {
                    kappa[d] += wf;
                }
                for &(m, a) in s.lower() {
                    kappa[m] += a * wf;
                }
            }
        }
        let mut residual = DMatrix::zeros(if with_residual { n } else { 0 }, 2);
        if with_residual {
            for j in 0..n {
                let coef = op.mass[j] * self.weight[j] - kappa[j];
                residual[(j, 0)] = coef * field[(j, 0)];
                residual[(j, 1)] = coef * field[(j, 1)];
            }
        }
        LocalTerms { energy: 0.5 * pot - nonlinear, residual }
    }

    pub fn value(&self, u: &Spinor) -> Result<f64, EnergyError> {
        let quad = self.ctx.split.quadratic_form(u)?;
        Ok(quad + self.local_energy(&to_field(u, &self.ctx.split.lower)))
    }

    pub fn grad(&self, u: &Spinor) -> Result<GradientRep, EnergyError> {
        let a = self.ctx.form_coords(u)?;
        let coords = self.grad_coords(&a);
        // riesz = M⁻¹ (Σ λ c v) + (W − κ) u, assembled from the coordinate gradient
        // through  riesz = Φ diag(√|λ|) ∇_a
        let mut scaled = coords.clone();
        for k in 0..scaled.nrows() {
            let s = self.ctx.split.eigenvalues[k].abs().sqrt();
            scaled[(k, 0)] *= s;
            scaled[(k, 1)] *= s;
        }
        let riesz = from_field(&(&self.ctx.split.modes * scaled), &self.ctx.split.lower);
        Ok(GradientRep { riesz, coords, n_negative: self.ctx.split.n_negative })
    }

    /// Riesz vector assembled directly from the sparse operator: `M⁻¹Hu + (W − κ)u`.
    pub fn riesz_direct(&self, u: &Spinor) -> Result<Spinor, EnergyError> {
        let op = &self.ctx.op;
        if u.dim() != op.dim() {
            return Err(DiscretizationError::DimensionMismatch { expected: op.dim(), got: u.dim() }.into());
        }
        let hu = op.apply(u);
        let lower = &self.ctx.split.lower;
        let local = from_field(&self.local_terms(&to_field(u, lower)).residual, lower);
        Ok(Spinor(DVector::from_iterator(
            op.dim(),
            (0..op.dim()).map(|j| (hu.0[j] + local.0[j]) / Complex64::new(op.mass[j], 0.0)),
        )))
    }

    pub fn value_coords(&self, a: &DMatrix<f64>) -> f64 {
        let mut quad = 0.0;
        for k in 0..a.nrows() {
            quad += self.ctx.mode_sign(k) * (a[(k, 0)].powi(2) + a[(k, 1)].powi(2));
        }
        0.5 * quad + self.local_energy(&self.ctx.field_from_coords(a))
    }

    /// `∇_a E = sign ∘ a + Φ_sᵀ M (W − κ) u`.
    pub fn grad_coords(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let local = self.local_terms(&self.ctx.field_from_coords(a));
        let mut g = self.ctx.scaled_modes().tr_mul(&local.residual);
        for k in 0..a.nrows() {
            let s = self.ctx.mode_sign(k);
            g[(k, 0)] += s * a[(k, 0)];
            g[(k, 1)] += s * a[(k, 1)];
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Sign;
    use crate::graph::{build_graph, GraphPoint, GraphSpec};
    use crate::model::Well;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_spinor(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> Spinor {
        Spinor(DVector::from_fn(n, |_, _| {
            Complex64::new(scale * (rng.random::<f64>() - 0.5), scale * (rng.random::<f64>() - 0.5))
        }))
    }

    fn interval_ctx(nl: Nonlinearity) -> EnergyContext {
        let g = build_graph(&GraphSpec::interval(PI)).unwrap();
        EnergyContext::new(g, SolverParams::new(1.0, 1.0, PI / 40.0), nl, None).unwrap()
    }

    fn star_ctx() -> EnergyContext {
        let g = build_graph(&GraphSpec::star(3, 4.0)).unwrap();
        let v = Potential {
            v_infinity: 0.3,
            wells: vec![Well { center: GraphPoint::new(0, 1.0), depth: 0.5, width: 0.5 }],
        };
        EnergyContext::new(g, SolverParams::new(1.0, 1.0, 0.1), Nonlinearity::pure_power(4.0), Some(v)).unwrap()
    }

    /// Direct quadrature of `∫F(|u|)`, written independently of the slot tables.
    fn direct_nonlinear(ctx: &EnergyContext, u: &Spinor) -> f64 {
        let grid = &ctx.op.grid;
        let mut total = 0.0;
        for e in 0..grid.intervals.len() {
            let n = grid.intervals[e];
            let h = grid.spacing[e];
            for j in 0..=n {
                let up = grid.node_dofs[e][j].map_or(0.0, |d| u.0[d].norm_sqr());
                let low = if j == 0 {
                    u.0[grid.mid_dofs[e][0]].norm_sqr()
                } else if j == n {
                    u.0[grid.mid_dofs[e][n - 1]].norm_sqr()
                } else {
                    0.5 * (u.0[grid.mid_dofs[e][j - 1]].norm_sqr() + u.0[grid.mid_dofs[e][j]].norm_sqr())
                };
                let w = if j == 0 || j == n { h / 2.0 } else { h };
                total += w * ctx.nl.primitive((up + low).sqrt()).unwrap();
            }
        }
        total
    }

    #[test]
    fn zero_spinor_has_zero_energy_and_gradient() {
        let ctx = interval_ctx(Nonlinearity::pure_power(4.0));
        let z = Spinor::zeros(ctx.dim());
        assert_eq!(ctx.j_lambda(0.3, &z).unwrap(), 0.0);
        assert_eq!(ctx.functional(Functional::Autonomous { lambda: 0.3 }).unwrap().grad(&z).unwrap().dual_norm(), 0.0);
        let sc = star_ctx();
        assert_eq!(sc.i_eps(0.5, &Spinor::zeros(sc.dim())).unwrap(), 0.0);
    }

    #[test]
    fn argument_errors() {
        let ctx = interval_ctx(Nonlinearity::pure_power(4.0));
        assert!(matches!(ctx.j_lambda(1.0, &Spinor::zeros(ctx.dim())), Err(EnergyError::LambdaOutOfGap { .. })));
        assert_eq!(ctx.i_eps(0.5, &Spinor::zeros(ctx.dim())), Err(EnergyError::NoPotential));
        let sc = star_ctx();
        assert_eq!(sc.i_eps(0.0, &Spinor::zeros(sc.dim())), Err(EnergyError::BadEpsilon(0.0)));
        assert!(sc.check_scale(0.5).is_ok());
        assert!(matches!(sc.check_scale(0.2), Err(EnergyError::TruncationTooShort { .. })));
    }

    #[test]
    fn scaled_eigenvector_energy_matches_direct_quadrature() {
        let ctx = interval_ctx(Nonlinearity::pure_power(4.0));
        let lambda = -0.3;
        for k in [ctx.split.lowest_positive(), ctx.split.lowest_positive() + 2] {
            let v = ctx.split.eigenvector(k);
            let alpha = 0.8;
            let u = v.scale(Complex64::new(alpha, 0.0));
            let lk = ctx.split.eigenvalues[k];
            let l2 = ctx.op.l2_norm(&v).powi(2);
            let expected = 0.5 * alpha * alpha * (lk + lambda * l2) - direct_nonlinear(&ctx, &u);
            let got = ctx.j_lambda(lambda, &u).unwrap();
            assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        }
    }

    #[test]
    fn negative_subspace_bound() {
        let ctx = interval_ctx(Nonlinearity::pure_power(4.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for lambda in [-0.6f64, 0.0, 0.6] {
            for _ in 0..20 {
                let u = ctx.split.project(&random_spinor(ctx.dim(), &mut rng, 1.0), Sign::Minus).unwrap();
                let fnorm2 = ctx.split.form_norm(&u).unwrap().powi(2);
                let bound = 0.5 * (-1.0 + lambda.abs() / ctx.params.mc2()) * fnorm2;
                let j = ctx.j_lambda(lambda, &u).unwrap();
                assert!(j <= bound + 1e-12 && j < 0.0);
            }
        }
    }

    #[test]
    fn constant_potential_reduces_to_autonomous() {
        let g = build_graph(&GraphSpec::star(3, 4.0)).unwrap();
        let ctx = EnergyContext::new(
            g,
            SolverParams::new(1.0, 1.0, 0.1),
            Nonlinearity::pure_power(4.0),
            Some(Potential::constant(0.25)),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for eps in [0.1, 0.7] {
            let u = random_spinor(ctx.dim(), &mut rng, 1.0);
            let i = ctx.i_eps(eps, &u).unwrap();
            let j = ctx.j_lambda(0.25, &u).unwrap();
            assert!((i - j).abs() < 1e-12 * i.abs().max(1.0));
        }
    }

    #[test]
    fn semiclassical_sandwiched_by_autonomous() {
        let ctx = star_ctx();
        let v0 = -0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for eps in [0.5, 1.0] {
            let e = ctx.functional(Functional::Semiclassical { eps }).unwrap();
            let lo = ctx.functional(Functional::Autonomous { lambda: v0 }).unwrap();
            let hi = ctx.functional(Functional::Autonomous { lambda: 0.3 }).unwrap();
            for _ in 0..200 {
                let u = random_spinor(ctx.dim(), &mut rng, 0.5);
                let i = e.value(&u).unwrap();
                assert!(i >= lo.value(&u).unwrap() - 1e-12);
                assert!(i <= hi.value(&u).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn phase_invariance() {
        let ctx = star_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = ctx.functional(Functional::Semiclassical { eps: 0.7 }).unwrap();
        for _ in 0..20 {
            let u = random_spinor(ctx.dim(), &mut rng, 1.0);
            let phi: f64 = rng.random::<f64>() * 6.0;
            let a = e.value(&u).unwrap();
            let b = e.value(&u.scale(Complex64::from_polar(1.0, phi))).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn split_quadratic_matches_form_norms() {
        let ctx = star_ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let u = random_spinor(ctx.dim(), &mut rng, 1.0);
            let p = ctx.split.form_norm(&ctx.split.project(&u, Sign::Plus).unwrap()).unwrap();
            let m = ctx.split.form_norm(&ctx.split.project(&u, Sign::Minus).unwrap()).unwrap();
            let q = ctx.split.quadratic_form(&u).unwrap();
            assert!((0.5 * (p * p - m * m) - q).abs() < 1e-10 * q.abs().max(1.0));
        }
    }

    #[test]
    fn riesz_vector_routes_agree_and_represent_the_action() {
        let ctx = star_ctx();
        let e = ctx.functional(Functional::Semiclassical { eps: 0.6 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = random_spinor(ctx.dim(), &mut rng, 1.0);
        let g = e.grad(&u).unwrap();
        let direct = e.riesz_direct(&u).unwrap();
        let scale = ctx.op.l2_norm(&direct);
        assert!(ctx.op.l2_norm(&g.riesz.sub(&direct)) < 1e-9 * scale);
        // coordinate action agrees with the L² action
        let v = random_spinor(ctx.dim(), &mut rng, 1.0);
        let av = ctx.form_coords(&v).unwrap();
        let coord_action = g.coords.dot(&av);
        let l2_action = g.action(&ctx.op, &v).unwrap();
        assert!((coord_action - l2_action).abs() < 1e-10 * l2_action.abs().max(1.0));
    }

    #[test]
    fn linear_case_gradient_is_eigenvalue_times_inner_product() {
        let ctx = interval_ctx(Nonlinearity::pure_power(4.0));
        let lin = EnergyContext::from_parts(
            ctx.graph.clone(),
            ctx.op.clone(),
            ctx.split.clone(),
            Nonlinearity::power_sum(Vec::new()),
            None,
        )
        .unwrap();
        let e = lin.functional(Functional::Autonomous { lambda: 0.0 }).unwrap();
        let k = lin.split.lowest_positive() + 1;
        let u = lin.split.eigenvector(k);
        let g = e.grad(&u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let v = random_spinor(lin.dim(), &mut rng, 1.0);
            let expected = lin.split.eigenvalues[k] * lin.op.l2_inner(&u, &v).unwrap().re;
            assert!((g.action(&lin.op, &v).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn central_differences_converge_quadratically() {
        let ctx = star_ctx();
        let e = ctx.functional(Functional::Semiclassical { eps: 0.6 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut errs = [0.0; 2];
        for _ in 0..10 {
            let u = random_spinor(ctx.dim(), &mut rng, 1.0);
            let v = random_spinor(ctx.dim(), &mut rng, 1.0);
            let d = e.grad(&u).unwrap().action(&ctx.op, &v).unwrap();
            for (i, delta) in [1e-3, 1e-4].into_iter().enumerate() {
                let fd = (e.value(&u.axpy(delta, &v)).unwrap() - e.value(&u.axpy(-delta, &v)).unwrap())
                    / (2.0 * delta);
                errs[i] += (fd - d).abs();
            }
        }
        let order = (errs[0] / errs[1]).log10();
        assert!((1.8..=2.2).contains(&order), "order {order}, errs {errs:?}");
    }
}
