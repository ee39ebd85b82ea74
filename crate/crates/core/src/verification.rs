//! Brute-force oracles: scalar inequalities, closed-form spectra and
//! finite-difference gradient checks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::discretization::{assemble, spectral_split, DiscreteOperator, DiscretizationError, SolverParams, SpectralSplit, Spinor};
use crate::graph::{build_graph, GraphSpec};
use crate::energy::Energy;
use crate::model::Nonlinearity;
use crate::nehari::{random_direction, NehariSolver, PlusDirection};

/// Outcome of a randomized oracle scan. `worst_margin` follows the oracle's
/// own sign convention; failing samples keep their full inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub seed: u64,
    pub samples: usize,
    pub worst_margin: f64,
    /// Observed convergence order range for finite-difference oracles.
    pub order: Option<(f64, f64)>,
    pub failures: Vec<String>,
}

impl OracleReport {
    fn new(name: &str, seed: u64) -> Self {
        OracleReport { name: name.into(), seed, samples: 0, worst_margin: f64::NEG_INFINITY, order: None, failures: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {} samples={} seed={} worst_margin={:.3e}",
            self.name,
            if self.passed() { "ok  " } else { "FAIL" },
            self.samples,
            self.seed,
            self.worst_margin
        )?;
        if let Some((lo, hi)) = self.order {
            write!(f, " order=[{lo:.3}, {hi:.3}]")?;
        }
        for s in self.failures.iter().take(5) {
            write!(f, "\n    {s}")?;
        }
        if self.failures.len() > 5 {
            write!(f, "\n    ... {} more", self.failures.len() - 5)?;
        }
        Ok(())
    }
}

fn norm2(u: &[Complex64; 2]) -> f64 {
    (u[0].norm_sqr() + u[1].norm_sqr()).sqrt()
}

/// `Re[f(|u|) u·conj(t²/2 u − u/2 + t v)] + F(|u|) − F(|tu + v|)`.
pub fn lemma32_h(u: [Complex64; 2], v: [Complex64; 2], t: f64, nl: &Nonlinearity) -> f64 {
    let nu = norm2(&u);
    let w = [u[0] * (0.5 * t * t - 0.5) + v[0] * t, u[1] * (0.5 * t * t - 0.5) + v[1] * t];
    let dot = (u[0] * w[0].conj() + u[1] * w[1].conj()).re;
    let tuv = [u[0] * t + v[0], u[1] * t + v[1]];
    nl.f_unchecked(nu) * dot + nl.primitive_unchecked(nu) - nl.primitive_unchecked(norm2(&tuv))
}

fn complex_pair(rng: &mut ChaCha8Rng, scale: f64) -> [Complex64; 2] {
    let mut c = || Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)) * scale;
    [c(), c()]
}

/// Randomized scan of `h < 0` over `t ≥ 1`, `v ≠ 0`, magnitudes spread over
/// two decades. Every tenth sample has `u = 0` and every tenth `t = 1`.
pub fn lemma32_scan(nl: &Nonlinearity, samples: usize, seed: u64) -> OracleReport {
    let mut rep = OracleReport::new("scalar kernel h(t) < 0", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..samples {
        let su = 10f64.powf(rng.random_range(-1.0..1.0));
        let sv = 10f64.powf(rng.random_range(-1.0..1.0));
        let u = if k % 10 == 3 { [Complex64::new(0.0, 0.0); 2] } else { complex_pair(&mut rng, su) };
        let v = complex_pair(&mut rng, sv);
        let t = if k % 10 == 7 { 1.0 } else { 1.0 + rng.random::<f64>() * 4.0 };
        let h = lemma32_h(u, v, t, nl);
        rep.worst_margin = rep.worst_margin.max(h);
        if !(h < 0.0) {
            rep.failures.push(format!("h = {h:e} at u = {u:?}, v = {v:?}, t = {t}"));
        }
        rep.samples += 1;
    }
    rep
}

/// Closed-form spectrum of one edge with `u² = 0` at both ends, ascending:
/// `+mc²` and `±sqrt(m²c⁴ + c²(nπ/ℓ)²)` for `1 ≤ n ≤ n_max`.
pub fn dispersion_interval(length: f64, m: f64, c: f64, n_max: usize) -> Vec<f64> {
    let mc2 = m * c * c;
    let mut out = vec![mc2];
    for n in 1..=n_max {
        let k = n as f64 * std::f64::consts::PI / length;
        let e = (mc2 * mc2 + c * c * k * k).sqrt();
        out.push(e);
        out.push(-e);
    }
    out.sort_by(f64::total_cmp);
    out
}

/// The `count` oracle eigenvalues of smallest modulus against the computed
/// spectrum; returns the largest relative error.
pub fn dispersion_error(split: &SpectralSplit, oracle: &[f64], count: usize) -> f64 {
    let by_modulus = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        v.truncate(count);
        v.sort_by(f64::total_cmp);
        v
    };
    let (num, exact) = (by_modulus(&split.eigenvalues), by_modulus(oracle));
    num.iter().zip(&exact).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max)
}

/// Largest relative error of the `count` smallest-modulus eigenvalues on
/// `[0, ℓ]` for each spacing, followed by the observed orders between
/// consecutive spacings.
pub fn interval_convergence(
    length: f64,
    m: f64,
    c: f64,
    spacings: &[f64],
    count: usize,
) -> Result<(Vec<f64>, Vec<f64>), DiscretizationError> {
    let g = build_graph(&GraphSpec::interval(length)).map_err(|e| DiscretizationError::BadParams(e.to_string()))?;
    let oracle = dispersion_interval(length, m, c, count);
    let mut errors = Vec::new();
    for &h in spacings {
        let split = spectral_split(&assemble(&g, &SolverParams::new(m, c, h))?)?;
        errors.push(dispersion_error(&split, &oracle, count));
    }
    let orders = errors
        .windows(2)
        .zip(spacings.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok((errors, orders))
}

/// `(min |λ|, mc²(1 − 10h²))`.
pub fn gap_check(split: &SpectralSplit, params: &SolverParams) -> (f64, f64) {
    let min = split.eigenvalues.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    (min, params.mc2() * (1.0 - 10.0 * params.h * params.h))
}

/// Random spinor with independent Gaussian components.
pub fn random_spinor(n: usize, rng: &mut ChaCha8Rng) -> Spinor {
    Spinor(nalgebra::DVector::from_fn(n, |_, _| {
        Complex64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng))
    }))
}

/// `‖u‖² − mc²‖u‖²_{L²} ≥ 0` relative to `‖u‖²`. The first sample is the
/// zero spinor, the second the gap-edge eigenvector.
pub fn lemma21_scan(op: &DiscreteOperator, split: &SpectralSplit, samples: usize, seed: u64) -> OracleReport {
    let mut rep = OracleReport::new("form norm dominates L2", seed);
    rep.worst_margin = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mc2 = op.params.mc2();
    for k in 0..samples {
        let u = match k {
            0 => Spinor::zeros(op.dim()),
            1 => split.eigenvector(split.lowest_positive()),
            _ => random_spinor(op.dim(), &mut rng),
        };
        let form = match split.form_norm(&u) {
            Ok(x) => x * x,
            Err(e) => {
                rep.failures.push(format!("sample {k}: {e}"));
                continue;
            }
        };
        let l2 = op.l2_norm(&u).powi(2);
        rep.samples += 1;
        if form == 0.0 {
            if l2 > 0.0 {
                rep.failures.push(format!("sample {k}: zero form norm with L2 {l2:e}"));
            }
            continue;
        }
        let margin = (form - mc2 * l2) / form;
        rep.worst_margin = rep.worst_margin.min(margin);
        if margin < -1e-10 {
            rep.failures.push(format!("sample {k}: margin {margin:e} (form {form:e}, L2 {l2:e})"));
        }
    }
    rep
}

fn order_of(errs: [f64; 2], deltas: [f64; 2]) -> f64 {
    (errs[0] / errs[1]).ln() / (deltas[0] / deltas[1]).ln()
}

fn finish_order(rep: &mut OracleReport, orders: &[f64], band: (f64, f64)) {
    let lo = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    rep.order = Some((lo, hi));
    rep.worst_margin = (band.0 - lo).max(hi - band.1);
}

/// Central differences of the energy against its derivative along random
/// directions at random points; order from the two step sizes.
pub fn energy_gradient_check(energy: &Energy<'_>, probes: usize, deltas: [f64; 2], seed: u64) -> OracleReport {
    let mut rep = OracleReport::new("energy gradient order", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctx = energy.ctx;
    let mut orders = Vec::new();
    for k in 0..probes {
        let u = random_spinor(ctx.dim(), &mut rng);
        let v = random_spinor(ctx.dim(), &mut rng);
        let exact = match energy.grad(&u).and_then(|g| g.action(&ctx.op, &v)) {
            Ok(x) => x,
            Err(e) => {
                rep.failures.push(format!("probe {k}: {e}"));
                continue;
            }
        };
        let mut errs = [0.0; 2];
        for (i, d) in deltas.iter().enumerate() {
            let fd = (energy.value(&u.axpy(*d, &v)).unwrap_or(f64::NAN) - energy.value(&u.axpy(-*d, &v)).unwrap_or(f64::NAN)) / (2.0 * d);
            errs[i] = (fd - exact).abs();
        }
        let p = order_of(errs, deltas);
        if !(1.8..=2.2).contains(&p) {
            rep.failures.push(format!("probe {k}: order {p:.3}, errors {errs:?}"));
        }
        orders.push(p);
        rep.samples += 1;
    }
    finish_order(&mut rep, &orders, (1.8, 2.2));
    rep
}

fn tangent_probe(n_plus: usize, w: &PlusDirection, seed: u64) -> PlusDirection {
    let z = random_direction(n_plus, 30, seed).0;
    let z = &z - &w.0 * z.dot(&w.0);
    PlusDirection(&z / z.norm())
}

/// Central differences of the reduced functional along tangent directions
/// against its tangent gradient.
pub fn reduced_gradient_check(solver: &NehariSolver<'_, '_>, probes: usize, deltas: [f64; 2], seed: u64) -> OracleReport {
    let mut rep = OracleReport::new("reduced gradient order", seed);
    let n = solver.n_plus();
    let mut orders = Vec::new();
    for k in 0..probes {
        let s = seed.wrapping_mul(1000).wrapping_add(2 * k as u64);
        let w = random_direction(n, 30, s);
        let z = tangent_probe(n, &w, s + 1);
        let run = || -> Result<[f64; 2], crate::nehari::NehariError> {
            let exact = solver.reduced_grad(&w)?.0.dot(&z.0);
            let mut errs = [0.0; 2];
            for (i, d) in deltas.iter().enumerate() {
                let shift = |sign: f64| PlusDirection(DMatrix::from(&w.0 + &z.0 * (sign * d)));
                let fd = (solver.reduced_value(&shift(1.0))? - solver.reduced_value(&shift(-1.0))?) / (2.0 * d);
                errs[i] = (fd - exact).abs();
            }
            Ok(errs)
        };
        match run() {
            Ok(errs) => {
                let p = order_of(errs, deltas);
                if !(1.8..=2.2).contains(&p) {
                    rep.failures.push(format!("probe {k}: order {p:.3}, errors {errs:?}"));
                }
                orders.push(p);
                rep.samples += 1;
            }
            Err(e) => rep.failures.push(format!("probe {k}: {e}")),
        }
    }
    finish_order(&mut rep, &orders, (1.8, 2.2));
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{EnergyContext, Functional};
    use crate::nehari::NehariOptions;
    use std::f64::consts::PI;

    #[test]
    fn scalar_kernel_examples() {
        let nl = Nonlinearity::pure_power(4.0);
        let z = Complex64::new(0.0, 0.0);
        let v = [Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.5)];
        let h = lemma32_h([z, z], v, 1.7, &nl);
        assert!((h + nl.primitive_unchecked(norm2(&v))).abs() < 1e-15);
        let u = [Complex64::new(0.8, 0.1), Complex64::new(-0.4, 0.9)];
        assert!(lemma32_h(u, [z, z], 1.0, &nl).abs() < 1e-15);
    }

    #[test]
    fn scalar_kernel_scan_small() {
        for p in [3.0, 4.0, 6.0] {
            let rep = lemma32_scan(&Nonlinearity::pure_power(p), 2000, 7);
            assert!(rep.passed(), "{rep}");
            assert!(rep.worst_margin < 0.0);
        }
    }

    #[test]
    fn dispersion_example() {
        let d = dispersion_interval(PI, 1.0, 1.0, 2);
        let expect = [-(5f64.sqrt()), -(2f64.sqrt()), 1.0, 2f64.sqrt(), 5f64.sqrt()];
        assert_eq!(d.len(), 5);
        for (a, b) in d.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(!d.iter().any(|&x| (x + 1.0).abs() < 1e-12));
        assert_eq!(d.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min), 1.0);
    }

    #[test]
    fn discrete_interval_spectrum_matches_dispersion() {
        let g = build_graph(&GraphSpec::interval(PI)).unwrap();
        let op = assemble(&g, &SolverParams::new(1.0, 1.0, PI / 200.0)).unwrap();
        let split = spectral_split(&op).unwrap();
        let err = dispersion_error(&split, &dispersion_interval(PI, 1.0, 1.0, 20), 11);
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn interval_errors_shrink_quadratically() {
        let (errs, orders) = interval_convergence(PI, 1.0, 1.0, &[PI / 50.0, PI / 100.0], 10).unwrap();
        assert!(errs[1] < errs[0]);
        assert!(orders[0] > 1.9, "{orders:?}");
    }

    #[test]
    fn form_norm_dominates_l2_on_the_star() {
        let g = build_graph(&GraphSpec::star(3, 4.0)).unwrap();
        let op = assemble(&g, &SolverParams::new(1.0, 1.0, 0.1)).unwrap();
        let split = spectral_split(&op).unwrap();
        let rep = lemma21_scan(&op, &split, 50, 3);
        assert!(rep.passed(), "{rep}");
        // the gap-edge eigenvector is the tightest spinor
        let l = split.eigenvalues[split.lowest_positive()];
        assert!((rep.worst_margin - (l - 1.0) / l).abs() < 1e-10, "{} vs {}", rep.worst_margin, (l - 1.0) / l);
    }

    #[test]
    fn gradient_orders() {
        let g = build_graph(&GraphSpec::star(3, 4.0)).unwrap();
        let ctx = EnergyContext::new(g, SolverParams::new(1.0, 1.0, 0.1), Nonlinearity::pure_power(4.0), None).unwrap();
        let e = ctx.functional(Functional::Autonomous { lambda: 0.2 }).unwrap();
        let rep = energy_gradient_check(&e, 5, [4e-3, 2e-3], 11);
        assert!(rep.passed(), "{rep}");
        let s = NehariSolver::new(&e, NehariOptions::default()).unwrap();
        let rep = reduced_gradient_check(&s, 3, [2e-2, 1e-2], 12);
        assert!(rep.passed(), "{rep}");
    }

    #[test]
    fn linear_energy_differences_are_exact() {
        let g = build_graph(&GraphSpec::interval(2.0)).unwrap();
        let ctx = EnergyContext::new(g, SolverParams::new(1.0, 1.0, 0.1), Nonlinearity::power_sum(Vec::new()), None).unwrap();
        let e = ctx.functional(Functional::Autonomous { lambda: 0.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_spinor(ctx.dim(), &mut rng);
        let v = random_spinor(ctx.dim(), &mut rng);
        let exact = e.grad(&u).unwrap().action(&ctx.op, &v).unwrap();
        let fd = (e.value(&u.axpy(0.1, &v)).unwrap() - e.value(&u.axpy(-0.1, &v)).unwrap()) / 0.2;
        assert!((fd - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "{fd} {exact}");
    }
}
