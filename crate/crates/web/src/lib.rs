//! Browser bindings: spectrum, ground-state profile and level curve as JSON.

use nldirac::discretization::{assemble, spectral_split, SolverParams};
use nldirac::energy::EnergyContext;
use nldirac::graph::{build_graph, GraphSpec, MetricGraph};
use nldirac::model::Nonlinearity;
use nldirac::nehari::{ground_level_d, NehariOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn graph(preset: &str, length: f64) -> Result<MetricGraph, String> {
    let spec = match preset {
        "interval" => GraphSpec::interval(length),
        "star" => GraphSpec::star(3, length),
        "tadpole" => GraphSpec::tadpole(2.0, length),
        other => return Err(format!("unknown preset `{other}`")),
    };
    build_graph(&spec).map_err(|e| e.to_string())
}

fn params(h: f64) -> Result<SolverParams, String> {
    let p = SolverParams::new(1.0, 1.0, h);
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn context(preset: &str, length: f64, h: f64, exponent: f64) -> Result<EnergyContext, String> {
    EnergyContext::new(graph(preset, length)?, params(h)?, Nonlinearity::pure_power(exponent), None).map_err(|e| e.to_string())
}

fn options(seed: u64) -> NehariOptions {
    NehariOptions { multistart: 1, seed, ..NehariOptions::default() }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct SpectrumOut {
    eigenvalues: Vec<f64>,
    n_negative: usize,
    mc2: f64,
}

pub fn spectrum_json(preset: &str, length: f64, h: f64) -> Result<String, String> {
    let p = params(h)?;
    let op = assemble(&graph(preset, length)?, &p).map_err(|e| e.to_string())?;
    let split = spectral_split(&op).map_err(|e| e.to_string())?;
    Ok(json(&SpectrumOut { eigenvalues: split.eigenvalues.as_slice().to_vec(), n_negative: split.n_negative, mc2: p.mc2() }))
}

#[derive(Serialize)]
struct EdgeProfile {
    edge: usize,
    length: f64,
    s: Vec<f64>,
    modulus: Vec<f64>,
}

#[derive(Serialize)]
struct GroundOut {
    level: f64,
    plus_norm: f64,
    nehari_residual: f64,
    iterations: usize,
    edges: Vec<EdgeProfile>,
}

pub fn ground_state_json(preset: &str, length: f64, h: f64, exponent: f64, lambda: f64, seed: u64) -> Result<String, String> {
    let ctx = context(preset, length, h, exponent)?;
    let est = ground_level_d(&ctx, lambda, &options(seed)).map_err(|e| e.to_string())?;
    let p = &est.best.point;
    let mut edges: Vec<EdgeProfile> = ctx
        .graph
        .edges
        .iter()
        .enumerate()
        .map(|(edge, e)| EdgeProfile { edge, length: e.length, s: Vec::new(), modulus: Vec::new() })
        .collect();
    for (pt, a, b) in ctx.op.slot_moduli(&p.u) {
        let e = &mut edges[pt.edge];
        e.s.push(pt.s);
        e.modulus.push((a * a + b * b).sqrt());
    }
    Ok(json(&GroundOut {
        level: est.level,
        plus_norm: p.plus_norm,
        nehari_residual: p.nehari_residual,
        iterations: est.best.iterations,
        edges,
    }))
}

#[derive(Serialize)]
struct CurveOut {
    lambdas: Vec<f64>,
    levels: Vec<f64>,
}

pub fn level_curve_json(preset: &str, length: f64, h: f64, exponent: f64, lambdas: &[f64], seed: u64) -> Result<String, String> {
    let ctx = context(preset, length, h, exponent)?;
    let levels = lambdas
        .iter()
        .map(|&l| ground_level_d(&ctx, l, &options(seed)).map(|e| e.level).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json(&CurveOut { lambdas: lambdas.to_vec(), levels }))
}

/// Eigenvalues of the discretized operator (mc² = 1).
#[wasm_bindgen]
pub fn spectrum(preset: &str, length: f64, h: f64) -> Result<String, JsError> {
    spectrum_json(preset, length, h).map_err(|e| JsError::new(&e))
}

/// Ground state at frequency `lambda`: level and `|u|` along every edge.
#[wasm_bindgen]
pub fn ground_state(preset: &str, length: f64, h: f64, exponent: f64, lambda: f64, seed: u32) -> Result<String, JsError> {
    ground_state_json(preset, length, h, exponent, lambda, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn level_curve(preset: &str, length: f64, h: f64, exponent: f64, lambdas: Vec<f64>, seed: u32) -> Result<String, JsError> {
    level_curve_json(preset, length, h, exponent, &lambdas, seed as u64).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn spectrum_has_the_gap() {
        let v: Value = serde_json::from_str(&spectrum_json("interval", 3.0, 0.1).unwrap()).unwrap();
        let ev: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(ev.iter().all(|l| l.abs() >= 0.9));
        assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ground_state_profile_covers_every_edge() {
        let v: Value = serde_json::from_str(&ground_state_json("star", 8.0, 0.1, 4.0, 0.0, 1).unwrap()).unwrap();
        let level = v["level"].as_f64().unwrap();
        assert!((level - 0.9992).abs() < 1e-3, "{level}");
        let edges = v["edges"].as_array().unwrap();
        assert_eq!(edges.len(), 3);
        for e in edges {
            assert_eq!(e["s"].as_array().unwrap().len(), e["modulus"].as_array().unwrap().len());
        }
    }

    #[test]
    fn level_curve_increases_and_bad_input_is_an_error() {
        let v: Value = serde_json::from_str(&level_curve_json("interval", 6.0, 0.1, 4.0, &[-0.3, 0.0, 0.3], 2).unwrap()).unwrap();
        let d: Vec<f64> = v["levels"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
        assert!((d[1] - 0.4992).abs() < 2e-3, "half-soliton level {}", d[1]);
        assert!(spectrum_json("cube", 1.0, 0.1).is_err());
        assert!(level_curve_json("interval", 6.0, 0.1, 4.0, &[1.5], 2).is_err());
    }
}
