//! Browser bindings: the radial ground state, an entrance-energy sweep and a
//! small ring-well solve. Each export returns a JSON string; the `*_value`
//! functions hold the logic and run natively in tests.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use choquard::ansatz::{entrance_energy, CutoffBump, EntranceSpec};
use choquard::coulomb::CoulombKernel;
use choquard::field::Grid3;
use choquard::groundstate::{solve_limit, GroundStateOptions, GOLDEN_E1};
use choquard::magnetic::{ElectricPreset, MagneticPreset, Potentials};
use choquard::solver::{default_seeds, minimize, SolveOptions};
use choquard::symmetry::SymmetrySector;

type Res = Result<Value, String>;

fn s<E: ToString>(e: E) -> String {
    e.to_string()
}

fn ring_well(n: usize, l: f64, eps: f64) -> Result<Potentials, String> {
    let grid = Grid3::new(n, l).map_err(s)?;
    Potentials::from_presets(grid, &MagneticPreset::Standard, &ElectricPreset::ring_well_default(), eps).map_err(s)
}

fn profile() -> Result<choquard::groundstate::RadialProfile, String> {
    solve_limit(1.0, &GroundStateOptions::default()).map_err(s)
}

/// ω_λ sampled at `samples` radii out to 12/√λ, with E_λ and E_λ/(λ^{3/2}E_1).
pub fn ground_state_value(lambda: f64, samples: usize) -> Res {
    let p = solve_limit(lambda, &GroundStateOptions::default()).map_err(s)?;
    let r_end = 12.0 / lambda.sqrt();
    let k = samples.max(2);
    let r: Vec<f64> = (0..k).map(|i| r_end * i as f64 / (k - 1) as f64).collect();
    let values: Vec<f64> = r.iter().map(|&x| p.eval(x)).collect();
    Ok(json!({
        "lambda": lambda,
        "energy": p.energy,
        "scaling_ratio": p.energy / (lambda.powf(1.5) * GOLDEN_E1),
        "r": r,
        "values": values,
    }))
}

/// ε⁻³J(π(ψ_{ε,ξ})) for the ring well with standard A, one row per ε.
pub fn entrance_sweep_value(m: u32, j: u32, n: usize, l: f64, eps: &[f64]) -> Res {
    let sector = SymmetrySector::new(m, j).map_err(s)?;
    let prof = profile()?;
    let mut rows = Vec::new();
    for &e in eps {
        let p = ring_well(n, l, e)?;
        let kernel = CoulombKernel::new(*p.grid());
        let (seeds, ell) = default_seeds(&p, &sector).map_err(s)?;
        let spec = EntranceSpec::at(seeds[0], sector, &p).map_err(s)?;
        let bump = CutoffBump::new(&prof, spec.lambda, e).map_err(s)?;
        let energy = entrance_energy(&spec, &bump, &p, &kernel).map_err(s)?;
        rows.push(json!({ "epsilon": e, "energy_scaled": energy, "ratio": energy / (ell * GOLDEN_E1) }));
    }
    Ok(Value::Array(rows))
}

/// Minimizes in the (m, j) sector from the entrance field and returns the
/// scalars plus |u| on the plane t = 0, row-major n × n.
pub fn solve_value(m: u32, j: u32, n: usize, l: f64, eps: f64, max_iter: usize) -> Res {
    let sector = SymmetrySector::new(m, j).map_err(s)?;
    let p = ring_well(n, l, eps)?;
    let grid = *p.grid();
    let kernel = CoulombKernel::new(grid);
    let prof = profile()?;
    let (seeds, ell) = default_seeds(&p, &sector).map_err(s)?;
    let spec = EntranceSpec::at(seeds[0], sector, &p).map_err(s)?;
    let bump = CutoffBump::new(&prof, spec.lambda, eps).map_err(s)?;
    let start = choquard::ansatz::entrance(&spec, &bump, &p).map_err(s)?;
    let opts = SolveOptions { max_iter: max_iter.max(1), ..SolveOptions::default() };
    let r = minimize(&start, &p, &sector, &kernel, &opts).map_err(s)?;
    let k = n / 2;
    let slice: Vec<f64> = (0..n * n).map(|q| r.u.values()[grid.index(q / n, q % n, k)].norm()).collect();
    Ok(json!({
        "energy_scaled": r.energy_scaled,
        "ratio": r.energy_scaled / (ell * GOLDEN_E1),
        "iterations": r.iterations,
        "converged": r.converged,
        "grad_norm_scaled": r.grad_norm_scaled,
        "n": n,
        "L": l,
        "slice": slice,
    }))
}

fn export(v: Res) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ground_state(lambda: f64) -> Result<String, JsError> {
    export(ground_state_value(lambda, 240))
}

#[wasm_bindgen]
pub fn entrance_sweep(m: u32, j: u32, n: usize, l: f64, eps: Vec<f64>) -> Result<String, JsError> {
    export(entrance_sweep_value(m, j, n, l, &eps))
}

#[wasm_bindgen]
pub fn solve(m: u32, j: u32, n: usize, l: f64, eps: f64, max_iter: usize) -> Result<String, JsError> {
    export(solve_value(m, j, n, l, eps, max_iter))
}
