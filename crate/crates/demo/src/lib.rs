//! WebAssembly bindings for the static demo page in `www/`. Every export
//! returns a JSON string; errors come back as `{"error": "..."}`.

use mcbf::decentralized::Method;
use mcbf::det_equiv::{run_pipeline, Targets, EquivOpts};
use mcbf::duality::{solve_centralized, FixedPointOpts};
use mcbf::harness::{realize, run_method, Layout};
use mcbf::scenario::{one_ring_correlation, NetworkConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn finish(r: mcbf::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn finite(x: f64) -> Value {
    if x.is_finite() { json!(x) } else { Value::Null }
}

/// One-ring correlation of an `n`-antenna array: magnitudes, phases and
/// eigenvalues in descending order.
pub fn correlation(n: usize, center_deg: f64, spread_deg: f64, spacing: f64) -> mcbf::Result<Value> {
    let (c, w) = (center_deg.to_radians(), spread_deg.to_radians());
    let theta = one_ring_correlation(1.0, c - w / 2.0, c + w / 2.0, n, spacing)?.to_dense();
    let mut eig: Vec<f64> = theta.symmetric_eigenvalues().iter().map(|e| e.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let rows = |f: fn(&mcbf::C64) -> f64| -> Vec<Vec<f64>> { (0..n).map(|i| (0..n).map(|j| f(&theta[(i, j)])).collect()).collect() };
    Ok(json!({ "abs": rows(|z| z.norm()), "arg": rows(|z| z.arg()), "eigenvalues": eig }))
}

fn network(cells: usize, ues_per_cell: usize, antennas: usize, target_rate: f64) -> NetworkConfig {
    NetworkConfig { cells, ues_per_cell, antennas, target_rate, ..Default::default() }
}

/// All methods on one drop of the hexagonal layout.
pub fn compare(cells: usize, ues_per_cell: usize, antennas: usize, target_rate: f64, seed: u64) -> mcbf::Result<Value> {
    let cfg = network(cells, ues_per_cell, antennas, target_rate);
    cfg.validate()?;
    let r = realize(&cfg, Layout::Hex, seed)?;
    let opts = Default::default();
    let rows = Method::ALL
        .iter()
        .filter(|&&m| m != Method::Grouped)
        .map(|&m| {
            let rec = run_method(m, seed, &r, &opts)?;
            let audited = !rec.per_ue_rate().is_empty();
            let num = |x: f64| if audited { finite(x) } else { Value::Null };
            Ok(json!({
                "method": m.tag(),
                "feasible": rec.feasible,
                "power_dbm": num(rec.total_power_dbm()),
                "min_rate": num(rec.min_rate()),
                "mean_rate": num(rec.mean_rate()),
                "backhaul": rec.backhaul_scalars,
            }))
        })
        .collect::<mcbf::Result<Vec<Value>>>()?;
    Ok(json!({ "target_rate": target_rate, "rows": rows }))
}

/// Exact dual powers λ* of one drop next to their deterministic
/// equivalents λ̄, per UE.
pub fn dual_powers(cells: usize, ues_per_cell: usize, antennas: usize, target_rate: f64, seed: u64) -> mcbf::Result<Value> {
    let cfg = network(cells, ues_per_cell, antennas, target_rate);
    cfg.validate()?;
    let r = realize(&cfg, Layout::Hex, seed)?;
    let s = &r.scenario;
    let exact = solve_centralized(s, &r.channels, &FixedPointOpts::default())?;
    let tg = Targets { serving: &s.serving, gamma: &s.gamma, mu: &s.mu, noise_power: s.noise_power };
    let de = run_pipeline(&r.correlations, tg, &EquivOpts::default())?;
    let ues: Vec<Value> = (0..s.n_ue())
        .map(|k| json!({ "cell": s.serving[k], "exact": finite(exact.lambda[k]), "approx": finite(de.lambda_bar[k]) }))
        .collect();
    Ok(json!({ "feasible": exact.feasible, "ues": ues }))
}

#[wasm_bindgen(js_name = correlation)]
pub fn correlation_js(n: usize, center_deg: f64, spread_deg: f64, spacing: f64) -> String {
    finish(correlation(n, center_deg, spread_deg, spacing))
}

#[wasm_bindgen(js_name = compare)]
pub fn compare_js(cells: usize, ues_per_cell: usize, antennas: usize, target_rate: f64, seed: u32) -> String {
    finish(compare(cells, ues_per_cell, antennas, target_rate, seed as u64))
}

#[wasm_bindgen(js_name = dualPowers)]
pub fn dual_powers_js(cells: usize, ues_per_cell: usize, antennas: usize, target_rate: f64, seed: u32) -> String {
    finish(dual_powers(cells, ues_per_cell, antennas, target_rate, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correlation_has_unit_diagonal_and_sorted_spectrum() {
        let v = correlation(8, 90.0, 30.0, 0.5).unwrap();
        let abs = v["abs"].as_array().unwrap();
        assert_eq!(abs.len(), 8);
        assert!((abs[3][3].as_f64().unwrap() - 1.0).abs() < 1e-9);
        let eig: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(eig.windows(2).all(|w| w[0] >= w[1]));
        assert!((eig.iter().sum::<f64>() - 8.0).abs() < 1e-6);
    }

    #[test]
    fn compare_lists_every_hex_method() {
        let v = compare(2, 2, 8, 1.0, 3).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), Method::ALL.len() - 1);
        assert_eq!(rows[0]["method"], "centralized");
        assert_eq!(rows[0]["feasible"], true);
    }

    #[test]
    fn errors_are_reported_as_json() {
        let s = compare_js(0, 2, 8, 1.0, 1);
        assert!(s.contains("\"error\""));
        let v: Value = serde_json::from_str(&dual_powers_js(2, 2, 8, 1.0, 1)).unwrap();
        assert_eq!(v["ues"].as_array().unwrap().len(), 4);
    }
}
