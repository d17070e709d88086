//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; failures come back as `{"error": ..}`.

use incdiss::cli::{build_embedding, run_analysis, run_simulation};
use incdiss::config::RunConfig;
use incdiss::error::Result;
use incdiss::simulate::DissipationReport;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const EXAMPLE1: &str = include_str!("../../core/configs/duffing_example1.json");
const EXAMPLE2: &str = include_str!("../../core/configs/duffing_example2.json");

/// Points kept per plotted series.
const PLOT_POINTS: usize = 600;

fn respond(r: Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn stride(len: usize) -> usize {
    len.div_ceil(PLOT_POINTS).max(1)
}

fn series(r: &DissipationReport) -> Value {
    let k = stride(r.t.len());
    let pick = |v: &[f64]| v.iter().step_by(k).copied().collect::<Vec<_>>();
    json!({
        "t": pick(&r.t),
        "storage": pick(&r.storage),
        "supplied": pick(&r.supplied),
        "holds": r.holds,
        "max_violation": r.max_violation,
        "violation_samples": r.violation_times.len(),
        "first_violation": r.violation_times.first(),
    })
}

fn certify(a: f64, b: f64, c: f64) -> Result<Value> {
    let mut cfg: Value = serde_json::from_str(EXAMPLE1)?;
    cfg["system"]["a"] = json!(a);
    cfg["system"]["b"] = json!(b);
    cfg["system"]["c"] = json!(c);
    cfg.as_object_mut().expect("object").remove("simulate");
    let cfg = RunConfig::from_json(&cfg.to_string())?;
    let emb = build_embedding(&cfg)?;
    let out = run_analysis(&cfg, &emb, None, incdiss::analysis::RESIDUAL_TOL)?;
    let c = &out.certificate;
    Ok(json!({
        "gain": c.gain,
        "m": [[c.m[(0, 0)], c.m[(0, 1)]], [c.m[(1, 0)], c.m[(1, 1)]]],
        "worst_residual": c.worst_residual(),
        "verified": out.verify.passed,
    }))
}

fn ledgers(text: &str, horizon: f64) -> Result<Value> {
    let mut cfg = RunConfig::from_json(text)?;
    if let Some(s) = cfg.simulate.as_mut() {
        s.horizon = horizon;
    }
    let out = run_simulation(&cfg, None, incdiss::simulate::DEFAULT_TOL_FACTOR)?;
    let k = stride(out.trajectory.t.len());
    let coord = |tr: &incdiss::simulate::Trajectory, i: usize| tr.x.iter().step_by(k).map(|x| x[i]).collect::<Vec<_>>();
    let reports: serde_json::Map<String, Value> = out.reports.iter().map(|(l, r)| (l.clone(), series(r))).collect();
    Ok(json!({
        "gain": out.certificate.as_ref().and_then(|c| c.gain),
        "t": out.trajectory.t.iter().step_by(k).copied().collect::<Vec<_>>(),
        "x1": coord(&out.trajectory, 0),
        "x1_tilde": coord(&out.trajectory_tilde, 0),
        "holds": out.holds(),
        "ledgers": reports,
    }))
}

/// Incremental L2-gain certificate for `x1' = x2`,
/// `x2' = -a x2 - (b + c x1^2) x1 + u`, `y = x1`.
#[wasm_bindgen]
pub fn certify_duffing(a: f64, b: f64, c: f64) -> String {
    respond(certify(a, b, c))
}

/// Differential, incremental and general ledgers for two input
/// signals driving the certified oscillator from the same start.
#[wasm_bindgen]
pub fn certified_ledgers(horizon: f64) -> String {
    respond(ledgers(EXAMPLE1, horizon))
}

/// Hamiltonian storage with the passivity supply: passive about the
/// equilibrium but not incrementally passive.
#[wasm_bindgen]
pub fn passivity_counterexample(horizon: f64) -> String {
    respond(ledgers(EXAMPLE2, horizon))
}
