//! Browser bindings for the pckv demo page.
//!
//! Every exported function returns a JSON string. The `*_json` variants are
//! plain Rust so they can be tested off the browser.

use pckv::budget::{BudgetSpec, Mechanism, Strategy};
use pckv::datagen::{gen_synthetic, KeyDistribution, SynthConfig};
use pckv::experiment::{run_on, Protocol, RunConfig};
use pckv::theory::{allocation_objective_scan, allocation_objective_scan_grr, choose_mechanism, predict_errors, Objective};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest simulation the page accepts; keeps the tab responsive.
pub const MAX_USERS: usize = 200_000;
pub const MAX_KEYS: usize = 200;
/// Points returned by a scan, thinned from the full grid.
pub const SCAN_POINTS: usize = 400;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Split, probabilities, predicted errors for a key with frequency `1/d`, and
/// the recommended mechanism for each objective.
pub fn budget_json(eps: f64, ell: usize, d: usize, mechanism: &str, strategy: &str) -> Result<String, String> {
    let mechanism: Mechanism = mechanism.parse().map_err(err)?;
    let strategy: Strategy = strategy.parse().map_err(err)?;
    let spec = BudgetSpec::allocate(eps, ell, d, mechanism, strategy).map_err(err)?;
    let probs = spec.probs().map_err(err)?;
    let pred = predict_errors(&probs, ell, 10_000, 1.0 / d as f64, 0.0).map_err(err)?;
    let v = json!({
        "mechanism": mechanism,
        "strategy": strategy,
        "eps": eps,
        "ell": ell,
        "d_prime": spec.d_prime,
        "eps_key": spec.eps_key,
        "eps_value": spec.eps_value,
        "composed": spec.composed().map_err(err)?,
        "a": probs.a,
        "b": probs.b,
        "p": probs.p,
        "g": pred.g,
        "h": pred.h,
        "var_f_n10000": pred.var_f,
        "recommended": {
            "frequency": choose_mechanism(d, ell, eps, Objective::Frequency),
            "mean": choose_mechanism(d, ell, eps, Objective::Mean),
        },
    });
    Ok(v.to_string())
}

/// Objective `g + h m*²` along the admissible key budgets, thinned to
/// [`SCAN_POINTS`] plus the minimizer.
pub fn scan_json(eps: f64, m_star_sq: f64, mechanism: &str, d_prime: usize) -> Result<String, String> {
    let mechanism: Mechanism = mechanism.parse().map_err(err)?;
    let scan = match mechanism {
        Mechanism::Ue => allocation_objective_scan(eps, m_star_sq, 4000),
        Mechanism::Grr => allocation_objective_scan_grr(eps, m_star_sq, d_prime, 4000),
    }
    .map_err(err)?;
    let stride = scan.points.len().div_ceil(SCAN_POINTS).max(1);
    let points: Vec<Value> = scan
        .points
        .iter()
        .step_by(stride)
        .map(|p| json!([p.theta, p.eps_key, p.eps_value, p.phi]))
        .collect();
    let v = json!({
        "eps": eps,
        "m_star_sq": m_star_sq,
        "columns": ["theta", "eps_key", "eps_value", "phi"],
        "points": points,
        "argmin": scan.argmin,
    });
    Ok(v.to_string())
}

/// One synthetic round: per-key true and estimated frequency and mean.
#[allow(clippy::too_many_arguments)]
pub fn simulate_json(
    protocol: &str,
    eps: f64,
    ell: usize,
    n: usize,
    d: usize,
    distribution: &str,
    strategy: &str,
    seed: u64,
) -> Result<String, String> {
    if n > MAX_USERS || d > MAX_KEYS {
        return Err(format!("demo limits: at most {MAX_USERS} users and {MAX_KEYS} keys"));
    }
    let protocol: Protocol = protocol.parse().map_err(err)?;
    let distribution: KeyDistribution = distribution.parse().map_err(err)?;
    let mut cfg = SynthConfig::uniform(n, d, seed);
    cfg.distribution = distribution;
    cfg.sigma_key = (d as f64 / 4.0).max(1.0);
    let synth = gen_synthetic(&cfg).map_err(err)?;
    let mut run = RunConfig::new(protocol, eps, ell);
    run.strategy = strategy.parse().map_err(err)?;
    run.seed = seed.wrapping_add(1);
    let report = run_on(&synth.data, &synth.truth, &run).map_err(err)?;
    let keys: Vec<Value> = report
        .per_key
        .iter()
        .map(|k| json!([k.key, k.f_true, k.f_hat, k.m_true, k.m_hat]))
        .collect();
    let v = json!({
        "protocol": protocol,
        "eps_key": report.eps_key,
        "eps_value": report.eps_value,
        "mse_freq": report.mse_freq,
        "mse_mean": report.mse_mean,
        "columns": ["key", "f_true", "f_hat", "m_true", "m_hat"],
        "keys": keys,
    });
    Ok(v.to_string())
}

#[wasm_bindgen]
pub fn budget(eps: f64, ell: usize, d: usize, mechanism: &str, strategy: &str) -> Result<String, JsError> {
    budget_json(eps, ell, d, mechanism, strategy).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn scan(eps: f64, m_star_sq: f64, mechanism: &str, d_prime: usize) -> Result<String, JsError> {
    scan_json(eps, m_star_sq, mechanism, d_prime).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    protocol: &str,
    eps: f64,
    ell: usize,
    n: usize,
    d: usize,
    distribution: &str,
    strategy: &str,
    seed: u32,
) -> Result<String, JsError> {
    simulate_json(protocol, eps, ell, n, d, distribution, strategy, seed as u64).map_err(|e| JsError::new(&e))
}
