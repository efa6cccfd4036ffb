//! Three maze operations for the browser page in `www/`, with JSON strings
//! in and out:
//!
//! * [`solve_values`]: optimal values and greedy moves for a reward.
//! * [`design_next_maze`]: posterior from the demonstrations so far, then
//!   the obstacle set with the largest Bayesian regret.
//! * [`simulate_expert`]: one Boltzmann-rational demonstration.
//!
//! The plain functions in [`ops`] do the work; the exports only convert
//! errors.

use wasm_bindgen::prelude::*;

pub mod ops;

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// `SolveRequest` JSON to `SolveResponse` JSON.
#[wasm_bindgen]
pub fn solve_values(request: &str) -> Result<String, JsError> {
    js(ops::run(request, ops::solve))
}

/// `DesignRequest` JSON to `DesignResponse` JSON.
#[wasm_bindgen]
pub fn design_next_maze(request: &str) -> Result<String, JsError> {
    js(ops::run(request, ops::design))
}

/// `SimulateRequest` JSON to `SimulateResponse` JSON.
#[wasm_bindgen]
pub fn simulate_expert(request: &str) -> Result<String, JsError> {
    js(ops::run(request, ops::simulate))
}

/// The bundled 8×8 layout.
#[wasm_bindgen]
pub fn demo_layout() -> String {
    edirl::domains::DEMO_LAYOUT.to_owned()
}
