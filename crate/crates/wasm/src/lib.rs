//! WebAssembly bindings for the browser demo. Every operation takes plain
//! numbers and returns a JSON string; the pure-Rust `*_json` functions do
//! the work so they can be tested natively.

use dua_core::analysis::uncertainty_split;
use dua_core::data::{
    generate_synthetic, inject_noise, zscore_normalize, MultiViewDataset, NoiseSpec, SyntheticSpec,
};
use dua_core::eval::evaluate_clustering;
use dua_core::model::{dua_loss, extract_sigma, Objective, ViewPrediction, LOG_SIGMA_LIMIT};
use dua_core::numerics::{Matrix, Rng};
use dua_core::trainer::{normalized_loss_curve, train, TrainConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bound on training epochs a page may request.
pub const MAX_EPOCHS: usize = 1000;
const GRID: usize = 200;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// The per-observation objective `r²/(2σ²) + ln σ` for a residual of norm
/// `r`, evaluated through the library loss over a log-spaced σ grid.
pub fn sigma_objective_json(residual: f64) -> Result<Value, String> {
    if !(residual.is_finite() && residual > 0.0 && residual <= 100.0) {
        return Err(format!("residual must lie in (0, 100], got {residual}"));
    }
    let data = MultiViewDataset::new(vec![Matrix::from_rows(&[[residual]]).map_err(err)?], None)
        .map_err(err)?;
    let (lo, hi) = (-4.0f64, 5.0f64);
    let mut sigma = Vec::with_capacity(GRID);
    let mut loss = Vec::with_capacity(GRID);
    for i in 0..GRID {
        let ls = lo + (hi - lo) * i as f64 / (GRID - 1) as f64;
        let pred = ViewPrediction {
            mu: Matrix::from_rows(&[[0.0]]).map_err(err)?,
            log_sigma: vec![ls.clamp(-LOG_SIGMA_LIMIT, LOG_SIGMA_LIMIT)],
        };
        sigma.push(ls.exp());
        loss.push(dua_loss(&data, &[pred]).map_err(err)?.total);
    }
    let best = (0..GRID)
        .min_by(|&a, &b| loss[a].total_cmp(&loss[b]))
        .unwrap_or(0);
    Ok(json!({
        "residual": residual,
        "sigma": sigma,
        "loss": loss,
        "best_sigma": sigma[best],
        "best_loss": loss[best],
    }))
}

/// A small two-view synthetic problem with one view partly polluted.
fn noisy_problem(
    eta: f64,
    fraction: f64,
    seed: u64,
) -> Result<(MultiViewDataset, Vec<usize>), String> {
    if !(eta.is_finite() && (0.0..=10.0).contains(&eta)) {
        return Err(format!("eta must lie in [0, 10], got {eta}"));
    }
    let spec = SyntheticSpec {
        n: 160,
        clusters: 4,
        latent_dim: 4,
        view_widths: vec![10, 10],
        seed,
        ..SyntheticSpec::default()
    };
    let clean = zscore_normalize(&generate_synthetic(&spec, &mut Rng::new(seed)).map_err(err)?)
        .map_err(err)?;
    let noise = NoiseSpec {
        eta,
        fraction,
        seed,
        ..NoiseSpec::default()
    };
    inject_noise(&clean, &noise).map_err(err)
}

fn demo_config(objective: Objective, epochs: usize, seed: u64) -> Result<TrainConfig, String> {
    if epochs == 0 || epochs > MAX_EPOCHS {
        return Err(format!("epochs must lie in 1..={MAX_EPOCHS}, got {epochs}"));
    }
    Ok(TrainConfig {
        objective,
        latent_dim: 8,
        epochs,
        lr: 1e-2,
        init_scale: 0.01,
        tolerance: 0.0,
        seed,
        ..TrainConfig::default()
    })
}

/// Trains the uncertainty-aware model on data whose first view is polluted
/// on a `fraction` of rows, and reports the learned σ of that view split by
/// clean and polluted rows.
pub fn noise_detection_json(
    eta: f64,
    fraction: f64,
    epochs: usize,
    seed: u64,
) -> Result<Value, String> {
    if !(0.05..=0.95).contains(&fraction) {
        return Err(format!(
            "fraction must lie in [0.05, 0.95] so both groups have rows, got {fraction}"
        ));
    }
    let (data, polluted) = noisy_problem(eta, fraction, seed)?;
    let state = train(&data, &demo_config(Objective::Dua, epochs, seed)?).map_err(err)?;
    let sigma = extract_sigma(&state.predictions().map_err(err)?);
    let study = uncertainty_split(&sigma, &polluted, 0, true).map_err(err)?;
    let curves: Vec<Value> = [&study.clean, &study.noisy]
        .iter()
        .map(|c| json!({ "group": c.group.name(), "grid": c.grid, "density": c.density, "bandwidth": c.bandwidth }))
        .collect();
    Ok(json!({
        "eta": eta,
        "fraction": fraction,
        "epochs": state.epoch,
        "n_clean": study.n_clean,
        "n_noisy": study.n_noisy,
        "mean_log_sigma_clean": study.mean_clean,
        "mean_log_sigma_noisy": study.mean_noisy,
        "kde": curves,
        "loss": normalized_loss_curve(&state.loss_totals()).map_err(err)?,
    }))
}

/// Trains both objectives on the same polluted data and compares k-means
/// accuracy of their latent codes.
pub fn robustness_json(eta: f64, epochs: usize, seed: u64) -> Result<Value, String> {
    let (data, _) = noisy_problem(eta, 0.5, seed)?;
    let labels = data
        .labels()
        .ok_or("synthetic data carries labels")?
        .to_vec();
    let mut variants = Vec::new();
    for objective in [Objective::Dua, Objective::Rnets] {
        let state = train(&data, &demo_config(objective, epochs, seed)?).map_err(err)?;
        let report = evaluate_clustering(&state.latent.h, &labels, 5, 5, seed).map_err(err)?;
        variants.push(json!({
            "objective": objective.name(),
            "acc": report.mean("acc"),
            "nmi": report.mean("nmi"),
            "loss": normalized_loss_curve(&state.loss_totals()).map_err(err)?,
        }));
    }
    Ok(json!({ "eta": eta, "epochs": epochs, "variants": variants }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sigmaObjective)]
pub fn sigma_objective(residual: f64) -> Result<String, JsError> {
    to_js(sigma_objective_json(residual))
}

#[wasm_bindgen(js_name = noiseDetection)]
pub fn noise_detection(
    eta: f64,
    fraction: f64,
    epochs: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(noise_detection_json(eta, fraction, epochs, seed.into()))
}

#[wasm_bindgen(js_name = robustness)]
pub fn robustness(eta: f64, epochs: usize, seed: u32) -> Result<String, JsError> {
    to_js(robustness_json(eta, epochs, seed.into()))
}
