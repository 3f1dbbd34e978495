//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! All models here use uniform marginals on `[0, 1]`. The plain functions
//! carry the logic and are tested natively; the `#[wasm_bindgen]` wrappers
//! only convert errors.

use lancaster_core::correlation::{self, DiscretizedJoint};
use lancaster_core::lancaster::{self, LancasterModel};
use lancaster_core::orthopoly::MarginalSpec;
use lancaster_core::regression;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_DEGREE: usize = 8;

fn model(rho: &[f64]) -> Result<LancasterModel, String> {
    if rho.is_empty() || rho.len() > MAX_DEGREE {
        return Err(format!("need 1..={MAX_DEGREE} coefficients"));
    }
    let u = MarginalSpec::uniform(0.0, 1.0).map_err(|e| e.to_string())?;
    LancasterModel::build(u.clone(), u, MAX_DEGREE, rho).map_err(|e| e.to_string())
}

/// `Σ |ρₙ| cₙ dₙ` for uniform marginals, where `cₙ = dₙ = √(2n+1)`.
pub fn bound_value(rho: &[f64]) -> f64 {
    rho.iter()
        .enumerate()
        .map(|(k, r)| r.abs() * (2 * k + 3) as f64)
        .sum()
}

/// Row-major `n × n` samples of the joint density at cell centres.
pub fn density_field(rho: &[f64], n: usize) -> Result<Vec<f64>, String> {
    let m = model(rho)?;
    let h = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let y = 1.0 - (i as f64 + 0.5) * h;
        for j in 0..n {
            out.push(m.density((j as f64 + 0.5) * h, y));
        }
    }
    Ok(out)
}

/// Pearson, the three maximal-correlation estimates, the leading singular
/// values and the regression slopes, as JSON.
pub fn correlation_summary(rho: &[f64], grid: usize) -> Result<String, String> {
    let m = model(rho)?;
    let joint = DiscretizedJoint::from_model(&m, grid.max(16)).map_err(|e| e.to_string())?;
    let report = correlation::correlation_report(
        &joint,
        Some(correlation::maxcorr_analytic(&m)),
        correlation::DEFAULT_ACE_MAX_ITERS,
        correlation::DEFAULT_ACE_TOL,
    )
    .map_err(|e| e.to_string())?;
    let linear = regression::check_linear_regression(&m).map_err(|e| e.to_string())?;
    let top: Vec<f64> = report
        .spectrum
        .iter()
        .take(MAX_DEGREE + 1)
        .copied()
        .collect();
    Ok(json!({
        "pearson": report.pearson,
        "maxcorr_analytic": report.maxcorr_analytic,
        "maxcorr_svd": report.maxcorr_svd,
        "maxcorr_ace": report.maxcorr_ace,
        "gap": report.gap,
        "spectrum": top,
        "a1": linear.a1,
        "b1": linear.b1,
        "bound_value": m.coeffs().bound_value(),
    })
    .to_string())
}

/// `count` draws interleaved as `x0, y0, x1, y1, ...`.
pub fn sample_points(rho: &[f64], count: usize, seed: u64) -> Result<Vec<f64>, String> {
    let m = model(rho)?;
    let draws = lancaster::sample_joint(&m, count, seed);
    Ok(draws.points.iter().flat_map(|&(x, y)| [x, y]).collect())
}

#[wasm_bindgen(js_name = boundValue)]
pub fn bound_value_js(rho: &[f64]) -> f64 {
    bound_value(rho)
}

#[wasm_bindgen(js_name = densityField)]
pub fn density_field_js(rho: &[f64], n: usize) -> Result<Vec<f64>, JsError> {
    density_field(rho, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = correlationSummary)]
pub fn correlation_summary_js(rho: &[f64], grid: usize) -> Result<String, JsError> {
    correlation_summary(rho, grid).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = samplePoints)]
pub fn sample_points_js(rho: &[f64], count: usize, seed: u64) -> Result<Vec<f64>, JsError> {
    sample_points(rho, count, seed).map_err(|e| JsError::new(&e))
}
