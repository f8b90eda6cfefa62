//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export returns a JSON string with plottable series, or throws a
//! string error.

use odnmr::analysis::fit_scaling;
use odnmr::dynamics::ou::one_over_e_time;
use odnmr::dynamics::{ou_visibility_analytic, NoiseModel, OpticalModel};
use odnmr::experiments::{calibrate_bath, run_experiment, ExperimentKind, ExperimentOutput, ExperimentSpec};
use odnmr::model::{EnsembleConfig, InhomogeneousDistribution};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const DEMO_CLASSES: usize = 3000;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn series(out: &ExperimentOutput, x: &str) -> Value {
    json!({
        "x": out.table.mean_column(x),
        "y": out.table.mean_column("signal"),
        "fits": out.fits,
    })
}

fn demo_ensemble() -> EnsembleConfig {
    EnsembleConfig { n_classes: DEMO_CLASSES, ..EnsembleConfig::default() }
}

/// Closed-form CPMG visibility for N = 1, 2, 4, 8 with the bath calibrated to
/// a Hahn-echo time `t2_ms` at correlation time `tau_c_ms`, and the fitted
/// T2(N) scaling exponent.
#[wasm_bindgen]
pub fn cpmg_curves(t2_ms: f64, tau_c_ms: f64) -> Result<String, JsError> {
    let sigma = calibrate_bath(t2_ms, tau_c_ms).map_err(js_err)?;
    let tau_c = tau_c_ms * 1e-3;
    let mut curves = Vec::new();
    let mut t_e = Vec::new();
    let t_max = 4.0 * one_over_e_time(8, sigma, tau_c).map_err(js_err)?;
    for n in [1usize, 2, 4, 8] {
        let t: Vec<f64> = (1..=120).map(|i| t_max * i as f64 / 120.0).collect();
        let v: Vec<f64> = t.iter().map(|&t| ou_visibility_analytic(n, t / n as f64, sigma, tau_c, 1.0)).collect();
        let e = one_over_e_time(n, sigma, tau_c).map_err(js_err)?;
        t_e.push((n as f64, e * 1e3));
        curves.push(json!({ "n": n, "t_ms": t.iter().map(|t| t * 1e3).collect::<Vec<_>>(), "v": v, "t_e_ms": e * 1e3 }));
    }
    let scaling = fit_scaling(&t_e).map_err(js_err)?;
    Ok(json!({ "sigma_rad_per_s": sigma, "curves": curves, "beta": scaling.beta }).to_string())
}

/// Simulated Rabi nutation at `power_w` with its damped-cosine fit.
#[wasm_bindgen]
pub fn rabi_trace(power_w: f64, k_rabi: f64) -> Result<String, JsError> {
    let spec = ExperimentSpec::new(ExperimentKind::Rabi, 1)
        .with("power", power_w)
        .with("points", 60)
        .with("repetitions", 1);
    let out = run_experiment(&spec, &demo_ensemble(), &NoiseModel::default(), &OpticalModel::default(), k_rabi)
        .map_err(js_err)?;
    Ok(series(&out, "rf_duration_us").to_string())
}

/// ODNMR spectrum of the 21.475 MHz line at `power_w` for a spin
/// inhomogeneous width `fwhm_khz`, with its Lorentzian fit.
#[wasm_bindgen]
pub fn odnmr_spectrum(power_w: f64, fwhm_khz: f64) -> Result<String, JsError> {
    let cfg = EnsembleConfig {
        spin_dist: InhomogeneousDistribution::lorentzian(0.0, fwhm_khz),
        ..demo_ensemble()
    };
    let spec = ExperimentSpec::new(ExperimentKind::OdnmrScan, 1)
        .with("power", power_w)
        .with("points", 41)
        .with("repetitions", 1);
    let out = run_experiment(&spec, &cfg, &NoiseModel::default(), &OpticalModel::default(), 1.48).map_err(js_err)?;
    Ok(series(&out, "rf_frequency_mhz").to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_scale_with_order() {
        let v: Value = serde_json::from_str(&cpmg_curves(0.61, 13.0).unwrap()).unwrap();
        assert_eq!(v["curves"].as_array().unwrap().len(), 4);
        let beta = v["beta"].as_f64().unwrap();
        assert!(beta > 0.5 && beta < 0.7, "{beta}");
    }

    #[test]
    fn demo_runs_return_series() {
        let v: Value = serde_json::from_str(&rabi_trace(92.0, 1.48).unwrap()).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 60);
        let khz = v["fits"][0]["derived"]["rabi_khz"].as_f64().unwrap();
        assert!((khz / (1.48 * 92f64.sqrt()) - 1.0).abs() < 0.05, "{khz}");
        let v: Value = serde_json::from_str(&odnmr_spectrum(0.5, 154.0).unwrap()).unwrap();
        assert_eq!(v["y"].as_array().unwrap().len(), 41);
    }
}
