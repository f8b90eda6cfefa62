//! Curve fitting and estimators.

mod estimators;
pub mod lm;
mod models;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use crate::dynamics::ou::{ou_exponent, ou_exponent_gradient};
use crate::error::{Error, Result};
use lm::{levenberg_marquardt, LmOptions, Problem};

pub use estimators::{
    dipolar_coupling, dipolar_distance, electron_moment, fit_scaling, hole_width_to_t2star, linewidth_to_t2star,
    nuclear_moment, probed_ion_count, visibility, ScalingFit,
};
pub use models::FitModel;

/// Outcome of a single-model fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    /// Free-form tag identifying the dataset (e.g. "power=92").
    pub label: String,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// √Σ r² of the weighted residuals.
    pub residual_norm: f64,
    pub converged: bool,
    pub n_points: usize,
    pub n_iterations: usize,
    /// Quantities computed from the parameters, e.g. a 1/e time.
    pub derived: BTreeMap<String, f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = self.model.param_names().iter().position(|n| *n == name)?;
        Some(self.params[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.model.param_names().iter().position(|n| *n == name)?;
        Some(self.std_errors[i])
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_derived(mut self, name: &str, value: f64) -> Self {
        self.derived.insert(name.to_string(), value);
        self
    }
}

struct Named<'a>(&'a [&'static str], &'a [f64]);

impl Serialize for Named<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0.iter().zip(self.1) {
            // non-finite errors are written as null
            m.serialize_entry(k, &v.is_finite().then_some(*v))?;
        }
        m.end()
    }
}

impl Serialize for FitResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let names = self.model.param_names();
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("model", &self.model.name())?;
        m.serialize_entry("label", &self.label)?;
        m.serialize_entry("params", &Named(names, &self.params))?;
        m.serialize_entry("std_errors", &Named(names, &self.std_errors))?;
        m.serialize_entry("residual_norm", &self.residual_norm)?;
        m.serialize_entry("converged", &self.converged)?;
        m.serialize_entry("n_points", &self.n_points)?;
        m.serialize_entry("n_iterations", &self.n_iterations)?;
        if !self.derived.is_empty() {
            let d: BTreeMap<&str, Option<f64>> =
                self.derived.iter().map(|(k, v)| (k.as_str(), v.is_finite().then_some(*v))).collect();
            m.serialize_entry("derived", &d)?;
        }
        m.end()
    }
}

struct CurveProblem<'a> {
    model: FitModel,
    x: &'a [f64],
    y: &'a [f64],
    sqrt_w: Vec<f64>,
}

impl Problem for CurveProblem<'_> {
    fn n_params(&self) -> usize {
        self.model.arity()
    }
    fn n_residuals(&self) -> usize {
        self.x.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        for (i, r) in out.iter_mut().enumerate() {
            *r = self.sqrt_w[i] * (self.y[i] - self.model.eval(self.x[i], p));
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let mut g = vec![0.0; self.model.arity()];
        for i in 0..self.x.len() {
            self.model.gradient(self.x[i], p, &mut g);
            for (j, v) in g.iter().enumerate() {
                out[(i, j)] = -self.sqrt_w[i] * v;
            }
        }
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.model.bounds()
    }
    fn label(&self) -> String {
        self.model.name()
    }
}

fn check_data(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("x has {} points but y has {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("data contain non-finite values".into()));
    }
    match weights {
        None => Ok(vec![1.0; x.len()]),
        Some(w) => {
            if w.len() != x.len() {
                return Err(Error::Fit("weights must match the data length".into()));
            }
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Fit("weights must be finite and >= 0".into()));
            }
            Ok(w.iter().map(|v| v.sqrt()).collect())
        }
    }
}

/// Weighted least-squares fit of `model` starting from `init`.
pub fn fit(model: FitModel, x: &[f64], y: &[f64], weights: Option<&[f64]>, init: &[f64]) -> Result<FitResult> {
    let sqrt_w = check_data(x, y, weights)?;
    let problem = CurveProblem { model, x, y, sqrt_w };
    let out = levenberg_marquardt(&problem, init, &LmOptions::default())?;
    Ok(FitResult {
        model,
        label: String::new(),
        params: out.params,
        std_errors: out.std_errors,
        residual_norm: out.cost.sqrt(),
        converged: out.converged,
        n_points: x.len(),
        n_iterations: out.iterations,
        derived: BTreeMap::new(),
    })
}

/// [`fit`] from the model's data-driven starting point.
pub fn fit_auto(model: FitModel, x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    check_data(x, y, weights)?;
    let mut init = model.initial_guess(x, y)?;
    let (lo, hi) = model.bounds();
    for ((v, l), h) in init.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
    fit(model, x, y, weights, &init)
}

/// One CPMG decay: order `n`, total evolution times `t` (s), visibilities.
#[derive(Debug, Clone, PartialEq)]
pub struct OuCurve {
    pub n: usize,
    pub t: Vec<f64>,
    pub visibility: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuBathFit {
    /// rad/s
    pub sigma: f64,
    /// s
    pub tau_c: f64,
    pub amplitudes: Vec<f64>,
    /// Standard errors of (σ, τc, amplitudes…).
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Set when the data cannot constrain the fit.
    pub diagnostic: Option<String>,
}

struct BathProblem<'a> {
    curves: &'a [OuCurve],
}

impl Problem for BathProblem<'_> {
    fn n_params(&self) -> usize {
        2 + self.curves.len()
    }
    fn n_residuals(&self) -> usize {
        self.curves.iter().map(|c| c.t.len()).sum()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (ci, c) in self.curves.iter().enumerate() {
            for (t, v) in c.t.iter().zip(&c.visibility) {
                let chi = ou_exponent(c.n, t / c.n as f64, p[0], p[1]);
                out[k] = v - p[2 + ci] * (-chi).exp();
                k += 1;
            }
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
        let mut k = 0;
        for (ci, c) in self.curves.iter().enumerate() {
            for t in &c.t {
                let tau = t / c.n as f64;
                let e = (-ou_exponent(c.n, tau, p[0], p[1])).exp();
                let (ds, dt) = ou_exponent_gradient(c.n, tau, p[0], p[1]);
                let a = p[2 + ci];
                out[(k, 0)] = a * e * ds;
                out[(k, 1)] = a * e * dt;
                out[(k, 2 + ci)] = -e;
                k += 1;
            }
        }
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_params();
        let mut lo = vec![f64::NEG_INFINITY; n];
        lo[0] = 0.0;
        lo[1] = 1e-300;
        (lo, vec![f64::INFINITY; n])
    }
    fn label(&self) -> String {
        "ou_bath".into()
    }
}

/// Joint fit of CPMG decays sharing (σ, τc) with one amplitude per curve.
///
/// Without `init`, the start is the best point of a log-spaced τc scan in
/// which σ is set from the first curve's 1/e time.
pub fn fit_ou_bath(curves: &[OuCurve], init: Option<(f64, f64)>) -> Result<OuBathFit> {
    if curves.is_empty() {
        return Err(Error::Fit("fit_ou_bath needs at least one curve".into()));
    }
    for c in curves {
        if c.n == 0 || c.t.len() != c.visibility.len() || c.t.is_empty() {
            return Err(Error::Fit(format!("malformed CPMG curve (n = {})", c.n)));
        }
        if c.t.iter().any(|t| !(*t > 0.0 && t.is_finite())) || c.visibility.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit(format!("CPMG curve n = {} has invalid samples", c.n)));
        }
    }
    let problem = BathProblem { curves };
    let amps: Vec<f64> = curves.iter().map(|c| first_by_time(c).max(1e-3)).collect();
    let start = match init {
        Some((s, t)) => (s, t),
        None => scan_start(curves, &amps, &problem),
    };
    let mut p = vec![start.0, start.1];
    p.extend(&amps);
    let out = levenberg_marquardt(&problem, &p, &LmOptions::default())?;

    let (sigma, tau_c) = (out.params[0], out.params[1]);
    let taus = curves.iter().flat_map(|c| c.t.iter().map(move |t| t / c.n as f64));
    let (tmin, tmax) = taus.fold((f64::INFINITY, 0.0f64), |(a, b), t| (a.min(t), b.max(t)));
    let diagnostic = if sigma > 0.0 && tmax < tau_c / 100.0 {
        Some(format!(
            "all pulse spacings (<= {tmax:.3e} s) are far below tau_c = {tau_c:.3e} s; only sigma^2/tau_c is identifiable"
        ))
    } else if sigma > 0.0 && tmin > 100.0 * tau_c {
        Some(format!(
            "all pulse spacings (>= {tmin:.3e} s) are far above tau_c = {tau_c:.3e} s; only sigma^2*tau_c is identifiable"
        ))
    } else {
        None
    };
    Ok(OuBathFit {
        sigma,
        tau_c,
        amplitudes: out.params[2..].to_vec(),
        std_errors: out.std_errors,
        residual_norm: out.cost.sqrt(),
        converged: out.converged && diagnostic.is_none(),
        n_iterations: out.iterations,
        diagnostic,
    })
}

fn first_by_time(c: &OuCurve) -> f64 {
    let i = (0..c.t.len()).min_by(|&a, &b| c.t[a].total_cmp(&c.t[b])).unwrap();
    c.visibility[i]
}

fn scan_start(curves: &[OuCurve], amps: &[f64], problem: &BathProblem) -> (f64, f64) {
    let c0 = &curves[0];
    let mut pts: Vec<(f64, f64)> = c0.t.iter().copied().zip(c0.visibility.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = amps[0] / std::f64::consts::E;
    let t_e = pts
        .windows(2)
        .find(|w| w[1].1 <= target)
        .map(|w| {
            let f = (w[0].1 - target) / (w[0].1 - w[1].1);
            w[0].0 + f * (w[1].0 - w[0].0)
        })
        .unwrap_or_else(|| 10.0 * pts[pts.len() - 1].0);
    let mut best = (f64::INFINITY, (1.0, t_e));
    let mut r = vec![0.0; problem.n_residuals()];
    for k in -8..=16 {
        let tau_c = t_e * 10f64.powf(k as f64 / 4.0);
        // σ with χ(t_e) = 1 for this τc
        let chi1 = ou_exponent(c0.n, t_e / c0.n as f64, 1.0, tau_c);
        if !(chi1 > 0.0) {
            continue;
        }
        let sigma = chi1.recip().sqrt();
        let mut p = vec![sigma, tau_c];
        p.extend(amps);
        problem.residuals(&p, &mut r);
        let cost: f64 = r.iter().map(|v| v * v).sum();
        if cost < best.0 {
            best = (cost, (sigma, tau_c));
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ou::ou_visibility_analytic;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn recovers_lorentzian_exactly() {
        let p = [33.944, 0.088, 1.0, 0.2];
        let x: Vec<f64> = (0..41).map(|i| 33.7 + 0.012 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| FitModel::Lorentzian.eval(v, &p)).collect();
        let init = [33.95, 0.1, 0.8, 0.25];
        let f = fit(FitModel::Lorentzian, &x, &y, None, &init).unwrap();
        assert!(f.converged);
        for (a, b) in f.params.iter().zip(p) {
            assert!((a / b - 1.0).abs() < 1e-6, "{:?}", f.params);
        }
    }

    #[test]
    fn constant_data_drive_rate_to_zero() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y = vec![0.7; 20];
        let f = fit(FitModel::Exponential, &x, &y, None, &[0.5, 0.1]).unwrap();
        assert!(f.get("rate").unwrap() < 1e-8);
        assert!((f.get("amplitude").unwrap() - 0.7).abs() < 1e-8);
    }

    #[test]
    fn double_exponential_with_noise() {
        let mut rng = crate::seed::rng(42);
        let x: Vec<f64> = (0..60).map(|i| 0.25 * 1.12f64.powi(i)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&t| {
                let v = 0.5 * (-t / 4.4f64).exp() + 0.5 * (-t / 120f64).exp();
                v * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal))
            })
            .collect();
        let f = fit_auto(FitModel::DoubleExponential, &x, &y, None).unwrap();
        assert!((f.get("t_short").unwrap() / 4.4 - 1.0).abs() < 0.1, "{:?}", f.params);
        assert!((f.get("t_long").unwrap() / 120.0 - 1.0).abs() < 0.1, "{:?}", f.params);
    }

    #[test]
    fn serializes_named_parameters() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 0.5, 0.25];
        let f = fit(FitModel::Exponential, &x, &y, None, &[0.9, 0.5]).unwrap().with_label("demo");
        let v = serde_json::to_value(&f).unwrap();
        assert_eq!(v["model"], "exponential");
        assert!((v["params"]["rate"].as_f64().unwrap() - 2f64.ln()).abs() < 1e-8);
        assert_eq!(v["n_points"], 3);
        assert!(v["std_errors"]["amplitude"].as_f64().unwrap() >= 0.0);
    }

    #[test]
    fn input_validation() {
        assert!(fit(FitModel::Exponential, &[1.0], &[1.0, 2.0], None, &[1.0, 1.0]).is_err());
        assert!(fit(FitModel::Exponential, &[1.0], &[1.0], None, &[1.0, 1.0]).is_err());
        assert!(fit(FitModel::Lorentzian, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4], None, &[2.0, -1.0, 1.0, 0.0]).is_err());
    }

    fn synthetic(sigma: f64, tau_c: f64, noise: f64, seed: u64) -> Vec<OuCurve> {
        let mut rng = crate::seed::rng(seed);
        [1usize, 2, 4, 8]
            .iter()
            .map(|&n| {
                let t: Vec<f64> = (1..=20).map(|i| 0.25e-3 * i as f64 * (n as f64).powf(0.6)).collect();
                let visibility = t
                    .iter()
                    .map(|&t| {
                        ou_visibility_analytic(n, t / n as f64, sigma, tau_c, 0.9)
                            + noise * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                OuCurve { n, t, visibility }
            })
            .collect()
    }

    #[test]
    fn ou_bath_round_trip() {
        let (sigma, tau_c) = (3000.0, 1.5e-3);
        let f = fit_ou_bath(&synthetic(sigma, tau_c, 0.01, 7), None).unwrap();
        assert!((f.sigma / sigma - 1.0).abs() < 0.05, "{f:?}");
        assert!((f.tau_c / tau_c - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.converged);
    }

    #[test]
    fn ou_bath_without_decay_gives_zero_sigma() {
        let f = fit_ou_bath(&synthetic(0.0, 1e-2, 0.0, 1), None).unwrap();
        assert!(f.sigma < 1e-3 * 26_000.0, "{f:?}");
    }
}
