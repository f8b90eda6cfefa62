//! Model functions with analytic Jacobians and starting-point heuristics.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::dynamics::ou::{ou_exponent, ou_exponent_gradient};
use crate::error::{Error, Result};

const TINY: f64 = 1e-300;

/// Fit models. Line shapes use (center, fwhm, amplitude, offset).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// A / (1 + (2(x − c)/w)²) + o
    Lorentzian,
    /// A·exp(−4 ln2 (x − c)²/w²) + o
    Gaussian,
    /// a·e^{−rate·x}
    Exponential,
    /// a·e^{−x/t_short} + b·e^{−x/t_long}
    DoubleExponential,
    /// a·exp(−(x/T)^β)
    StretchedExponential,
    /// k·√x
    SqrtPower,
    /// T2_echo·x^β
    PowerLawScaling,
    /// CPMG-n visibility a·e^{−χ(σ, τc)} of an OU bath versus total time x = n·τ (s).
    OuCpmg { n: usize },
    /// a·e^{−rate·x}·cos(2π f x + φ) + c
    DampedOscillation,
    /// slope·x + intercept
    Linear,
}

impl FitModel {
    pub const ALL: [FitModel; 10] = [
        FitModel::Lorentzian,
        FitModel::Gaussian,
        FitModel::Exponential,
        FitModel::DoubleExponential,
        FitModel::StretchedExponential,
        FitModel::SqrtPower,
        FitModel::PowerLawScaling,
        FitModel::OuCpmg { n: 1 },
        FitModel::DampedOscillation,
        FitModel::Linear,
    ];

    pub fn name(&self) -> String {
        match self {
            FitModel::Lorentzian => "lorentzian".into(),
            FitModel::Gaussian => "gaussian".into(),
            FitModel::Exponential => "exponential".into(),
            FitModel::DoubleExponential => "double_exponential".into(),
            FitModel::StretchedExponential => "stretched_exponential".into(),
            FitModel::SqrtPower => "sqrt_power".into(),
            FitModel::PowerLawScaling => "power_law_scaling".into(),
            FitModel::OuCpmg { n } => format!("ou_cpmg_{n}"),
            FitModel::DampedOscillation => "damped_oscillation".into(),
            FitModel::Linear => "linear".into(),
        }
    }

    /// Parses a name produced by [`FitModel::name`].
    pub fn from_name(s: &str) -> Result<Self> {
        if let Some(n) = s.strip_prefix("ou_cpmg_") {
            let n: usize = n.parse().map_err(|_| Error::Fit(format!("bad CPMG order in `{s}`")))?;
            if n == 0 {
                return Err(Error::Fit("CPMG order must be >= 1".into()));
            }
            return Ok(FitModel::OuCpmg { n });
        }
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Fit(format!("unknown model `{s}`")))
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            FitModel::Lorentzian | FitModel::Gaussian => &["center", "fwhm", "amplitude", "offset"],
            FitModel::Exponential => &["amplitude", "rate"],
            FitModel::DoubleExponential => &["a_short", "t_short", "a_long", "t_long"],
            FitModel::StretchedExponential => &["amplitude", "t", "beta"],
            FitModel::SqrtPower => &["k"],
            FitModel::PowerLawScaling => &["t2_echo", "beta"],
            FitModel::OuCpmg { .. } => &["amplitude", "sigma", "tau_c"],
            FitModel::DampedOscillation => &["amplitude", "rate", "frequency", "phase", "offset"],
            FitModel::Linear => &["slope", "intercept"],
        }
    }

    pub fn arity(&self) -> usize {
        self.param_names().len()
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let inf = f64::INFINITY;
        let (lo, hi): (Vec<f64>, Vec<f64>) = match self {
            FitModel::Lorentzian | FitModel::Gaussian => (vec![-inf, TINY, -inf, -inf], vec![inf; 4]),
            FitModel::Exponential => (vec![-inf, 0.0], vec![inf; 2]),
            FitModel::DoubleExponential => (vec![-inf, TINY, -inf, TINY], vec![inf; 4]),
            FitModel::StretchedExponential => (vec![-inf, TINY, 0.05], vec![inf, inf, 20.0]),
            FitModel::SqrtPower => (vec![-inf], vec![inf]),
            FitModel::PowerLawScaling => (vec![TINY, -inf], vec![inf; 2]),
            FitModel::OuCpmg { .. } => (vec![-inf, 0.0, TINY], vec![inf; 3]),
            FitModel::DampedOscillation => (vec![-inf, 0.0, 0.0, -inf, -inf], vec![inf; 5]),
            FitModel::Linear => (vec![-inf; 2], vec![inf; 2]),
        };
        (lo, hi)
    }

    /// Model value at `x`.
    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        match *self {
            FitModel::Lorentzian => {
                let u = 2.0 * (x - p[0]) / p[1];
                p[2] / (1.0 + u * u) + p[3]
            }
            FitModel::Gaussian => {
                let d = (x - p[0]) / p[1];
                p[2] * (-4.0 * LN_2 * d * d).exp() + p[3]
            }
            FitModel::Exponential => p[0] * (-p[1] * x).exp(),
            FitModel::DoubleExponential => p[0] * (-x / p[1]).exp() + p[2] * (-x / p[3]).exp(),
            FitModel::StretchedExponential => p[0] * (-(x / p[1]).powf(p[2])).exp(),
            FitModel::SqrtPower => p[0] * x.sqrt(),
            FitModel::PowerLawScaling => p[0] * x.powf(p[1]),
            FitModel::OuCpmg { n } => p[0] * (-ou_exponent(n, x / n as f64, p[1], p[2])).exp(),
            FitModel::DampedOscillation => p[0] * (-p[1] * x).exp() * (2.0 * PI * p[2] * x + p[3]).cos() + p[4],
            FitModel::Linear => p[0] * x + p[1],
        }
    }

    /// ∂f/∂p at `x`, written into `out`.
    pub fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        match *self {
            FitModel::Lorentzian => {
                let (c, w, a) = (p[0], p[1], p[2]);
                let u = 2.0 * (x - c) / w;
                let q = 1.0 + u * u;
                out[0] = a * 4.0 * u / (w * q * q);
                out[1] = a * 2.0 * u * u / (w * q * q);
                out[2] = 1.0 / q;
                out[3] = 1.0;
            }
            FitModel::Gaussian => {
                let (c, w, a) = (p[0], p[1], p[2]);
                let d = x - c;
                let g = (-4.0 * LN_2 * d * d / (w * w)).exp();
                out[0] = a * g * 8.0 * LN_2 * d / (w * w);
                out[1] = a * g * 8.0 * LN_2 * d * d / (w * w * w);
                out[2] = g;
                out[3] = 1.0;
            }
            FitModel::Exponential => {
                let e = (-p[1] * x).exp();
                out[0] = e;
                out[1] = -p[0] * x * e;
            }
            FitModel::DoubleExponential => {
                let e1 = (-x / p[1]).exp();
                let e2 = (-x / p[3]).exp();
                out[0] = e1;
                out[1] = p[0] * e1 * x / (p[1] * p[1]);
                out[2] = e2;
                out[3] = p[2] * e2 * x / (p[3] * p[3]);
            }
            FitModel::StretchedExponential => {
                let (a, t, b) = (p[0], p[1], p[2]);
                let r = x / t;
                let q = r.powf(b);
                let e = (-q).exp();
                out[0] = e;
                out[1] = a * e * q * b / t;
                out[2] = if r > 0.0 { -a * e * q * r.ln() } else { 0.0 };
            }
            FitModel::SqrtPower => out[0] = x.sqrt(),
            FitModel::PowerLawScaling => {
                let q = x.powf(p[1]);
                out[0] = q;
                out[1] = if x > 0.0 { p[0] * q * x.ln() } else { 0.0 };
            }
            FitModel::OuCpmg { n } => {
                let tau = x / n as f64;
                let e = (-ou_exponent(n, tau, p[1], p[2])).exp();
                let (ds, dt) = ou_exponent_gradient(n, tau, p[1], p[2]);
                out[0] = e;
                out[1] = -p[0] * e * ds;
                out[2] = -p[0] * e * dt;
            }
            FitModel::DampedOscillation => {
                let (a, rate, f, ph) = (p[0], p[1], p[2], p[3]);
                let e = (-rate * x).exp();
                let arg = 2.0 * PI * f * x + ph;
                let (s, c) = arg.sin_cos();
                out[0] = e * c;
                out[1] = -a * x * e * c;
                out[2] = -a * e * s * 2.0 * PI * x;
                out[3] = -a * e * s;
                out[4] = 1.0;
            }
            FitModel::Linear => {
                out[0] = x;
                out[1] = 1.0;
            }
        }
    }

    /// Data-driven starting point.
    pub fn initial_guess(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::Fit("initial guess needs equally long, non-empty x and y".into()));
        }
        let pts = sorted(x, y);
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let n = xs.len();
        let x_span = (xs[n - 1] - xs[0]).max(TINY);
        let y0 = ys[0];
        Ok(match *self {
            FitModel::Lorentzian | FitModel::Gaussian => peak_guess(&xs, &ys),
            FitModel::Exponential => {
                match log_linear(&xs, &ys) {
                    Some((slope, icpt)) => vec![icpt.exp(), (-slope).max(0.0)],
                    None => vec![if y0 != 0.0 { y0 } else { 1.0 }, 1.0 / x_span],
                }
            }
            FitModel::DoubleExponential => {
                let t_long = one_over_e(&xs, &ys).unwrap_or(0.5 * x_span).max(x_span / 50.0);
                vec![0.5 * y0, t_long / 20.0, 0.5 * y0, t_long]
            }
            FitModel::StretchedExponential => {
                let t = one_over_e(&xs, &ys).unwrap_or(0.5 * x_span).max(TINY);
                vec![y0, t, 1.5]
            }
            FitModel::SqrtPower => {
                let num: f64 = pts.iter().map(|(x, y)| y * x.max(0.0).sqrt()).sum();
                let den: f64 = pts.iter().map(|(x, _)| x.max(0.0)).sum();
                vec![if den > 0.0 { num / den } else { 1.0 }]
            }
            FitModel::PowerLawScaling => {
                let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
                let (slope, icpt) = log_linear(&lx, &ys).unwrap_or((0.5, ys[0].abs().max(TINY).ln()));
                vec![icpt.exp(), slope]
            }
            FitModel::OuCpmg { n } => {
                let t_e = one_over_e(&xs, &ys).unwrap_or(0.5 * x_span).max(TINY);
                // small-τ limit σ²t³/(12 τc n²) = 1 with τc = 10·t_e
                let tau_c = 10.0 * t_e;
                let sigma = (12.0 * tau_c * (n * n) as f64 / t_e.powi(3)).sqrt();
                vec![y0.max(1e-3), sigma, tau_c]
            }
            FitModel::DampedOscillation => oscillation_guess(&xs, &ys),
            FitModel::Linear => {
                let m = n as f64;
                let mx = xs.iter().sum::<f64>() / m;
                let my = ys.iter().sum::<f64>() / m;
                let sxx: f64 = xs.iter().map(|v| (v - mx).powi(2)).sum();
                let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum();
                let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
                vec![slope, my - slope * mx]
            }
        })
    }
}

fn sorted(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

/// Least-squares line through (x, ln y) over the positive samples.
fn log_linear(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &v)| v > 0.0).map(|(&a, &b)| (a, b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// First x where y drops below y₀/e, linearly interpolated.
fn one_over_e(x: &[f64], y: &[f64]) -> Option<f64> {
    let target = y[0] / std::f64::consts::E;
    for i in 1..x.len() {
        if (y[i] - target) * y[0].signum() <= 0.0 {
            let f = (y[i - 1] - target) / (y[i - 1] - y[i]);
            return Some(x[i - 1] + f * (x[i] - x[i - 1]));
        }
    }
    None
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn peak_guess(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    // baseline from the outer fifth of the scan on each side
    let k = (n / 5).max(1);
    let mut edges: Vec<f64> = y[..k].to_vec();
    edges.extend_from_slice(&y[n - k..]);
    let offset = median(&edges);
    let (imax, _) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let (imin, _) = y.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let i = if (y[imax] - offset).abs() >= (y[imin] - offset).abs() { imax } else { imin };
    let amp = y[i] - offset;
    // walk outward to the half-maximum crossings
    let half = offset + 0.5 * amp;
    let above = |j: usize| (y[j] - half) * amp.signum() > 0.0;
    let mut l = i;
    while l > 0 && above(l - 1) {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < n && above(r + 1) {
        r += 1;
    }
    let lo = if l > 0 { 0.5 * (x[l] + x[l - 1]) } else { x[0] };
    let hi = if r + 1 < n { 0.5 * (x[r] + x[r + 1]) } else { x[n - 1] };
    let step = (x[n - 1] - x[0]) / (n.max(2) - 1) as f64;
    let fwhm = (hi - lo).max(step).max(TINY);
    vec![x[i], fwhm, amp, offset]
}

fn oscillation_guess(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = (x[n - 1] - x[0]).max(TINY);
    // Nyquist bound from the mean spacing
    let f_max = 0.5 * (n - 1).max(1) as f64 / span;
    let m = 4 * n;
    let mut best = (0.0, 0.0, 0.0);
    for j in 1..=m {
        let f = f_max * j as f64 / m as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let (s, c) = (2.0 * PI * f * (xi - x[0])).sin_cos();
            re += (yi - mean) * c;
            im += (yi - mean) * s;
        }
        let power = re * re + im * im;
        if power > best.0 {
            best = (power, f, (-im).atan2(re));
        }
    }
    let (_, f, ph0) = best;
    let amp = (2.0 * best.0.sqrt() / n as f64).max(TINY);
    // phase referenced to x = 0
    let phase = ph0 - 2.0 * PI * f * x[0];
    vec![amp, 0.5 / span, f, phase.rem_euclid(2.0 * PI), mean]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in FitModel::ALL.into_iter().chain([FitModel::OuCpmg { n: 8 }]) {
            assert_eq!(FitModel::from_name(&m.name()).unwrap(), m);
            assert_eq!(m.bounds().0.len(), m.arity());
        }
        assert!(FitModel::from_name("quadratic").is_err());
        assert!(FitModel::from_name("ou_cpmg_0").is_err());
    }

    #[test]
    fn shapes_have_unit_peak_and_half_width() {
        for m in [FitModel::Lorentzian, FitModel::Gaussian] {
            let p = [33.944, 0.088, 2.0, 0.5];
            assert!((m.eval(33.944, &p) - 2.5).abs() < 1e-12);
            assert!((m.eval(33.944 + 0.044, &p) - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_guess_finds_dips() {
        let x: Vec<f64> = (0..41).map(|i| 21.0 + 0.025 * i as f64).collect();
        let p = [21.475, 0.154, -0.3, 1.0];
        let y: Vec<f64> = x.iter().map(|&v| FitModel::Lorentzian.eval(v, &p)).collect();
        let g = FitModel::Lorentzian.initial_guess(&x, &y).unwrap();
        assert!((g[0] - 21.475).abs() < 0.03);
        assert!(g[2] < 0.0);
        assert!((g[1] / 0.154 - 1.0).abs() < 0.5);
    }

    #[test]
    fn oscillation_guess_locates_frequency() {
        let x: Vec<f64> = (0..40).map(|i| 5.0 * i as f64).collect();
        let p = [0.4, 1e-3, 0.0142, 0.3, 0.5];
        let y: Vec<f64> = x.iter().map(|&v| FitModel::DampedOscillation.eval(v, &p)).collect();
        let g = FitModel::DampedOscillation.initial_guess(&x, &y).unwrap();
        assert!((g[2] / 0.0142 - 1.0).abs() < 0.1, "{g:?}");
    }
}
