//! Optical observables and the laser-ion spectral overlap.

use std::f64::consts::PI;

/// Peak-normalized Lorentzian of FWHM `gamma`.
pub fn lorentzian(x: f64, gamma: f64) -> f64 {
    let r = 2.0 * x / gamma;
    1.0 / (1.0 + r * r)
}

/// atan(x) − atan(y) without cancellation when x and y are large and of equal sign.
fn atan_diff(x: f64, y: f64) -> f64 {
    if x * y > -1.0 {
        ((x - y) / (1.0 + x * y)).atan()
    } else {
        x.atan() - y.atan()
    }
}

/// ∫ L(ν(t) − δ) dt over a laser sweep ν: `start → stop` (MHz) lasting
/// `duration` µs, for an ion at detuning `delta` with homogeneous FWHM `gamma`
/// (MHz). Result in µs.
pub fn sweep_overlap(start: f64, stop: f64, duration: f64, delta: f64, gamma: f64) -> f64 {
    let span = stop - start;
    if span.abs() <= 1e-12 * gamma {
        return duration * lorentzian(start - delta, gamma);
    }
    let hw = 0.5 * gamma;
    duration / span * hw * atan_diff((stop - delta) / hw, (start - delta) / hw)
}

/// Pump efficiency for which `repeats` sweeps over `span` MHz of `duration` µs
/// at `power` leave a fraction 1 − `contrast` of the addressed level at the
/// sweep center.
pub fn pump_efficiency_for_contrast(
    contrast: f64,
    gamma_h_khz: f64,
    span: f64,
    duration: f64,
    repeats: usize,
    power: f64,
) -> f64 {
    let overlap = sweep_overlap(-0.5 * span, 0.5 * span, duration, 0.0, gamma_h_khz * 1e-3);
    -(1.0 - contrast).ln() / (repeats as f64 * power * overlap)
}

/// Heterodyne free-induction decay e^{−t/T2*}·cos(2π f t); t in µs, f in MHz.
pub fn optical_fid_signal(t_grid: &[f64], t2_star: f64, f_het: f64) -> Vec<f64> {
    t_grid
        .iter()
        .map(|&t| (-t / t2_star).exp() * (2.0 * PI * f_het * t).cos())
        .collect()
}

/// Two-pulse photon-echo amplitude versus total delay 2τ (µs), unit initial amplitude.
pub fn photon_echo_amplitude(two_tau_grid: &[f64], t2_opt: f64) -> Vec<f64> {
    two_tau_grid.iter().map(|&t| (-t / t2_opt).exp()).collect()
}
