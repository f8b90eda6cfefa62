//! Closed-form estimators: visibility, scaling law, couplings, ion counts.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::units::{BOHR_MAGNETON, HBAR, MU0_OVER_4PI, PLANCK};

/// (s₊ − s₋)/(s₊ + s₋) per sample; `None` where the denominator is not positive.
pub fn visibility(s_plus: &[f64], s_minus: &[f64]) -> Result<Vec<Option<f64>>> {
    if s_plus.len() != s_minus.len() {
        return Err(Error::Fit(format!(
            "visibility needs equal lengths, got {} and {}",
            s_plus.len(),
            s_minus.len()
        )));
    }
    Ok(s_plus
        .iter()
        .zip(s_minus)
        .map(|(&p, &m)| {
            let den = p + m;
            (den > 0.0 && den.is_finite()).then(|| (p - m) / den)
        })
        .collect())
}

/// Result of the log-log regression T2(N) = T2_echo·N^β.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScalingFit {
    pub beta: f64,
    pub t2_echo: f64,
    /// (σ_β, σ_T2echo); infinite with only two points.
    pub std_errors: [f64; 2],
}

pub fn fit_scaling(t2_by_n: &[(f64, f64)]) -> Result<ScalingFit> {
    if let Some(&(n, t)) = t2_by_n.iter().find(|(n, t)| !(*n >= 1.0 && *t > 0.0 && n.is_finite() && t.is_finite())) {
        return Err(Error::Fit(format!("scaling fit needs N >= 1 and T2 > 0, got ({n}, {t})")));
    }
    let mut distinct: Vec<f64> = t2_by_n.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Fit("scaling fit needs at least two distinct N".into()));
    }
    let pts: Vec<(f64, f64)> = t2_by_n.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let icpt = my - beta * mx;
    let t2_echo = icpt.exp();
    let dof = pts.len() - 2;
    let std_errors = if dof == 0 {
        [f64::INFINITY; 2]
    } else {
        let s2 = pts.iter().map(|p| (p.1 - icpt - beta * p.0).powi(2)).sum::<f64>() / dof as f64;
        let se_b = (s2 / sxx).sqrt();
        let se_i = (s2 * (1.0 / m + mx * mx / sxx)).sqrt();
        [se_b, t2_echo * se_i]
    };
    Ok(ScalingFit { beta, t2_echo, std_errors })
}

/// Nuclear magnetic moment γħI in J/T (γ in rad s⁻¹ T⁻¹).
pub fn nuclear_moment(gamma: f64, spin: f64) -> f64 {
    gamma * HBAR * spin
}

/// Electron magnetic moment g·μ_B·S in J/T.
pub fn electron_moment(g: f64, spin: f64) -> f64 {
    g * BOHR_MAGNETON * spin
}

/// Point-dipole interaction (μ0/4π)·μa·μb/r³ expressed as a frequency E/h in Hz.
pub fn dipolar_coupling(mu_a: f64, mu_b: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::config(format!("distance must be > 0, got {r}")));
    }
    Ok(MU0_OVER_4PI * mu_a * mu_b / (r * r * r) / PLANCK)
}

/// Distance (m) at which two moments couple with `frequency` Hz.
pub fn dipolar_distance(mu_a: f64, mu_b: f64, frequency: f64) -> Result<f64> {
    if !(frequency > 0.0) {
        return Err(Error::config(format!("coupling must be > 0, got {frequency}")));
    }
    Ok((MU0_OVER_4PI * mu_a * mu_b / (PLANCK * frequency)).cbrt())
}

/// N = C·V·η_h·η_151·η_s.
pub fn probed_ion_count(c_eu: f64, v: f64, eta_h: f64, eta_151: f64, eta_s: f64) -> Result<f64> {
    let f = [c_eu, v, eta_h, eta_151, eta_s];
    if f.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::config("probed_ion_count factors must be >= 0"));
    }
    Ok(f.iter().product())
}

/// T2* = 1/(πΓ) in µs for a linewidth Γ in kHz.
pub fn linewidth_to_t2star(gamma_khz: f64) -> f64 {
    1e3 / (PI * gamma_khz)
}

/// Both readings of a hole width Γ_hole (kHz): 1/(πΓ_hole) and 1/(π·Γ_hole/2), in µs.
/// A hole is the convolution of two homogeneous lines, so either may be meant.
pub fn hole_width_to_t2star(hole_khz: f64) -> (f64, f64) {
    (linewidth_to_t2star(hole_khz), linewidth_to_t2star(0.5 * hole_khz))
}
