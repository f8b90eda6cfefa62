//! Simulation engine: optical pumping, RF Bloch rotations, spin relaxation and
//! the Ornstein-Uhlenbeck dephasing bath.

mod engine;
pub mod optical;
pub mod ou;
pub mod rotation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

pub use engine::{apply_optical_pulse, apply_readout, apply_rf_pulse, apply_wait, simulate_sequence, SimState, Simulator};
pub use optical::{optical_fid_signal, photon_echo_amplitude};
pub use ou::{mc_cpmg_visibility, ou_trajectory, ou_visibility_analytic, McEstimate};

/// How the OU bath enters sequence simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Deterministic: the closed-form Gaussian-phase attenuation is applied to
    /// the coherence of every multi-pulse RF block.
    Analytic,
    /// Averages over sampled bath trajectories. `dt` (s) bounds the sub-step
    /// of the piecewise-constant detuning during RF pulses.
    /// Unset `dt` (NaN) resolves to τc/100 in [`NoiseModel::resolve_defaults`].
    MonteCarlo {
        #[serde(default = "default_trajectories")]
        n_trajectories: usize,
        #[serde(deserialize_with = "units::de_s", default = "unset")]
        dt: f64,
    },
}

fn default_trajectories() -> usize {
    2000
}

fn unset() -> f64 {
    f64::NAN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Bath coupling σ, rad/s.
    #[serde(deserialize_with = "units::de_rad_per_s")]
    pub ou_sigma: f64,
    /// Bath correlation time, s.
    #[serde(deserialize_with = "units::de_s")]
    pub ou_tau_c: f64,
    #[serde(deserialize_with = "units::de_s")]
    pub t1_short: f64,
    #[serde(deserialize_with = "units::de_s")]
    pub t1_long: f64,
    /// Fraction of each ion class relaxing with `t1_short`.
    pub t1_weight: f64,
    pub mode: NoiseMode,
    /// Relative Gaussian noise added to every recorded signal sample.
    #[serde(default)]
    pub readout_noise: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            // Hahn 1/e time of 0.61 ms at tau_c = 13 ms
            ou_sigma: 26_447.0,
            ou_tau_c: 13e-3,
            t1_short: 4.4,
            t1_long: 120.0,
            t1_weight: 0.5,
            mode: NoiseMode::Analytic,
            readout_noise: 0.0,
        }
    }
}

impl NoiseModel {
    /// Monte Carlo mode with the default step τc/100.
    pub fn monte_carlo(mut self, n_trajectories: usize) -> Self {
        self.mode = NoiseMode::MonteCarlo {
            n_trajectories,
            dt: self.ou_tau_c / 100.0,
        };
        self
    }

    /// Fills a Monte Carlo `dt` left unset with τc/100.
    pub fn resolve_defaults(&mut self) {
        if let NoiseMode::MonteCarlo { dt, .. } = &mut self.mode {
            if dt.is_nan() {
                *dt = self.ou_tau_c / 100.0;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ou_sigma >= 0.0 && self.ou_sigma.is_finite()) {
            return Err(Error::config("ou_sigma must be finite and >= 0"));
        }
        if !(self.ou_tau_c > 0.0 && self.ou_tau_c.is_finite()) {
            return Err(Error::config("ou_tau_c must be finite and > 0"));
        }
        if !(self.t1_short > 0.0 && self.t1_short <= self.t1_long) {
            return Err(Error::config("need 0 < t1_short <= t1_long"));
        }
        if !(0.0..=1.0).contains(&self.t1_weight) {
            return Err(Error::config("t1_weight must lie in [0, 1]"));
        }
        if !(self.readout_noise >= 0.0 && self.readout_noise.is_finite()) {
            return Err(Error::config("readout_noise must be finite and >= 0"));
        }
        if let NoiseMode::MonteCarlo { n_trajectories, dt } = self.mode {
            if n_trajectories == 0 {
                return Err(Error::config("n_trajectories must be >= 1"));
            }
            if !(dt > 0.0 && dt < self.ou_tau_c / 10.0) {
                return Err(Error::config(format!(
                    "Monte Carlo dt must satisfy 0 < dt < tau_c/10 = {} s, got {dt}",
                    self.ou_tau_c / 10.0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalModel {
    /// Homogeneous linewidth (FWHM), kHz.
    #[serde(deserialize_with = "units::de_khz")]
    pub gamma_h: f64,
    /// Optical coherence time, µs.
    #[serde(deserialize_with = "units::de_us")]
    pub t2_opt: f64,
    /// Optical dephasing time, µs.
    #[serde(deserialize_with = "units::de_us")]
    pub t2_star_opt: f64,
    /// Pumped fraction exponent per unit power per µs of resonant overlap.
    pub pump_efficiency: f64,
    /// Row i: where population excited out of ground level i ends up.
    pub branching: [[f64; 3]; 3],
    /// Ground level addressed by the laser (0 = |±1/2⟩, 1 = |±3/2⟩, 2 = |±5/2⟩).
    #[serde(default = "default_probed_level")]
    pub probed_level: usize,
}

fn default_probed_level() -> usize {
    1
}

/// Default pit: 20 chirps of 300 ms over 10 MHz at unit power.
pub const DEFAULT_PIT: (f64, f64, usize, f64) = (10.0, 300_000.0, 20, 1.0);
/// Pit contrast the default pumping rate is tuned to.
pub const DEFAULT_PIT_CONTRAST: f64 = 0.6;

impl Default for OpticalModel {
    fn default() -> Self {
        let gamma_h = 310.0;
        let (span, dur, repeats, power) = DEFAULT_PIT;
        Self {
            gamma_h,
            t2_opt: 2.13,
            t2_star_opt: 0.77,
            pump_efficiency: optical::pump_efficiency_for_contrast(
                DEFAULT_PIT_CONTRAST,
                gamma_h,
                span,
                dur,
                repeats,
                power,
            ),
            branching: [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]],
            probed_level: 1,
        }
    }
}

impl OpticalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_h > 0.0 && self.gamma_h.is_finite()) {
            return Err(Error::config("gamma_h must be > 0"));
        }
        if !(self.t2_opt > 0.0 && self.t2_star_opt > 0.0) {
            return Err(Error::config("optical coherence times must be > 0"));
        }
        if !(self.pump_efficiency >= 0.0 && self.pump_efficiency.is_finite()) {
            return Err(Error::config("pump_efficiency must be finite and >= 0"));
        }
        for (i, row) in self.branching.iter().enumerate() {
            if row.iter().any(|&b| !(b >= 0.0)) {
                return Err(Error::config(format!("branching row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::config(format!("branching row {i} sums to {sum}, expected 1")));
            }
        }
        if self.probed_level > 2 {
            return Err(Error::config("probed_level must be 0, 1 or 2"));
        }
        Ok(())
    }

    /// Homogeneous linewidth in MHz.
    pub fn gamma_mhz(&self) -> f64 {
        self.gamma_h * 1e-3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        NoiseModel::default().validate().unwrap();
        NoiseModel::default().monte_carlo(2000).validate().unwrap();
        OpticalModel::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_models() {
        let n = NoiseModel { t1_short: 200.0, ..NoiseModel::default() };
        assert!(n.validate().is_err());
        let mut n = NoiseModel::default();
        n.mode = NoiseMode::MonteCarlo {
            n_trajectories: 10,
            dt: n.ou_tau_c / 5.0,
        };
        assert!(n.validate().is_err());
        let mut o = OpticalModel::default();
        o.branching[0] = [0.2, 0.2, 0.2];
        assert!(o.validate().is_err());
        o = OpticalModel::default();
        o.gamma_h = 0.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn noise_accepts_unit_strings() {
        let n: NoiseModel = toml::from_str(
            r#"
            ou_sigma = "12kHz"
            ou_tau_c = "13ms"
            t1_short = 4.4
            t1_long = "120s"
            t1_weight = 0.5
            mode = { monte_carlo = { n_trajectories = 100, dt = "130us" } }
            "#,
        )
        .unwrap();
        assert!((n.ou_sigma - 2.0 * std::f64::consts::PI * 12e3).abs() < 1e-6);
        assert!((n.ou_tau_c - 0.013).abs() < 1e-15);
        assert_eq!(n.mode, NoiseMode::MonteCarlo { n_trajectories: 100, dt: 1.3e-4 });
        n.validate().unwrap();
    }
}
