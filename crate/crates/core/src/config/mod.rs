//! Run configuration files (TOML or JSON).
//!
//! Every section is optional and falls back to the defaults of its type.
//! Quantities accept unit suffixes, e.g. `ou_sigma = "12kHz"` or
//! `ou_tau_c = "13ms"`.
//!
//! ```toml
//! k_rabi = 1.48
//! output_dir = "out/rabi"
//!
//! [calibration]
//! t2_echo = "0.61ms"
//! tau_c = "13ms"
//!
//! [experiment]
//! kind = "rabi"
//! seed = 7
//! parameters = { power = "92W" }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{NoiseModel, OpticalModel};
use crate::error::{Error, Result};
use crate::experiments::params::{Ms, S};
use crate::experiments::{calibrate_bath, run_experiment, ExperimentOutput, ExperimentSpec, Q};
use crate::model::EnsembleConfig;

/// Sets the bath σ so the Hahn-echo 1/e time equals `t2_echo` at `tau_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub t2_echo: Q<Ms>,
    pub tau_c: Q<Ms>,
}

/// Monte Carlo versus closed-form CPMG comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub orders: Vec<usize>,
    /// Log-spaced pulse spacings per order between `tau_min` and `tau_max`.
    /// Unset bounds follow the 1/e time of each order.
    pub tau_points: usize,
    pub tau_min: Option<Q<S>>,
    pub tau_max: Option<Q<S>>,
    /// Defaults to the Monte Carlo setting of the noise model, else 2000.
    pub n_trajectories: Option<usize>,
    /// Factor applied to σ on the Monte Carlo side only.
    pub sigma_mismatch: f64,
    pub z_threshold: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 4, 8],
            tau_points: 10,
            tau_min: None,
            tau_max: None,
            n_trajectories: None,
            sigma_mismatch: 1.0,
            z_threshold: 3.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.orders.contains(&0) {
            return Err(Error::config("oracle.orders must be non-empty and >= 1"));
        }
        if self.tau_points == 0 {
            return Err(Error::config("oracle.tau_points must be >= 1"));
        }
        if self.n_trajectories == Some(0) {
            return Err(Error::config("oracle.n_trajectories must be >= 1"));
        }
        if !(self.sigma_mismatch >= 0.0 && self.sigma_mismatch.is_finite()) {
            return Err(Error::config("oracle.sigma_mismatch must be finite and >= 0"));
        }
        if !(self.z_threshold > 0.0) {
            return Err(Error::config("oracle.z_threshold must be > 0"));
        }
        for t in [self.tau_min, self.tau_max].into_iter().flatten() {
            if !(t.0 > 0.0 && t.0.is_finite()) {
                return Err(Error::config("oracle tau bounds must be finite and > 0"));
            }
        }
        Ok(())
    }
}

fn default_k_rabi() -> f64 {
    1.48
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub optics: OpticalModel,
    /// Rabi frequency per √W, kHz.
    #[serde(default = "default_k_rabi")]
    pub k_rabi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleConfig::default(),
            noise: NoiseModel::default(),
            optics: OpticalModel::default(),
            k_rabi: default_k_rabi(),
            calibration: None,
            experiment: None,
            output_dir: None,
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(format!("TOML: {e}")))?;
        cfg.resolved()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("JSON: {e}")))?;
        cfg.resolved()
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let parsed = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies the bath calibration and fills unset defaults, then validates.
    /// The result re-serializes to a self-contained configuration.
    pub fn resolved(mut self) -> Result<Self> {
        if let Some(c) = self.calibration.take() {
            self.noise.ou_sigma = calibrate_bath(c.t2_echo.0, c.tau_c.0)?;
            self.noise.ou_tau_c = c.tau_c.0 / 1e3;
        }
        self.noise.resolve_defaults();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.noise.validate()?;
        self.optics.validate()?;
        self.oracle.validate()?;
        if !(self.k_rabi > 0.0 && self.k_rabi.is_finite()) {
            return Err(Error::config("k_rabi must be finite and > 0"));
        }
        if let Some(e) = &self.experiment {
            e.params()?;
        }
        Ok(())
    }

    pub fn experiment(&self) -> Result<&ExperimentSpec> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::config("configuration has no [experiment] section"))
    }

    pub fn run(&self) -> Result<ExperimentOutput> {
        run_experiment(self.experiment()?, &self.ensemble, &self.noise, &self.optics, self.k_rabi)
    }
}
