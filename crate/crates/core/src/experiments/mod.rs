//! End-to-end experiment runners.
//!
//! An [`ExperimentSpec`] names a kind, a parameter map and a seed. Parameters
//! are parsed into the kind's typed schema (unknown keys are rejected) before
//! anything is simulated. Each sweep point gets its own seed derived from the
//! spec seed, points run in parallel, and the table is assembled in sweep
//! order, so output is identical for any thread count.
//!
//! Every table has the columns `x, repetition, signal, ...` with one row per
//! point and repetition, followed by a `mean` row for that point. Fits are
//! made on the mean rows.

pub mod params;
mod runners;
pub mod table;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::FitResult;
use crate::dynamics::{ou::one_over_e_time, NoiseMode, NoiseModel, OpticalModel, Simulator};
use crate::error::{Error, Result};
use crate::model::EnsembleConfig;
use crate::seed;
use crate::sequence::Protocols;

pub use params::{Grid, UnitTag, Q};
pub use runners::Params;
pub use table::{format_number, Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PleScan,
    Shb,
    OpticalFid,
    PhotonEcho,
    PitT1,
    OdnmrScan,
    SpinHoleburn,
    CorrelationScan,
    Rabi,
    RabiPowerSweep,
    HahnEcho,
    Cpmg,
    ScalingStudy,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 13] = [
        ExperimentKind::PleScan,
        ExperimentKind::Shb,
        ExperimentKind::OpticalFid,
        ExperimentKind::PhotonEcho,
        ExperimentKind::PitT1,
        ExperimentKind::OdnmrScan,
        ExperimentKind::SpinHoleburn,
        ExperimentKind::CorrelationScan,
        ExperimentKind::Rabi,
        ExperimentKind::RabiPowerSweep,
        ExperimentKind::HahnEcho,
        ExperimentKind::Cpmg,
        ExperimentKind::ScalingStudy,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub parameters: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            parameters: Default::default(),
            seed,
        }
    }

    /// Adds one parameter; `value` may be a number, a unit string, a list or a table.
    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }

    /// Parses the parameter map into the kind's typed schema.
    pub fn params(&self) -> Result<Params> {
        Params::parse(self.kind, &self.parameters)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: Table,
    pub fits: Vec<FitResult>,
    /// Fully resolved parameters, defaults included.
    pub parameters: serde_json::Value,
}

/// Physics shared by every runner.
#[derive(Debug, Clone, Copy)]
pub struct Physics<'a> {
    pub ensemble: &'a EnsembleConfig,
    pub noise: &'a NoiseModel,
    pub optics: &'a OpticalModel,
    /// kHz per √W.
    pub k_rabi: f64,
}

pub fn run_experiment(
    spec: &ExperimentSpec,
    cfg: &EnsembleConfig,
    noise: &NoiseModel,
    optics: &OpticalModel,
    k_rabi: f64,
) -> Result<ExperimentOutput> {
    let params = spec.params()?;
    cfg.validate()?;
    noise.validate()?;
    optics.validate()?;
    if !(k_rabi > 0.0 && k_rabi.is_finite()) {
        return Err(Error::config("k_rabi must be finite and > 0"));
    }
    let phys = Physics {
        ensemble: cfg,
        noise,
        optics,
        k_rabi,
    };
    let (table, fits) = params.run(&phys, spec.seed)?;
    let parameters = serde_json::to_value(&params).map_err(|e| Error::config(e.to_string()))?;
    Ok(ExperimentOutput {
        table,
        fits,
        parameters,
    })
}

/// σ (rad/s) for which the Hahn-echo 1/e time (total time 2τ) equals `target_ms`.
pub fn calibrate_bath(target_ms: f64, tau_c_ms: f64) -> Result<f64> {
    if !(target_ms > 0.0 && tau_c_ms > 0.0 && target_ms.is_finite() && tau_c_ms.is_finite()) {
        return Err(Error::config("calibration targets must be finite and > 0"));
    }
    let (target, tau_c) = (target_ms * 1e-3, tau_c_ms * 1e-3);
    // t_1/e decreases monotonically in σ
    let g = |ln_sigma: f64| -> Result<f64> { Ok(one_over_e_time(1, ln_sigma.exp(), tau_c)?.ln() - target.ln()) };
    let (mut lo, mut hi) = (-10.0_f64, 30.0_f64);
    let (f_lo, f_hi) = (g(lo)?, g(hi)?);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Bracket {
            lo: lo.exp(),
            hi: hi.exp(),
            f_lo,
            f_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

// ---------------------------------------------------------------------------
// sweep engine

pub(crate) struct Layout {
    pub x: String,
    pub derived: Vec<&'static str>,
    pub extra: Vec<&'static str>,
}

impl Layout {
    pub fn new(x: &str, derived: &[&'static str], extra: &[&'static str]) -> Self {
        Self {
            x: x.to_string(),
            derived: derived.to_vec(),
            extra: extra.to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub x: f64,
    pub extra: Vec<f64>,
}

impl Point {
    pub fn at(x: f64) -> Self {
        Self { x, extra: Vec::new() }
    }
}

pub(crate) struct Sweep {
    pub table: Table,
    /// Per point, the repetition means of `[signal, derived...]`.
    pub means: Vec<Vec<f64>>,
}

impl Sweep {
    pub fn signal(&self) -> Vec<f64> {
        self.means.iter().map(|m| m[0]).collect()
    }
}

pub(crate) struct Runner<'a> {
    pub phys: &'a Physics<'a>,
    pub seed: u64,
    pub repetitions: usize,
}

impl<'a> Runner<'a> {
    pub fn monte_carlo(&self) -> bool {
        matches!(self.phys.noise.mode, NoiseMode::MonteCarlo { .. })
    }

    pub fn protocols(&self, optical_center: f64) -> Protocols {
        Protocols {
            optical_center,
            k_rabi: self.phys.k_rabi,
            ..Protocols::default()
        }
    }

    /// Simulator over the part of the optical line that the pit protocol reaches.
    pub fn simulator(&self, proto: &Protocols) -> Result<Simulator> {
        let half = 0.5 * proto.pit_span.max(proto.probe_span) + 3.0;
        self.simulator_window(proto.optical_center, half)
    }

    /// Simulator over `center ± half_width`, with classes concentrated where
    /// a readout at `center` is sensitive unless the ensemble sets its own focus.
    pub fn simulator_window(&self, center: f64, half_width: f64) -> Result<Simulator> {
        let mut cfg = self.phys.ensemble.with_window(center, half_width);
        cfg.optical_focus = cfg.optical_focus.or(Some(4.0 * self.phys.optics.gamma_mhz()));
        Simulator::new(&cfg, self.phys.noise, self.phys.optics, self.phys.k_rabi)
    }

    pub fn simulator_full(&self) -> Result<Simulator> {
        Simulator::new(self.phys.ensemble, self.phys.noise, self.phys.optics, self.phys.k_rabi)
    }

    /// Runs all points. `measure(i, seed)` returns the clean raw channels of
    /// point `i`; readout noise is applied to each channel per repetition and
    /// `finish(i, raw)` turns them into `[signal, derived...]`.
    ///
    /// In analytic mode a point is measured once and the repetitions differ
    /// only by readout noise; in Monte Carlo mode every repetition is an
    /// independent measurement with its own seed.
    pub fn sweep<M, F>(&self, layout: &Layout, points: &[Point], measure: M, finish: F) -> Result<Sweep>
    where
        M: Fn(usize, u64) -> Result<Vec<f64>> + Sync,
        F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
    {
        let reps = self.repetitions;
        if reps == 0 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        let eps = self.phys.noise.readout_noise;
        let per_point: Vec<Vec<Vec<f64>>> = points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let wrap = |e: Error| Error::SweepPoint {
                    index: i,
                    param: layout.x.clone(),
                    value: p.x,
                    source: Box::new(e),
                };
                let clean: Vec<Vec<f64>> = if self.monte_carlo() {
                    (0..reps)
                        .map(|r| measure(i, seed::derive_path(self.seed, &[i as u64, r as u64])))
                        .collect::<Result<_>>()
                        .map_err(wrap)?
                } else {
                    vec![measure(i, seed::derive_path(self.seed, &[i as u64])).map_err(wrap)?; reps]
                };
                Ok(clean
                    .into_iter()
                    .enumerate()
                    .map(|(r, raw)| {
                        let noisy = self.readout_noise(&raw, eps, i, r);
                        finish(i, &noisy)
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;

        let mut cols: Vec<&str> = vec![layout.x.as_str(), "repetition", "signal"];
        cols.extend(&layout.derived);
        cols.extend(&layout.extra);
        let mut table = Table::new(&cols);
        let mut means = Vec::with_capacity(points.len());
        for (p, rows) in points.iter().zip(per_point) {
            let width = rows[0].len();
            debug_assert_eq!(width, 1 + layout.derived.len());
            debug_assert_eq!(p.extra.len(), layout.extra.len());
            let mut mean = vec![0.0; width];
            for (r, row) in rows.iter().enumerate() {
                let mut cells = vec![Cell::Num(p.x), Cell::from(r)];
                cells.extend(row.iter().map(|&v| Cell::Num(v)));
                cells.extend(p.extra.iter().map(|&v| Cell::Num(v)));
                table.push(cells);
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v / reps as f64;
                }
            }
            let mut cells = vec![Cell::Num(p.x), Cell::from("mean")];
            cells.extend(mean.iter().map(|&v| Cell::Num(v)));
            cells.extend(p.extra.iter().map(|&v| Cell::Num(v)));
            table.push(cells);
            means.push(mean);
        }
        Ok(Sweep { table, means })
    }

    fn readout_noise(&self, raw: &[f64], eps: f64, point: usize, rep: usize) -> Vec<f64> {
        if eps == 0.0 {
            return raw.to_vec();
        }
        let mut rng = seed::rng(seed::derive_path(self.seed, &[point as u64, rep as u64, u64::MAX]));
        raw.iter()
            .map(|&v| {
                let z: f64 = rng.sample(StandardNormal);
                v * (1.0 + eps * z)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ou::ou_visibility_analytic;

    #[test]
    fn calibration_hits_target() {
        let sigma = calibrate_bath(0.61, 13.0).unwrap();
        let t = one_over_e_time(1, sigma, 13e-3).unwrap();
        assert!((t / 0.61e-3 - 1.0).abs() < 1e-3);
        // V(t_1/e) = 1/e
        let v = ou_visibility_analytic(1, t, sigma, 13e-3, 1.0);
        assert!((v - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn calibration_scales_with_tau_c() {
        let a = calibrate_bath(0.05, 13.0).unwrap();
        let b = calibrate_bath(0.05, 26.0).unwrap();
        assert!((b / a / 2f64.sqrt() - 1.0).abs() < 0.01);
        // motional narrowing: χ ≈ σ²τc·t
        let far = calibrate_bath(1e4, 13.0).unwrap();
        assert!((far / (1.0 / (13e-3 * 10.0f64)).sqrt() - 1.0).abs() < 0.01);
        assert!(calibrate_bath(0.0, 13.0).is_err());
    }

    #[test]
    fn unknown_parameters_are_rejected() {
        let spec = ExperimentSpec::new(ExperimentKind::Rabi, 1).with("powr", 3.0);
        assert!(spec.params().is_err());
        for kind in ExperimentKind::ALL {
            ExperimentSpec::new(kind, 0).params().unwrap();
        }
    }

    #[test]
    fn spec_roundtrips_through_toml() {
        let text = r#"
            kind = "odnmr_scan"
            seed = 7
            [parameters]
            power = "0.5W"
            frequencies = { start = "21.4MHz", stop = 21.55, points = 5 }
        "#;
        let spec: ExperimentSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.kind, ExperimentKind::OdnmrScan);
        let p = serde_json::to_value(spec.params().unwrap()).unwrap();
        assert_eq!(p["power"], 0.5);
    }
}
