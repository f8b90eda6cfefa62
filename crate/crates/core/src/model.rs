//! Level structure of Eu-151 and the inhomogeneous ion ensemble.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};
use crate::seed;

/// Ground-state quadrupole transitions of Eu-151 (I = 5/2) at zero field.
///
/// The ±m doublets are collapsed into three levels indexed
/// 0 = |±1/2⟩, 1 = |±3/2⟩, 2 = |±5/2⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    /// |±1/2⟩ ↔ |±3/2⟩, MHz.
    pub f_12: f64,
    /// |±3/2⟩ ↔ |±5/2⟩, MHz.
    pub f_23: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_splittings: Option<Vec<f64>>,
}

impl Default for LevelScheme {
    fn default() -> Self {
        Self {
            f_12: 21.475,
            f_23: 33.944,
            excited_splittings: None,
        }
    }
}

impl LevelScheme {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_12 > 0.0 && self.f_23 > 0.0) {
            return Err(Error::config("transition frequencies must be positive"));
        }
        if self.f_12 == self.f_23 {
            return Err(Error::config("f_12 and f_23 must differ"));
        }
        Ok(())
    }

    pub fn frequency(&self, t: Transition) -> f64 {
        match t {
            Transition::F12 => self.f_12,
            Transition::F23 => self.f_23,
        }
    }

    /// The transition closest to an RF drive frequency (MHz).
    pub fn nearest(&self, frequency: f64) -> Transition {
        if (frequency - self.f_12).abs() <= (frequency - self.f_23).abs() {
            Transition::F12
        } else {
            Transition::F23
        }
    }
}

/// One of the two ground-state spin transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transition {
    F12,
    F23,
}

impl Transition {
    /// (lower, upper) level indices.
    pub fn levels(self) -> (usize, usize) {
        match self {
            Transition::F12 => (0, 1),
            Transition::F23 => (1, 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineShape {
    Lorentzian,
    Gaussian,
}

/// A symmetric inhomogeneous line. `center` and `fwhm` share the unit of the
/// quantity being sampled (MHz for optical detunings, kHz for spin detunings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousDistribution {
    pub shape: LineShape,
    #[serde(default)]
    pub center: f64,
    pub fwhm: f64,
}

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)

impl InhomogeneousDistribution {
    pub fn lorentzian(center: f64, fwhm: f64) -> Self {
        Self {
            shape: LineShape::Lorentzian,
            center,
            fwhm,
        }
    }

    pub fn gaussian(center: f64, fwhm: f64) -> Self {
        Self {
            shape: LineShape::Gaussian,
            center,
            fwhm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::config(format!(
                "distribution fwhm must be positive, got {}",
                self.fwhm
            )));
        }
        if !self.center.is_finite() {
            return Err(Error::config("distribution center must be finite"));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.center;
        match self.shape {
            LineShape::Lorentzian => {
                let g = 0.5 * self.fwhm;
                g / (PI * (d * d + g * g))
            }
            LineShape::Gaussian => {
                let s = self.fwhm / FWHM_PER_SIGMA;
                (-0.5 * (d / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let d = x - self.center;
        match self.shape {
            LineShape::Lorentzian => 0.5 + (2.0 * d / self.fwhm).atan() / PI,
            LineShape::Gaussian => {
                let s = self.fwhm / FWHM_PER_SIGMA;
                0.5 * (1.0 + erf(d / (s * std::f64::consts::SQRT_2)))
            }
        }
    }

    /// Inverse CDF for `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(1e-15, 1.0 - 1e-15);
        match self.shape {
            LineShape::Lorentzian => self.center + 0.5 * self.fwhm * (PI * (u - 0.5)).tan(),
            LineShape::Gaussian => {
                let s = self.fwhm / FWHM_PER_SIGMA;
                self.center + s * std::f64::consts::SQRT_2 * erf_inv(2.0 * u - 1.0)
            }
        }
    }

    /// Width after adding `extra` (same units) of broadening of the same shape.
    fn broadened_fwhm(&self, extra: f64) -> f64 {
        match self.shape {
            LineShape::Lorentzian => self.fwhm + extra,
            LineShape::Gaussian => self.fwhm.hypot(extra),
        }
    }
}

/// Correlation between the optical detuning of an ion and its spin transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationModel {
    /// Spin-center shift per optical detuning, kHz/GHz.
    pub gradient: f64,
    /// Piecewise-linear table of (optical detuning in GHz, extra spin FWHM in kHz),
    /// sorted by detuning. Empty means no extra broadening.
    #[serde(default)]
    pub broadening_profile: Vec<(f64, f64)>,
}

impl Default for CorrelationModel {
    fn default() -> Self {
        Self {
            gradient: -4.0,
            broadening_profile: Vec::new(),
        }
    }
}

impl CorrelationModel {
    pub fn validate(&self) -> Result<()> {
        if !self.gradient.is_finite() {
            return Err(Error::config("correlation gradient must be finite"));
        }
        let sorted = self.broadening_profile.windows(2).all(|w| w[0].0 < w[1].0);
        if !sorted {
            return Err(Error::config("broadening_profile must be strictly sorted"));
        }
        if self.broadening_profile.iter().any(|&(_, b)| b < 0.0) {
            return Err(Error::config("broadening_profile entries must be >= 0"));
        }
        Ok(())
    }

    /// Spin-center shift in kHz for an optical detuning in MHz.
    pub fn shift_khz(&self, delta_opt_mhz: f64) -> f64 {
        self.gradient * delta_opt_mhz * 1e-3
    }

    /// Extra spin FWHM (kHz) at an optical detuning in MHz; flat outside the table.
    pub fn extra_fwhm_khz(&self, delta_opt_mhz: f64) -> f64 {
        let table = &self.broadening_profile;
        let x = delta_opt_mhz * 1e-3;
        match table.len() {
            0 => 0.0,
            1 => table[0].1,
            _ => {
                if x <= table[0].0 {
                    return table[0].1;
                }
                if x >= table[table.len() - 1].0 {
                    return table[table.len() - 1].1;
                }
                let i = table.partition_point(|&(d, _)| d <= x);
                let (x0, y0) = table[i - 1];
                let (x1, y1) = table[i];
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
    }
}

/// Populations and Bloch vector of one relaxation channel of an ion class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    pub populations: [f64; 3],
    /// (u, v, w) of the addressed pair, with w = p_lower − p_upper.
    pub bloch: [f64; 3],
}

impl SpinState {
    pub fn thermal(pair: Transition) -> Self {
        let populations = thermal_populations();
        let (lo, hi) = pair.levels();
        Self {
            populations,
            bloch: [0.0, 0.0, populations[lo] - populations[hi]],
        }
    }
}

/// One homogeneous sub-ensemble.
///
/// Population relaxation has two channels (short and long T1). Each class
/// carries one [`SpinState`] per channel; observables are the
/// `channel_weight`-weighted mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct IonClass {
    /// Optical detuning from the line center, MHz.
    pub delta_opt: f64,
    /// Spin detuning from the nominal transitions, kHz.
    pub delta_spin: f64,
    pub weight: f64,
    /// Transition whose coherence is tracked in the Bloch vectors.
    pub pair: Transition,
    /// Fraction of the class in the short-T1 channel.
    pub channel_weight: f64,
    pub channels: [SpinState; 2],
}

impl IonClass {
    pub fn new(delta_opt: f64, delta_spin: f64, weight: f64) -> Self {
        let pair = Transition::F12;
        Self {
            delta_opt,
            delta_spin,
            weight,
            pair,
            channel_weight: 0.5,
            channels: [SpinState::thermal(pair); 2],
        }
    }

    fn mix<const N: usize>(&self, f: impl Fn(&SpinState) -> [f64; N]) -> [f64; N] {
        let a = f(&self.channels[0]);
        let b = f(&self.channels[1]);
        let w = self.channel_weight;
        std::array::from_fn(|i| w * a[i] + (1.0 - w) * b[i])
    }

    pub fn populations(&self) -> [f64; 3] {
        self.mix(|s| s.populations)
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.mix(|s| s.bloch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_classes: usize,
    /// Optical inhomogeneous line, MHz.
    pub optical_dist: InhomogeneousDistribution,
    /// Spin inhomogeneous line, kHz, relative to the nominal transition.
    pub spin_dist: InhomogeneousDistribution,
    #[serde(default)]
    pub correlation: CorrelationModel,
    pub rng_seed: u64,
    #[serde(default = "default_isotope_fraction")]
    pub isotope_fraction: f64,
    /// Optional optical-detuning window (MHz). When set, classes are drawn from
    /// the optical line truncated to the window and weighted by its mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical_window: Option<[f64; 2]>,
    /// Optional FWHM (MHz) of a Lorentzian proposal centred in the optical
    /// window. Classes are then concentrated near the window center and
    /// reweighted, so ensemble sums stay unbiased.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optical_focus: Option<f64>,
    #[serde(default)]
    pub levels: LevelScheme,
}

fn default_isotope_fraction() -> f64 {
    0.5
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_classes: 20_000,
            optical_dist: InhomogeneousDistribution::lorentzian(0.0, 1940.0),
            spin_dist: InhomogeneousDistribution::lorentzian(0.0, 154.0),
            correlation: CorrelationModel::default(),
            rng_seed: 1,
            isotope_fraction: default_isotope_fraction(),
            optical_window: None,
            optical_focus: None,
            levels: LevelScheme::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::config("n_classes must be >= 1"));
        }
        self.optical_dist.validate()?;
        self.spin_dist.validate()?;
        self.correlation.validate()?;
        self.levels.validate()?;
        if !(0.0..=1.0).contains(&self.isotope_fraction) {
            return Err(Error::config("isotope_fraction must lie in [0, 1]"));
        }
        if let Some([lo, hi]) = self.optical_window {
            if !(lo < hi) {
                return Err(Error::config("optical_window must satisfy lo < hi"));
            }
        }
        if let Some(w) = self.optical_focus {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::config("optical_focus must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Same configuration with the optical window centred on `center` (MHz).
    pub fn with_window(&self, center: f64, half_width: f64) -> Self {
        Self {
            optical_window: Some([center - half_width, center + half_width]),
            ..self.clone()
        }
    }
}

/// Equal occupation of the three ground levels (kT ≫ h·MHz at 4.2 K).
pub fn thermal_populations() -> [f64; 3] {
    [1.0 / 3.0; 3]
}

// Additive recurrence for a 2-D low-discrepancy sequence (plastic number).
const PLASTIC: f64 = 1.324_717_957_244_746;
const R2_ALPHA: [f64; 2] = [1.0 / PLASTIC, 1.0 / (PLASTIC * PLASTIC)];

/// Draws `cfg.n_classes` ion classes.
///
/// Optical and spin detunings are obtained by inverse-CDF transforms of a
/// randomly shifted 2-D low-discrepancy point set, so every class is
/// marginally distributed as configured while the ensemble converges much
/// faster than plain Monte Carlo. The shift comes from `rng_seed`.
pub fn sample_ensemble(cfg: &EnsembleConfig) -> Result<Vec<IonClass>> {
    sample_partition(cfg, 0, cfg.n_classes)
}

/// Samples `count` classes of partition `index`; partition 0 uses the master
/// seed directly, partition i > 0 uses `seed::derive(rng_seed, i)`.
pub fn sample_partition(cfg: &EnsembleConfig, index: u64, count: usize) -> Result<Vec<IonClass>> {
    cfg.validate()?;
    let seed = if index == 0 {
        cfg.rng_seed
    } else {
        seed::derive(cfg.rng_seed, index)
    };
    let mut rng = seed::rng(seed);
    let shift: [f64; 2] = [rng.random(), rng.random()];

    let opt = &cfg.optical_dist;
    // draw optical detunings from the proposal and weight by p/q
    let proposal = match (cfg.optical_focus, cfg.optical_window) {
        (Some(w), Some([lo, hi])) => InhomogeneousDistribution::lorentzian(0.5 * (lo + hi), w),
        (Some(w), None) => InhomogeneousDistribution::lorentzian(opt.center, w),
        (None, _) => opt.clone(),
    };
    let focused = cfg.optical_focus.is_some();
    let (u_lo, u_hi) = match cfg.optical_window {
        Some([lo, hi]) => (proposal.cdf(lo), proposal.cdf(hi)),
        None => (0.0, 1.0),
    };
    let mass = u_hi - u_lo;
    if !(mass > 0.0) {
        return Err(Error::config("optical_window carries no probability mass"));
    }
    let base_weight = cfg.isotope_fraction * mass / count as f64;
    let spin = &cfg.spin_dist;

    let classes = (0..count)
        .map(|i| {
            let k = (i + 1) as f64;
            let u1 = (shift[0] + k * R2_ALPHA[0]).fract();
            let u2 = (shift[1] + k * R2_ALPHA[1]).fract();
            let mut delta_opt = proposal.quantile(u_lo + mass * u1);
            if let Some([lo, hi]) = cfg.optical_window {
                delta_opt = delta_opt.clamp(lo, hi);
            }
            let weight = if focused {
                base_weight * opt.pdf(delta_opt) / proposal.pdf(delta_opt)
            } else {
                base_weight
            };
            let base = spin.quantile(u2) - spin.center;
            let extra = cfg.correlation.extra_fwhm_khz(delta_opt);
            let scale = spin.broadened_fwhm(extra) / spin.fwhm;
            let delta_spin = spin.center + base * scale + cfg.correlation.shift_khz(delta_opt);
            IonClass::new(delta_opt, delta_spin, weight)
        })
        .collect();
    Ok(classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta_like() -> EnsembleConfig {
        EnsembleConfig {
            n_classes: 1,
            optical_dist: InhomogeneousDistribution::lorentzian(1000.0, 1e-9),
            spin_dist: InhomogeneousDistribution::lorentzian(0.0, 1e-9),
            ..Default::default()
        }
    }

    #[test]
    fn focused_sampling_preserves_window_mass() {
        let plain = EnsembleConfig::default().with_window(0.0, 8.0);
        let focused = EnsembleConfig {
            optical_focus: Some(1.0),
            ..plain.clone()
        };
        let total = |cfg: &EnsembleConfig| sample_ensemble(cfg).unwrap().iter().map(|c| c.weight).sum::<f64>();
        let (a, b) = (total(&plain), total(&focused));
        assert!((b / a - 1.0).abs() < 1e-3, "{a} vs {b}");
        let near = |cfg: &EnsembleConfig| sample_ensemble(cfg).unwrap().iter().filter(|c| c.delta_opt.abs() < 0.3).count();
        assert!(near(&focused) > 5 * near(&plain));
    }

    #[test]
    fn gradient_shifts_spin_center() {
        let ions = sample_ensemble(&delta_like()).unwrap();
        assert_eq!(ions.len(), 1);
        assert!((ions[0].delta_opt - 1000.0).abs() < 1e-6);
        assert!((ions[0].delta_spin + 4.0).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_means_no_shift() {
        let mut cfg = delta_like();
        cfg.correlation.gradient = 0.0;
        cfg.optical_dist.center = -7321.0;
        let ions = sample_ensemble(&cfg).unwrap();
        assert!(ions[0].delta_spin.abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_fwhm() {
        let mut cfg = EnsembleConfig::default();
        cfg.spin_dist.fwhm = 0.0;
        assert!(matches!(sample_ensemble(&cfg), Err(Error::Config(_))));
        cfg.spin_dist.fwhm = 10.0;
        cfg.n_classes = 0;
        assert!(sample_ensemble(&cfg).is_err());
    }

    #[test]
    fn thermal_is_uniform() {
        let p = thermal_populations();
        assert_eq!(p, [1.0 / 3.0; 3]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(p, thermal_populations());
    }

    #[test]
    fn fresh_classes_are_thermal() {
        let ions = sample_ensemble(&EnsembleConfig {
            n_classes: 10,
            ..Default::default()
        })
        .unwrap();
        for ion in &ions {
            assert_eq!(ion.populations(), thermal_populations());
            assert!(ion.bloch()[2].abs() < 1e-15);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [
            InhomogeneousDistribution::lorentzian(3.0, 154.0),
            InhomogeneousDistribution::gaussian(-2.0, 11.6),
        ] {
            for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
                assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-9, "{d:?} {u}");
            }
        }
    }

    #[test]
    fn window_truncates_and_weights() {
        let cfg = EnsembleConfig {
            n_classes: 1000,
            ..Default::default()
        }
        .with_window(0.0, 5.0);
        let ions = sample_ensemble(&cfg).unwrap();
        assert!(ions.iter().all(|i| i.delta_opt.abs() <= 5.0));
        let total: f64 = ions.iter().map(|i| i.weight).sum();
        let mass = cfg.optical_dist.cdf(5.0) - cfg.optical_dist.cdf(-5.0);
        assert!((total - 0.5 * mass).abs() < 1e-12);
    }

    #[test]
    fn broadening_profile_interpolates() {
        let c = CorrelationModel {
            gradient: 0.0,
            broadening_profile: vec![(-1.0, 10.0), (0.0, 0.0), (1.0, 20.0)],
        };
        assert_eq!(c.extra_fwhm_khz(0.0), 0.0);
        assert!((c.extra_fwhm_khz(500.0) - 10.0).abs() < 1e-12);
        assert!((c.extra_fwhm_khz(-500.0) - 5.0).abs() < 1e-12);
        assert_eq!(c.extra_fwhm_khz(5000.0), 20.0);
        assert_eq!(c.shift_khz(0.0), 0.0);
    }
}
