//! Pulse sequences: event types, the text format and protocol builders.

mod builders;
mod dsl;

pub use builders::{
    build_cpmg, build_erase, build_hahn_echo, build_odnmr_scan, build_pit_preparation,
    build_rabi, build_spin_holeburn, pi_duration_us, Protocols,
};
pub use dsl::{format_sequence, parse_sequence};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpticalRole {
    Burn,
    Probe,
    Erase,
}

impl OpticalRole {
    pub fn keyword(self) -> &'static str {
        match self {
            OpticalRole::Burn => "burn",
            OpticalRole::Probe => "probe",
            OpticalRole::Erase => "erase",
        }
    }
}

/// Laser pulse, possibly chirped linearly from `detuning_start` to `detuning_stop` (MHz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalPulse {
    pub detuning_start: f64,
    pub detuning_stop: f64,
    /// Pump-rate units.
    pub power: f64,
    /// µs
    pub duration: f64,
    pub role: OpticalRole,
}

impl OpticalPulse {
    pub fn is_chirp(&self) -> bool {
        self.detuning_start != self.detuning_stop
    }

    pub fn span(&self) -> f64 {
        (self.detuning_stop - self.detuning_start).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfPulse {
    /// MHz
    pub frequency: f64,
    /// W
    pub power: f64,
    /// degrees, in [0, 360)
    pub phase: f64,
    /// µs
    pub duration: f64,
}

impl RfPulse {
    pub fn new(frequency: f64, power: f64, phase: f64, duration: f64) -> Self {
        Self {
            frequency,
            power,
            phase: normalize_phase(phase),
            duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wait {
    /// µs
    pub duration: f64,
}

/// Fixed-frequency fluorescence readout that does not pump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWindow {
    /// MHz
    pub detuning: f64,
    /// µs
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PulseEvent {
    Optical(OpticalPulse),
    Rf(RfPulse),
    Wait(Wait),
    Readout(ReadoutWindow),
}

impl PulseEvent {
    pub fn duration(&self) -> f64 {
        match self {
            PulseEvent::Optical(p) => p.duration,
            PulseEvent::Rf(p) => p.duration,
            PulseEvent::Wait(w) => w.duration,
            PulseEvent::Readout(r) => r.duration,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.duration();
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Sequence(format!("event duration must be > 0, got {d}")));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            PulseEvent::Optical(p) => {
                if !(p.power >= 0.0) || !finite(&[p.detuning_start, p.detuning_stop, p.power]) {
                    return Err(Error::Sequence("optical pulse has invalid power or detuning".into()));
                }
            }
            PulseEvent::Rf(p) => {
                if !(p.power >= 0.0) || !finite(&[p.frequency, p.power]) {
                    return Err(Error::Sequence("RF pulse has invalid power or frequency".into()));
                }
                if !(0.0..360.0).contains(&p.phase) {
                    return Err(Error::Sequence(format!("RF phase {} not in [0, 360)", p.phase)));
                }
            }
            PulseEvent::Wait(_) => {}
            PulseEvent::Readout(r) => {
                if !r.detuning.is_finite() {
                    return Err(Error::Sequence("readout detuning must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

impl From<OpticalPulse> for PulseEvent {
    fn from(p: OpticalPulse) -> Self {
        PulseEvent::Optical(p)
    }
}

impl From<RfPulse> for PulseEvent {
    fn from(p: RfPulse) -> Self {
        PulseEvent::Rf(p)
    }
}

impl From<Wait> for PulseEvent {
    fn from(w: Wait) -> Self {
        PulseEvent::Wait(w)
    }
}

impl From<ReadoutWindow> for PulseEvent {
    fn from(r: ReadoutWindow) -> Self {
        PulseEvent::Readout(r)
    }
}

pub fn normalize_phase(deg: f64) -> f64 {
    let p = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if p >= 360.0 {
        0.0
    } else {
        p
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseSequence {
    pub events: Vec<PulseEvent>,
    pub label: String,
}

impl PulseSequence {
    pub fn new(label: impl Into<String>, events: Vec<PulseEvent>) -> Result<Self> {
        let seq = Self {
            events,
            label: label.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::Sequence("sequence is empty".into()));
        }
        self.events.iter().try_for_each(PulseEvent::validate)
    }

    /// Total duration in µs.
    pub fn total_duration(&self) -> f64 {
        self.events.iter().map(PulseEvent::duration).sum()
    }

    pub fn rf_pulses(&self) -> impl Iterator<Item = &RfPulse> {
        self.events.iter().filter_map(|e| match e {
            PulseEvent::Rf(p) => Some(p),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    RfFrequency,
    RfDuration,
    Delay,
    RfPower,
    OpticalDetuning,
    PulseCount,
}

impl SweepParameter {
    pub fn column(self) -> &'static str {
        match self {
            SweepParameter::RfFrequency => "rf_frequency_mhz",
            SweepParameter::RfDuration => "rf_duration_us",
            SweepParameter::Delay => "delay_us",
            SweepParameter::RfPower => "rf_power_w",
            SweepParameter::OpticalDetuning => "optical_detuning_mhz",
            SweepParameter::PulseCount => "pulse_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    #[serde(default = "default_repetitions")]
    pub repetitions_per_point: usize,
}

pub(crate) fn default_repetitions() -> usize {
    5
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Result<Self> {
        let s = Self {
            parameter,
            values,
            repetitions_per_point: default_repetitions(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep values must be non-empty and finite"));
        }
        if self.repetitions_per_point == 0 {
            return Err(Error::config("repetitions_per_point must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_normalization() {
        assert_eq!(normalize_phase(360.0), 0.0);
        assert_eq!(normalize_phase(-90.0), 270.0);
        assert_eq!(normalize_phase(725.0), 5.0);
        assert!(normalize_phase(-1e-20) < 360.0);
    }

    #[test]
    fn durations_add_up() {
        let seq = PulseSequence::new(
            "w",
            vec![Wait { duration: 500.0 }.into(), Wait { duration: 500.0 }.into()],
        )
        .unwrap();
        assert_eq!(seq.total_duration(), 1000.0);
    }

    #[test]
    fn rejects_bad_events() {
        assert!(PulseSequence::new("e", vec![]).is_err());
        assert!(PulseSequence::new("w", vec![Wait { duration: -1.0 }.into()]).is_err());
        let rf = RfPulse {
            frequency: 21.475,
            power: -1.0,
            phase: 0.0,
            duration: 1.0,
        };
        assert!(PulseSequence::new("rf", vec![rf.into()]).is_err());
    }

    #[test]
    fn sweep_requires_values() {
        assert!(SweepSpec::new(SweepParameter::Delay, vec![]).is_err());
        assert!(SweepSpec::new(SweepParameter::Delay, vec![f64::NAN]).is_err());
        assert_eq!(
            SweepSpec::new(SweepParameter::Delay, vec![1.0]).unwrap().repetitions_per_point,
            5
        );
    }
}
