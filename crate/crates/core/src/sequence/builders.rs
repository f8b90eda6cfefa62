//! Protocol generators for every experiment.
//!
//! Unless `bare` is set, each protocol is wrapped as
//! `pit preparation → reference probe sweep → core → center readout → erase`.
//! Signal samples therefore come in pairs: the reference sweep first, then
//! the center readout.

use super::{OpticalPulse, OpticalRole, PulseEvent, PulseSequence, ReadoutWindow, RfPulse, Wait};
use crate::error::{Error, Result};

/// π-pulse duration in µs for a Rabi frequency in kHz (cycles per second).
pub fn pi_duration_us(rabi_khz: f64) -> f64 {
    1e3 / (2.0 * rabi_khz)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocols {
    /// Laser frequency at the pit center, MHz relative to the optical line center.
    pub optical_center: f64,
    /// Rabi frequency per √W, kHz/√W.
    pub k_rabi: f64,
    pub bare: bool,
    pub pit_span: f64,
    pub pit_chirp_us: f64,
    pub pit_repeats: usize,
    pub burn_power: f64,
    pub erase_span: f64,
    pub erase_chirp_us: f64,
    pub erase_repeats: usize,
    pub erase_power: f64,
    pub probe_span: f64,
    pub probe_us: f64,
    pub probe_power: f64,
    pub readout_us: f64,
    /// Phase of the Hahn-echo refocusing pulse relative to the π/2 pulses.
    pub hahn_refocus_phase: f64,
    pub odnmr_rf_us: f64,
    /// RF power and duration of the scan pulse after a spin-hole burn.
    pub holeburn_scan_power: f64,
    pub holeburn_scan_us: f64,
}

impl Default for Protocols {
    fn default() -> Self {
        Self {
            optical_center: 0.0,
            k_rabi: 1.48,
            bare: false,
            pit_span: 10.0,
            pit_chirp_us: 300_000.0,
            pit_repeats: 20,
            burn_power: 1.0,
            erase_span: 100.0,
            erase_chirp_us: 300_000.0,
            erase_repeats: 20,
            erase_power: 20.0,
            probe_span: 15.0,
            probe_us: 1_000.0,
            probe_power: 0.0,
            readout_us: 100.0,
            hahn_refocus_phase: 0.0,
            odnmr_rf_us: 1_000.0,
            holeburn_scan_power: 0.5,
            holeburn_scan_us: 1_000.0,
        }
    }
}

impl Protocols {
    pub fn bare() -> Self {
        Self {
            bare: true,
            ..Self::default()
        }
    }

    pub fn rabi_khz(&self, power: f64) -> f64 {
        self.k_rabi * power.sqrt()
    }

    fn chirps(&self, span: f64, duration: f64, repeats: usize, power: f64, role: OpticalRole) -> Vec<PulseEvent> {
        let c = self.optical_center;
        let pulse = OpticalPulse {
            detuning_start: c - 0.5 * span,
            detuning_stop: c + 0.5 * span,
            power,
            duration,
            role,
        };
        vec![PulseEvent::Optical(pulse); repeats]
    }

    pub fn pit_events(&self) -> Vec<PulseEvent> {
        self.chirps(self.pit_span, self.pit_chirp_us, self.pit_repeats, self.burn_power, OpticalRole::Burn)
    }

    pub fn erase_events(&self) -> Vec<PulseEvent> {
        self.chirps(self.erase_span, self.erase_chirp_us, self.erase_repeats, self.erase_power, OpticalRole::Erase)
    }

    pub fn reference_probe(&self) -> PulseEvent {
        self.chirps(self.probe_span, self.probe_us, 1, self.probe_power, OpticalRole::Probe)[0]
    }

    pub fn readout(&self) -> PulseEvent {
        PulseEvent::Readout(ReadoutWindow {
            detuning: self.optical_center,
            duration: self.readout_us,
        })
    }

    pub fn pit_preparation(&self) -> PulseSequence {
        PulseSequence {
            events: self.pit_events(),
            label: "pit-preparation".into(),
        }
    }

    pub fn erase(&self) -> PulseSequence {
        PulseSequence {
            events: self.erase_events(),
            label: "erase".into(),
        }
    }

    /// Wraps the spin-control part of a protocol with preparation and readout.
    pub fn wrap(&self, label: impl Into<String>, core: Vec<PulseEvent>) -> Result<PulseSequence> {
        let mut events = Vec::with_capacity(core.len() + 64);
        if !self.bare {
            events.extend(self.pit_events());
            events.push(self.reference_probe());
        }
        events.extend(core);
        events.push(self.readout());
        if !self.bare {
            events.extend(self.erase_events());
        }
        PulseSequence::new(label, events)
    }

    pub fn rabi(&self, duration: f64, frequency: f64, power: f64) -> Result<PulseSequence> {
        self.wrap("rabi", vec![RfPulse::new(frequency, power, 0.0, duration).into()])
    }

    /// (π/2, π) durations in µs at `power`.
    pub fn pulse_durations(&self, power: f64) -> Result<(f64, f64)> {
        let rabi = self.rabi_khz(power);
        if !(rabi > 0.0 && rabi.is_finite()) {
            return Err(Error::Sequence(format!("no Rabi drive at power {power} W")));
        }
        let pi = pi_duration_us(rabi);
        Ok((0.5 * pi, pi))
    }

    /// Hahn echo π/2, τ, π, τ, π/2(final_phase). `tau` is the spacing of
    /// pulse centers, so the free waits are shortened by the pulse halves.
    pub fn hahn_echo(&self, tau: f64, frequency: f64, power: f64, final_phase: f64) -> Result<PulseSequence> {
        let (t90, t180) = self.pulse_durations(power)?;
        let wait = tau - 0.5 * (t90 + t180);
        if !(wait > 0.0) {
            return Err(Error::Sequence(format!(
                "tau = {tau} us cannot contain pulses of {t90:.3} us and {t180:.3} us"
            )));
        }
        let core = vec![
            RfPulse::new(frequency, power, 0.0, t90).into(),
            Wait { duration: wait }.into(),
            RfPulse::new(frequency, power, self.hahn_refocus_phase, t180).into(),
            Wait { duration: wait }.into(),
            RfPulse::new(frequency, power, final_phase, t90).into(),
        ];
        self.wrap("hahn-echo", core)
    }

    /// CPMG: π/2(0), [τ/2, π(90), τ/2]×n, π/2(final_phase), with `tau` the
    /// center-to-center spacing of the refocusing pulses.
    pub fn cpmg(&self, n: usize, tau: f64, frequency: f64, power: f64, final_phase: f64) -> Result<PulseSequence> {
        if n == 0 {
            return Err(Error::Sequence("CPMG needs at least one refocusing pulse".into()));
        }
        let (t90, t180) = self.pulse_durations(power)?;
        let edge = 0.5 * tau - 0.5 * (t90 + t180);
        let inner = tau - t180;
        if !(edge > 0.0) {
            return Err(Error::Sequence(format!(
                "tau = {tau} us cannot contain pulses of {t90:.3} us and {t180:.3} us"
            )));
        }
        let mut core: Vec<PulseEvent> = Vec::with_capacity(2 * n + 3);
        core.push(RfPulse::new(frequency, power, 0.0, t90).into());
        core.push(Wait { duration: edge }.into());
        for k in 0..n {
            core.push(RfPulse::new(frequency, power, 90.0, t180).into());
            let w = if k + 1 == n { edge } else { inner };
            core.push(Wait { duration: w }.into());
        }
        core.push(RfPulse::new(frequency, power, final_phase, t90).into());
        self.wrap(format!("cpmg-{n}"), core)
    }

    pub fn odnmr_scan(&self, f_list: &[f64], rf_power: f64, rf_duration: Option<f64>) -> Result<Vec<PulseSequence>> {
        if f_list.is_empty() {
            return Err(Error::Sequence("frequency list is empty".into()));
        }
        let duration = rf_duration.unwrap_or(self.odnmr_rf_us);
        f_list
            .iter()
            .map(|&f| self.wrap("odnmr", vec![RfPulse::new(f, rf_power, 0.0, duration).into()]))
            .collect()
    }

    /// ODNMR scan preceded by a resonant π pulse at `burn_freq`. Zero burn power
    /// leaves the plain scan.
    pub fn spin_holeburn(&self, burn_freq: f64, burn_power: f64, scan: &[f64]) -> Result<Vec<PulseSequence>> {
        if scan.is_empty() {
            return Err(Error::Sequence("frequency list is empty".into()));
        }
        let burn: Option<PulseEvent> = if burn_power > 0.0 {
            let (_, t180) = self.pulse_durations(burn_power)?;
            Some(RfPulse::new(burn_freq, burn_power, 0.0, t180).into())
        } else {
            None
        };
        scan.iter()
            .map(|&f| {
                let mut core: Vec<PulseEvent> = burn.iter().copied().collect();
                core.push(RfPulse::new(f, self.holeburn_scan_power, 0.0, self.holeburn_scan_us).into());
                self.wrap("spin-holeburn", core)
            })
            .collect()
    }
}

pub fn build_pit_preparation() -> PulseSequence {
    Protocols::default().pit_preparation()
}

pub fn build_erase() -> PulseSequence {
    Protocols::default().erase()
}

pub fn build_rabi(duration: f64, frequency: f64, power: f64) -> Result<PulseSequence> {
    Protocols::default().rabi(duration, frequency, power)
}

pub fn build_hahn_echo(tau: f64, frequency: f64, power: f64, final_phase: f64) -> Result<PulseSequence> {
    Protocols::default().hahn_echo(tau, frequency, power, final_phase)
}

pub fn build_cpmg(n: usize, tau: f64, frequency: f64, power: f64, final_phase: f64) -> Result<PulseSequence> {
    Protocols::default().cpmg(n, tau, frequency, power, final_phase)
}

pub fn build_odnmr_scan(f_list: &[f64], rf_power: f64, rf_duration: Option<f64>) -> Result<Vec<PulseSequence>> {
    Protocols::default().odnmr_scan(f_list, rf_power, rf_duration)
}

pub fn build_spin_holeburn(burn_freq: f64, burn_power: f64, scan: &[f64]) -> Result<Vec<PulseSequence>> {
    Protocols::default().spin_holeburn(burn_freq, burn_power, scan)
}
