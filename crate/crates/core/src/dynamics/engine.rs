use std::f64::consts::PI;

use rayon::prelude::*;

use super::optical::sweep_overlap;
use super::ou::{dephasing_exponent, OuProcess};
use super::rotation::{self, Mat3};
use super::{NoiseMode, NoiseModel, OpticalModel};
use crate::error::{Error, Result};
use crate::model::{sample_ensemble, thermal_populations, EnsembleConfig, IonClass, LevelScheme, SpinState, Transition};
use crate::seed::{self, SimRng};
use crate::sequence::{OpticalPulse, OpticalRole, PulseEvent, PulseSequence, ReadoutWindow, RfPulse, Wait};

/// Tolerance below which negative populations are rounded to zero.
const POPULATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Bath {
    process: OuProcess,
    dt: f64,
}

/// Mutable state threaded through a sequence.
#[derive(Debug, Clone)]
pub struct SimState {
    pub ensemble: Vec<IonClass>,
    /// Elapsed time, µs.
    pub clock: f64,
    pub levels: LevelScheme,
    pub rng: SimRng,
    /// Frequency (MHz) of the rotating frame, set by the last RF pulse.
    frame: Option<f64>,
    bath: Option<Bath>,
}

impl SimState {
    pub fn new(ensemble: Vec<IonClass>, levels: LevelScheme, seed: u64) -> Self {
        Self {
            ensemble,
            clock: 0.0,
            levels,
            rng: seed::rng(seed),
            frame: None,
            bath: None,
        }
    }

    /// Attaches a stationary OU bath sampled with sub-step `dt` (s).
    pub fn with_bath(mut self, sigma: f64, tau_c: f64, dt: f64) -> Self {
        let process = OuProcess::stationary(sigma, tau_c, &mut self.rng);
        self.bath = Some(Bath { process, dt });
        self
    }

    /// Current bath detuning (rad/s), zero without a bath.
    pub fn bath_value(&self) -> f64 {
        self.bath.as_ref().map_or(0.0, |b| b.process.value)
    }

    fn advance_bath(&mut self, duration_us: f64) {
        if let Some(b) = self.bath.as_mut() {
            b.process.advance(duration_us * 1e-6, &mut self.rng);
        }
    }
}

fn sync_populations(ch: &mut SpinState, lo: usize, hi: usize) -> Result<()> {
    let s = ch.populations[lo] + ch.populations[hi];
    let w = ch.bloch[2];
    let mut p_lo = 0.5 * (s + w);
    let mut p_hi = 0.5 * (s - w);
    for p in [&mut p_lo, &mut p_hi] {
        if *p < 0.0 {
            if *p < -POPULATION_TOL {
                return Err(Error::Simulation(format!("population fell to {p}")));
            }
            *p = 0.0;
        }
    }
    ch.populations[lo] = p_lo;
    ch.populations[hi] = p_hi;
    Ok(())
}

fn switch_pair(ion: &mut IonClass, pair: Transition) {
    let (lo, hi) = pair.levels();
    for ch in &mut ion.channels {
        ch.bloch = [0.0, 0.0, ch.populations[lo] - ch.populations[hi]];
    }
    ion.pair = pair;
}

/// Rotating-frame detuning of an ion, rad/s, excluding the bath.
fn static_detuning(frame_mhz: f64, transition_mhz: f64, delta_spin_khz: f64) -> f64 {
    2.0 * PI * ((frame_mhz - transition_mhz) * 1e6 - delta_spin_khz * 1e3)
}

/// Rotates every ion's Bloch vector by the exact propagator of the pulse.
///
/// With a bath attached, the bath detuning is piecewise constant over
/// sub-steps no longer than the bath `dt`, each using the exact mean of the
/// process over the sub-step.
pub fn apply_rf_pulse(state: &mut SimState, pulse: &RfPulse, k_rabi: f64) -> Result<()> {
    let tr = state.levels.nearest(pulse.frequency);
    let (lo, hi) = tr.levels();
    let f_tr = state.levels.frequency(tr);
    let omega = 2.0 * PI * k_rabi * pulse.power.sqrt() * 1e3;
    let phase = pulse.phase.to_radians();
    let dur = pulse.duration * 1e-6;

    let steps: Vec<(f64, f64)> = match state.bath.as_mut() {
        None => vec![(dur, 0.0)],
        Some(b) => {
            let n = ((dur / b.dt).ceil() as usize).max(1);
            let h = dur / n as f64;
            (0..n).map(|_| (h, b.process.step(h, &mut state.rng) / h)).collect()
        }
    };

    for ion in &mut state.ensemble {
        if ion.pair != tr {
            switch_pair(ion, tr);
        }
        let delta0 = static_detuning(pulse.frequency, f_tr, ion.delta_spin);
        let mut m: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for &(h, bath) in &steps {
            let step = rotation::rotation_matrix(rotation::drive_field(omega, phase, delta0 - bath), h);
            m = rotation::compose(&step, &m);
        }
        for ch in &mut ion.channels {
            ch.bloch = rotation::apply(&m, ch.bloch);
            sync_populations(ch, lo, hi)?;
        }
    }
    state.frame = Some(pulse.frequency);
    state.clock += pulse.duration;
    Ok(())
}

/// Free evolution: precession, two-channel population relaxation toward
/// thermal equilibrium, and transverse damping by the same channels.
pub fn apply_wait(state: &mut SimState, wait: &Wait, noise: &NoiseModel) -> Result<()> {
    let t = wait.duration * 1e-6;
    let bath_phase = match state.bath.as_mut() {
        Some(b) => b.process.step(t, &mut state.rng),
        None => 0.0,
    };
    let decay = [(-t / noise.t1_short).exp(), (-t / noise.t1_long).exp()];
    let thermal = thermal_populations();
    for ion in &mut state.ensemble {
        let (lo, hi) = ion.pair.levels();
        let f_tr = state.levels.frequency(ion.pair);
        let frame = state.frame.unwrap_or(f_tr);
        let angle = static_detuning(frame, f_tr, ion.delta_spin) * t - bath_phase;
        for (ch, a) in ion.channels.iter_mut().zip(decay) {
            for (p, th) in ch.populations.iter_mut().zip(thermal) {
                *p = th + (*p - th) * a;
            }
            let r = rotation::precess([ch.bloch[0] * a, ch.bloch[1] * a, 0.0], angle);
            ch.bloch = [r[0], r[1], ch.populations[lo] - ch.populations[hi]];
        }
    }
    state.clock += wait.duration;
    Ok(())
}

fn pump(ion: &mut IonClass, k: f64, optics: &OpticalModel) {
    if k <= 0.0 {
        return;
    }
    let l = optics.probed_level;
    let keep = (-k).exp();
    let removed_frac = -(-k).exp_m1();
    let (lo, hi) = ion.pair.levels();
    for ch in &mut ion.channels {
        let removed = ch.populations[l] * removed_frac;
        ch.populations[l] -= removed;
        for (p, b) in ch.populations.iter_mut().zip(optics.branching[l]) {
            *p += removed * b;
        }
        ch.bloch = [ch.bloch[0] * keep, ch.bloch[1] * keep, ch.populations[lo] - ch.populations[hi]];
    }
}

fn erase(ion: &mut IonClass, k: f64) {
    if k <= 0.0 {
        return;
    }
    let keep = (-k).exp();
    let thermal = thermal_populations();
    let (lo, hi) = ion.pair.levels();
    for ch in &mut ion.channels {
        for (p, th) in ch.populations.iter_mut().zip(thermal) {
            *p = th + (*p - th) * keep;
        }
        ch.bloch = [ch.bloch[0] * keep, ch.bloch[1] * keep, ch.populations[lo] - ch.populations[hi]];
    }
}

/// Applies an optical pulse. Probes return Σ weight · overlap · p(probed level).
pub fn apply_optical_pulse(state: &mut SimState, pulse: &OpticalPulse, optics: &OpticalModel) -> Option<f64> {
    let gamma = optics.gamma_mhz();
    let l = optics.probed_level;
    let mut signal = 0.0;
    for ion in &mut state.ensemble {
        let overlap = sweep_overlap(pulse.detuning_start, pulse.detuning_stop, pulse.duration, ion.delta_opt, gamma);
        let k = optics.pump_efficiency * pulse.power * overlap;
        match pulse.role {
            OpticalRole::Probe => {
                signal += ion.weight * overlap * ion.populations()[l];
                pump(ion, k, optics);
            }
            OpticalRole::Burn => pump(ion, k, optics),
            OpticalRole::Erase => erase(ion, k),
        }
    }
    state.advance_bath(pulse.duration);
    state.clock += pulse.duration;
    (pulse.role == OpticalRole::Probe).then_some(signal)
}

/// Fluorescence readout at a fixed laser frequency; populations are untouched.
pub fn apply_readout(state: &mut SimState, window: &ReadoutWindow, optics: &OpticalModel) -> f64 {
    let gamma = optics.gamma_mhz();
    let l = optics.probed_level;
    let signal = state
        .ensemble
        .iter()
        .map(|ion| {
            let overlap = sweep_overlap(window.detuning, window.detuning, window.duration, ion.delta_opt, gamma);
            ion.weight * overlap * ion.populations()[l]
        })
        .sum();
    state.advance_bath(window.duration);
    state.clock += window.duration;
    signal
}

/// Gaussian-phase attenuation factors e^{−χ} keyed by the event they precede.
///
/// Each maximal run of RF pulses and waits with at least two pulses is treated
/// as a refocusing train with ideal pulses at the pulse centers; the factor is
/// applied to the coherence just before the last pulse of the run.
fn analytic_attenuation(seq: &PulseSequence, noise: &NoiseModel) -> Vec<Option<f64>> {
    let mut out = vec![None; seq.events.len()];
    if noise.ou_sigma == 0.0 {
        return out;
    }
    let mut clock = 0.0;
    let mut centers: Vec<f64> = Vec::new();
    let mut last_rf = 0;
    let flush = |centers: &mut Vec<f64>, last_rf: usize, out: &mut Vec<Option<f64>>| {
        if centers.len() >= 2 {
            let chi = dephasing_exponent(centers, noise.ou_sigma, noise.ou_tau_c);
            out[last_rf] = Some((-chi).exp());
        }
        centers.clear();
    };
    for (i, ev) in seq.events.iter().enumerate() {
        match ev {
            PulseEvent::Rf(p) => {
                centers.push((clock + 0.5 * p.duration) * 1e-6);
                last_rf = i;
            }
            PulseEvent::Wait(_) => {}
            _ => flush(&mut centers, last_rf, &mut out),
        }
        clock += ev.duration();
    }
    flush(&mut centers, last_rf, &mut out);
    out
}

/// Ensemble plus physics configuration; runs sequences against fresh copies.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub ensemble: Vec<IonClass>,
    pub levels: LevelScheme,
    pub noise: NoiseModel,
    pub optics: OpticalModel,
    /// kHz per √W.
    pub k_rabi: f64,
}

impl Simulator {
    pub fn new(cfg: &EnsembleConfig, noise: &NoiseModel, optics: &OpticalModel, k_rabi: f64) -> Result<Self> {
        let ensemble = sample_ensemble(cfg)?;
        Self::from_classes(ensemble, cfg.levels.clone(), noise, optics, k_rabi)
    }

    pub fn from_classes(
        mut ensemble: Vec<IonClass>,
        levels: LevelScheme,
        noise: &NoiseModel,
        optics: &OpticalModel,
        k_rabi: f64,
    ) -> Result<Self> {
        noise.validate()?;
        optics.validate()?;
        levels.validate()?;
        if !(k_rabi >= 0.0 && k_rabi.is_finite()) {
            return Err(Error::config("k_rabi must be finite and >= 0"));
        }
        for ion in &mut ensemble {
            ion.channel_weight = noise.t1_weight;
        }
        Ok(Self {
            ensemble,
            levels,
            noise: noise.clone(),
            optics: optics.clone(),
            k_rabi,
        })
    }

    pub fn initial_state(&self, seed: u64) -> SimState {
        SimState::new(self.ensemble.clone(), self.levels.clone(), seed)
    }

    fn fold(
        &self,
        state: &mut SimState,
        events: &[PulseEvent],
        offset: usize,
        attenuation: Option<&[Option<f64>]>,
    ) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        for (j, ev) in events.iter().enumerate() {
            let idx = offset + j;
            if let Some(f) = attenuation.and_then(|a| a[idx]) {
                for ion in &mut state.ensemble {
                    for ch in &mut ion.channels {
                        ch.bloch[0] *= f;
                        ch.bloch[1] *= f;
                    }
                }
            }
            let at = |e: Error| Error::Simulation(format!("event {idx}: {e}"));
            match ev {
                PulseEvent::Rf(p) => apply_rf_pulse(state, p, self.k_rabi).map_err(at)?,
                PulseEvent::Wait(w) => apply_wait(state, w, &self.noise).map_err(at)?,
                PulseEvent::Optical(p) => {
                    if let Some(s) = apply_optical_pulse(state, p, &self.optics) {
                        out.push((idx, s));
                    }
                }
                PulseEvent::Readout(r) => out.push((idx, apply_readout(state, r, &self.optics))),
            }
        }
        Ok(out)
    }

    /// Runs `seq`, returning one (event index, signal) pair per probe or readout.
    ///
    /// In Monte Carlo mode the events before the first RF pulse are simulated
    /// once; every trajectory then continues from that state with its own
    /// generator derived from `seed`, and signals are averaged in trajectory
    /// order, so the result is independent of the thread count.
    pub fn run(&self, seq: &PulseSequence, seed: u64) -> Result<Vec<(usize, f64)>> {
        seq.validate()?;
        match self.noise.mode {
            NoiseMode::Analytic => {
                let att = analytic_attenuation(seq, &self.noise);
                let mut state = self.initial_state(seed);
                self.fold(&mut state, &seq.events, 0, Some(&att))
            }
            NoiseMode::MonteCarlo { n_trajectories, dt } => {
                let first_rf = seq.events.iter().position(|e| matches!(e, PulseEvent::Rf(_)));
                let mut state = self.initial_state(seed);
                let Some(first) = first_rf else {
                    return self.fold(&mut state, &seq.events, 0, None);
                };
                let mut out = self.fold(&mut state, &seq.events[..first], 0, None)?;
                let runs = (0..n_trajectories as u64)
                    .into_par_iter()
                    .map(|k| {
                        let mut st = state.clone();
                        st.rng = seed::rng(seed::derive_path(seed, &[1, k]));
                        let mut st = st.with_bath(self.noise.ou_sigma, self.noise.ou_tau_c, dt);
                        self.fold(&mut st, &seq.events[first..], first, None)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let n = runs.len() as f64;
                for i in 0..runs[0].len() {
                    let sum: f64 = runs.iter().map(|r| r[i].1).sum();
                    out.push((runs[0][i].0, sum / n));
                }
                Ok(out)
            }
        }
    }
}

/// One-shot run with the ensemble drawn from `cfg` and its seed.
pub fn simulate_sequence(
    seq: &PulseSequence,
    cfg: &EnsembleConfig,
    noise: &NoiseModel,
    optics: &OpticalModel,
    k_rabi: f64,
) -> Result<Vec<(usize, f64)>> {
    Simulator::new(cfg, noise, optics, k_rabi)?.run(seq, cfg.rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ou::ou_visibility_analytic;
    use crate::model::InhomogeneousDistribution;
    use crate::sequence::Protocols;

    fn single_ion(delta_spin: f64) -> Vec<IonClass> {
        let mut ion = IonClass::new(0.0, delta_spin, 1.0);
        // polarize |±1/2⟩ ↔ |±3/2⟩
        for ch in &mut ion.channels {
            ch.populations = [0.5, 0.1, 0.4];
            ch.bloch = [0.0, 0.0, 0.4];
        }
        vec![ion]
    }

    fn state(ions: Vec<IonClass>) -> SimState {
        SimState::new(ions, LevelScheme::default(), 1)
    }

    #[test]
    fn resonant_pi_pulse_swaps_pair() {
        let mut st = state(single_ion(0.0));
        let power: f64 = 92.0;
        let t = 1e3 / (2.0 * 1.48 * power.sqrt());
        apply_rf_pulse(&mut st, &RfPulse::new(21.475, power, 0.0, t), 1.48).unwrap();
        let p = st.ensemble[0].populations();
        assert!((p[0] - 0.1).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12 && (p[2] - 0.4).abs() < 1e-15);
        assert!((st.clock - t).abs() < 1e-12);
    }

    #[test]
    fn pulse_on_other_transition_switches_pair() {
        let mut st = state(single_ion(0.0));
        let t = 1e3 / (2.0 * 1.48 * 10f64.sqrt());
        apply_rf_pulse(&mut st, &RfPulse::new(33.944, 10.0, 0.0, t), 1.48).unwrap();
        let p = st.ensemble[0].populations();
        assert!((p[1] - 0.4).abs() < 1e-12 && (p[2] - 0.1).abs() < 1e-12 && p[0] == 0.5);
        assert_eq!(st.ensemble[0].pair, Transition::F23);
    }

    #[test]
    fn waits_relax_to_thermal() {
        let mut st = state(single_ion(3.0));
        let noise = NoiseModel::default();
        apply_wait(&mut st, &Wait { duration: 0.0 }, &noise).unwrap();
        assert_eq!(st.ensemble[0].populations(), [0.5, 0.1, 0.4]);
        apply_wait(&mut st, &Wait { duration: 1e10 }, &noise).unwrap();
        for p in st.ensemble[0].populations() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wait_gives_double_exponential() {
        let noise = NoiseModel::default();
        let mut st = state(single_ion(0.0));
        let t = 3.0;
        apply_wait(&mut st, &Wait { duration: t * 1e6 }, &noise).unwrap();
        let w = noise.t1_weight;
        let expected = 1.0 / 3.0 + (0.1 - 1.0 / 3.0) * (w * (-t / 4.4f64).exp() + (1.0 - w) * (-t / 120f64).exp());
        st.ensemble[0].channel_weight = w;
        assert!((st.ensemble[0].populations()[1] - expected).abs() < 1e-12);
    }

    fn pit_sim() -> Simulator {
        let cfg = EnsembleConfig {
            n_classes: 4000,
            ..EnsembleConfig::default()
        }
        .with_window(0.0, 10.0);
        Simulator::new(&cfg, &NoiseModel::default(), &OpticalModel::default(), 1.48).unwrap()
    }

    #[test]
    fn pit_contrast_is_sixty_percent() {
        let sim = pit_sim();
        let proto = Protocols::default();
        let readout = match proto.readout() {
            PulseEvent::Readout(r) => r,
            _ => unreachable!(),
        };
        let mut fresh = sim.initial_state(1);
        let reference = apply_readout(&mut fresh, &readout, &sim.optics);
        let mut st = sim.initial_state(1);
        for ev in proto.pit_events() {
            if let PulseEvent::Optical(p) = ev {
                apply_optical_pulse(&mut st, &p, &sim.optics);
            }
        }
        let pitted = apply_readout(&mut st, &readout, &sim.optics);
        let contrast = 1.0 - pitted / reference;
        assert!((contrast - 0.6).abs() < 0.03, "contrast {contrast}");
        for ion in &st.ensemble {
            assert!((ion.populations().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_power_probe_is_passive_and_empty_window_is_dark() {
        let sim = pit_sim();
        let mut st = sim.initial_state(1);
        let probe = OpticalPulse {
            detuning_start: -5.0,
            detuning_stop: 5.0,
            power: 0.0,
            duration: 100.0,
            role: OpticalRole::Probe,
        };
        let before = st.ensemble.clone();
        assert!(apply_optical_pulse(&mut st, &probe, &sim.optics).unwrap() > 0.0);
        assert_eq!(before, st.ensemble);

        let mut empty = SimState::new(Vec::new(), LevelScheme::default(), 0);
        assert_eq!(apply_optical_pulse(&mut empty, &probe, &sim.optics), Some(0.0));
    }

    #[test]
    fn rf_refills_the_pit() {
        let sim = pit_sim();
        let proto = Protocols::default();
        let (_, t180) = proto.pulse_durations(92.0).unwrap();
        let dark = proto.rabi(1e-6, 21.475, 92.0).unwrap();
        let driven = proto.rabi(t180, 21.475, 92.0).unwrap();
        let a = sim.run(&dark, 1).unwrap();
        let b = sim.run(&driven, 1).unwrap();
        assert_eq!(a.len(), 2);
        assert!(b[1].1 > 1.2 * a[1].1, "{} vs {}", b[1].1, a[1].1);
        assert_eq!(a[0], b[0]);
    }

    fn hard_pulse_sim(spin_fwhm: f64, noise: NoiseModel, n: usize) -> Simulator {
        let cfg = EnsembleConfig {
            n_classes: n,
            spin_dist: InhomogeneousDistribution::gaussian(0.0, spin_fwhm),
            ..EnsembleConfig::default()
        };
        let mut ions = sample_ensemble(&cfg).unwrap();
        for ion in &mut ions {
            for ch in &mut ion.channels {
                ch.populations = [0.45, 0.1, 0.45];
                ch.bloch = [0.0, 0.0, 0.35];
            }
        }
        Simulator::from_classes(ions, LevelScheme::default(), &noise, &OpticalModel::default(), 1e9).unwrap()
    }

    fn echo_visibility(sim: &Simulator, proto: &Protocols, tau: f64, seed: u64) -> f64 {
        let run = |phase: f64| {
            let seq = proto.hahn_echo(tau, 21.475, 1.0, phase).unwrap();
            sim.run(&seq, seed).unwrap()[0].1
        };
        let baseline = sim.run(&proto.wrap("none", vec![]).unwrap(), seed).unwrap()[0].1;
        let plus = run(180.0) - baseline;
        let minus = run(0.0) - baseline;
        (plus - minus) / (plus + minus)
    }

    #[test]
    fn static_dephasing_is_refocused() {
        let noise = NoiseModel {
            ou_sigma: 0.0,
            t1_short: f64::INFINITY,
            t1_long: f64::INFINITY,
            ..NoiseModel::default()
        };
        let proto = Protocols { k_rabi: 1e9, ..Protocols::bare() };
        for fwhm in [1.0, 154.0, 600.0] {
            let sim = hard_pulse_sim(fwhm, noise.clone(), 500);
            for tau in [50.0, 300.0, 2000.0] {
                let v = echo_visibility(&sim, &proto, tau, 3);
                assert!((v - 1.0).abs() < 1e-9, "fwhm {fwhm} tau {tau}: {v}");
            }
        }
    }

    #[test]
    fn analytic_mode_reproduces_closed_form() {
        let noise = NoiseModel {
            t1_short: f64::INFINITY,
            t1_long: f64::INFINITY,
            ..NoiseModel::default()
        };
        let proto = Protocols { k_rabi: 1e9, ..Protocols::bare() };
        let sim = hard_pulse_sim(154.0, noise.clone(), 200);
        for tau in [100.0, 300.0, 600.0] {
            let v = echo_visibility(&sim, &proto, tau, 3);
            let expected = ou_visibility_analytic(1, 2.0 * tau * 1e-6, noise.ou_sigma, noise.ou_tau_c, 1.0);
            assert!((v - expected).abs() < 1e-6, "tau {tau}: {v} vs {expected}");
        }
    }

    #[test]
    fn monte_carlo_echo_matches_closed_form() {
        let mut noise = NoiseModel::default().monte_carlo(2000);
        noise.t1_short = f64::INFINITY;
        noise.t1_long = f64::INFINITY;
        let proto = Protocols { k_rabi: 1e9, ..Protocols::bare() };
        let sim = hard_pulse_sim(154.0, noise.clone(), 20);
        for tau in [150.0, 305.0, 600.0] {
            let v = echo_visibility(&sim, &proto, tau, 17);
            let expected = ou_visibility_analytic(1, 2.0 * tau * 1e-6, noise.ou_sigma, noise.ou_tau_c, 1.0);
            let mc = crate::dynamics::ou::mc_cpmg_visibility(1, 2.0 * tau * 1e-6, noise.ou_sigma, noise.ou_tau_c, 2000, 5);
            let se = mc.std_error;
            assert!(((v - expected) / se).abs() < 3.0, "tau {tau}: {v} vs {expected} (se {se})");
        }
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let noise = NoiseModel::default().monte_carlo(64);
        let sim = hard_pulse_sim(154.0, noise, 30);
        let proto = Protocols { k_rabi: 1e9, ..Protocols::bare() };
        let seq = proto.hahn_echo(300.0, 21.475, 1.0, 0.0).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sim.run(&seq, 9).unwrap());
        let b = four.install(|| sim.run(&seq, 9).unwrap());
        assert_eq!(a, b);
    }
}
