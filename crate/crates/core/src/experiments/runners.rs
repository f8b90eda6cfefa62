use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::params::{Deg, Grid, MHz, Ms, RadPerS, Us, Q, S, W};
use super::{ExperimentKind, Layout, Physics, Point, Runner, Sweep, Table};
use crate::analysis::{
    fit_auto, fit_ou_bath, fit_scaling, hole_width_to_t2star, linewidth_to_t2star, visibility, FitModel, FitResult,
    OuCurve,
};
use crate::dynamics::optical::{optical_fid_signal, photon_echo_amplitude};
use crate::dynamics::ou::{mc_cpmg_visibility, one_over_e_time, ou_visibility_analytic};
use crate::dynamics::{NoiseMode, Simulator};
use crate::error::{Error, Result};
use crate::sequence::{
    normalize_phase, OpticalPulse, OpticalRole, Protocols, PulseEvent, PulseSequence, ReadoutWindow, Wait,
};

fn five() -> usize {
    5
}

macro_rules! defaults {
    ($name:ident { $($field:ident : $value:expr),* $(,)? }) => {
        impl Default for $name {
            fn default() -> Self {
                Self { $($field: $value),* }
            }
        }
    };
}

fn q<U>(v: f64) -> Q<U> {
    Q::new(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PleScanParams {
    pub detunings: Grid<MHz>,
    /// Width of each probe chirp; defaults to the grid spacing.
    pub bin_width: Option<Q<MHz>>,
    pub probe_duration: Q<Us>,
    pub repetitions: usize,
}
defaults!(PleScanParams {
    detunings: Grid::range(-6000.0, 6000.0, 41),
    bin_width: None,
    probe_duration: q(1000.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShbParams {
    pub detunings: Grid<MHz>,
    pub burn_power: Q<W>,
    pub burn_duration: Q<Us>,
    pub readout_duration: Q<Us>,
    pub repetitions: usize,
}
defaults!(ShbParams {
    detunings: Grid::range(-2.0, 2.0, 41),
    burn_power: q(1.0),
    burn_duration: q(10_000.0),
    readout_duration: q(100.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalFidParams {
    pub times: Grid<Us>,
    pub heterodyne: Q<MHz>,
    pub repetitions: usize,
}
defaults!(OpticalFidParams {
    times: Grid::range(0.0, 4.0, 41),
    heterodyne: q(2.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotonEchoParams {
    pub two_tau: Grid<Us>,
    pub repetitions: usize,
}
defaults!(PhotonEchoParams {
    two_tau: Grid::range(0.2, 8.0, 40),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitT1Params {
    pub waits: Grid<S>,
    pub repetitions: usize,
}
defaults!(PitT1Params {
    waits: Grid::log_range(0.05, 600.0, 40),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdnmrScanParams {
    /// Explicit RF grid; otherwise `points` over `center ± span/2`.
    pub frequencies: Option<Grid<MHz>>,
    pub center: Option<Q<MHz>>,
    pub span: Option<Q<MHz>>,
    pub points: usize,
    pub power: Q<W>,
    pub duration: Q<Us>,
    pub optical_detuning: Q<MHz>,
    pub repetitions: usize,
}
defaults!(OdnmrScanParams {
    frequencies: None,
    center: None,
    span: None,
    points: 41,
    power: q(0.5),
    duration: q(1000.0),
    optical_detuning: q(0.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpinHoleburnParams {
    pub center: Option<Q<MHz>>,
    pub span: Q<MHz>,
    pub points: usize,
    pub burn_frequency: Option<Q<MHz>>,
    pub burn_power: Q<W>,
    pub scan_power: Q<W>,
    pub scan_duration: Q<Us>,
    pub repetitions: usize,
}
defaults!(SpinHoleburnParams {
    center: None,
    span: q(0.06),
    points: 41,
    burn_frequency: None,
    burn_power: q(6.0),
    scan_power: q(0.5),
    scan_duration: q(1000.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationScanParams {
    /// Defaults to 7 points over ±1.5 optical FWHM.
    pub optical_detunings: Option<Grid<MHz>>,
    pub center: Option<Q<MHz>>,
    pub span: Option<Q<MHz>>,
    pub points: usize,
    pub power: Q<W>,
    pub duration: Q<Us>,
    pub repetitions: usize,
}
defaults!(CorrelationScanParams {
    optical_detunings: None,
    center: None,
    span: None,
    points: 41,
    power: q(0.5),
    duration: q(1000.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiParams {
    /// Explicit pulse durations; otherwise `points` up to `periods` Rabi periods.
    pub durations: Option<Grid<Us>>,
    pub periods: f64,
    pub points: usize,
    pub power: Q<W>,
    pub frequency: Option<Q<MHz>>,
    pub repetitions: usize,
}
defaults!(RabiParams {
    durations: None,
    periods: 6.0,
    points: 40,
    power: q(92.0),
    frequency: None,
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RabiPowerSweepParams {
    pub powers: Grid<W>,
    pub periods: f64,
    pub points: usize,
    pub frequency: Option<Q<MHz>>,
    pub repetitions: usize,
}
defaults!(RabiPowerSweepParams {
    powers: Grid::list(&[6.0, 23.0, 52.0, 92.0]),
    periods: 6.0,
    points: 40,
    frequency: None,
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HahnEchoParams {
    /// Total free-evolution times 2τ; defaults to 40 points up to twice the
    /// closed-form 1/e time of the configured bath.
    pub total_times: Option<Grid<Ms>>,
    pub points: usize,
    pub power: Q<W>,
    pub frequency: Option<Q<MHz>>,
    pub refocus_phase: Q<Deg>,
    pub repetitions: usize,
}
defaults!(HahnEchoParams {
    total_times: None,
    points: 40,
    power: q(92.0),
    frequency: None,
    refocus_phase: q(0.0),
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpmgParams {
    pub orders: Vec<usize>,
    pub points: usize,
    /// Longest total time for N = 1, scaled by N^(2/3) for larger N. Defaults
    /// to twice the closed-form 1/e time of each order.
    pub t_max: Option<Q<Ms>>,
    pub power: Q<W>,
    pub frequency: Option<Q<MHz>>,
    pub repetitions: usize,
}
defaults!(CpmgParams {
    orders: vec![1, 2, 4, 8],
    points: 30,
    t_max: None,
    power: q(92.0),
    frequency: None,
    repetitions: five(),
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingStudyParams {
    pub orders: Vec<usize>,
    pub points: usize,
    pub sigma: Option<Q<RadPerS>>,
    pub tau_c: Option<Q<S>>,
    pub repetitions: usize,
}
defaults!(ScalingStudyParams {
    orders: vec![1, 2, 4, 8],
    points: 25,
    sigma: None,
    tau_c: None,
    repetitions: five(),
});

/// Typed parameters of one experiment kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    PleScan(PleScanParams),
    Shb(ShbParams),
    OpticalFid(OpticalFidParams),
    PhotonEcho(PhotonEchoParams),
    PitT1(PitT1Params),
    OdnmrScan(OdnmrScanParams),
    SpinHoleburn(SpinHoleburnParams),
    CorrelationScan(CorrelationScanParams),
    Rabi(RabiParams),
    RabiPowerSweep(RabiPowerSweepParams),
    HahnEcho(HahnEchoParams),
    Cpmg(CpmgParams),
    ScalingStudy(ScalingStudyParams),
}

fn parse<T: DeserializeOwned>(kind: ExperimentKind, map: &serde_json::Map<String, serde_json::Value>) -> Result<T> {
    serde_json::from_value(serde_json::Value::Object(map.clone()))
        .map_err(|e| Error::config(format!("{kind:?} parameters: {e}")))
}

fn check_points(points: usize, name: &str) -> Result<()> {
    if points < 2 {
        return Err(Error::config(format!("{name} must be >= 2")));
    }
    Ok(())
}

fn check_positive(v: f64, name: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::config(format!("{name} must be finite and > 0, got {v}")));
    }
    Ok(())
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if orders.is_empty() || orders.contains(&0) {
        return Err(Error::config("orders must be a non-empty list of pulse counts >= 1"));
    }
    Ok(())
}

impl Params {
    pub fn parse(kind: ExperimentKind, map: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        use ExperimentKind as K;
        let p = match kind {
            K::PleScan => Params::PleScan(parse(kind, map)?),
            K::Shb => Params::Shb(parse(kind, map)?),
            K::OpticalFid => Params::OpticalFid(parse(kind, map)?),
            K::PhotonEcho => Params::PhotonEcho(parse(kind, map)?),
            K::PitT1 => Params::PitT1(parse(kind, map)?),
            K::OdnmrScan => Params::OdnmrScan(parse(kind, map)?),
            K::SpinHoleburn => Params::SpinHoleburn(parse(kind, map)?),
            K::CorrelationScan => Params::CorrelationScan(parse(kind, map)?),
            K::Rabi => Params::Rabi(parse(kind, map)?),
            K::RabiPowerSweep => Params::RabiPowerSweep(parse(kind, map)?),
            K::HahnEcho => Params::HahnEcho(parse(kind, map)?),
            K::Cpmg => Params::Cpmg(parse(kind, map)?),
            K::ScalingStudy => Params::ScalingStudy(parse(kind, map)?),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn kind(&self) -> ExperimentKind {
        use ExperimentKind as K;
        match self {
            Params::PleScan(_) => K::PleScan,
            Params::Shb(_) => K::Shb,
            Params::OpticalFid(_) => K::OpticalFid,
            Params::PhotonEcho(_) => K::PhotonEcho,
            Params::PitT1(_) => K::PitT1,
            Params::OdnmrScan(_) => K::OdnmrScan,
            Params::SpinHoleburn(_) => K::SpinHoleburn,
            Params::CorrelationScan(_) => K::CorrelationScan,
            Params::Rabi(_) => K::Rabi,
            Params::RabiPowerSweep(_) => K::RabiPowerSweep,
            Params::HahnEcho(_) => K::HahnEcho,
            Params::Cpmg(_) => K::Cpmg,
            Params::ScalingStudy(_) => K::ScalingStudy,
        }
    }

    pub fn repetitions(&self) -> usize {
        match self {
            Params::PleScan(p) => p.repetitions,
            Params::Shb(p) => p.repetitions,
            Params::OpticalFid(p) => p.repetitions,
            Params::PhotonEcho(p) => p.repetitions,
            Params::PitT1(p) => p.repetitions,
            Params::OdnmrScan(p) => p.repetitions,
            Params::SpinHoleburn(p) => p.repetitions,
            Params::CorrelationScan(p) => p.repetitions,
            Params::Rabi(p) => p.repetitions,
            Params::RabiPowerSweep(p) => p.repetitions,
            Params::HahnEcho(p) => p.repetitions,
            Params::Cpmg(p) => p.repetitions,
            Params::ScalingStudy(p) => p.repetitions,
        }
    }

    /// Checks everything that does not depend on the physics configuration.
    pub fn validate(&self) -> Result<()> {
        if self.repetitions() == 0 {
            return Err(Error::config("repetitions must be >= 1"));
        }
        match self {
            Params::PleScan(p) => {
                p.detunings.values("detunings")?;
                check_positive(p.probe_duration.0, "probe_duration")?;
                if let Some(b) = p.bin_width {
                    check_positive(b.0, "bin_width")?;
                }
            }
            Params::Shb(p) => {
                p.detunings.values("detunings")?;
                check_positive(p.burn_power.0, "burn_power")?;
                check_positive(p.burn_duration.0, "burn_duration")?;
                check_positive(p.readout_duration.0, "readout_duration")?;
            }
            Params::OpticalFid(p) => {
                if p.times.values("times")?.iter().any(|&t| t < 0.0) {
                    return Err(Error::config("times must be >= 0"));
                }
            }
            Params::PhotonEcho(p) => {
                if p.two_tau.values("two_tau")?.iter().any(|&t| t < 0.0) {
                    return Err(Error::config("two_tau must be >= 0"));
                }
            }
            Params::PitT1(p) => {
                if p.waits.values("waits")?.iter().any(|&t| !(t > 0.0)) {
                    return Err(Error::config("waits must be > 0"));
                }
            }
            Params::OdnmrScan(p) => {
                if let Some(g) = &p.frequencies {
                    g.values("frequencies")?;
                } else {
                    check_points(p.points, "points")?;
                }
                if let Some(s) = p.span {
                    check_positive(s.0, "span")?;
                }
                check_positive(p.power.0, "power")?;
                check_positive(p.duration.0, "duration")?;
            }
            Params::SpinHoleburn(p) => {
                check_points(p.points, "points")?;
                check_positive(p.span.0, "span")?;
                check_positive(p.burn_power.0, "burn_power")?;
                check_positive(p.scan_power.0, "scan_power")?;
                check_positive(p.scan_duration.0, "scan_duration")?;
            }
            Params::CorrelationScan(p) => {
                if let Some(g) = &p.optical_detunings {
                    if g.values("optical_detunings")?.len() < 2 {
                        return Err(Error::config("optical_detunings needs >= 2 values"));
                    }
                }
                check_points(p.points, "points")?;
                if let Some(s) = p.span {
                    check_positive(s.0, "span")?;
                }
                check_positive(p.power.0, "power")?;
                check_positive(p.duration.0, "duration")?;
            }
            Params::Rabi(p) => {
                if let Some(g) = &p.durations {
                    if g.values("durations")?.iter().any(|&t| !(t > 0.0)) {
                        return Err(Error::config("durations must be > 0"));
                    }
                } else {
                    check_points(p.points, "points")?;
                    check_positive(p.periods, "periods")?;
                }
                check_positive(p.power.0, "power")?;
            }
            Params::RabiPowerSweep(p) => {
                let powers = p.powers.values("powers")?;
                if powers.len() < 2 || powers.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::config("powers needs >= 2 values, all > 0"));
                }
                check_points(p.points, "points")?;
                check_positive(p.periods, "periods")?;
            }
            Params::HahnEcho(p) => {
                if let Some(g) = &p.total_times {
                    if g.values("total_times")?.iter().any(|&t| !(t > 0.0)) {
                        return Err(Error::config("total_times must be > 0"));
                    }
                } else {
                    check_points(p.points, "points")?;
                }
                check_positive(p.power.0, "power")?;
            }
            Params::Cpmg(p) => {
                check_orders(&p.orders)?;
                check_points(p.points, "points")?;
                check_positive(p.power.0, "power")?;
                if let Some(t) = p.t_max {
                    check_positive(t.0, "t_max")?;
                }
            }
            Params::ScalingStudy(p) => {
                check_orders(&p.orders)?;
                check_points(p.points, "points")?;
                if let Some(s) = p.sigma {
                    if !(s.0 >= 0.0 && s.0.is_finite()) {
                        return Err(Error::config("sigma must be finite and >= 0"));
                    }
                }
                if let Some(t) = p.tau_c {
                    check_positive(t.0, "tau_c")?;
                }
            }
        }
        Ok(())
    }

    pub(crate) fn run(&self, phys: &Physics, seed: u64) -> Result<(Table, Vec<FitResult>)> {
        let runner = Runner {
            phys,
            seed,
            repetitions: self.repetitions(),
        };
        match self {
            Params::PleScan(p) => ple_scan(&runner, p),
            Params::Shb(p) => shb(&runner, p),
            Params::OpticalFid(p) => optical_fid(&runner, p),
            Params::PhotonEcho(p) => photon_echo(&runner, p),
            Params::PitT1(p) => pit_t1(&runner, p),
            Params::OdnmrScan(p) => odnmr_scan(&runner, p),
            Params::SpinHoleburn(p) => spin_holeburn(&runner, p),
            Params::CorrelationScan(p) => correlation_scan(&runner, p),
            Params::Rabi(p) => rabi(&runner, p),
            Params::RabiPowerSweep(p) => rabi_power_sweep(&runner, p),
            Params::HahnEcho(p) => hahn_echo(&runner, p),
            Params::Cpmg(p) => cpmg(&runner, p),
            Params::ScalingStudy(p) => scaling_study(&runner, p),
        }
    }
}

// ---------------------------------------------------------------------------
// helpers

fn points(xs: &[f64]) -> Vec<Point> {
    xs.iter().map(|&x| Point::at(x)).collect()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Drops points with a non-finite ordinate (flagged visibility samples).
fn finite_xy(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    x.iter().zip(y).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| (x, y)).unzip()
}

/// (reference probe, center readout) of a wrapped protocol.
fn refill_pair(sim: &Simulator, seq: &PulseSequence, seed: u64) -> Result<[f64; 2]> {
    let out = sim.run(seq, seed)?;
    match out.as_slice() {
        [.., (_, r), (_, s)] => Ok([*r, *s]),
        _ => Err(Error::Simulation("protocol produced fewer than two signals".into())),
    }
}

fn ratio(raw: &[f64]) -> f64 {
    raw[1] / raw[0]
}

/// Final π/2 phase that maps the refocused coherence onto full inversion,
/// for ideal pulses: π/2 at 0°, then `n` π pulses about `refocus`.
fn inversion_phase(refocus: f64, n: usize) -> f64 {
    // transverse azimuth after π/2 about x is −90°; a π about φ reflects θ → 2φ − θ
    let mut theta = -90.0;
    for _ in 0..n {
        theta = 2.0 * refocus - theta;
    }
    normalize_phase(theta + 90.0)
}

fn default_f12(r: &Runner) -> f64 {
    r.phys.ensemble.levels.f_12
}

fn stretched_fit(x: &[f64], y: &[f64], label: String) -> Result<FitResult> {
    let (x, y) = finite_xy(x, y);
    let f = fit_auto(FitModel::StretchedExponential, &x, &y, None)?;
    let (t, b) = (f.params[1], f.params[2]);
    Ok(f.with_label(label).with_derived("t2_ms", t).with_derived("beta", b))
}

fn scaling_result(t2_by_n: &[(f64, f64)]) -> Result<FitResult> {
    let s = fit_scaling(t2_by_n)?;
    let model = FitModel::PowerLawScaling;
    let p = vec![s.t2_echo, s.beta];
    let rn = t2_by_n
        .iter()
        .map(|&(n, t)| (t - model.eval(n, &p)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(FitResult {
        model,
        label: "scaling".into(),
        params: p,
        std_errors: s.std_errors.to_vec(),
        residual_norm: rn,
        converged: true,
        n_points: t2_by_n.len(),
        n_iterations: 0,
        derived: Default::default(),
    })
}

// ---------------------------------------------------------------------------
// optical spectroscopy

fn ple_scan(r: &Runner, p: &PleScanParams) -> Result<(Table, Vec<FitResult>)> {
    let det = p.detunings.values("detunings")?;
    let bw = match p.bin_width {
        Some(b) => b.0,
        None if det.len() > 1 => (det[det.len() - 1] - det[0]).abs() / (det.len() - 1) as f64,
        None => 100.0,
    };
    let sim = r.simulator_full()?;
    let layout = Layout::new("optical_detuning_mhz", &[], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&det),
        |i, seed| {
            let probe = OpticalPulse {
                detuning_start: det[i] - 0.5 * bw,
                detuning_stop: det[i] + 0.5 * bw,
                power: 0.0,
                duration: p.probe_duration.0,
                role: OpticalRole::Probe,
            };
            let seq = PulseSequence::new("ple", vec![probe.into()])?;
            Ok(vec![sim.run(&seq, seed)?[0].1])
        },
        |_, raw| vec![raw[0]],
    )?;
    let f = fit_auto(FitModel::Lorentzian, &det, &sweep.signal(), None)?;
    let fwhm = f.params[1].abs();
    let f = f
        .with_label("inhomogeneous line")
        .with_derived("inhomogeneous_fwhm_ghz", fwhm * 1e-3);
    Ok((sweep.table, vec![f]))
}

fn shb(r: &Runner, p: &ShbParams) -> Result<(Table, Vec<FitResult>)> {
    let det = p.detunings.values("detunings")?;
    let reach = det.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let sim = r.simulator_window(0.0, reach + 3.0)?;
    let burn = PulseEvent::Optical(OpticalPulse {
        detuning_start: 0.0,
        detuning_stop: 0.0,
        power: p.burn_power.0,
        duration: p.burn_duration.0,
        role: OpticalRole::Burn,
    });
    let layout = Layout::new("optical_detuning_mhz", &["burned", "unburned"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&det),
        |i, seed| {
            let read = PulseEvent::Readout(ReadoutWindow {
                detuning: det[i],
                duration: p.readout_duration.0,
            });
            let burned = PulseSequence::new("shb", vec![burn, read])?;
            let plain = PulseSequence::new("shb-reference", vec![read])?;
            Ok(vec![sim.run(&burned, seed)?[0].1, sim.run(&plain, seed)?[0].1])
        },
        |_, raw| vec![1.0 - raw[0] / raw[1], raw[0], raw[1]],
    )?;
    let f = fit_auto(FitModel::Lorentzian, &det, &sweep.signal(), None)?;
    let hole = f.params[1].abs() * 1e3;
    let f = f
        .with_label("spectral hole")
        .with_derived("hole_fwhm_khz", hole)
        .with_derived("gamma_h_khz", 0.5 * hole)
        .with_derived("t2_star_us", linewidth_to_t2star(0.5 * hole));
    Ok((sweep.table, vec![f]))
}

fn optical_fid(r: &Runner, p: &OpticalFidParams) -> Result<(Table, Vec<FitResult>)> {
    let t = p.times.values("times")?;
    let signal = optical_fid_signal(&t, r.phys.optics.t2_star_opt, p.heterodyne.0);
    let layout = Layout::new("time_us", &[], &[]);
    let sweep = r.sweep(&layout, &points(&t), |i, _| Ok(vec![signal[i]]), |_, raw| raw.to_vec())?;
    let f = fit_auto(FitModel::DampedOscillation, &t, &sweep.signal(), None)?;
    let rate = f.params[1];
    let f = f.with_label("optical FID").with_derived("t2_star_us", 1.0 / rate);
    Ok((sweep.table, vec![f]))
}

fn photon_echo(r: &Runner, p: &PhotonEchoParams) -> Result<(Table, Vec<FitResult>)> {
    let t = p.two_tau.values("two_tau")?;
    let signal = photon_echo_amplitude(&t, r.phys.optics.t2_opt);
    let layout = Layout::new("two_tau_us", &[], &[]);
    let sweep = r.sweep(&layout, &points(&t), |i, _| Ok(vec![signal[i]]), |_, raw| raw.to_vec())?;
    let f = fit_auto(FitModel::Exponential, &t, &sweep.signal(), None)?;
    let t2 = 1.0 / f.params[1];
    let f = f
        .with_label("photon echo")
        .with_derived("t2_us", t2)
        .with_derived("gamma_h_khz", 1e3 / (std::f64::consts::PI * t2));
    Ok((sweep.table, vec![f]))
}

// ---------------------------------------------------------------------------
// spin population experiments

fn pit_t1(r: &Runner, p: &PitT1Params) -> Result<(Table, Vec<FitResult>)> {
    let waits = p.waits.values("waits")?;
    let proto = r.protocols(0.0);
    let sim = r.simulator(&proto)?;
    let thermal = PulseSequence::new("thermal", vec![proto.readout()])?;
    let r_thermal = sim.run(&thermal, r.seed)?[0].1;
    let layout = Layout::new("wait_s", &["readout"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&waits),
        |i, seed| {
            let seq = proto.wrap("pit-t1", vec![Wait { duration: waits[i] * 1e6 }.into()])?;
            Ok(refill_pair(&sim, &seq, seed)?.to_vec())
        },
        |_, raw| vec![1.0 - raw[1] / r_thermal, raw[1]],
    )?;
    let f = fit_auto(FitModel::DoubleExponential, &waits, &sweep.signal(), None)?;
    let (a, b) = (f.params[1], f.params[3]);
    let f = f
        .with_label("pit relaxation")
        .with_derived("t1_short_s", a.min(b))
        .with_derived("t1_long_s", a.max(b));
    Ok((sweep.table, vec![f]))
}

fn odnmr_points(center: f64, span: f64, n: usize) -> Vec<f64> {
    linspace(center - 0.5 * span, center + 0.5 * span, n)
}

fn default_span(r: &Runner) -> f64 {
    6.0 * r.phys.ensemble.spin_dist.fwhm * 1e-3
}

fn line_fit(f: &[f64], signal: &[f64], label: String) -> Result<FitResult> {
    let fit = fit_auto(FitModel::Lorentzian, f, signal, None)?;
    let (c, w) = (fit.params[0], fit.params[1].abs());
    Ok(fit
        .with_label(label)
        .with_derived("center_mhz", c)
        .with_derived("fwhm_khz", w * 1e3))
}

fn odnmr_scan(r: &Runner, p: &OdnmrScanParams) -> Result<(Table, Vec<FitResult>)> {
    let freqs = match &p.frequencies {
        Some(g) => g.values("frequencies")?,
        None => {
            let c = p.center.map_or(default_f12(r), |q| q.0);
            let s = p.span.map_or(default_span(r), |q| q.0);
            odnmr_points(c, s, p.points)
        }
    };
    let proto = r.protocols(p.optical_detuning.0);
    let sim = r.simulator(&proto)?;
    let seqs = proto.odnmr_scan(&freqs, p.power.0, Some(p.duration.0))?;
    let layout = Layout::new("rf_frequency_mhz", &["reference", "readout"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&freqs),
        |i, seed| Ok(refill_pair(&sim, &seqs[i], seed)?.to_vec()),
        |_, raw| vec![ratio(raw), raw[0], raw[1]],
    )?;
    let f = line_fit(&freqs, &sweep.signal(), format!("power={}W", p.power.0))?;
    Ok((sweep.table, vec![f]))
}

fn spin_holeburn(r: &Runner, p: &SpinHoleburnParams) -> Result<(Table, Vec<FitResult>)> {
    let center = p.center.map_or(default_f12(r), |q| q.0);
    let burn_f = p.burn_frequency.map_or(center, |q| q.0);
    let freqs = odnmr_points(center, p.span.0, p.points);
    let proto = Protocols {
        holeburn_scan_power: p.scan_power.0,
        holeburn_scan_us: p.scan_duration.0,
        ..r.protocols(0.0)
    };
    let sim = r.simulator(&proto)?;
    let burned = proto.spin_holeburn(burn_f, p.burn_power.0, &freqs)?;
    let plain = proto.spin_holeburn(burn_f, 0.0, &freqs)?;
    let layout = Layout::new("rf_frequency_mhz", &["burned", "unburned"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&freqs),
        |i, seed| {
            let mut raw = refill_pair(&sim, &burned[i], seed)?.to_vec();
            raw.extend(refill_pair(&sim, &plain[i], seed)?);
            Ok(raw)
        },
        |_, raw| {
            let (b, u) = (ratio(&raw[..2]), ratio(&raw[2..]));
            vec![b - u, b, u]
        },
    )?;
    let f = fit_auto(FitModel::Gaussian, &freqs, &sweep.signal(), None)?;
    let hole = f.params[1].abs() * 1e3;
    let (full, half) = hole_width_to_t2star(hole);
    let f = f
        .with_label("spin hole")
        .with_derived("hole_fwhm_khz", hole)
        .with_derived("t2_star_us", full)
        .with_derived("t2_star_half_width_us", half);
    Ok((sweep.table, vec![f]))
}

fn correlation_scan(r: &Runner, p: &CorrelationScanParams) -> Result<(Table, Vec<FitResult>)> {
    let gamma = r.phys.ensemble.optical_dist.fwhm;
    let center0 = r.phys.ensemble.optical_dist.center;
    let dets = match &p.optical_detunings {
        Some(g) => g.values("optical_detunings")?,
        None => linspace(center0 - 1.5 * gamma, center0 + 1.5 * gamma, 7),
    };
    let c = p.center.map_or(default_f12(r), |q| q.0);
    let span = p.span.map_or(default_span(r), |q| q.0);
    let freqs = odnmr_points(c, span, p.points);
    let mut sims = Vec::with_capacity(dets.len());
    let mut seqs = Vec::with_capacity(dets.len());
    for &d in &dets {
        let proto = r.protocols(d);
        sims.push(r.simulator(&proto)?);
        seqs.push(proto.odnmr_scan(&freqs, p.power.0, Some(p.duration.0))?);
    }
    let m = freqs.len();
    let pts: Vec<Point> = dets
        .iter()
        .flat_map(|&d| freqs.iter().map(move |&f| Point { x: f, extra: vec![d] }))
        .collect();
    let layout = Layout::new("rf_frequency_mhz", &["reference", "readout"], &["optical_detuning_mhz"]);
    let sweep = r.sweep(
        &layout,
        &pts,
        |i, seed| Ok(refill_pair(&sims[i / m], &seqs[i / m][i % m], seed)?.to_vec()),
        |_, raw| vec![ratio(raw), raw[0], raw[1]],
    )?;
    let signal = sweep.signal();
    let mut fits = Vec::with_capacity(dets.len() + 1);
    let mut centers_khz = Vec::with_capacity(dets.len());
    for (k, &d) in dets.iter().enumerate() {
        let f = line_fit(&freqs, &signal[k * m..(k + 1) * m], format!("optical_detuning={d}MHz"))?;
        centers_khz.push((f.params[0] - c) * 1e3);
        fits.push(f);
    }
    let det_ghz: Vec<f64> = dets.iter().map(|d| d * 1e-3).collect();
    let slope = fit_auto(FitModel::Linear, &det_ghz, &centers_khz, None)?;
    let g = slope.params[0];
    fits.push(slope.with_label("center shift").with_derived("gradient_khz_per_ghz", g));
    Ok((sweep.table, fits))
}

// ---------------------------------------------------------------------------
// coherent spin control

fn rabi_durations(r: &Runner, power: f64, periods: f64, n: usize) -> Vec<f64> {
    let period = 1e3 / (r.phys.k_rabi * power.sqrt());
    let t_max = periods * period;
    (1..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

fn rabi_fit(t: &[f64], signal: &[f64], power: f64, k_rabi: f64) -> Result<FitResult> {
    let f = fit_auto(FitModel::DampedOscillation, t, signal, None)?;
    let khz = f.params[2].abs() * 1e3;
    Ok(f.with_label(format!("power={power}W"))
        .with_derived("power_w", power)
        .with_derived("rabi_khz", khz)
        .with_derived("expected_rabi_khz", k_rabi * power.sqrt()))
}

fn rabi(r: &Runner, p: &RabiParams) -> Result<(Table, Vec<FitResult>)> {
    let power = p.power.0;
    let durations = match &p.durations {
        Some(g) => g.values("durations")?,
        None => rabi_durations(r, power, p.periods, p.points),
    };
    let freq = p.frequency.map_or(default_f12(r), |q| q.0);
    let proto = r.protocols(0.0);
    let sim = r.simulator(&proto)?;
    let layout = Layout::new("rf_duration_us", &["reference", "readout"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&durations),
        |i, seed| Ok(refill_pair(&sim, &proto.rabi(durations[i], freq, power)?, seed)?.to_vec()),
        |_, raw| vec![ratio(raw), raw[0], raw[1]],
    )?;
    let f = rabi_fit(&durations, &sweep.signal(), power, r.phys.k_rabi)?;
    Ok((sweep.table, vec![f]))
}

fn rabi_power_sweep(r: &Runner, p: &RabiPowerSweepParams) -> Result<(Table, Vec<FitResult>)> {
    let powers = p.powers.values("powers")?;
    let freq = p.frequency.map_or(default_f12(r), |q| q.0);
    let proto = r.protocols(0.0);
    let sim = r.simulator(&proto)?;
    let grids: Vec<Vec<f64>> = powers.iter().map(|&w| rabi_durations(r, w, p.periods, p.points)).collect();
    let m = p.points;
    let pts: Vec<Point> = powers
        .iter()
        .zip(&grids)
        .flat_map(|(&w, g)| g.iter().map(move |&t| Point { x: t, extra: vec![w] }))
        .collect();
    let layout = Layout::new("rf_duration_us", &["reference", "readout"], &["rf_power_w"]);
    let sweep = r.sweep(
        &layout,
        &pts,
        |i, seed| {
            let seq = proto.rabi(grids[i / m][i % m], freq, powers[i / m])?;
            Ok(refill_pair(&sim, &seq, seed)?.to_vec())
        },
        |_, raw| vec![ratio(raw), raw[0], raw[1]],
    )?;
    let signal = sweep.signal();
    let mut fits = Vec::with_capacity(powers.len() + 1);
    let mut rates = Vec::with_capacity(powers.len());
    for (k, &w) in powers.iter().enumerate() {
        let f = rabi_fit(&grids[k], &signal[k * m..(k + 1) * m], w, r.phys.k_rabi)?;
        rates.push(f.derived["rabi_khz"]);
        fits.push(f);
    }
    let law = fit_auto(FitModel::SqrtPower, &powers, &rates, None)?;
    let k = law.params[0];
    fits.push(law.with_label("rabi power law").with_derived("k_rabi_khz_per_sqrt_w", k));
    Ok((sweep.table, fits))
}

/// Shared body of the echo experiments: visibility from the refill signals
/// of the two final-pulse phases, relative to a run without RF.
struct EchoSetup {
    proto: Protocols,
    sim: Simulator,
    baseline: f64,
}

impl EchoSetup {
    fn new(r: &Runner, refocus_phase: f64) -> Result<Self> {
        let proto = Protocols {
            hahn_refocus_phase: refocus_phase,
            ..r.protocols(0.0)
        };
        let sim = r.simulator(&proto)?;
        let none = proto.wrap("no-rf", Vec::new())?;
        let baseline = ratio(&refill_pair(&sim, &none, r.seed)?);
        Ok(Self { proto, sim, baseline })
    }

    /// `[signal, s_plus, s_minus]` from `[ref+, read+, ref−, read−]`.
    fn finish(&self, raw: &[f64]) -> Vec<f64> {
        let sp = ratio(&raw[..2]) - self.baseline;
        let sm = ratio(&raw[2..]) - self.baseline;
        let v = visibility(&[sp], &[sm]).ok().and_then(|v| v[0]).unwrap_or(f64::NAN);
        vec![v, sp, sm]
    }
}

/// Closed-form 1/e total time (ms) of an n-pulse train under the configured bath.
fn closed_form_t2_ms(r: &Runner, n: usize) -> Option<f64> {
    let noise = r.phys.noise;
    (noise.ou_sigma > 0.0)
        .then(|| one_over_e_time(n, noise.ou_sigma, noise.ou_tau_c).ok())
        .flatten()
        .map(|t| t * 1e3)
}

fn hahn_echo(r: &Runner, p: &HahnEchoParams) -> Result<(Table, Vec<FitResult>)> {
    let power = p.power.0;
    let freq = p.frequency.map_or(default_f12(r), |q| q.0);
    let echo = EchoSetup::new(r, p.refocus_phase.0)?;
    let (t90, t180) = echo.proto.pulse_durations(power)?;
    let t_min = 1.1 * (t90 + t180) * 1e-3;
    let totals = match &p.total_times {
        Some(g) => g.values("total_times")?,
        None => {
            let t_max = closed_form_t2_ms(r, 1).map_or(2.0, |t| 2.0 * t);
            linspace(t_min.min(0.5 * t_max), t_max, p.points)
        }
    };
    let plus = inversion_phase(p.refocus_phase.0, 1);
    let minus = normalize_phase(plus + 180.0);
    let layout = Layout::new("total_time_ms", &["s_plus", "s_minus"], &[]);
    let sweep = r.sweep(
        &layout,
        &points(&totals),
        |i, seed| {
            let tau = 0.5 * totals[i] * 1e3;
            let mut raw = refill_pair(&echo.sim, &echo.proto.hahn_echo(tau, freq, power, plus)?, seed)?.to_vec();
            raw.extend(refill_pair(&echo.sim, &echo.proto.hahn_echo(tau, freq, power, minus)?, seed)?);
            Ok(raw)
        },
        |_, raw| echo.finish(raw),
    )?;
    let mut f = stretched_fit(&totals, &sweep.signal(), "hahn echo".into())?;
    if let Some(t8) = closed_form_t2_ms(r, 8) {
        f = f.with_derived("cpmg8_predicted_ms", t8);
    }
    Ok((sweep.table, vec![f]))
}

fn cpmg(r: &Runner, p: &CpmgParams) -> Result<(Table, Vec<FitResult>)> {
    let power = p.power.0;
    let freq = p.frequency.map_or(default_f12(r), |q| q.0);
    let echo = EchoSetup::new(r, 90.0)?;
    let (t90, t180) = echo.proto.pulse_durations(power)?;
    let mut grids = Vec::with_capacity(p.orders.len());
    for &n in &p.orders {
        let t_max = match p.t_max {
            Some(t) => t.0 * (n as f64).powf(2.0 / 3.0),
            None => closed_form_t2_ms(r, n).map_or(2.0 * (n as f64).powf(2.0 / 3.0), |t| 2.0 * t),
        };
        let t_min = 1.1 * n as f64 * (t90 + t180) * 1e-3;
        if !(t_min < t_max) {
            return Err(Error::config(format!(
                "CPMG-{n}: pulses of {t180:.1} us do not fit below t_max = {t_max:.3} ms"
            )));
        }
        grids.push(linspace(t_min, t_max, p.points));
    }
    let m = p.points;
    let pts: Vec<Point> = p
        .orders
        .iter()
        .zip(&grids)
        .flat_map(|(&n, g)| g.iter().map(move |&t| Point { x: t, extra: vec![n as f64] }))
        .collect();
    let plus = inversion_phase(90.0, 1);
    let minus = normalize_phase(plus + 180.0);
    let layout = Layout::new("total_time_ms", &["s_plus", "s_minus"], &["n_pulses"]);
    let sweep = r.sweep(
        &layout,
        &pts,
        |i, seed| {
            let n = p.orders[i / m];
            let tau = grids[i / m][i % m] * 1e3 / n as f64;
            let mut raw = refill_pair(&echo.sim, &echo.proto.cpmg(n, tau, freq, power, plus)?, seed)?.to_vec();
            raw.extend(refill_pair(&echo.sim, &echo.proto.cpmg(n, tau, freq, power, minus)?, seed)?);
            Ok(raw)
        },
        |_, raw| echo.finish(raw),
    )?;
    echo_fits(r, &p.orders, &grids, &sweep, None)
        .map(|fits| (sweep.table, fits))
}

/// Stretched fit per order, the scaling law across orders and, with two or
/// more orders, a joint fit of the bath parameters.
fn echo_fits(
    r: &Runner,
    orders: &[usize],
    grids: &[Vec<f64>],
    sweep: &Sweep,
    bath_init: Option<(f64, f64)>,
) -> Result<Vec<FitResult>> {
    let signal = sweep.signal();
    let mut fits = Vec::with_capacity(orders.len() + 1);
    let mut t2 = Vec::with_capacity(orders.len());
    let mut curves = Vec::with_capacity(orders.len());
    let mut offset = 0;
    for (&n, g) in orders.iter().zip(grids) {
        let y = &signal[offset..offset + g.len()];
        offset += g.len();
        let mut f = stretched_fit(g, y, format!("n={n}"))?.with_derived("n_pulses", n as f64);
        if let Some(t) = closed_form_t2_ms(r, n) {
            f = f.with_derived("closed_form_t2_ms", t);
        }
        t2.push((n as f64, f.params[1]));
        let (t, v) = finite_xy(g, y);
        curves.push(OuCurve {
            n,
            t: t.iter().map(|t| t * 1e-3).collect(),
            visibility: v,
        });
        fits.push(f);
    }
    let distinct = {
        let mut o = orders.to_vec();
        o.sort_unstable();
        o.dedup();
        o.len()
    };
    if distinct >= 2 {
        let mut s = scaling_result(&t2)?;
        if bath_init.is_some() {
            let bath = fit_ou_bath(&curves, bath_init)?;
            s = s
                .with_derived("bath_sigma_rad_per_s", bath.sigma)
                .with_derived("bath_tau_c_ms", bath.tau_c * 1e3)
                .with_derived("bath_converged", if bath.converged { 1.0 } else { 0.0 });
        }
        fits.push(s);
    }
    Ok(fits)
}

fn scaling_study(r: &Runner, p: &ScalingStudyParams) -> Result<(Table, Vec<FitResult>)> {
    let sigma = p.sigma.map_or(r.phys.noise.ou_sigma, |q| q.0);
    let tau_c = p.tau_c.map_or(r.phys.noise.ou_tau_c, |q| q.0);
    let mut grids = Vec::with_capacity(p.orders.len());
    for &n in &p.orders {
        let t_max = 2.0 * one_over_e_time(n, sigma, tau_c)? * 1e3;
        grids.push((1..=p.points).map(|i| t_max * i as f64 / p.points as f64).collect::<Vec<_>>());
    }
    let m = p.points;
    let pts: Vec<Point> = p
        .orders
        .iter()
        .zip(&grids)
        .flat_map(|(&n, g)| g.iter().map(move |&t| Point { x: t, extra: vec![n as f64] }))
        .collect();
    let trajectories = match r.phys.noise.mode {
        NoiseMode::MonteCarlo { n_trajectories, .. } => Some(n_trajectories),
        NoiseMode::Analytic => None,
    };
    let layout = Layout::new("total_time_ms", &[], &["n_pulses"]);
    let sweep = r.sweep(
        &layout,
        &pts,
        |i, seed| {
            let n = p.orders[i / m];
            let tau = grids[i / m][i % m] * 1e-3 / n as f64;
            Ok(vec![match trajectories {
                Some(k) => mc_cpmg_visibility(n, tau, sigma, tau_c, k, seed).mean,
                None => ou_visibility_analytic(n, tau, sigma, tau_c, 1.0),
            }])
        },
        |_, raw| raw.to_vec(),
    )?;
    let bath_init = (sigma > 0.0).then_some((sigma, tau_c));
    echo_fits(r, &p.orders, &grids, &sweep, bath_init).map(|fits| (sweep.table, fits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_phases() {
        assert_eq!(inversion_phase(0.0, 1), 180.0);
        assert_eq!(inversion_phase(90.0, 1), 0.0);
        assert_eq!(inversion_phase(90.0, 8), 0.0);
        assert_eq!(inversion_phase(0.0, 2), 0.0);
    }

    #[test]
    fn defaults_serialize_with_units_resolved() {
        let v = serde_json::to_value(Params::parse(ExperimentKind::Rabi, &Default::default()).unwrap()).unwrap();
        assert_eq!(v["power"], 92.0);
        assert_eq!(v["points"], 40);
    }
}
