//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use odnmr::analysis::{
    dipolar_coupling, dipolar_distance, electron_moment, fit_scaling, linewidth_to_t2star, nuclear_moment,
    probed_ion_count, FitModel, FitResult,
};
use odnmr::config::RunConfig;
use odnmr::dynamics::ou::one_over_e_time;
use odnmr::dynamics::rotation::{apply, compose, norm, rotation_matrix};
use odnmr::dynamics::{apply_optical_pulse, apply_readout, apply_rf_pulse, apply_wait, ou_visibility_analytic};
use odnmr::dynamics::{NoiseModel, OpticalModel, SimState};
use odnmr::experiments::{calibrate_bath, run_experiment, ExperimentKind, ExperimentOutput, ExperimentSpec};
use odnmr::model::{sample_ensemble, EnsembleConfig, InhomogeneousDistribution};
use odnmr::sequence::{
    format_sequence, parse_sequence, OpticalPulse, OpticalRole, PulseEvent, PulseSequence, ReadoutWindow, RfPulse,
    Wait,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

const K_RABI: f64 = 1.48;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    ((value - target) / target).abs() <= rel
}

fn run(kind: ExperimentKind, params: &[(&str, serde_json::Value)], cfg: &EnsembleConfig, noise: &NoiseModel) -> Result<ExperimentOutput, String> {
    let mut spec = ExperimentSpec::new(kind, 1);
    for (k, v) in params {
        spec = spec.with(k, v.clone());
    }
    run_experiment(&spec, cfg, noise, &OpticalModel::default(), K_RABI).map_err(|e| e.to_string())
}

fn derived(f: &FitResult, name: &str) -> Result<f64, String> {
    f.derived.get(name).copied().ok_or_else(|| format!("fit `{}` has no {name}", f.label))
}

fn time_limit(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.1?}, limit {limit:?}"))
}

fn rabi_power_law() -> Check {
    let start = Instant::now();
    let powers = [6.0, 23.0, 52.0, 92.0];
    let out = run(
        ExperimentKind::RabiPowerSweep,
        &[("powers", serde_json::json!(powers))],
        &EnsembleConfig::default(),
        &NoiseModel::default(),
    )?;
    let mut worst: f64 = 0.0;
    for &p in &powers {
        let f = out
            .fits
            .iter()
            .find(|f| f.derived.get("power_w") == Some(&p))
            .ok_or(format!("no fit at {p} W"))?;
        let expected = K_RABI * p.sqrt();
        let got = derived(f, "rabi_khz")?;
        worst = worst.max((got / expected - 1.0).abs());
        ensure(within(got, expected, 0.05), format!("{p} W: {got:.3} kHz vs {expected:.3} kHz"))?;
    }
    let law = out.fits.iter().find(|f| f.model == FitModel::SqrtPower).ok_or("no power-law fit")?;
    let k = law.params[0];
    ensure((k - 1.48).abs() <= 0.05, format!("k = {k:.4}"))?;
    time_limit(start, Duration::from_secs(120))?;
    Ok(format!("k = {k:.4} kHz/sqrt(W), worst point {:.2}%", 100.0 * worst))
}

/// Phase variance of a CPMG filter by direct quadrature of the OU covariance.
fn chi_by_quadrature(n: usize, tau: f64, sigma: f64, tau_c: f64) -> f64 {
    let total = n as f64 * tau;
    let m = 1600;
    let h = total / m as f64;
    let sign = |t: f64| {
        // π pulses at (k + 1/2)τ
        let flips = ((t / tau) + 0.5).floor() as i64;
        if flips % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    };
    let t: Vec<f64> = (0..m).map(|i| (i as f64 + 0.5) * h).collect();
    let s: Vec<f64> = t.iter().map(|&x| sign(x)).collect();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            acc += s[i] * s[j] * (-(t[i] - t[j]).abs() / tau_c).exp();
        }
    }
    0.5 * sigma * sigma * acc * h * h
}

fn ou_oracle() -> Check {
    let start = Instant::now();
    let cfg = RunConfig::default();
    ensure(cfg.oracle.orders == [1, 2, 4, 8], "default orders changed")?;
    ensure(cfg.oracle.tau_points == 10, "default tau count changed")?;
    let report = odnmr_cli::oracle::run(&cfg).map_err(|e| e.to_string())?;
    ensure(report.n_trajectories == 2000, format!("{} trajectories", report.n_trajectories))?;
    ensure(report.cases.len() == 40, format!("{} cases", report.cases.len()))?;
    ensure(report.passed, format!("{} failed, {} inconclusive", report.n_failed, report.n_inconclusive))?;

    // the closed form itself against a brute-force filter-function integral
    let (sigma, tau_c) = (cfg.noise.ou_sigma, cfg.noise.ou_tau_c);
    let mut worst: f64 = 0.0;
    for (n, tau) in [(1, 0.6e-3), (2, 0.5e-3), (4, 0.2e-3), (8, 0.25e-3), (3, 5e-3)] {
        let closed = ou_visibility_analytic(n, tau, sigma, tau_c, 1.0);
        let brute = (-chi_by_quadrature(n, tau, sigma, tau_c)).exp();
        worst = worst.max((closed - brute).abs());
    }
    ensure(worst < 1e-3, format!("closed form off quadrature by {worst:.2e}"))?;
    time_limit(start, Duration::from_secs(600))?;
    Ok(format!("max |z| = {:.2} over {} cases, closed form vs quadrature {worst:.1e}", report.max_abs_z, report.cases.len()))
}

fn small_tau_scaling() -> Check {
    let tau_c = 13e-3;
    // 1/e time of the Hahn echo at 0.1 ms, far below tau_c
    let sigma = calibrate_bath(0.1, 13.0).map_err(|e| e.to_string())?;
    let mut data = Vec::new();
    for n in [1usize, 2, 4, 8] {
        let t = one_over_e_time(n, sigma, tau_c).map_err(|e| e.to_string())?;
        ensure(t / n as f64 / tau_c < 0.01, format!("N={n} not in the small-tau regime"))?;
        // the curve crosses 1/e there
        ensure((ou_visibility_analytic(n, t / n as f64, sigma, tau_c, 1.0) - (-1f64).exp()).abs() < 1e-9, "not a 1/e time")?;
        data.push((n as f64, t));
    }
    let fit = fit_scaling(&data).map_err(|e| e.to_string())?;
    ensure((fit.beta - 0.667).abs() <= 0.02, format!("beta = {:.4}", fit.beta))?;
    Ok(format!("beta = {:.4}", fit.beta))
}

fn hahn_calibration() -> Check {
    let sigma = calibrate_bath(0.61, 13.0).map_err(|e| e.to_string())?;
    let noise = NoiseModel { ou_sigma: sigma, ou_tau_c: 13e-3, ..NoiseModel::default() };
    let out = run(ExperimentKind::HahnEcho, &[], &EnsembleConfig::default(), &noise)?;
    let f = &out.fits[0];
    let t2 = derived(f, "t2_ms")?;
    let t8 = derived(f, "cpmg8_predicted_ms")?;
    ensure(within(t2, 0.61, 0.05), format!("T2 = {t2:.4} ms"))?;
    ensure((1.4..=2.6).contains(&t8), format!("CPMG-8 prediction {t8:.3} ms"))?;
    Ok(format!("sigma = {sigma:.0} rad/s, T2 = {t2:.4} ms, CPMG-8 = {t8:.3} ms"))
}

fn spin_t1() -> Check {
    let start = Instant::now();
    let noise = NoiseModel { t1_short: 4.4, t1_long: 120.0, readout_noise: 0.01, ..NoiseModel::default() };
    let out = run(ExperimentKind::PitT1, &[], &EnsembleConfig::default(), &noise)?;
    let f = &out.fits[0];
    let (a, b) = (derived(f, "t1_short_s")?, derived(f, "t1_long_s")?);
    ensure(within(a, 4.4, 0.1) && within(b, 120.0, 0.1), format!("T1 = {a:.3} s, {b:.2} s"))?;
    time_limit(start, Duration::from_secs(60))?;
    Ok(format!("T1 = {a:.3} s and {b:.2} s"))
}

fn line(cfg: &EnsembleConfig, center: f64, power: f64) -> Result<(f64, f64), String> {
    let out = run(
        ExperimentKind::OdnmrScan,
        &[("center", center.into()), ("power", power.into())],
        cfg,
        &NoiseModel::default(),
    )?;
    let f = &out.fits[0];
    Ok((derived(f, "center_mhz")?, derived(f, "fwhm_khz")?))
}

fn odnmr_lines() -> Check {
    let f12_cfg = EnsembleConfig::default();
    let f23_cfg = EnsembleConfig {
        spin_dist: InhomogeneousDistribution::lorentzian(0.0, 88.0),
        ..EnsembleConfig::default()
    };
    let (c12, w12) = line(&f12_cfg, 21.475, 0.5)?;
    let (c23, w23) = line(&f23_cfg, 33.944, 0.5)?;
    ensure((c12 - 21.475).abs() <= 1e-3, format!("F12 center {c12:.6} MHz"))?;
    ensure((c23 - 33.944).abs() <= 1e-3, format!("F23 center {c23:.6} MHz"))?;
    ensure(within(w12, 154.0, 0.1), format!("F12 FWHM {w12:.1} kHz"))?;
    ensure(within(w23, 88.0, 0.1), format!("F23 FWHM {w23:.1} kHz"))?;
    let mut widths = Vec::new();
    for p in [0.5, 20.0, 92.0, 500.0] {
        widths.push(line(&f12_cfg, 21.475, p)?.1);
    }
    ensure(widths.windows(2).all(|w| w[1] > w[0]), format!("FWHM vs power {widths:.1?}"))?;
    Ok(format!(
        "F12 {c12:.5} MHz / {w12:.1} kHz, F23 {c23:.5} MHz / {w23:.1} kHz, FWHM vs power {widths:.0?}"
    ))
}

fn correlation() -> Check {
    let out = run(ExperimentKind::CorrelationScan, &[], &EnsembleConfig::default(), &NoiseModel::default())?;
    let f = out.fits.iter().find(|f| f.model == FitModel::Linear).ok_or("no linear fit")?;
    let g = derived(f, "gradient_khz_per_ghz")?;
    ensure((g + 4.0).abs() <= 0.4, format!("slope {g:.3}"))?;
    Ok(format!("slope {g:.3} kHz/GHz"))
}

fn closed_forms() -> Check {
    const HBAR: f64 = 1.054_571_817e-34;
    const H: f64 = 6.626_070_15e-34;
    const MU_B: f64 = 9.274_010_078_3e-24;
    let (mu_eu, mu_h) = (nuclear_moment(6.65e7, 2.5), nuclear_moment(2.68e8, 0.5));
    ensure(within(mu_eu, 6.65e7 * HBAR * 2.5, 1e-9), "Eu moment")?;
    let c4 = dipolar_coupling(mu_eu, mu_h, 4e-10).map_err(|e| e.to_string())?;
    let c8 = dipolar_coupling(mu_eu, mu_h, 8e-10).map_err(|e| e.to_string())?;
    // independent evaluation of μ0/4π·μa·μb/(h r³)
    let by_hand = 1e-7 * (6.65e7 * HBAR * 2.5) * (2.68e8 * HBAR * 0.5) / (4e-10f64).powi(3) / H;
    ensure(within(c4, by_hand, 1e-6), "coupling disagrees with hand evaluation")?;
    ensure(within(c4, 583.0, 0.03), format!("{c4:.1} Hz at 4 A"))?;
    ensure(within(c8, 72.0, 0.03), format!("{c8:.1} Hz at 8 A"))?;
    let mu_e = electron_moment(2.0, 0.5);
    ensure(within(mu_e, MU_B, 1e-9), "electron moment")?;
    let r = dipolar_distance(mu_e, mu_eu, 12e3).map_err(|e| e.to_string())? * 1e10;
    ensure(within(r, 13.0, 0.03), format!("electron distance {r:.2} A"))?;
    let n = probed_ion_count(9.6e20, 1e-4, 1.0 / 23000.0, 0.5, 0.2 * 11.6 / 154.0).map_err(|e| e.to_string())?;
    ensure((1e10..1e11).contains(&n), format!("probed ions {n:.3e}"))?;
    let t = linewidth_to_t2star(310.0);
    ensure((t - 1.03).abs() <= 0.01, format!("T2* = {t:.4} us"))?;
    ensure(within(t, 1.0 / (PI * 0.310), 1e-12), "T2* disagrees with 1/(pi G)")?;
    Ok(format!("{c4:.1} Hz, {c8:.1} Hz, {r:.2} A, N = {n:.2e}, T2* = {t:.4} us"))
}

// ---------------------------------------------------------------------------
// invariants

const CASES: u32 = 1000;

fn check<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn optical_pulse() -> impl Strategy<Value = OpticalPulse> {
    (-10.0..10.0f64, -10.0..10.0f64, 0.0..10.0f64, 1.0..3e5f64, 0..3u8).prop_map(|(a, b, power, duration, r)| {
        let role = [OpticalRole::Burn, OpticalRole::Probe, OpticalRole::Erase][r as usize];
        OpticalPulse { detuning_start: a, detuning_stop: b, power, duration, role }
    })
}

fn event() -> impl Strategy<Value = PulseEvent> {
    prop_oneof![
        optical_pulse().prop_map(PulseEvent::Optical),
        (1.0..100.0f64, 0.0..200.0f64, 0.0..360.0f64, 0.1..1e4f64)
            .prop_map(|(f, p, ph, d)| PulseEvent::Rf(RfPulse::new(f, p, ph, d))),
        (0.1..1e7f64).prop_map(|d| PulseEvent::Wait(Wait { duration: d })),
        (-10.0..10.0f64, 0.1..1e3f64).prop_map(|(x, d)| PulseEvent::Readout(ReadoutWindow { detuning: x, duration: d })),
    ]
}

fn small_ensemble(seed: u64) -> EnsembleConfig {
    EnsembleConfig { n_classes: 12, rng_seed: seed, optical_window: Some([-5.0, 5.0]), ..EnsembleConfig::default() }
}

fn population_conservation() -> Result<(), String> {
    let noise = NoiseModel::default();
    let optics = OpticalModel::default();
    let k = OpticalModel { pump_efficiency: 1e-2, ..OpticalModel::default() };
    let strategy = (any::<u64>(), proptest::collection::vec(event(), 1..8), any::<bool>());
    check("population conservation", strategy, |(seed, events, strong)| {
        let cfg = small_ensemble(seed);
        let optics = if strong { &k } else { &optics };
        let mut state = SimState::new(sample_ensemble(&cfg).unwrap(), cfg.levels.clone(), seed);
        for ev in &events {
            match ev {
                PulseEvent::Optical(p) => {
                    apply_optical_pulse(&mut state, p, optics);
                }
                PulseEvent::Rf(p) => apply_rf_pulse(&mut state, p, K_RABI).map_err(|e| TestCaseError::fail(e.to_string()))?,
                PulseEvent::Wait(w) => apply_wait(&mut state, w, &noise).map_err(|e| TestCaseError::fail(e.to_string()))?,
                PulseEvent::Readout(r) => {
                    apply_readout(&mut state, r, optics);
                }
            }
            for ion in &state.ensemble {
                for ch in &ion.channels {
                    let total: f64 = ch.populations.iter().sum();
                    prop_assert!((total - 1.0).abs() < 1e-9, "total population {total} after {ev:?}");
                    prop_assert!(ch.populations.iter().all(|&p| p >= 0.0), "negative population after {ev:?}");
                }
            }
        }
        Ok(())
    })
}

fn bloch_norm() -> Result<(), String> {
    let pulse = (-0.3..0.3f64, 0.0..200.0f64, 0.0..360.0f64, 0.1..500.0f64)
        .prop_map(|(df, p, ph, d)| RfPulse::new(21.475 + df, p, ph, d));
    let strategy = (any::<u64>(), proptest::collection::vec(pulse, 1..6));
    check("Bloch norm", strategy, |(seed, pulses)| {
        let cfg = small_ensemble(seed);
        let mut state = SimState::new(sample_ensemble(&cfg).unwrap(), cfg.levels.clone(), seed);
        let before: Vec<f64> = state.ensemble.iter().flat_map(|i| i.channels.iter().map(|c| norm(c.bloch))).collect();
        for p in &pulses {
            apply_rf_pulse(&mut state, p, K_RABI).map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        let after = state.ensemble.iter().flat_map(|i| i.channels.iter().map(|c| norm(c.bloch)));
        for (a, b) in before.iter().zip(after) {
            prop_assert!((a - b).abs() < 1e-9, "norm {a} -> {b}");
        }
        Ok(())
    })
}

fn rotation_composition() -> Result<(), String> {
    let vec3 = || [-1e5..1e5f64, -1e5..1e5f64, -1e5..1e5f64];
    let strategy = (vec3(), vec3(), 0.0..1e-4f64, 0.0..1e-4f64, [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]);
    check("rotation composition", strategy, |(w1, w2, t1, t2, r)| {
        let same = compose(&rotation_matrix(w1, t2), &rotation_matrix(w1, t1));
        let joint = rotation_matrix(w1, t1 + t2);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((same[i][j] - joint[i][j]).abs() < 1e-9);
            }
        }
        let (a, b) = (rotation_matrix(w1, t1), rotation_matrix(w2, t2));
        let seq = apply(&a, apply(&b, r));
        let comp = apply(&compose(&a, &b), r);
        for k in 0..3 {
            prop_assert!((seq[k] - comp[k]).abs() < 1e-12);
        }
        prop_assert!((norm(comp) - norm(r)).abs() < 1e-12);
        Ok(())
    })
}

fn parser_round_trip() -> Result<(), String> {
    check("parser round trip", proptest::collection::vec(event(), 1..12), |events| {
        let seq = PulseSequence::new("", events).unwrap();
        let text = format_sequence(&seq);
        let back = parse_sequence(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back.events, &seq.events);
        prop_assert_eq!(format_sequence(&back), text);
        Ok(())
    })
}

/// Per-model parameter ranges and x range.
fn model_case() -> impl Strategy<Value = (FitModel, Vec<f64>, f64)> {
    let u = |lo: f64, hi: f64| lo..hi;
    prop_oneof![
        (u(-5.0, 5.0), u(0.1, 10.0), u(-5.0, 5.0), u(-5.0, 5.0), u(-10.0, 10.0))
            .prop_map(|(c, w, a, o, x)| (FitModel::Lorentzian, vec![c, w, a, o], x)),
        (u(-5.0, 5.0), u(0.1, 10.0), u(-5.0, 5.0), u(-5.0, 5.0), u(-10.0, 10.0))
            .prop_map(|(c, w, a, o, x)| (FitModel::Gaussian, vec![c, w, a, o], x)),
        (u(-5.0, 5.0), u(0.0, 5.0), u(0.0, 3.0)).prop_map(|(a, r, x)| (FitModel::Exponential, vec![a, r], x)),
        (u(-5.0, 5.0), u(0.1, 10.0), u(-5.0, 5.0), u(10.0, 200.0), u(0.0, 300.0))
            .prop_map(|(a, t, b, s, x)| (FitModel::DoubleExponential, vec![a, t, b, s], x)),
        (u(-5.0, 5.0), u(0.1, 10.0), u(0.3, 3.0), u(0.01, 20.0))
            .prop_map(|(a, t, b, x)| (FitModel::StretchedExponential, vec![a, t, b], x)),
        (u(-5.0, 5.0), u(0.0, 100.0)).prop_map(|(k, x)| (FitModel::SqrtPower, vec![k], x)),
        (u(0.1, 5.0), u(-1.0, 2.0), u(1.0, 16.0)).prop_map(|(t, b, x)| (FitModel::PowerLawScaling, vec![t, b], x)),
        (1usize..9, u(0.5, 1.5), u(1e3, 1e5), u(1e-3, 1e-1), u(1e-5, 1e-2))
            .prop_map(|(n, a, s, tc, x)| (FitModel::OuCpmg { n }, vec![a, s, tc], x)),
        (u(-5.0, 5.0), u(0.0, 2.0), u(0.0, 2.0), u(-PI, PI), u(-5.0, 5.0), u(0.0, 5.0))
            .prop_map(|(a, r, f, ph, o, x)| (FitModel::DampedOscillation, vec![a, r, f, ph, o], x)),
        (u(-5.0, 5.0), u(-5.0, 5.0), u(-10.0, 10.0)).prop_map(|(a, b, x)| (FitModel::Linear, vec![a, b], x)),
    ]
}

fn jacobian() -> Result<(), String> {
    check("Jacobian vs finite differences", model_case(), |(model, p, x)| {
        let mut g = vec![0.0; p.len()];
        model.gradient(x, &p, &mut g);
        let f0 = model.eval(x, &p);
        for i in 0..p.len() {
            // derivatives compared in units of each parameter's own scale
            let scale = p[i].abs().max(1e-3);
            let h = 1e-6 * scale;
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (model.eval(x, &up) - model.eval(x, &dn)) / (2.0 * h) * scale;
            let an = g[i] * scale;
            prop_assert!(
                (fd - an).abs() <= 1e-6 * (1.0 + an.abs() + f0.abs()),
                "{model:?} d/d{} at x={x}: analytic {an}, numeric {fd}",
                model.param_names()[i]
            );
        }
        Ok(())
    })
}

fn invariants() -> Check {
    let start = Instant::now();
    population_conservation()?;
    bloch_norm()?;
    rotation_composition()?;
    parser_round_trip()?;
    jacobian()?;
    time_limit(start, Duration::from_secs(300))?;
    Ok(format!("5 suites x {CASES} cases"))
}

// ---------------------------------------------------------------------------

fn raw_csv(config: &Path, dir: &Path, jobs: usize) -> Result<Vec<u8>, String> {
    let out = dir.join(format!("jobs{jobs}"));
    let status = Command::new(env!("CARGO_BIN_EXE_odnmr"))
        .arg("run")
        .arg(config)
        .arg("--jobs")
        .arg(jobs.to_string())
        .arg("--output")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), String::from_utf8_lossy(&status.stderr).to_string())?;
    std::fs::read(out.join("raw.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("odnmr.toml");
    std::fs::write(
        &config,
        "[noise]\nreadout_noise = 0.02\n[experiment]\nkind = \"odnmr_scan\"\nseed = 5\nparameters = { points = 21, repetitions = 3 }\n",
    )
    .map_err(|e| e.to_string())?;
    let reference = raw_csv(&config, dir.path(), 1)?;
    for jobs in [2, 3, 8] {
        ensure(raw_csv(&config, dir.path(), jobs)? == reference, format!("raw.csv differs at --jobs {jobs}"))?;
    }
    Ok(format!("{} bytes identical at --jobs 1, 2, 3, 8", reference.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Rabi power law", rabi_power_law),
        ("OU Monte Carlo oracle", ou_oracle),
        ("small-tau scaling", small_tau_scaling),
        ("Hahn-echo calibration", hahn_calibration),
        ("spin T1 round trip", spin_t1),
        ("ODNMR lines", odnmr_lines),
        ("correlation scan", correlation),
        ("closed-form checks", closed_forms),
        ("invariant suites", invariants),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail} ({secs:.1} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {why} ({secs:.1} s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
