//! Monte Carlo versus closed-form CPMG visibility for the configured bath.

use odnmr::config::RunConfig;
use odnmr::dynamics::ou::one_over_e_time;
use odnmr::dynamics::{mc_cpmg_visibility, ou_visibility_analytic, NoiseMode};
use odnmr::seed::derive_path;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// No usable standard error (e.g. a single trajectory).
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Case {
    pub n: usize,
    pub tau_s: f64,
    pub total_s: f64,
    pub analytic: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub z: f64,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub sigma: f64,
    pub sigma_mc: f64,
    pub tau_c: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub z_threshold: f64,
    pub cases: Vec<Case>,
    pub max_abs_z: f64,
    pub n_failed: usize,
    pub n_inconclusive: usize,
    pub passed: bool,
}

fn log_space(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if se == 0.0 && diff.abs() < 1e-12 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

/// Pulse spacings default to total times from 0.1 to 2 times the 1/e time
/// of each order.
pub fn run(cfg: &RunConfig) -> odnmr::Result<Report> {
    let o = &cfg.oracle;
    let (sigma, tau_c) = (cfg.noise.ou_sigma, cfg.noise.ou_tau_c);
    let sigma_mc = sigma * o.sigma_mismatch;
    let n_traj = o.n_trajectories.unwrap_or(match cfg.noise.mode {
        NoiseMode::MonteCarlo { n_trajectories, .. } => n_trajectories,
        NoiseMode::Analytic => 2000,
    });

    let mut cases = Vec::new();
    for &n in &o.orders {
        let taus = match (o.tau_min, o.tau_max) {
            (Some(a), Some(b)) => log_space(a.0, b.0, o.tau_points),
            (a, b) => {
                let t_e = one_over_e_time(n, sigma, tau_c)?;
                let (lo, hi) = if t_e.is_finite() {
                    (0.1 * t_e / n as f64, 2.0 * t_e / n as f64)
                } else {
                    (tau_c / 100.0, tau_c)
                };
                log_space(a.map_or(lo, |q| q.0), b.map_or(hi, |q| q.0), o.tau_points)
            }
        };
        for (j, &tau) in taus.iter().enumerate() {
            let analytic = ou_visibility_analytic(n, tau, sigma, tau_c, 1.0);
            let mc = mc_cpmg_visibility(n, tau, sigma_mc, tau_c, n_traj, derive_path(o.seed, &[n as u64, j as u64]));
            let z = z_score(mc.mean - analytic, mc.std_error);
            let status = if z.is_nan() {
                Status::Inconclusive
            } else if z.abs() < o.z_threshold {
                Status::Pass
            } else {
                Status::Fail
            };
            cases.push(Case {
                n,
                tau_s: tau,
                total_s: n as f64 * tau,
                analytic,
                mc_mean: mc.mean,
                mc_std_error: mc.std_error,
                z,
                status,
            });
        }
    }
    let max_abs_z = cases.iter().map(|c| c.z.abs()).filter(|z| !z.is_nan()).fold(0.0, f64::max);
    let n_failed = cases.iter().filter(|c| c.status == Status::Fail).count();
    let n_inconclusive = cases.iter().filter(|c| c.status == Status::Inconclusive).count();
    Ok(Report {
        sigma,
        sigma_mc,
        tau_c,
        n_trajectories: n_traj,
        seed: o.seed,
        z_threshold: o.z_threshold,
        passed: n_failed == 0 && n_inconclusive == 0,
        cases,
        max_abs_z,
        n_failed,
        n_inconclusive,
    })
}
