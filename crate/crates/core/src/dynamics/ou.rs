//! Ornstein-Uhlenbeck dephasing bath.
//!
//! The bath detuning δ(t) is a stationary Gaussian process with variance σ²
//! and correlation e^{−|t|/τc}. Free evolution under δ accumulates the phase
//! ∫δ dt; the process value and its integral over a step are sampled jointly
//! from their exact conditional distribution, so Monte Carlo phases carry no
//! time-step bias.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seed;

/// Exact OU update of the value alone: δ' = δ e^{−h/τc} + σ √(1 − e^{−2h/τc}) ξ.
pub fn ou_step<R: Rng + ?Sized>(value: f64, sigma: f64, tau_c: f64, h: f64, rng: &mut R) -> f64 {
    let a = (-h / tau_c).exp();
    let xi: f64 = rng.sample(StandardNormal);
    value * a + sigma * (-(-2.0 * h / tau_c).exp_m1()).sqrt() * xi
}

/// Samples an OU trajectory on the grid t = 0, dt, 2dt, … ≤ duration
/// (all in seconds), starting from the stationary distribution.
pub fn ou_trajectory<R: Rng + ?Sized>(sigma: f64, tau_c: f64, duration: f64, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(tau_c > 0.0) || !(sigma >= 0.0) || !(duration >= 0.0) {
        return Err(Error::config("ou_trajectory needs dt > 0, tau_c > 0, sigma >= 0"));
    }
    let steps = (duration / dt + 1e-9).floor() as usize;
    let x0: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(steps + 1);
    let mut v = sigma * x0;
    out.push(v);
    for _ in 0..steps {
        v = ou_step(v, sigma, tau_c, dt, rng);
        out.push(v);
    }
    Ok(out)
}

/// 2x − 3 + 4e^{−x} − e^{−2x}, i.e. the unconditional-on-endpoint variance of
/// the step integral in units of (στc)².
fn integral_variance_factor(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_{k≥3} (−x)^k (4 − 2^k) / k!
        let mut term = -x * x * x / 6.0; // (−x)^3 / 3!
        let mut pow2 = 8.0;
        let mut sum = 0.0;
        for k in 3..40 {
            let t = term * (4.0 - pow2);
            sum += t;
            if t.abs() < 1e-18 * sum.abs() {
                break;
            }
            term *= -x / (k + 1) as f64;
            pow2 *= 2.0;
        }
        sum
    } else {
        let a = (-x).exp();
        2.0 * x - 3.0 + 4.0 * a - a * a
    }
}

/// Process state carried along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct OuProcess {
    pub sigma: f64,
    pub tau_c: f64,
    pub value: f64,
}

impl OuProcess {
    /// Starts from the stationary distribution N(0, σ²).
    pub fn stationary<R: Rng + ?Sized>(sigma: f64, tau_c: f64, rng: &mut R) -> Self {
        let x: f64 = rng.sample(StandardNormal);
        Self {
            sigma,
            tau_c,
            value: sigma * x,
        }
    }

    /// Advances by `h` seconds, returning ∫δ dt over the step.
    pub fn step<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) -> f64 {
        if h <= 0.0 {
            return 0.0;
        }
        let (s, tc, v) = (self.sigma, self.tau_c, self.value);
        let x = h / tc;
        let em1 = (-x).exp_m1(); // a − 1
        let a = 1.0 + em1;
        let one_minus_a = -em1;
        let var_v = -(-2.0 * x).exp_m1(); // 1 − a², in units of σ²
        let xi1: f64 = rng.sample(StandardNormal);
        let xi2: f64 = rng.sample(StandardNormal);

        let mean_i = v * tc * one_minus_a;
        self.value = v * a + s * var_v.sqrt() * xi1;
        if s == 0.0 || var_v == 0.0 {
            return mean_i;
        }
        // conditional moments of the integral given the endpoint
        let cov = s * tc * one_minus_a * one_minus_a; // / (σ √var_v) below
        let cond_var = (integral_variance_factor(x) - one_minus_a.powi(4) / var_v).max(0.0);
        mean_i + cov / var_v.sqrt() * xi1 + s * tc * cond_var.sqrt() * xi2
    }

    /// Advances by `h` seconds without tracking the integral.
    pub fn advance<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) {
        if h > 0.0 {
            self.value = ou_step(self.value, self.sigma, self.tau_c, h, rng);
        }
    }
}

/// (x − tanh x) / x
fn one_minus_tanhc(x: f64) -> f64 {
    if x < 0.05 {
        let x2 = x * x;
        x2 * (1.0 / 3.0 - x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0 - x2 * 62.0 / 2835.0)))
    } else {
        1.0 - x.tanh() / x
    }
}

/// 1 − sech x
fn one_minus_sech(x: f64) -> f64 {
    if x > 20.0 {
        1.0 - 2.0 * (-x).exp()
    } else {
        2.0 * (0.5 * x).sinh().powi(2) / x.cosh()
    }
}

fn parity_sign(n: usize) -> f64 {
    // (−1)^{N+1}
    if n % 2 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Decay exponent χ of the CPMG visibility a·e^{−χ} for `n` refocusing pulses
/// spaced by `tau` (s), bath coupling `sigma` (rad/s) and correlation time `tau_c` (s).
pub fn ou_exponent(n: usize, tau: f64, sigma: f64, tau_c: f64) -> f64 {
    let t = n as f64 * tau;
    let x = tau / (2.0 * tau_c);
    let e = (-t / tau_c).exp();
    let h = one_minus_sech(x);
    let braces = (t / tau_c) * one_minus_tanhc(x) - (1.0 + parity_sign(n) * e) * h * h;
    (sigma * tau_c).powi(2) * braces
}

/// Partial derivatives (∂χ/∂σ, ∂χ/∂τc) of [`ou_exponent`].
pub fn ou_exponent_gradient(n: usize, tau: f64, sigma: f64, tau_c: f64) -> (f64, f64) {
    let t = n as f64 * tau;
    let x = tau / (2.0 * tau_c);
    let e = (-t / tau_c).exp();
    let s = parity_sign(n);
    let h = one_minus_sech(x);
    let th = x.tanh();
    let sech = if x > 20.0 { 2.0 * (-x).exp() } else { 1.0 / x.cosh() };
    let braces = (t / tau_c) * one_minus_tanhc(x) - (1.0 + s * e) * h * h;
    let tc2 = tau_c * tau_c;
    let d_braces = -th * th * t / tc2 - s * e * (t / tc2) * h * h + 2.0 * (1.0 + s * e) * h * sech * th * x / tau_c;
    let d_sigma = 2.0 * sigma * tc2 * braces;
    let d_tau_c = sigma * sigma * (2.0 * tau_c * braces + tc2 * d_braces);
    (d_sigma, d_tau_c)
}

/// Closed-form CPMG visibility for an OU bath, with total evolution time t = n·τ.
pub fn ou_visibility_analytic(n: usize, tau: f64, sigma: f64, tau_c: f64, amplitude: f64) -> f64 {
    amplitude * (-ou_exponent(n, tau, sigma, tau_c)).exp()
}

/// ⟨φ²⟩/2 for a phase φ = ∫ s(t) δ(t) dt whose sign s(t) starts at +1 at
/// `centers[0]` and flips at every subsequent center up to the last one
/// (ideal instantaneous π pulses). Times in seconds.
pub fn dephasing_exponent(centers: &[f64], sigma: f64, tau_c: f64) -> f64 {
    if centers.len() < 2 || sigma == 0.0 {
        return 0.0;
    }
    let segs: Vec<(f64, f64, f64)> = centers
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[0], w[1], if i % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();
    let mut total = 0.0;
    for (i, &(a_i, b_i, s_i)) in segs.iter().enumerate() {
        let y = (b_i - a_i) / tau_c;
        // 2τc²(y − 1 + e^{−y})
        total += 2.0 * tau_c * tau_c * (y + (-y).exp_m1());
        let g_i = -(-y).exp_m1();
        for &(a_j, b_j, s_j) in &segs[i + 1..] {
            let g_j = -(-(b_j - a_j) / tau_c).exp_m1();
            let gap = (-(a_j - b_i) / tau_c).exp();
            total += 2.0 * s_i * s_j * tau_c * tau_c * gap * g_i * g_j;
        }
    }
    0.5 * sigma * sigma * total
}

/// Pulse centers (s) of an ideal CPMG-n train with spacing `tau`, starting at 0.
pub fn cpmg_centers(n: usize, tau: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(n + 2);
    c.push(0.0);
    c.extend((0..n).map(|k| (k as f64 + 0.5) * tau));
    c.push(n as f64 * tau);
    c
}

/// Total evolution time (s) at which the CPMG-n visibility has fallen to 1/e.
pub fn one_over_e_time(n: usize, sigma: f64, tau_c: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Ok(f64::INFINITY);
    }
    let f = |t: f64| ou_exponent(n, t / n as f64, sigma, tau_c) - 1.0;
    // short-time estimate (12 τc n² / σ²)^{1/3} as the starting bracket
    let guess = (12.0 * tau_c * (n * n) as f64 / (sigma * sigma)).cbrt();
    let (mut lo, mut hi) = (guess, guess);
    while f(lo) > 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::Bracket { lo, hi, f_lo: f(lo), f_hi: f(hi) });
        }
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Bracket { lo, hi, f_lo: f(lo), f_hi: f(hi) });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, std_error, n }
    }
}

/// Monte Carlo CPMG visibility ⟨cos φ⟩ with ideal instantaneous pulses.
///
/// Each trajectory draws its own generator from `seed` and its index; the
/// result does not depend on the number of threads.
pub fn mc_cpmg_visibility(n: usize, tau: f64, sigma: f64, tau_c: f64, n_trajectories: usize, seed: u64) -> McEstimate {
    let centers = cpmg_centers(n, tau);
    let samples: Vec<f64> = (0..n_trajectories as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng(seed::derive(seed, k));
            let mut ou = OuProcess::stationary(sigma, tau_c, &mut rng);
            let mut phase = 0.0;
            for (i, w) in centers.windows(2).enumerate() {
                let integral = ou.step(w[1] - w[0], &mut rng);
                phase += if i % 2 == 0 { integral } else { -integral };
            }
            phase.cos()
        })
        .collect();
    McEstimate::from_samples(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_gives_zero_trajectory() {
        let mut rng = seed::rng(3);
        let tr = ou_trajectory(0.0, 1e-2, 1.0, 1e-4, &mut rng).unwrap();
        assert_eq!(tr.len(), 10_001);
        assert!(tr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trajectory_variance_and_autocorrelation() {
        let (sigma, tau_c, dt) = (2.0, 1e-2, 1e-3);
        let mut rng = seed::rng(11);
        let tr = ou_trajectory(sigma, tau_c, 2000.0, dt, &mut rng).unwrap();
        let n = tr.len() as f64;
        let mean = tr.iter().sum::<f64>() / n;
        let var = tr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "var {var}");
        let lag = (tau_c / dt).round() as usize;
        let acf = tr.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>()
            / (tr.len() - lag) as f64;
        let expected = sigma * sigma / std::f64::consts::E;
        assert!((acf / expected - 1.0).abs() < 0.10, "acf {acf} vs {expected}");
    }

    #[test]
    fn tau_to_zero_keeps_amplitude() {
        let v = ou_visibility_analytic(4, 1e-12, 3e4, 1.3e-2, 0.8);
        assert!((v - 0.8).abs() < 1e-12);
    }

    #[test]
    fn small_tau_limit_is_cubic() {
        let (sigma, tau_c) = (2.6e4, 1.3e-2);
        for n in [1, 2, 4, 8] {
            let tau = tau_c / 100.0;
            let exact = ou_exponent(n, tau, sigma, tau_c);
            let approx = sigma * sigma * n as f64 * tau.powi(3) / (12.0 * tau_c);
            assert!((exact / approx - 1.0).abs() < 0.01, "n={n}: {exact} vs {approx}");
        }
    }

    #[test]
    fn one_over_e_scales_as_two_thirds_for_long_correlation() {
        let (sigma, tau_c) = (2.6e4, 10.0);
        let t1 = one_over_e_time(1, sigma, tau_c).unwrap();
        let t8 = one_over_e_time(8, sigma, tau_c).unwrap();
        assert!(((t8 / t1).ln() / 8f64.ln() - 2.0 / 3.0).abs() < 1e-3);
        assert!((ou_exponent(1, t1, sigma, tau_c) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn closed_form_matches_filter_function() {
        let (sigma, tau_c) = (2.6e4, 1.3e-2);
        for n in [1, 2, 3, 4, 8] {
            for tau in [1e-4, 1e-3, 1e-2, 5e-2] {
                let a = ou_exponent(n, tau, sigma, tau_c);
                let b = dephasing_exponent(&cpmg_centers(n, tau), sigma, tau_c);
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-6), "n={n} tau={tau}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for n in [1, 2, 5, 8] {
            for tau in [1e-5, 3e-4, 4e-3, 0.05] {
                let (sigma, tau_c) = (2.6e4, 1.3e-2);
                let (ds, dt) = ou_exponent_gradient(n, tau, sigma, tau_c);
                let hs = 1e-6 * sigma;
                let ht = 1e-6 * tau_c;
                let fs = (ou_exponent(n, tau, sigma + hs, tau_c) - ou_exponent(n, tau, sigma - hs, tau_c)) / (2.0 * hs);
                let ft = (ou_exponent(n, tau, sigma, tau_c + ht) - ou_exponent(n, tau, sigma, tau_c - ht)) / (2.0 * ht);
                assert!((ds - fs).abs() <= 1e-6 * fs.abs(), "dσ n={n} tau={tau}");
                assert!((dt - ft).abs() <= 1e-5 * ft.abs().max(1e-30), "dτc n={n} tau={tau}: {dt} vs {ft}");
            }
        }
    }

    #[test]
    fn step_integral_has_exact_moments() {
        // Var[∫δ] over h from stationary start = 2σ²τc²(x − 1 + e^{−x})
        let (sigma, tau_c, h) = (1.0, 1.0, 0.3);
        let m = 200_000;
        let mut rng = seed::rng(5);
        let mut s2 = 0.0;
        for _ in 0..m {
            let mut p = OuProcess::stationary(sigma, tau_c, &mut rng);
            let i = p.step(h, &mut rng);
            s2 += i * i;
        }
        let var = s2 / m as f64;
        let x: f64 = h / tau_c;
        let expected = 2.0 * (x - 1.0 + (-x).exp());
        assert!((var / expected - 1.0).abs() < 0.015, "{var} vs {expected}");
    }

    #[test]
    fn variance_factor_series_matches_direct_form() {
        for x in [0.1f64, 0.3, 0.49] {
            let a = (-x).exp();
            let direct = 2.0 * x - 3.0 + 4.0 * a - a * a;
            assert!((integral_variance_factor(x) / direct - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn monte_carlo_hahn_agrees_with_closed_form() {
        let (sigma, tau_c) = (2.6e4, 1.3e-2);
        for tau in [3e-4, 6e-4, 1.2e-3] {
            let mc = mc_cpmg_visibility(1, tau, sigma, tau_c, 2000, 99);
            let an = ou_visibility_analytic(1, tau, sigma, tau_c, 1.0);
            let z = (mc.mean - an) / mc.std_error;
            assert!(z.abs() < 4.0, "tau={tau}: mc {} an {an} z {z}", mc.mean);
        }
    }
}
