//! Bounded Levenberg-Marquardt least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A weighted least-squares problem: minimize Σ rᵢ(p)².
pub trait Problem {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// Residuals r = √w·(y − f(p)).
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// ∂r/∂p, shape n_residuals × n_params.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn label(&self) -> String;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Tolerance on the scaled gradient (cosine of residual and Jacobian columns).
    pub atol: f64,
    /// Relative tolerance on parameter steps and cost reduction.
    pub rtol: f64,
    /// Multiplicative damping factor.
    pub nu: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            atol: 1e-10,
            rtol: 1e-8,
            nu: 10.0,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Σ r².
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn project(p: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, &l), &h) in p.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(l, h);
    }
}

/// Minimizes the problem from `init`.
///
/// Steps solve (JᵀJ + λ·diag JᵀJ) δ = −Jᵀr; accepted steps divide λ by ν and
/// rejected ones multiply it. Iterates are projected onto the bounds.
/// Converges when the relative step, the relative cost reduction or the
/// scaled gradient falls below tolerance.
pub fn levenberg_marquardt<P: Problem + ?Sized>(problem: &P, init: &[f64], opts: &LmOptions) -> Result<LmOutcome> {
    let np = problem.n_params();
    let nr = problem.n_residuals();
    if init.len() != np {
        return Err(Error::Fit(format!("{}: expected {np} initial parameters, got {}", problem.label(), init.len())));
    }
    if nr < np {
        return Err(Error::Fit(format!("{}: {nr} points cannot determine {np} parameters", problem.label())));
    }
    let (lo, hi) = problem.bounds();
    for (i, &v) in init.iter().enumerate() {
        if !v.is_finite() || v < lo[i] || v > hi[i] {
            return Err(Error::Fit(format!(
                "{}: initial parameter {i} = {v} outside [{}, {}]",
                problem.label(),
                lo[i],
                hi[i]
            )));
        }
    }

    let mut p = init.to_vec();
    let mut r = vec![0.0; nr];
    problem.residuals(&p, &mut r);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(format!("{}: non-finite residuals at the initial point", problem.label())));
    }
    let mut cost = cost_of(&r);
    let mut jac = DMatrix::zeros(nr, np);
    problem.jacobian(&p, &mut jac);
    for j in 0..np {
        if jac.column(j).iter().all(|&v| v == 0.0) {
            return Err(Error::RankDeficient { model: problem.label() });
        }
    }

    let mut lambda = opts.lambda0;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; np];
    let mut r_trial = vec![0.0; nr];

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let diag: Vec<f64> = (0..np).map(|i| a[(i, i)].max(1e-300)).collect();
        // largest cosine between the residual and a Jacobian column
        let rnorm = cost.sqrt();
        let gscale = (0..np)
            .map(|i| {
                let cn = jac.column(i).norm();
                if cn == 0.0 || rnorm == 0.0 {
                    0.0
                } else {
                    g[i].abs() / (cn * rnorm)
                }
            })
            .fold(0.0, f64::max);
        if cost == 0.0 || gscale <= opts.atol {
            converged = true;
            break;
        }

        loop {
            let mut m = a.clone();
            for i in 0..np {
                m[(i, i)] += lambda * diag[i];
            }
            let step = match m.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match m.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= opts.nu;
                        if lambda > 1e20 {
                            break 'outer;
                        }
                        continue;
                    }
                },
            };
            for i in 0..np {
                trial[i] = p[i] + step[i];
            }
            project(&mut trial, &lo, &hi);
            problem.residuals(&trial, &mut r_trial);
            let new_cost = cost_of(&r_trial);
            if new_cost.is_finite() && new_cost <= cost {
                let small_step = (0..np).all(|i| (trial[i] - p[i]).abs() <= opts.rtol * (p[i].abs() + opts.rtol));
                let small_gain = cost - new_cost <= opts.rtol * cost && new_cost > 0.0;
                std::mem::swap(&mut p, &mut trial);
                std::mem::swap(&mut r, &mut r_trial);
                cost = new_cost;
                lambda = (lambda / opts.nu).max(1e-15);
                problem.jacobian(&p, &mut jac);
                if small_step || small_gain {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= opts.nu;
            if lambda > 1e20 {
                // no descent at working precision: converged if the step is negligible
                converged = (0..np).all(|i| step[i].abs() <= opts.rtol * (p[i].abs() + opts.rtol));
                break 'outer;
            }
        }
    }

    let std_errors = standard_errors(&jac, cost, nr, np);
    Ok(LmOutcome {
        params: p,
        std_errors,
        cost,
        converged,
        iterations,
    })
}

/// √diag((JᵀJ)⁻¹)·s with s² = cost/(n − p); undetermined directions get ∞.
fn standard_errors(jac: &DMatrix<f64>, cost: f64, nr: usize, np: usize) -> Vec<f64> {
    let dof = (nr - np).max(1) as f64;
    let s2 = cost / dof;
    // scale columns to unit norm before inverting
    let norms: Vec<f64> = (0..np).map(|j| jac.column(j).norm()).collect();
    let mut scaled = jac.clone();
    for (j, &n) in norms.iter().enumerate() {
        if n > 0.0 {
            scaled.column_mut(j).scale_mut(1.0 / n);
        }
    }
    let a = scaled.transpose() * &scaled;
    if a.iter().any(|v| !v.is_finite()) {
        return vec![f64::INFINITY; np];
    }
    let Some(svd) = a.try_svd(true, true, 1e-15, 10_000) else {
        return vec![f64::INFINITY; np];
    };
    let smax = svd.singular_values.max();
    let (Some(u), Some(vt)) = (svd.u, svd.v_t) else {
        return vec![f64::INFINITY; np];
    };
    (0..np)
        .map(|i| {
            if norms[i] == 0.0 {
                return f64::INFINITY;
            }
            let mut var = 0.0;
            for k in 0..np {
                let s = svd.singular_values[k];
                if s <= 1e-14 * smax {
                    if u[(i, k)].abs() > 1e-8 {
                        return f64::INFINITY;
                    }
                    continue;
                }
                var += vt[(k, i)] * u[(i, k)] / s;
            }
            (s2 * var.max(0.0)).sqrt() / norms[i]
        })
        .collect()
}
