use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{check_grey_condition, FiniteTypeModel};

const ODE_TOL: f64 = 1e-10;
const SATURATION_TOL: f64 = 1e-6;
const MAX_LADDER: i32 = 20;
const MAX_ODE_STEPS: usize = 10_000_000;

fn rhs(model: &FiniteTypeModel, u: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mig: f64 = model.q[i].iter().zip(u).map(|(q, v)| q * v).sum();
        *o = mig - model.beta[i] * model.psi(i, u[i]);
    }
}

fn rk4(model: &FiniteTypeModel, u: &[f64], dt: f64) -> Vec<f64> {
    let n = u.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let shifted = |k: &[f64], c: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    rhs(model, u, &mut k1);
    rhs(model, &shifted(&k1, 0.5 * dt), &mut k2);
    rhs(model, &shifted(&k2, 0.5 * dt), &mut k3);
    rhs(model, &shifted(&k3, dt), &mut k4);
    (0..n)
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Solve `du/dt = Q u - beta psi(u)` from `u(0) = f` to `t` with adaptive
/// RK4 step doubling.
fn log_laplace(model: &FiniteTypeModel, f: &[f64], t: f64) -> Result<Vec<f64>> {
    let mut u = f.to_vec();
    let mut s = 0.0;
    let mut dt = (t / 64.0).max(1e-12);
    let mut steps = 0;
    while s < t {
        steps += 1;
        if steps > MAX_ODE_STEPS {
            return Err(Error::NoConvergence(format!(
                "log-Laplace ODE needed more than {MAX_ODE_STEPS} steps"
            )));
        }
        let dt_try = dt.min(t - s);
        let full = rk4(model, &u, dt_try);
        let half = rk4(model, &rk4(model, &u, 0.5 * dt_try), 0.5 * dt_try);
        let err = full
            .iter()
            .zip(&half)
            .map(|(a, b)| (a - b).abs() / (15.0 * b.abs().max(1.0)))
            .fold(0.0, f64::max);
        if !err.is_finite() {
            dt = 0.25 * dt_try;
            continue;
        }
        if err <= ODE_TOL {
            s += dt_try;
            // Richardson-corrected value of the two half steps
            u = half.iter().zip(&full).map(|(h, f)| h + (h - f) / 15.0).collect();
        }
        let factor = if err == 0.0 { 4.0 } else { 0.9 * (ODE_TOL / err).powf(0.2) };
        dt = dt_try * factor.clamp(0.2, 4.0);
    }
    Ok(u)
}

/// `E exp(-<X_t, f>)` started from `mu0`, for `f >= 0`.
pub fn laplace_functional(model: &FiniteTypeModel, f: &[f64], t: f64, mu0: &[f64]) -> Result<f64> {
    let n = model.n_types();
    if f.len() != n || mu0.len() != n {
        return Err(Error::Domain("f and mu0 must have one entry per type".into()));
    }
    if f.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain("need f >= 0 and finite t >= 0".into()));
    }
    let u = log_laplace(model, f, t)?;
    Ok((-u.iter().zip(mu0).map(|(a, b)| a * b).sum::<f64>()).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtinctionEstimate {
    pub probability: f64,
    /// Last change of the extrapolated value along the `theta` ladder.
    pub change: f64,
    pub theta: f64,
}

/// `P(X_t = 0)` as the limit of `E exp(-theta <X_t, 1>)` along
/// `theta = 2^k`, with Richardson extrapolation in `1 / theta`.
pub fn extinction_probability(
    model: &FiniteTypeModel,
    t: f64,
    mu0: &[f64],
) -> Result<ExtinctionEstimate> {
    if !check_grey_condition(model) {
        return Err(Error::Domain(
            "extinction probability needs beta_i b_i > 0 for every type".into(),
        ));
    }
    let n = model.n_types();
    if mu0.iter().all(|&v| v == 0.0) {
        return Ok(ExtinctionEstimate {
            probability: 1.0,
            change: 0.0,
            theta: 0.0,
        });
    }
    let mut prev_plain: Option<f64> = None;
    let mut prev_extrap: Option<f64> = None;
    let mut last_change = f64::INFINITY;
    for k in 0..=MAX_LADDER {
        let theta = 2f64.powi(k);
        let p = laplace_functional(model, &vec![theta; n], t, mu0)?;
        if let Some(pp) = prev_plain {
            let extrap = 2.0 * p - pp;
            if let Some(pe) = prev_extrap {
                last_change = (extrap - pe).abs();
                if last_change < SATURATION_TOL {
                    return Ok(ExtinctionEstimate {
                        probability: extrap.clamp(0.0, 1.0),
                        change: last_change,
                        theta,
                    });
                }
            }
            prev_extrap = Some(extrap);
        }
        prev_plain = Some(p);
    }
    Err(Error::NoConvergence(format!(
        "extinction probability did not saturate by theta = 2^{MAX_LADDER} (last change {last_change:e})"
    )))
}
