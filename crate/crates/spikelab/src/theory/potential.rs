//! Scalar potentials behind the asymptotic mutual-information formula.
//!
//! Two equivalent variational problems are used throughout:
//!
//! ```text
//!   mi potential     i(m_u, m_v) = (lam a_u a_v / 2)(rho_u - m_u)(rho_v - m_v)
//!                                + (a_u/2) ln(1 + lam a_v rho_u m_v)
//!                                + (a_v/2) ln(1 + lam a_u rho_v m_u)
//!
//!   free-entropy     phi(m_u, m_v) = a_u vphi(a_v rho_u m_v)
//!                                  + a_v vphi(a_u rho_v m_u)
//!                                  - a_u a_v m_u m_v / 2
//! ```
//!
//! with the elementary kernel `vphi(m) = (m - ln(1+m))/2`. The limiting
//! mutual information per coordinate is `inf_mu sup_mv i`, the limiting free
//! entropy is `sup_mu inf_mv phi`, and at `lambda = 1` the two are pointwise
//! complementary: `i + phi = a_u a_v rho_u rho_v / 2`.

use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// `(m - ln(1+m))/2`. Nonnegative and convex on `m >= 0`.
pub fn varphi(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::InvalidArgument(format!("varphi requires m >= 0, got {m}")));
    }
    Ok(0.5 * (m - m.ln_1p()))
}

/// Derivative of `varphi`: `m / (2(1+m))`. Lands in `[0, 1/2)` for `m >= 0`.
pub fn varphi_prime(m: f64) -> f64 {
    0.5 * m / (1.0 + m)
}

/// Limiting mutual information of the scalar spherical channel at SNR `m`:
/// `ln(1+m)/2`.
pub fn scalar_channel_mi(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scalar_channel_mi requires m >= 0, got {m}"
        )));
    }
    Ok(0.5 * m.ln_1p())
}

fn check_box(theta: &Hyperparams, m_u: f64, m_v: f64) -> Result<()> {
    if !(0.0..=theta.rho_u).contains(&m_u) || !(0.0..=theta.rho_v).contains(&m_v) {
        return Err(Error::InvalidArgument(format!(
            "(m_u, m_v) = ({m_u}, {m_v}) outside [0, {}] x [0, {}]",
            theta.rho_u, theta.rho_v
        )));
    }
    Ok(())
}

/// Mutual-information potential `i(m_u, m_v)`.
pub fn potential_i(theta: &Hyperparams, m_u: f64, m_v: f64) -> Result<f64> {
    check_box(theta, m_u, m_v)?;
    Ok(potential_i_unchecked(theta, m_u, m_v))
}

/// Same as [`potential_i`] without the box check; used by optimizers whose
/// iterates are clipped to the box already.
pub(crate) fn potential_i_unchecked(theta: &Hyperparams, m_u: f64, m_v: f64) -> f64 {
    let Hyperparams { lambda, alpha_u, alpha_v, rho_u, rho_v } = *theta;
    0.5 * lambda * alpha_u * alpha_v * (rho_u - m_u) * (rho_v - m_v)
        + 0.5 * alpha_u * (lambda * alpha_v * rho_u * m_v).ln_1p()
        + 0.5 * alpha_v * (lambda * alpha_u * rho_v * m_u).ln_1p()
}

/// Gradient of `i` in `(m_u, m_v)`, in closed form.
pub(crate) fn potential_i_grad(theta: &Hyperparams, m_u: f64, m_v: f64) -> (f64, f64) {
    let Hyperparams { lambda, alpha_u, alpha_v, rho_u, rho_v } = *theta;
    let du = -0.5 * lambda * alpha_u * alpha_v * (rho_v - m_v)
        + 0.5 * alpha_v * lambda * alpha_u * rho_v / (1.0 + lambda * alpha_u * rho_v * m_u);
    let dv = -0.5 * lambda * alpha_u * alpha_v * (rho_u - m_u)
        + 0.5 * alpha_u * lambda * alpha_v * rho_u / (1.0 + lambda * alpha_v * rho_u * m_v);
    (du, dv)
}

/// Free-entropy potential `phi(m_u, m_v)`. Does not involve `lambda`; the
/// complementarity with `i` holds at `lambda = 1` (SNR folded into `rho_u`).
pub fn potential_phi(theta: &Hyperparams, m_u: f64, m_v: f64) -> Result<f64> {
    check_box(theta, m_u, m_v)?;
    Ok(potential_phi_unchecked(theta, m_u, m_v))
}

pub(crate) fn potential_phi_unchecked(theta: &Hyperparams, m_u: f64, m_v: f64) -> f64 {
    let Hyperparams { alpha_u, alpha_v, rho_u, rho_v, .. } = *theta;
    let vphi = |m: f64| 0.5 * (m - m.ln_1p());
    alpha_u * vphi(alpha_v * rho_u * m_v) + alpha_v * vphi(alpha_u * rho_v * m_u)
        - 0.5 * alpha_u * alpha_v * m_u * m_v
}
