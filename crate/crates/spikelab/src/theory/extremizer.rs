//! Extremizers of the potentials: the closed-form solution, the
//! state-evolution fixed point, and an independent numeric inf-sup solver.
//!
//! The SNR threshold is `lambda_it = 1/(rho_u rho_v sqrt(alpha_u alpha_v))`.
//! At or below it the only extremizer is the origin and the limiting matrix
//! MMSE stays at the trivial value `rho_u rho_v`; above it the extremizer is
//!
//! ```text
//!   m_u* = (lam^2 a_u a_v rho_u^2 rho_v^2 - 1) / (lam a_u rho_v (1 + lam a_v rho_u rho_v)),
//!   m_v* = same with (u <-> v),
//! ```
//!
//! and the limiting MMSE drops to `rho_u rho_v - m_u* m_v*`.
//!
//! The numeric solver never touches those formulas: it maximizes over `m_v`
//! analytically (the inner function is strictly concave, its stationary point
//! is `m_u / (lam a_v rho_u (rho_u - m_u))`, clipped to the box) and
//! minimizes the resulting one-dimensional profile by a grid-seeded golden
//! section, polished by bisection on the profile's exact derivative. The two
//! routes agreeing is a standing cross-check.

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::theory::potential::{potential_i_grad, potential_i_unchecked, potential_phi_unchecked};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    BelowThreshold,
    AboveThreshold,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::BelowThreshold => "BelowThreshold",
            Branch::AboveThreshold => "AboveThreshold",
        })
    }
}

/// Solution of the inf-sup problem for the mutual-information potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremizerSolution {
    pub m_u_star: f64,
    pub m_v_star: f64,
    /// Value of the potential at the extremizer: the limiting mutual
    /// information per coordinate.
    pub value: f64,
    pub branch: Branch,
}

/// Information-theoretic SNR threshold. Ignores `theta.lambda`.
pub fn lambda_it(theta: &Hyperparams) -> f64 {
    1.0 / (theta.rho_u * theta.rho_v * (theta.alpha_u * theta.alpha_v).sqrt())
}

fn branch_of(theta: &Hyperparams) -> Branch {
    // Exactly at the threshold the extremizer is still the origin.
    if theta.lambda > lambda_it(theta) {
        Branch::AboveThreshold
    } else {
        Branch::BelowThreshold
    }
}

/// Closed-form extremizer of `inf_mu sup_mv i`.
pub fn closed_form_extremizer(theta: &Hyperparams) -> ExtremizerSolution {
    let Hyperparams { lambda, alpha_u, alpha_v, rho_u, rho_v } = *theta;
    match branch_of(theta) {
        Branch::BelowThreshold => ExtremizerSolution {
            m_u_star: 0.0,
            m_v_star: 0.0,
            value: potential_i_unchecked(theta, 0.0, 0.0),
            branch: Branch::BelowThreshold,
        },
        Branch::AboveThreshold => {
            let excess = lambda * lambda * alpha_u * alpha_v * rho_u * rho_u * rho_v * rho_v - 1.0;
            let m_u = excess / (lambda * alpha_u * rho_v * (1.0 + lambda * alpha_v * rho_u * rho_v));
            let m_v = excess / (lambda * alpha_v * rho_u * (1.0 + lambda * alpha_u * rho_u * rho_v));
            ExtremizerSolution {
                m_u_star: m_u,
                m_v_star: m_v,
                value: potential_i_unchecked(theta, m_u, m_v),
                branch: Branch::AboveThreshold,
            }
        }
    }
}

/// Limiting matrix MMSE: `rho_u rho_v - m_u* m_v*`. Equals `rho_u rho_v`
/// exactly iff `lambda <= lambda_it`.
pub fn limit_mmse(theta: &Hyperparams) -> f64 {
    let sol = closed_form_extremizer(theta);
    theta.rho_u * theta.rho_v - sol.m_u_star * sol.m_v_star
}

/// One application of the coordinate update maps:
/// returns `(f_u(m_v), f_v(m_u))` with
/// `f_u(m) = lam a_v rho_u^2 m / (1 + lam a_v rho_u m)` and `f_v` symmetric.
pub fn stationarity_maps(theta: &Hyperparams, m_u: f64, m_v: f64) -> (f64, f64) {
    (map_u(theta, m_v), map_v(theta, m_u))
}

#[inline]
pub(crate) fn map_u(theta: &Hyperparams, m_v: f64) -> f64 {
    let s = theta.lambda * theta.alpha_v * theta.rho_u * m_v;
    theta.rho_u * s / (1.0 + s)
}

#[inline]
pub(crate) fn map_v(theta: &Hyperparams, m_u: f64) -> f64 {
    let s = theta.lambda * theta.alpha_u * theta.rho_v * m_u;
    theta.rho_v * s / (1.0 + s)
}

/// Alternating fixed-point iteration `m_u <- f_u(m_v), m_v <- f_v(m_u)`.
/// Both maps are increasing and concave, so from any positive start the
/// iterates converge monotonically to the top fixed point; above the
/// threshold that is the closed-form extremizer, below it the origin.
pub fn state_evolution_solve(
    theta: &Hyperparams,
    init_m_v: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ExtremizerSolution> {
    theta.validate()?;
    if !(init_m_v > 0.0 && init_m_v <= theta.rho_v) {
        return Err(Error::InvalidArgument(format!(
            "init_m_v must lie in (0, rho_v], got {init_m_v}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let mut m_v = init_m_v;
    let mut m_u = 0.0;
    for iter in 1..=max_iter {
        m_u = map_u(theta, m_v);
        let next_v = map_v(theta, m_u);
        let delta = (next_v - m_v).abs();
        m_v = next_v;
        if delta < tol {
            return Ok(ExtremizerSolution {
                m_u_star: m_u,
                m_v_star: m_v,
                value: potential_i_unchecked(theta, m_u, m_v),
                branch: branch_of(theta),
            });
        }
        let _ = iter;
    }
    Err(Error::FixedPointDiverged { m_u, m_v, iterations: max_iter })
}

/// Argmax over `m_v` of `i(m_u, .)`, in closed form with clipping. Valid
/// because the inner function is strictly concave: the stationary point is
/// `m_u / (lam a_v rho_u (rho_u - m_u))`, which exits the box at
/// `m_u_bar = rho_u * lam a_v rho_u rho_v / (1 + lam a_v rho_u rho_v)`.
pub(crate) fn inner_argmax_m_v(theta: &Hyperparams, m_u: f64) -> f64 {
    let Hyperparams { lambda, alpha_v, rho_u, rho_v, .. } = *theta;
    let s = lambda * alpha_v * rho_u * rho_v;
    let m_u_bar = rho_u * s / (1.0 + s);
    if m_u >= m_u_bar {
        return rho_v;
    }
    (m_u / (lambda * alpha_v * rho_u * (rho_u - m_u))).clamp(0.0, rho_v)
}

/// Derivative of the inner-maximized profile `g(m_u) = i(m_u, argmax_v)`.
/// By the envelope theorem only the explicit m_u-derivative survives.
fn profile_derivative(theta: &Hyperparams, m_u: f64) -> f64 {
    let m_v = inner_argmax_m_v(theta, m_u);
    potential_i_grad(theta, m_u, m_v).0
}

/// Numeric inf-sup of the mutual-information potential. Independent of the
/// closed-form branch formulas.
///
/// Outer minimization: 64-interval grid seed (uniqueness of the extremizer
/// is known, unimodality over the whole box is not, so the grid guards
/// against landing in the wrong basin), golden-section refinement, then
/// bisection on the exact profile derivative for argument accuracy at the
/// rounding floor.
pub fn infsup_solve_numeric(theta: &Hyperparams, tol: f64) -> Result<ExtremizerSolution> {
    theta.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let rho_u = theta.rho_u;
    if theta.lambda == 0.0 {
        // The potential is identically zero.
        return Ok(ExtremizerSolution {
            m_u_star: 0.0,
            m_v_star: 0.0,
            value: 0.0,
            branch: Branch::BelowThreshold,
        });
    }
    let g = |m_u: f64| potential_i_unchecked(theta, m_u, inner_argmax_m_v(theta, m_u));

    const GRID: usize = 64;
    let mut best = (0usize, f64::INFINITY);
    for j in 0..=GRID {
        let m = rho_u * j as f64 / GRID as f64;
        let val = g(m);
        if val < best.1 {
            best = (j, val);
        }
    }
    let mut lo = rho_u * best.0.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = rho_u * (best.0 + 1).min(GRID) as f64 / GRID as f64;

    // Golden-section shrink. Value comparisons bottom out near sqrt(eps), so
    // stop at ~1e-9 * rho_u and hand over to the derivative bisection.
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let width_target = (tol * rho_u).min(1e-9 * rho_u);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..200 {
        if hi - lo <= width_target {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = g(x2);
        }
    }

    // Polish: root of the profile derivative. The derivative is an exact
    // formula, so its sign stays reliable far below the value-comparison
    // noise floor. It vanishes exactly at zero, is strictly positive at
    // rho_u, and crosses from negative to positive at an interior minimizer
    // when one exists, so a bisection with the left end anchored at a
    // nonpositive-sign point always converges to the minimizer.
    let slack = 64.0 * (hi - lo).max(1e-12 * rho_u);
    let mut b = (hi + slack).min(rho_u);
    let mut step = slack.max(1e-6 * rho_u);
    while b < rho_u && profile_derivative(theta, b) < 0.0 {
        b = (b + step).min(rho_u);
        step *= 2.0;
    }
    let mut a = (lo - slack).max(0.0);
    if a > 0.0 && profile_derivative(theta, a) > 0.0 {
        // the golden bracket drifted right of the minimizer (flat profile
        // near the threshold); restart from the exact-zero anchor
        a = 0.0;
    }
    let m_u_star = if profile_derivative(theta, b) < 0.0 {
        b
    } else {
        for _ in 0..120 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if profile_derivative(theta, mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };

    let m_v_star = inner_argmax_m_v(theta, m_u_star);
    Ok(ExtremizerSolution {
        m_u_star,
        m_v_star,
        value: potential_i_unchecked(theta, m_u_star, m_v_star),
        branch: branch_of(theta),
    })
}

/// Numeric sup-inf of the free-entropy potential (SNR folded into the radii,
/// i.e. the `lambda = 1` convention). Same structure as the inf-sup solver
/// with all signs flipped: the inner function is strictly convex with the
/// same clipped stationary point, the outer profile is maximized.
pub fn supinf_solve_phi(theta: &Hyperparams, tol: f64) -> Result<ExtremizerSolution> {
    theta.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let unit = Hyperparams { lambda: 1.0, ..*theta };
    let rho_u = theta.rho_u;
    let h = |m_u: f64| potential_phi_unchecked(&unit, m_u, inner_argmax_m_v(&unit, m_u));
    // d/dm_u of the inner-minimized profile, envelope theorem again:
    // (a_u a_v / 2) (f_v(m_u) - m_v*).
    let dh = |m_u: f64| {
        let m_v = inner_argmax_m_v(&unit, m_u);
        0.5 * theta.alpha_u * theta.alpha_v * (map_v(&unit, m_u) - m_v)
    };

    const GRID: usize = 64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for j in 0..=GRID {
        let m = rho_u * j as f64 / GRID as f64;
        let val = h(m);
        if val > best.1 {
            best = (j, val);
        }
    }
    let mut lo = rho_u * best.0.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = rho_u * (best.0 + 1).min(GRID) as f64 / GRID as f64;
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let width_target = (tol * rho_u).min(1e-9 * rho_u);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (h(x1), h(x2));
    for _ in 0..200 {
        if hi - lo <= width_target {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = h(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = h(x2);
        }
    }
    // maximization: derivative is positive left of the peak, zero exactly
    // at the origin, strictly negative at rho_u
    let slack = 64.0 * (hi - lo).max(1e-12 * rho_u);
    let mut b = (hi + slack).min(rho_u);
    let mut step = slack.max(1e-6 * rho_u);
    while b < rho_u && dh(b) > 0.0 {
        b = (b + step).min(rho_u);
        step *= 2.0;
    }
    let mut a = (lo - slack).max(0.0);
    if a > 0.0 && dh(a) < 0.0 {
        a = 0.0;
    }
    let m_u_star = if dh(b) > 0.0 {
        b
    } else {
        for _ in 0..120 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if dh(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let m_v_star = inner_argmax_m_v(&unit, m_u_star);
    Ok(ExtremizerSolution {
        m_u_star,
        m_v_star,
        value: potential_phi_unchecked(&unit, m_u_star, m_v_star),
        branch: branch_of(&unit),
    })
}

/// Consistency of the SNR-derivative of the inf-sup value with the limiting
/// MMSE: returns the absolute residual
/// `|d/dlam value - (a_u a_v / 2) limit_mmse|`, the derivative taken by a
/// central difference with step `dlambda`. Away from the threshold the
/// residual is O(dlambda^2); exactly at the threshold the value function has
/// a second-derivative kink and the residual degrades to O(dlambda).
pub fn i_mmse_consistency(theta: &Hyperparams, dlambda: f64) -> Result<f64> {
    theta.validate()?;
    if !(dlambda > 0.0) || theta.lambda - dlambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < dlambda < lambda, got dlambda={dlambda}, lambda={}",
            theta.lambda
        )));
    }
    let up = closed_form_extremizer(&theta.with_lambda(theta.lambda + dlambda)).value;
    let down = closed_form_extremizer(&theta.with_lambda(theta.lambda - dlambda)).value;
    let fd = (up - down) / (2.0 * dlambda);
    let predicted = 0.5 * theta.alpha_u * theta.alpha_v * limit_mmse(theta);
    Ok((fd - predicted).abs())
}
