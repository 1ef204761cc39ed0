//! Interpolating-path ODE. A time parameter `t` trades the matrix
//! observation (weight `1 - t`) against a pair of decoupled vector channels
//! whose SNRs are the accumulated path `R(t) = (R_u, R_v)`. The path solves
//!
//! ```text
//!   R_v'(t) = F_v(t, R(t))            (overlap reported by the oracle)
//!   R_u'(t) = m_u_const               (lower-bound mode)
//!          or 2 rho_u phi'(alpha_v rho_u F_v)   (upper-bound mode)
//! ```
//!
//! from `R(0) = epsilon`, integrated with fixed-step classical RK4. The
//! oracle is the only model-dependent input: anything reporting the mean
//! v-overlap of the interpolating system can be plugged in, from the exact
//! state-evolution surrogate to a sampling estimate.
//!
//! The oracle output is checked on every evaluation: values outside
//! `[0, rho_v]` (or NaN) abort the integration with the offending time
//! attached, since a single out-of-range report silently corrupts the whole
//! downstream bound.

use crate::error::{Error, Result};
use crate::model::Hyperparams;
use crate::theory::potential::varphi_prime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathMode {
    /// Freeze the u-rate at a constant supplied by the caller.
    LowerBound,
    /// Slave the u-rate to the reported v-overlap.
    UpperBound,
}

impl std::fmt::Display for PathMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PathMode::LowerBound => "lower",
            PathMode::UpperBound => "upper",
        })
    }
}

/// Discretized solution of the path ODE on the uniform grid `t_k = k/steps`.
/// The `*_prime` arrays hold the right-hand side evaluated at the grid
/// points themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPath {
    pub epsilon: (f64, f64),
    pub grid: Vec<f64>,
    pub r_u: Vec<f64>,
    pub r_v: Vec<f64>,
    pub r_u_prime: Vec<f64>,
    pub r_v_prime: Vec<f64>,
}

impl InterpolationPath {
    pub fn final_point(&self) -> (f64, f64) {
        (*self.r_u.last().unwrap(), *self.r_v.last().unwrap())
    }
}

/// Integrate the path ODE. `overlap_oracle(t, (r_u, r_v))` must return the
/// mean v-overlap of the interpolating system, in `[0, rho_v]`.
///
/// `m_u_const` is required in lower-bound mode and must be absent in
/// upper-bound mode; passing it there would be ignored silently, which is
/// treated as a caller bug.
pub fn integrate_interpolation_path<F>(
    theta: &Hyperparams,
    epsilon: (f64, f64),
    mode: PathMode,
    m_u_const: Option<f64>,
    mut overlap_oracle: F,
    steps: usize,
) -> Result<InterpolationPath>
where
    F: FnMut(f64, (f64, f64)) -> f64,
{
    theta.validate()?;
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one integration step".into()));
    }
    if !(epsilon.0 >= 0.0 && epsilon.1 >= 0.0 && epsilon.0.is_finite() && epsilon.1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon components must be finite and >= 0, got {epsilon:?}"
        )));
    }
    let u_rate_const = match (mode, m_u_const) {
        (PathMode::LowerBound, Some(m)) => {
            if !(m >= 0.0 && m <= theta.rho_u) {
                return Err(Error::InvalidArgument(format!(
                    "m_u_const must lie in [0, rho_u], got {m}"
                )));
            }
            Some(m)
        }
        (PathMode::LowerBound, None) => {
            return Err(Error::InvalidArgument("lower-bound mode needs m_u_const".into()));
        }
        (PathMode::UpperBound, Some(_)) => {
            return Err(Error::InvalidArgument("m_u_const has no effect in upper-bound mode".into()));
        }
        (PathMode::UpperBound, None) => None,
    };

    let rho_v = theta.rho_v;
    let mut rhs = |t: f64, r: (f64, f64)| -> Result<(f64, f64)> {
        let f_v = overlap_oracle(t, r);
        if !(f_v >= 0.0 && f_v <= rho_v) {
            return Err(Error::OracleContract { t, value: f_v, upper: rho_v });
        }
        let du = match u_rate_const {
            Some(m) => m,
            None => 2.0 * theta.rho_u * varphi_prime(theta.alpha_v * theta.rho_u * f_v),
        };
        Ok((du, f_v))
    };

    let h = 1.0 / steps as f64;
    let mut r = epsilon;
    let mut path = InterpolationPath {
        epsilon,
        grid: Vec::with_capacity(steps + 1),
        r_u: Vec::with_capacity(steps + 1),
        r_v: Vec::with_capacity(steps + 1),
        r_u_prime: Vec::with_capacity(steps + 1),
        r_v_prime: Vec::with_capacity(steps + 1),
    };
    for k in 0..steps {
        let t = k as f64 / steps as f64;
        let k1 = rhs(t, r)?;
        path.grid.push(t);
        path.r_u.push(r.0);
        path.r_v.push(r.1);
        path.r_u_prime.push(k1.0);
        path.r_v_prime.push(k1.1);
        let k2 = rhs(t + 0.5 * h, (r.0 + 0.5 * h * k1.0, r.1 + 0.5 * h * k1.1))?;
        let k3 = rhs(t + 0.5 * h, (r.0 + 0.5 * h * k2.0, r.1 + 0.5 * h * k2.1))?;
        let k4 = rhs(t + h, (r.0 + h * k3.0, r.1 + h * k3.1))?;
        r.0 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        r.1 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    let k1 = rhs(1.0, r)?;
    path.grid.push(1.0);
    path.r_u.push(r.0);
    path.r_v.push(r.1);
    path.r_u_prime.push(k1.0);
    path.r_v_prime.push(k1.1);
    Ok(path)
}

/// Deterministic stand-in for a sampling oracle: the overlap pair solves the
/// coupled fixed point
///
/// ```text
///   gamma_v = alpha_u ((1-t) lambda m_u + R_u),  m_v = rho_v^2 gamma_v / (1 + rho_v gamma_v),
///   gamma_u = alpha_v ((1-t) lambda m_v + R_v),  m_u = rho_u^2 gamma_u / (1 + rho_u gamma_u),
/// ```
///
/// iterated downward from `(rho_u, rho_v)`. At `t = 0`, `R = 0` this is the
/// stationarity fixed point of the matrix problem; at `t = 1` it decouples
/// into the two scalar channels.
pub fn se_surrogate_overlap(theta: &Hyperparams, t: f64, r: (f64, f64)) -> f64 {
    let Hyperparams { lambda, alpha_u, alpha_v, rho_u, rho_v } = *theta;
    let w = (1.0 - t) * lambda;
    let (mut m_u, mut m_v) = (rho_u, rho_v);
    for _ in 0..2000 {
        let gamma_v = alpha_u * (w * m_u + r.0);
        let next_v = rho_v * rho_v * gamma_v / (1.0 + rho_v * gamma_v);
        let gamma_u = alpha_v * (w * next_v + r.1);
        let next_u = rho_u * rho_u * gamma_u / (1.0 + rho_u * gamma_u);
        let delta = (next_u - m_u).abs().max((next_v - m_v).abs());
        m_u = next_u;
        m_v = next_v;
        if delta < 1e-13 {
            break;
        }
    }
    m_v.clamp(0.0, rho_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::extremizer::{closed_form_extremizer, stationarity_maps};

    fn ones(lambda: f64) -> Hyperparams {
        Hyperparams::symmetric(lambda)
    }

    #[test]
    fn zero_oracle_keeps_the_path_at_epsilon() {
        let theta = ones(2.0);
        let eps = (0.07, 0.03);
        let lower =
            integrate_interpolation_path(&theta, eps, PathMode::LowerBound, Some(0.0), |_, _| 0.0, 64)
                .unwrap();
        let upper =
            integrate_interpolation_path(&theta, eps, PathMode::UpperBound, None, |_, _| 0.0, 64)
                .unwrap();
        for path in [lower, upper] {
            assert_eq!(path.grid.len(), 65);
            for k in 0..path.grid.len() {
                assert_eq!(path.r_u[k], eps.0);
                assert_eq!(path.r_v[k], eps.1);
                assert_eq!(path.r_u_prime[k], 0.0);
                assert_eq!(path.r_v_prime[k], 0.0);
            }
        }
    }

    #[test]
    fn constant_oracle_integrates_exactly() {
        // RK4 is exact on constant right-hand sides, so these are closed
        // forms up to rounding.
        let theta = ones(2.0);
        let eps = (0.1, 0.1);
        let upper =
            integrate_interpolation_path(&theta, eps, PathMode::UpperBound, None, |_, _| 1.0, 64)
                .unwrap();
        // 2 phi'(1) = 1/2
        for (k, &t) in upper.grid.iter().enumerate() {
            assert!((upper.r_u[k] - (eps.0 + 0.5 * t)).abs() < 1e-10, "t = {t}");
            assert!((upper.r_v[k] - (eps.1 + t)).abs() < 1e-10, "t = {t}");
        }
        assert!((upper.final_point().0 - 0.6).abs() < 1e-10);
        assert!((upper.final_point().1 - 1.1).abs() < 1e-10);

        let lower = integrate_interpolation_path(
            &theta,
            (0.0, 0.0),
            PathMode::LowerBound,
            Some(0.25),
            |_, _| 0.7,
            64,
        )
        .unwrap();
        for (k, &t) in lower.grid.iter().enumerate() {
            assert!((lower.r_u[k] - 0.25 * t).abs() < 1e-10);
            assert!((lower.r_v[k] - 0.7 * t).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_contract_violation_reports_the_time() {
        let theta = ones(2.0);
        let err = integrate_interpolation_path(
            &theta,
            (0.0, 0.0),
            PathMode::UpperBound,
            None,
            |t, _| if t >= 0.5 { theta.rho_v + 0.1 } else { 0.3 },
            10,
        )
        .unwrap_err();
        match err {
            Error::OracleContract { t, value, upper } => {
                assert!((0.45..=0.55).contains(&t), "t = {t}");
                assert!((value - 1.1).abs() < 1e-12);
                assert_eq!(upper, 1.0);
            }
            other => panic!("expected oracle contract error, got {other:?}"),
        }
        let err = integrate_interpolation_path(
            &theta,
            (0.0, 0.0),
            PathMode::UpperBound,
            None,
            |_, _| f64::NAN,
            10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::OracleContract { .. }));
    }

    #[test]
    fn rejects_inconsistent_arguments() {
        let theta = ones(2.0);
        let oracle = |_: f64, _: (f64, f64)| 0.5;
        assert!(integrate_interpolation_path(&theta, (0.0, 0.0), PathMode::LowerBound, None, oracle, 8)
            .is_err());
        assert!(integrate_interpolation_path(
            &theta,
            (0.0, 0.0),
            PathMode::UpperBound,
            Some(0.1),
            oracle,
            8
        )
        .is_err());
        assert!(integrate_interpolation_path(
            &theta,
            (-0.1, 0.0),
            PathMode::UpperBound,
            None,
            oracle,
            8
        )
        .is_err());
        assert!(
            integrate_interpolation_path(&theta, (0.0, 0.0), PathMode::UpperBound, None, oracle, 0)
                .is_err()
        );
        assert!(integrate_interpolation_path(
            &theta,
            (0.0, 0.0),
            PathMode::LowerBound,
            Some(5.0),
            oracle,
            8
        )
        .is_err());
    }

    #[test]
    fn surrogate_reduces_to_known_endpoints() {
        let theta = ones(2.0);
        // t = 0, R = 0: stationarity fixed point of the matrix problem
        let m_v = se_surrogate_overlap(&theta, 0.0, (0.0, 0.0));
        assert!((m_v - 0.5).abs() < 1e-9, "m_v = {m_v}");
        // consistency: the overlap is a fixed point of the composed map
        let m_u = 2.0 * 0.5 / (1.0 + 2.0 * 0.5);
        let (_, f_v) = stationarity_maps(&theta, m_u, 0.0);
        assert!((f_v - m_v).abs() < 1e-9);
        // t = 1: decoupled scalar channel with SNR alpha_u R_u
        let m_v = se_surrogate_overlap(&theta, 1.0, (0.3, 0.9));
        assert!((m_v - 0.3 / 1.3).abs() < 1e-12, "m_v = {m_v}");
        // and independent of lambda there
        let m_v_other = se_surrogate_overlap(&ones(0.2), 1.0, (0.3, 0.9));
        assert!((m_v - m_v_other).abs() < 1e-12);
    }

    #[test]
    fn surrogate_paths_are_monotone_and_boxed() {
        for lambda in [0.5, 2.0] {
            let theta = ones(lambda);
            let m_star = closed_form_extremizer(&theta).m_u_star;
            for eps in [(0.0, 0.0), (0.1, 0.1)] {
                for mode in [PathMode::LowerBound, PathMode::UpperBound] {
                    let m_const =
                        if mode == PathMode::LowerBound { Some(m_star) } else { None };
                    let path = integrate_interpolation_path(
                        &theta,
                        eps,
                        mode,
                        m_const,
                        |t, r| se_surrogate_overlap(&theta, t, r),
                        50,
                    )
                    .unwrap();
                    for k in 1..path.grid.len() {
                        assert!(path.r_u[k] >= path.r_u[k - 1] - 1e-12);
                        assert!(path.r_v[k] >= path.r_v[k - 1] - 1e-12);
                    }
                    let (ru1, rv1) = path.final_point();
                    assert!(ru1 >= eps.0 - 1e-12 && ru1 <= eps.0 + theta.rho_u + 1e-9);
                    assert!(rv1 >= eps.1 - 1e-12 && rv1 <= eps.1 + theta.rho_v + 1e-9);
                }
            }
        }
    }

    #[test]
    fn paths_do_not_cross_in_epsilon() {
        let theta = ones(2.0);
        let run = |eps: (f64, f64)| {
            integrate_interpolation_path(
                &theta,
                eps,
                PathMode::UpperBound,
                None,
                |t, r| se_surrogate_overlap(&theta, t, r),
                50,
            )
            .unwrap()
        };
        let small = run((0.0, 0.0));
        let big = run((0.1, 0.1));
        for k in 0..small.grid.len() {
            assert!(big.r_u[k] >= small.r_u[k] - 1e-9, "crossing at k={k}");
            assert!(big.r_v[k] >= small.r_v[k] - 1e-9, "crossing at k={k}");
        }
    }
}
