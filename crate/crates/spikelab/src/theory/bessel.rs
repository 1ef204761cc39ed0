//! Log-space modified Bessel functions and the sphere log-partition.
//!
//! The partition function of a linear tilt on the uniform sphere measure has
//! a closed form: for x uniform on the radius-r sphere in R^dim and any
//! vector c,
//!
//! ```text
//!     ln E[exp(c.x)] = ln Gamma(nu+1) + nu ln(2/kappa) + ln I_nu(kappa),
//!     nu = dim/2 - 1,   kappa = |c| r.
//! ```
//!
//! The order nu grows like dim/2, so everything is evaluated in log space:
//! a cancellation-free power series (all terms positive) for small and
//! moderate orders, and the uniform large-order (Debye) expansion once the
//! order is large enough for its O(nu^-6) truncation error to be negligible.
//! Naive linear-space evaluation overflows around dim = 300.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Orders at least this large use the Debye expansion; below it the series
/// is exact-to-rounding and costs O(kappa + nu) terms.
const DEBYE_MIN_ORDER: f64 = 60.0;

/// ln I_nu(kappa) for nu >= -1/2, kappa >= 0.
pub fn log_bessel_i(nu: f64, kappa: f64) -> Result<f64> {
    if !nu.is_finite() || nu < -0.5 {
        return Err(Error::InvalidArgument(format!("order must be >= -1/2, got {nu}")));
    }
    if !kappa.is_finite() || kappa < 0.0 {
        return Err(Error::InvalidArgument(format!("argument must be >= 0, got {kappa}")));
    }
    if kappa == 0.0 {
        // I_nu(0) = 0 for nu > 0, 1 at nu = 0, +inf for nu in [-1/2, 0).
        return Ok(if nu > 0.0 {
            f64::NEG_INFINITY
        } else if nu == 0.0 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    if nu >= DEBYE_MIN_ORDER && kappa >= 1.0 {
        Ok(log_bessel_i_debye(nu, kappa))
    } else {
        Ok(log_bessel_i_series(nu, kappa))
    }
}

/// Power series sum_k (kappa/2)^(2k+nu) / (k! Gamma(nu+k+1)), evaluated as a
/// streaming log-sum-exp. All terms are positive, so there is no
/// cancellation; the term sequence is unimodal in k and we stop once it has
/// dropped 46 nats below the running maximum.
pub(crate) fn log_bessel_i_series(nu: f64, kappa: f64) -> f64 {
    let log_half_kappa = (0.5 * kappa).ln();
    let mut max_log = f64::NEG_INFINITY;
    let mut sum = 0.0; // sum of exp(t_k - max_log)
    let mut k = 0u64;
    let mut prev = f64::NEG_INFINITY;
    loop {
        let kf = k as f64;
        let t = (2.0 * kf + nu) * log_half_kappa
            - ln_gamma(kf + 1.0)
            - ln_gamma(nu + kf + 1.0);
        if t > max_log {
            sum = sum * (max_log - t).exp() + 1.0;
            max_log = t;
        } else {
            sum += (t - max_log).exp();
        }
        let past_peak = t < prev;
        if past_peak && t < max_log - 46.0 {
            break;
        }
        prev = t;
        k += 1;
        debug_assert!(k < 100_000_000, "series failed to terminate");
    }
    max_log + sum.ln()
}

/// Uniform large-order expansion: with z = kappa/nu, s = sqrt(1+z^2),
/// t = 1/s, eta = s + ln(z/(1+s)),
///
/// ```text
///     I_nu(nu z) ~ exp(nu eta) / sqrt(2 pi nu s) * (1 + sum_k u_k(t)/nu^k).
/// ```
///
/// With corrections through u_5 the relative truncation error is O(nu^-6),
/// below 1e-10 for nu >= 60, uniformly in kappa.
pub(crate) fn log_bessel_i_debye(nu: f64, kappa: f64) -> f64 {
    let z = kappa / nu;
    let s = z.mul_add(z, 1.0).sqrt();
    let t = 1.0 / s;
    let eta = s + (z / (1.0 + s)).ln();
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    let u3 = t * t2 * (30375.0 + t2 * (-369_603.0 + t2 * (765_765.0 + t2 * -425_425.0))) / 414_720.0;
    let u4 = t2 * t2
        * (4_465_125.0
            + t2 * (-94_121_676.0
                + t2 * (349_922_430.0 + t2 * (-446_185_740.0 + t2 * 185_910_725.0))))
        / 39_813_120.0;
    let u5 = t * t2 * t2
        * (1_519_035_525.0
            + t2 * (-49_286_948_607.0
                + t2 * (284_499_769_554.0
                    + t2 * (-614_135_872_350.0
                        + t2 * (566_098_157_625.0 + t2 * -188_699_385_875.0)))))
        / 6_688_604_160.0;
    let correction = 1.0 + (((((u5 / nu) + u4) / nu + u3) / nu + u2) / nu + u1) / nu;
    nu * eta - 0.5 * (2.0 * std::f64::consts::PI * nu).ln() - 0.5 * s.ln() + correction.ln()
}

/// Log-partition of the linear tilt `exp(c.x)` on the uniform sphere of
/// radius `sqrt(radius_sq_density * dim)`.
pub fn log_partition_sphere(dim: usize, radius_sq_density: f64, c: &[f64]) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if c.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "tilt vector has length {}, expected {dim}",
            c.len()
        )));
    }
    if !(radius_sq_density > 0.0) || !radius_sq_density.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "radius_sq_density must be positive and finite, got {radius_sq_density}"
        )));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("tilt vector has non-finite entries".into()));
    }
    let c_norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    log_partition_sphere_from_norm(dim, radius_sq_density, c_norm)
}

/// Same quantity from the tilt norm alone (the measure is rotation
/// invariant, so only |c| matters).
pub fn log_partition_sphere_from_norm(
    dim: usize,
    radius_sq_density: f64,
    c_norm: f64,
) -> Result<f64> {
    if !(c_norm >= 0.0) || !c_norm.is_finite() {
        return Err(Error::InvalidArgument(format!("|c| must be >= 0, got {c_norm}")));
    }
    let nu = 0.5 * dim as f64 - 1.0;
    let kappa = c_norm * (radius_sq_density * dim as f64).sqrt();
    if kappa == 0.0 {
        return Ok(0.0);
    }
    if nu >= DEBYE_MIN_ORDER && kappa >= 1.0 {
        return Ok(ln_gamma(nu + 1.0) + nu * (2.0 / kappa).ln() + log_bessel_i_debye(nu, kappa));
    }
    // Combined series Gamma(nu+1) (2/kappa)^nu I_nu(kappa)
    //   = sum_k (kappa/2)^(2k) Gamma(nu+1) / (k! Gamma(nu+k+1)),
    // whose k = 0 term is exactly 1. Positive terms, streaming log-sum-exp.
    let log_gamma_nu1 = ln_gamma(nu + 1.0);
    let log_half_kappa = (0.5 * kappa).ln();
    let mut max_log = f64::NEG_INFINITY;
    let mut sum = 0.0;
    let mut k = 0u64;
    let mut prev = f64::NEG_INFINITY;
    loop {
        let kf = k as f64;
        let t = 2.0 * kf * log_half_kappa + log_gamma_nu1
            - ln_gamma(kf + 1.0)
            - ln_gamma(nu + kf + 1.0);
        if t > max_log {
            sum = sum * (max_log - t).exp() + 1.0;
            max_log = t;
        } else {
            sum += (t - max_log).exp();
        }
        if t < prev && t < max_log - 46.0 {
            break;
        }
        prev = t;
        k += 1;
        debug_assert!(k < 100_000_000, "series failed to terminate");
    }
    Ok(max_log + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_spherical, stream_rng};

    fn check(actual: f64, expected: f64, tol_scale: f64) {
        let tol = tol_scale * expected.abs().max(1.0);
        assert!(
            (actual - expected).abs() < tol,
            "got {actual}, want {expected} (diff {:.3e}, tol {tol:.3e})",
            (actual - expected).abs()
        );
    }

    #[test]
    fn series_branch_reference_values() {
        // Reference values computed with an arbitrary-precision library.
        let cases = [
            (0.0, 0.5, 0.06154971918548130),
            (0.0, std::f64::consts::SQRT_2, 0.44857755258814940),
            (0.5, 1.0, -0.06435199107353180),
            (-0.5, 3.0, 1.53423100759900286),
            (1.0, 2.0, 0.46413447354615974),
            (3.5, 9.0, 6.28517833765316710),
            (12.0, 30.0, 24.97691746826132006),
            (25.0, 4.0, -40.52151468402265917),
            (59.0, 10.0, -89.16173580814241876),
            (59.0, 200.0, 187.77058661123508585),
        ];
        for (nu, kappa, expected) in cases {
            check(log_bessel_i(nu, kappa).unwrap(), expected, 1e-11);
        }
    }

    #[test]
    fn debye_branch_reference_values() {
        let cases = [
            (60.0, 200.0, 187.47662271647390196),
            (80.0, 35.0, -40.99846720817134981),
            (120.0, 90.0, 14.74221142109886475),
            (249.0, 707.0, 659.36075006363219609),
            (400.0, 100.0, -429.50445577535084737),
            (799.0, 2264.0, 2119.61120971682891837),
        ];
        for (nu, kappa, expected) in cases {
            check(log_bessel_i(nu, kappa).unwrap(), expected, 1e-10);
        }
        // large order, small argument routes through the series
        check(log_bessel_i(799.0, 10.0).unwrap(), -3259.29397754508550, 1e-10);
    }

    #[test]
    fn series_and_debye_agree_at_the_seam() {
        for &nu in &[60.0, 75.0, 120.0] {
            for &kappa in &[2.0, 30.0, 61.0, 400.0] {
                let a = log_bessel_i_series(nu, kappa);
                let b = log_bessel_i_debye(nu, kappa);
                check(a, b, 5e-10);
            }
        }
    }

    #[test]
    fn zero_argument_limits() {
        assert_eq!(log_bessel_i(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i(2.0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(log_bessel_i(-0.5, 0.0).unwrap(), f64::INFINITY);
        assert!(log_bessel_i(-0.6, 1.0).is_err());
        assert!(log_bessel_i(1.0, -1.0).is_err());
        assert!(log_bessel_i(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn partition_zero_tilt_is_zero() {
        assert_eq!(log_partition_sphere(7, 1.3, &[0.0; 7]).unwrap(), 0.0);
        assert_eq!(log_partition_sphere_from_norm(500, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn partition_dim_two_matches_plain_power_series() {
        // dim=2, rho=1, |c|=1: ln Z = ln I_0(sqrt 2). Independent check with
        // a direct linear-space power series for I_0.
        let mut term = 1.0;
        let mut total = 0.0;
        let x2_quarter = 2.0 / 4.0; // (sqrt 2)^2 / 4
        for k in 1..=40 {
            total += term;
            term *= x2_quarter / ((k * k) as f64);
        }
        let expected = total.ln();
        let got = log_partition_sphere(2, 1.0, &[1.0, 0.0]).unwrap();
        check(got, expected, 1e-13);
        check(got, 0.44857755258814940, 1e-12);
    }

    #[test]
    fn partition_dim_one_is_log_cosh() {
        // The 0-sphere is {-r, +r}: ln Z = ln cosh(|c| r).
        let got = log_partition_sphere(1, 1.0, &[2.0]).unwrap();
        check(got, 2.0f64.cosh().ln(), 1e-13);
        check(got, 1.32500274735786443, 1e-13);
    }

    #[test]
    fn partition_reference_values() {
        check(log_partition_sphere(4, 1.0, &[1.7, 0.0, 0.0, 0.0]).unwrap(), 1.20457888990752581, 1e-12);
        check(
            log_partition_sphere(3, 2.5, &[0.9 / 3.0f64.sqrt(); 3]).unwrap(),
            0.86225697416955318,
            1e-12,
        );
        check(
            log_partition_sphere_from_norm(500, 1.0, 31.6227766016838).unwrap(),
            326.85707046666064,
            1e-10,
        );
    }

    #[test]
    fn partition_rejects_bad_input() {
        assert!(log_partition_sphere(0, 1.0, &[]).is_err());
        assert!(log_partition_sphere(2, 1.0, &[1.0]).is_err());
        assert!(log_partition_sphere(2, -1.0, &[1.0, 0.0]).is_err());
        assert!(log_partition_sphere(2, 1.0, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn partition_matches_monte_carlo_oracle() {
        // Brute-force check E[exp(c.x)] over uniform sphere samples for small
        // dimensions, within 3 standard errors of the log estimate.
        let n_draws = 200_000;
        for (dim, rho, scale, seed) in
            [(2usize, 1.0, 1.0, 31u64), (4, 0.8, 1.4, 32), (8, 1.0, 0.9, 33)]
        {
            let c: Vec<f64> = (0..dim).map(|i| scale * ((i as f64 * 0.7).sin() + 0.4)).collect();
            let mut rng = stream_rng(seed, 0);
            let mut vals = Vec::with_capacity(n_draws);
            for _ in 0..n_draws {
                let x = sample_spherical(dim, rho, &mut rng).unwrap();
                let dot: f64 = x.iter().zip(&c).map(|(a, b)| a * b).sum();
                vals.push(dot.exp());
            }
            let mean = vals.iter().sum::<f64>() / n_draws as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n_draws as f64 - 1.0);
            let se_log = (var / n_draws as f64).sqrt() / mean;
            let exact = log_partition_sphere(dim, rho, &c).unwrap();
            let diff = (mean.ln() - exact).abs();
            assert!(
                diff < 3.0 * se_log,
                "dim={dim}: MC ln Z = {:.6} vs exact {exact:.6} (diff {diff:.2e}, 3se {:.2e})",
                mean.ln(),
                3.0 * se_log
            );
        }
    }

    #[test]
    fn partition_large_dims_stay_finite() {
        // The regime that overflows naive evaluation: nu ~ dim/2, big kappa.
        for dim in [300, 1000, 2000] {
            let norm = 2.0 * (dim as f64).sqrt();
            let z = log_partition_sphere_from_norm(dim, 1.0, norm).unwrap();
            assert!(z.is_finite(), "dim={dim} gave {z}");
            assert!(z > 0.0);
        }
    }
}
