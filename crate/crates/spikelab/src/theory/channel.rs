//! Monte Carlo check that the finite-dimension spherical channel has mutual
//! information per coordinate tending to `ln(1 + m) / 2`.
//!
//! The channel observes `Y = sqrt(m) X + Z` with `X` uniform on the sphere
//! of radius `sqrt(n)` and `Z` standard normal. Since `|X|^2 = n` exactly,
//! the per-coordinate mutual information reduces to
//!
//! ```text
//!   I_n / n = m - E[ ln Z_n( sqrt(m) Y ) ] / n,
//! ```
//!
//! with `Z_n(c)` the sphere partition function, so each sample costs one
//! Gaussian vector and one log-Bessel evaluation.

use crate::error::{Error, Result};
use crate::model::sample_spherical;
use crate::theory::bessel::log_partition_sphere_from_norm;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Monte Carlo estimate of the channel mutual information per coordinate at
/// dimension `n` and SNR `m`. Returns `(estimate, std_error)`.
///
/// At `m = 0` every sample is exactly zero, so the result is `(0, 0)` with
/// no Monte Carlo error.
pub fn channel_mi_mc(n: usize, m: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("channel dimension must be positive".into()));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("snr must be finite and >= 0, got {m}")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples for a standard error, got {samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_m = m.sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = sample_spherical(n, 1.0, &mut rng)?;
        let mut y_norm_sq = 0.0;
        for &xi in x.iter() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let yi = sqrt_m * xi + z;
            y_norm_sq += yi * yi;
        }
        let log_z = log_partition_sphere_from_norm(n, 1.0, sqrt_m * y_norm_sq.sqrt())?;
        let s = m - log_z / n as f64;
        sum += s;
        sum_sq += s * s;
    }
    let nf = samples as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_snr_is_exact() {
        let (est, se) = channel_mi_mc(50, 0.0, 100, 7).unwrap();
        assert_eq!(est, 0.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = channel_mi_mc(30, 1.5, 200, 42).unwrap();
        let b = channel_mi_mc(30, 1.5, 200, 42).unwrap();
        let c = channel_mi_mc(30, 1.5, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn approaches_the_scalar_limit() {
        // ln(2)/2 = 0.34657...; dimension 100 already gets close
        let (est, se) = channel_mi_mc(100, 1.0, 500, 11).unwrap();
        assert!(se > 0.0 && se < 0.05, "se = {se}");
        assert!((est - 0.5f64 * 2.0f64.ln()).abs() < 0.05, "est = {est}");

        let (est, _) = channel_mi_mc(200, 3.0, 500, 12).unwrap();
        assert!((est - 0.5f64 * 4.0f64.ln()).abs() < 0.05, "est = {est}");
    }

    #[test]
    fn dimension_one_is_the_binary_channel() {
        // X = +-1, so I_1 <= ln 2; at snr 4 it is close to that cap
        let (est, se) = channel_mi_mc(1, 4.0, 4000, 5).unwrap();
        assert!(est > 0.4, "est = {est}");
        assert!(est < 2.0f64.ln() + 3.0 * se + 1e-9, "est = {est}, se = {se}");
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(channel_mi_mc(0, 1.0, 100, 0).is_err());
        assert!(channel_mi_mc(10, -1.0, 100, 0).is_err());
        assert!(channel_mi_mc(10, 1.0, 1, 0).is_err());
    }
}
