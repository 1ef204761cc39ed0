//! Observation model and instance generation.
//!
//! An instance is a rank-one matrix seen through entrywise Gaussian noise,
//!
//! ```text
//!     y = sqrt(lambda/n) * u v^T + z,      z_ij ~ N(0,1) iid,
//! ```
//!
//! with `u` and `v` uniform on the spheres of radii `sqrt(rho_u * n_u)` and
//! `sqrt(rho_v * n_v)`. Five scalars control everything: the signal-to-noise
//! ratio `lambda`, the aspect ratios `alpha_u ~ n_u/n` and `alpha_v ~ n_v/n`,
//! and the squared-radius densities `rho_u`, `rho_v`.
//!
//! Everything here is a pure function of `(theta, dims, seed)`, so instances
//! are regenerated from a tiny JSON record instead of being serialized.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar hyperparameters of the observation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub alpha_u: f64,
    pub alpha_v: f64,
    pub rho_u: f64,
    pub rho_v: f64,
}

impl Hyperparams {
    pub fn new(lambda: f64, alpha_u: f64, alpha_v: f64, rho_u: f64, rho_v: f64) -> Result<Self> {
        let theta = Hyperparams { lambda, alpha_u, alpha_v, rho_u, rho_v };
        theta.validate()?;
        Ok(theta)
    }

    /// All parameters 1 except the SNR. The default test point in this crate.
    pub fn symmetric(lambda: f64) -> Self {
        Hyperparams { lambda, alpha_u: 1.0, alpha_v: 1.0, rho_u: 1.0, rho_v: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("lambda", self.lambda, true),
            ("alpha_u", self.alpha_u, false),
            ("alpha_v", self.alpha_v, false),
            ("rho_u", self.rho_u, false),
            ("rho_v", self.rho_v, false),
        ];
        for (name, value, zero_ok) in fields {
            if !value.is_finite() || value < 0.0 || (value == 0.0 && !zero_ok) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

/// Problem sizes. `n` is the scaling parameter; `n_u` and `n_v` are the
/// signal lengths, by convention `round(alpha * n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n: usize,
    pub n_u: usize,
    pub n_v: usize,
}

impl Dimensions {
    /// Derive `(n_u, n_v)` from `n` by rounding `alpha * n` to the nearest
    /// integer. Errors if either side rounds to zero.
    pub fn from_scale(n: usize, theta: &Hyperparams) -> Result<Self> {
        theta.validate()?;
        if n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        let n_u = (theta.alpha_u * n as f64).round() as usize;
        let n_v = (theta.alpha_v * n as f64).round() as usize;
        if n_u == 0 || n_v == 0 {
            return Err(Error::InvalidArgument(format!(
                "alpha * n rounds to zero (n_u={n_u}, n_v={n_v}); increase n"
            )));
        }
        Ok(Dimensions { n, n_u, n_v })
    }

    /// Finite-size aspect ratio n_u/n. Used instead of alpha_u wherever a
    /// pre-limit quantity is computed, to reduce finite-size bias.
    pub fn ratio_u(&self) -> f64 {
        self.n_u as f64 / self.n as f64
    }

    pub fn ratio_v(&self) -> f64 {
        self.n_v as f64 / self.n as f64
    }
}

/// One realized observation. `u_true`/`v_true` are the planted signals, `y`
/// the noisy matrix.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub theta: Hyperparams,
    pub dims: Dimensions,
    pub seed: u64,
    pub u_true: Array1<f64>,
    pub v_true: Array1<f64>,
    pub y: Array2<f64>,
}

/// Persistable record from which an instance is regenerated bit-identically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub theta: Hyperparams,
    pub dims: Dimensions,
    pub seed: u64,
}

impl InstanceRecord {
    pub fn realize(&self) -> Result<ProblemInstance> {
        generate_instance(&self.theta, self.dims, self.seed)
    }
}

impl ProblemInstance {
    pub fn record(&self) -> InstanceRecord {
        InstanceRecord { theta: self.theta, dims: self.dims, seed: self.seed }
    }
}

// Stream layout for ChaCha generators seeded with an instance seed. Distinct
// consumers take distinct streams so adding one never shifts another's draws.
pub(crate) const STREAM_U: u64 = 0;
pub(crate) const STREAM_V: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;
pub(crate) const STREAM_CHAIN: u64 = 16; // chain k uses STREAM_CHAIN + k
pub(crate) const STREAM_SPECTRAL: u64 = 8;

/// Counter-based generator for `(seed, stream)`. Parallel workers get
/// non-overlapping deterministic streams without coordination.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer. Standard 64-bit mixer used to derive per-cell seeds.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for cell `index` of a sweep from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(0x51_7C_C1_B7_27_22_0A_95)))
}

/// Uniform draw from the sphere of radius `sqrt(radius_sq_density * dim)`:
/// standard Gaussians rescaled exactly onto the sphere. Rotation-invariant by
/// construction. `dim = 1` degenerates to the two-point set `{-r, +r}`.
pub fn sample_spherical<R: Rng + ?Sized>(
    dim: usize,
    radius_sq_density: f64,
    rng: &mut R,
) -> Result<Array1<f64>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("sphere dimension must be >= 1".into()));
    }
    if !(radius_sq_density > 0.0) || !radius_sq_density.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "radius_sq_density must be positive and finite, got {radius_sq_density}"
        )));
    }
    let radius = (radius_sq_density * dim as f64).sqrt();
    loop {
        let g: Array1<f64> = Array1::from_shape_fn(dim, |_| rng.sample(StandardNormal));
        let norm = g.dot(&g).sqrt();
        // A zero Gaussian vector has probability zero; redraw defensively.
        if norm > 0.0 {
            return Ok(g * (radius / norm));
        }
    }
}

/// Generate the observation `y = sqrt(lambda/n) u v^T + z` from `(theta,
/// dims, seed)`. Pure: the same triple always yields bit-identical output.
pub fn generate_instance(
    theta: &Hyperparams,
    dims: Dimensions,
    seed: u64,
) -> Result<ProblemInstance> {
    theta.validate()?;
    let expected = Dimensions::from_scale(dims.n, theta)?;
    if expected != dims {
        return Err(Error::InvalidArgument(format!(
            "dims {dims:?} inconsistent with theta (expected {expected:?})"
        )));
    }

    let u_true = sample_spherical(dims.n_u, theta.rho_u, &mut stream_rng(seed, STREAM_U))?;
    let v_true = sample_spherical(dims.n_v, theta.rho_v, &mut stream_rng(seed, STREAM_V))?;

    let snr = (theta.lambda / dims.n as f64).sqrt();
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut y = Array2::zeros((dims.n_u, dims.n_v));
    for i in 0..dims.n_u {
        for j in 0..dims.n_v {
            let z: f64 = noise_rng.sample(StandardNormal);
            y[[i, j]] = snr * u_true[i] * v_true[j] + z;
        }
    }

    Ok(ProblemInstance { theta: *theta, dims, seed, u_true, v_true, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::beta::beta_reg;

    #[test]
    fn spherical_norm_is_exact() {
        let mut rng = stream_rng(1, 0);
        for &(dim, rho) in &[(1usize, 1.0), (3, 4.0), (17, 0.3), (500, 2.5)] {
            let x = sample_spherical(dim, rho, &mut rng).unwrap();
            let norm_sq = x.dot(&x);
            let target = rho * dim as f64;
            assert!(
                (norm_sq / target - 1.0).abs() < 1e-10,
                "dim={dim} rho={rho}: |x|^2 = {norm_sq}, want {target}"
            );
        }
    }

    #[test]
    fn spherical_dim_one_is_two_point() {
        let mut rng = stream_rng(2, 0);
        let mut seen_pos = false;
        let mut seen_neg = false;
        for _ in 0..64 {
            let x = sample_spherical(1, 1.0, &mut rng).unwrap();
            assert!((x[0].abs() - 1.0).abs() < 1e-12);
            seen_pos |= x[0] > 0.0;
            seen_neg |= x[0] < 0.0;
        }
        assert!(seen_pos && seen_neg, "both signs should occur in 64 draws");
    }

    #[test]
    fn spherical_rejects_bad_arguments() {
        let mut rng = stream_rng(3, 0);
        assert!(sample_spherical(0, 1.0, &mut rng).is_err());
        assert!(sample_spherical(4, 0.0, &mut rng).is_err());
        assert!(sample_spherical(4, -1.0, &mut rng).is_err());
        assert!(sample_spherical(4, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn spherical_first_coordinate_moments() {
        // dim=1000, rho=1, 10^4 draws: mean(x1) ~ 0 within 3/sqrt(10^4) * sd,
        // mean(x1^2) ~ rho within 0.05.
        let mut rng = stream_rng(4, 0);
        let n_draws = 10_000;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n_draws {
            let x = sample_spherical(1000, 1.0, &mut rng).unwrap();
            s1 += x[0];
            s2 += x[0] * x[0];
        }
        let mean = s1 / n_draws as f64;
        let mean_sq = s2 / n_draws as f64;
        assert!(mean.abs() < 3.0 / (n_draws as f64).sqrt(), "mean(x1) = {mean}");
        assert!((mean_sq - 1.0).abs() < 0.05, "mean(x1^2) = {mean_sq}");
    }

    #[test]
    fn spherical_marginal_matches_sphere_law() {
        // For x uniform on the radius-r sphere in dimension d, t = x1/r has
        // CDF I_{(d-1)/2,(d-1)/2}((1+t)/2) (regularized incomplete beta).
        // Kolmogorov-Smirnov at significance 0.01 over 10^4 draws.
        let dim = 6;
        let n_draws = 10_000;
        let r = (0.7 * dim as f64).sqrt();
        let mut rng = stream_rng(5, 0);
        let mut ts: Vec<f64> = (0..n_draws)
            .map(|_| sample_spherical(dim, 0.7, &mut rng).unwrap()[0] / r)
            .collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let a = (dim as f64 - 1.0) / 2.0;
        let mut d_stat: f64 = 0.0;
        for (i, t) in ts.iter().enumerate() {
            let cdf = beta_reg(a, a, (1.0 + t) / 2.0);
            let lo = i as f64 / n_draws as f64;
            let hi = (i + 1) as f64 / n_draws as f64;
            d_stat = d_stat.max((cdf - lo).abs()).max((hi - cdf).abs());
        }
        // critical value at alpha = 0.01 is 1.63/sqrt(N)
        let crit = 1.63 / (n_draws as f64).sqrt();
        assert!(d_stat < crit, "KS statistic {d_stat} exceeds {crit}");
    }

    #[test]
    fn dims_round_from_scale() {
        let theta = Hyperparams::new(1.0, 0.5, 2.0, 1.0, 1.0).unwrap();
        let dims = Dimensions::from_scale(101, &theta).unwrap();
        assert_eq!(dims.n_u, 51); // 50.5 rounds half away from zero
        assert_eq!(dims.n_v, 202);
        assert!((Dimensions::from_scale(100, &theta).unwrap().ratio_u() - 0.5).abs() < 1e-15);
        // alpha small enough that n_u rounds to 0
        let tiny = Hyperparams::new(1.0, 0.004, 1.0, 1.0, 1.0).unwrap();
        assert!(Dimensions::from_scale(100, &tiny).is_err());
    }

    #[test]
    fn instance_is_deterministic() {
        let theta = Hyperparams::symmetric(1.5);
        let dims = Dimensions::from_scale(40, &theta).unwrap();
        let a = generate_instance(&theta, dims, 99).unwrap();
        let b = generate_instance(&theta, dims, 99).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.u_true, b.u_true);
        let c = generate_instance(&theta, dims, 100).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn instance_norms_on_spheres() {
        let theta = Hyperparams::new(2.0, 0.7, 1.3, 0.4, 2.2).unwrap();
        let dims = Dimensions::from_scale(64, &theta).unwrap();
        let inst = generate_instance(&theta, dims, 7).unwrap();
        let nu = inst.u_true.dot(&inst.u_true);
        let nv = inst.v_true.dot(&inst.v_true);
        assert!((nu / (theta.rho_u * dims.n_u as f64) - 1.0).abs() < 1e-10);
        assert!((nv / (theta.rho_v * dims.n_v as f64) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_snr_is_pure_noise() {
        let theta = Hyperparams::symmetric(0.0);
        let dims = Dimensions::from_scale(100, &theta).unwrap();
        let inst = generate_instance(&theta, dims, 11).unwrap();
        let mean = inst.y.sum() / (dims.n_u * dims.n_v) as f64;
        assert!(mean.abs() < 4.0 / ((dims.n_u * dims.n_v) as f64).sqrt(), "mean = {mean}");
    }

    #[test]
    fn residual_noise_has_unit_variance() {
        let theta = Hyperparams::symmetric(1.0);
        let dims = Dimensions::from_scale(100, &theta).unwrap();
        let inst = generate_instance(&theta, dims, 13).unwrap();
        let snr = (theta.lambda / dims.n as f64).sqrt();
        let mut ss = 0.0;
        for i in 0..dims.n_u {
            for j in 0..dims.n_v {
                let z = inst.y[[i, j]] - snr * inst.u_true[i] * inst.v_true[j];
                ss += z * z;
            }
        }
        let var = ss / (dims.n_u * dims.n_v) as f64;
        assert!((var - 1.0).abs() < 0.1, "residual variance = {var}");
    }

    #[test]
    fn record_roundtrips_through_json() {
        let theta = Hyperparams::new(3.0, 1.5, 0.5, 1.0, 2.0).unwrap();
        let dims = Dimensions::from_scale(30, &theta).unwrap();
        let inst = generate_instance(&theta, dims, 21).unwrap();
        let json = serde_json::to_string(&inst.record()).unwrap();
        let back: InstanceRecord = serde_json::from_str(&json).unwrap();
        let regen = back.realize().unwrap();
        assert_eq!(inst.y, regen.y);
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let theta = Hyperparams::symmetric(1.0);
        let dims = Dimensions { n: 50, n_u: 49, n_v: 50 };
        assert!(generate_instance(&theta, dims, 0).is_err());
    }

    #[test]
    fn derived_seeds_spread() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..1000u64 {
            seen.insert(derive_seed(77, i));
        }
        assert_eq!(seen.len(), 1000);
        assert_ne!(derive_seed(77, 0), derive_seed(78, 0));
    }
}
