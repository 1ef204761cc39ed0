//! Alternating Gibbs sampler for the posterior over the spiked factors.
//!
//! Conditioned on `v`, the law of `u` on its sphere tilts the uniform
//! measure by `exp(c . u)` with `c = sqrt(lambda/n) Y v`, i.e. a von
//! Mises-Fisher draw at concentration `|c| * radius`; symmetrically for `v`.
//! The sphere constraint kills the quadratic terms of the likelihood, which
//! is what makes the conditionals exactly vMF.
//!
//! The same chain also serves the interpolating family: the matrix term is
//! reweighted to `(1-t) lambda` and each factor gains a linear tilt from a
//! decoupled vector channel built from the planted truth and caller-supplied
//! noise.

use crate::error::{Error, Result};
use crate::gibbs::vmf::sample_vmf;
use crate::model::{sample_spherical, stream_rng, ProblemInstance, STREAM_CHAIN};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct GibbsChain<'a> {
    instance: &'a ProblemInstance,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    sweeps_done: usize,
    rng: ChaCha8Rng,
    /// sqrt(effective_lambda / n); effective_lambda is (1-t) lambda for the
    /// interpolating family, lambda itself for the plain posterior
    w_matrix: f64,
    /// interpolated observation matrix, present only when t > 0
    y_interp: Option<Array2<f64>>,
    /// precomputed linear tilts from the side channels
    tilt_u: Option<Array1<f64>>,
    tilt_v: Option<Array1<f64>>,
}

impl<'a> GibbsChain<'a> {
    /// Chain for the plain posterior. `chain_index` separates the RNG
    /// streams of parallel chains on the same instance.
    pub fn new(instance: &'a ProblemInstance, chain_index: u64) -> Result<Self> {
        let mut rng = stream_rng(instance.seed, STREAM_CHAIN + chain_index);
        let dims = &instance.dims;
        let u = sample_spherical(dims.n_u, instance.theta.rho_u, &mut rng)?;
        let v = sample_spherical(dims.n_v, instance.theta.rho_v, &mut rng)?;
        let w_matrix = (instance.theta.lambda / dims.n as f64).sqrt();
        Ok(GibbsChain {
            instance,
            u,
            v,
            sweeps_done: 0,
            rng,
            w_matrix,
            y_interp: None,
            tilt_u: None,
            tilt_v: None,
        })
    }

    /// Chain for the interpolating family at time `t` with accumulated side
    /// SNRs `r = (r_u, r_v)`. The side observations are rebuilt from the
    /// planted truth and the supplied noise vectors, so passing the same
    /// noise across calls gives common random numbers along a path.
    pub fn with_interpolation(
        instance: &'a ProblemInstance,
        chain_index: u64,
        t: f64,
        r: (f64, f64),
        noise_u: &Array1<f64>,
        noise_v: &Array1<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!("t must lie in [0, 1], got {t}")));
        }
        if !(r.0 >= 0.0 && r.1 >= 0.0 && r.0.is_finite() && r.1.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "side SNRs must be finite and >= 0, got {r:?}"
            )));
        }
        let dims = &instance.dims;
        if noise_u.len() != dims.n_u || noise_v.len() != dims.n_v {
            return Err(Error::InvalidArgument(format!(
                "side noise lengths ({}, {}) do not match dims ({}, {})",
                noise_u.len(),
                noise_v.len(),
                dims.n_u,
                dims.n_v
            )));
        }
        let theta = &instance.theta;
        let eff_lambda = (1.0 - t) * theta.lambda;
        let w_matrix = (eff_lambda / dims.n as f64).sqrt();
        // Y holds the spike at full weight; swap it for the damped one.
        let y_interp = if t > 0.0 {
            let full = (theta.lambda / dims.n as f64).sqrt();
            let mut y = instance.y.clone();
            for (i, &ui) in instance.u_true.iter().enumerate() {
                for (j, &vj) in instance.v_true.iter().enumerate() {
                    y[(i, j)] += (w_matrix - full) * ui * vj;
                }
            }
            Some(y)
        } else {
            None
        };
        let coef_u = (theta.alpha_v * r.1).sqrt();
        let coef_v = (theta.alpha_u * r.0).sqrt();
        let tilt_u =
            (coef_u > 0.0).then(|| coef_u * (coef_u * &instance.u_true + noise_u));
        let tilt_v =
            (coef_v > 0.0).then(|| coef_v * (coef_v * &instance.v_true + noise_v));
        let mut rng = stream_rng(instance.seed, STREAM_CHAIN + chain_index);
        let u = sample_spherical(dims.n_u, theta.rho_u, &mut rng)?;
        let v = sample_spherical(dims.n_v, theta.rho_v, &mut rng)?;
        Ok(GibbsChain {
            instance,
            u,
            v,
            sweeps_done: 0,
            rng,
            w_matrix,
            y_interp,
            tilt_u,
            tilt_v,
        })
    }

    fn y(&self) -> &Array2<f64> {
        self.y_interp.as_ref().unwrap_or(&self.instance.y)
    }

    /// One full sweep: resample `u | v`, then `v | u`.
    pub fn sweep(&mut self) -> Result<()> {
        let dims = &self.instance.dims;
        let theta = &self.instance.theta;

        let mut c_u = self.w_matrix * self.y().dot(&self.v);
        if let Some(t) = &self.tilt_u {
            c_u += t;
        }
        self.u = sample_conditional(&c_u, theta.rho_u, dims.n_u, &mut self.rng)?;

        let mut c_v = self.w_matrix * self.y().t().dot(&self.u);
        if let Some(t) = &self.tilt_v {
            c_v += t;
        }
        self.v = sample_conditional(&c_v, theta.rho_v, dims.n_v, &mut self.rng)?;

        self.sweeps_done += 1;
        Ok(())
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweeps_done
    }

    /// Normalized overlaps with the planted factors:
    /// `(u . u_true / n_u, v . v_true / n_v)`, each in `[-rho, rho]`.
    pub fn overlaps(&self) -> (f64, f64) {
        (
            self.u.dot(&self.instance.u_true) / self.instance.dims.n_u as f64,
            self.v.dot(&self.instance.v_true) / self.instance.dims.n_v as f64,
        )
    }
}

/// Sample from the tilted uniform measure `exp(c . x)` on the sphere of
/// radius `sqrt(rho * dim)` in dimension `dim`.
fn sample_conditional<R: Rng + ?Sized>(
    c: &Array1<f64>,
    rho: f64,
    dim: usize,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let radius = (rho * dim as f64).sqrt();
    let c_norm = c.dot(c).sqrt();
    if c_norm == 0.0 {
        return sample_spherical(dim, rho, rng);
    }
    if dim == 1 {
        // two-point measure at +-radius
        let logit = 2.0 * c[0] * radius;
        let p_plus = 1.0 / (1.0 + (-logit).exp());
        let sign = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
        return Ok(Array1::from_elem(1, sign * radius));
    }
    let direction = c / c_norm;
    let x = sample_vmf(dim, &direction, c_norm * radius, rng)?;
    Ok(radius * x)
}
