//! Posterior-expectation estimators built on the Gibbs chain.
//!
//! The matrix MMSE estimator uses the identity
//! `mmse = rho_u rho_v - E<Q_u Q_v>`: the product of overlaps with the
//! planted factors is invariant under the global sign flip of the posterior,
//! so a chain stuck in one of the two symmetric modes still estimates it
//! correctly. Standard errors come from 20 batch means; an effective
//! autocorrelation time far above the batch scale flags the estimate rather
//! than failing it.

use crate::error::{Error, Result};
use crate::gibbs::chain::GibbsChain;
use crate::model::{
    derive_seed, generate_instance, stream_rng, Dimensions, Hyperparams, ProblemInstance,
};
use crate::theory::extremizer::lambda_it;
use ndarray::Array1;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GibbsParams {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
}

impl Default for GibbsParams {
    fn default() -> Self {
        GibbsParams { burn_in: 500, n_samples: 4000, thinning: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmseEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    /// non-fatal diagnostics, e.g. slow mixing; empty means clean
    pub warnings: Vec<String>,
}

const N_BATCHES: usize = 20;

/// Monte Carlo estimate of the matrix MMSE (normalized by `n_u n_v`) on one
/// instance. Runs a single chain: `burn_in` discarded sweeps, then
/// `n_samples` retained product overlaps spaced `thinning` sweeps apart.
pub fn estimate_matrix_mmse(
    instance: &ProblemInstance,
    burn_in: usize,
    n_samples: usize,
    thinning: usize,
) -> Result<MmseEstimate> {
    if n_samples < N_BATCHES {
        return Err(Error::InvalidArgument(format!(
            "need at least {N_BATCHES} samples for batch means, got {n_samples}"
        )));
    }
    if thinning == 0 {
        return Err(Error::InvalidArgument("thinning must be at least 1".into()));
    }
    let mut chain = GibbsChain::new(instance, 0)?;
    for _ in 0..burn_in {
        chain.sweep()?;
    }
    let mut q = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thinning {
            chain.sweep()?;
        }
        let (qu, qv) = chain.overlaps();
        q.push(qu * qv);
    }
    let rho_prod = instance.theta.rho_u * instance.theta.rho_v;
    let mean = q.iter().sum::<f64>() / n_samples as f64;
    let (se, warnings) = batch_means_error(&q, n_samples);
    Ok(MmseEstimate { value: rho_prod - mean, std_error: se, n_samples, burn_in, warnings })
}

fn batch_means_error(q: &[f64], n_samples: usize) -> (f64, Vec<String>) {
    let batch = n_samples / N_BATCHES;
    let used = batch * N_BATCHES;
    let mut means = Vec::with_capacity(N_BATCHES);
    for b in 0..N_BATCHES {
        let chunk = &q[b * batch..(b + 1) * batch];
        means.push(chunk.iter().sum::<f64>() / batch as f64);
    }
    let grand = means.iter().sum::<f64>() / N_BATCHES as f64;
    let var_b = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (N_BATCHES - 1) as f64;
    let se = (var_b / N_BATCHES as f64).sqrt();

    let mean_all = q[..used].iter().sum::<f64>() / used as f64;
    let var_all =
        q[..used].iter().map(|x| (x - mean_all).powi(2)).sum::<f64>() / (used - 1) as f64;
    let mut warnings = Vec::new();
    if var_all > 0.0 {
        let tau = batch as f64 * var_b / var_all;
        if tau > n_samples as f64 / 10.0 {
            warnings.push(format!("slow_mixing tau~{tau:.0} of {n_samples} samples"));
        }
    }
    (se, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceDiagnostic {
    pub n: usize,
    /// mean over instances of the within-chain variance of the product
    /// overlap; shrinks with n when the overlap concentrates
    pub variance: f64,
    pub std_error: f64,
}

/// Within-chain overlap variance across sizes: `reps` independent instances
/// per size, one chain each. Instance seeds derive from `seed`.
pub fn overlap_variance_diagnostic(
    theta: &Hyperparams,
    n_list: &[usize],
    reps: usize,
    params: &GibbsParams,
    seed: u64,
) -> Result<Vec<VarianceDiagnostic>> {
    theta.validate()?;
    if n_list.is_empty() || reps < 2 {
        return Err(Error::InvalidArgument(
            "need at least one size and two repetitions".into(),
        ));
    }
    if params.n_samples < 2 || params.thinning == 0 {
        return Err(Error::InvalidArgument("need n_samples >= 2 and thinning >= 1".into()));
    }
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(n_list.len() * reps);
    for (i, &n) in n_list.iter().enumerate() {
        for r in 0..reps {
            cells.push((n, i * reps + r));
        }
    }
    let variances: Vec<f64> = cells
        .par_iter()
        .map(|&(n, cell)| -> Result<f64> {
            let dims = Dimensions::from_scale(n, theta)?;
            let instance = generate_instance(theta, dims, derive_seed(seed, cell as u64))?;
            let mut chain = GibbsChain::new(&instance, 0)?;
            for _ in 0..params.burn_in {
                chain.sweep()?;
            }
            let mut q = Vec::with_capacity(params.n_samples);
            for _ in 0..params.n_samples {
                for _ in 0..params.thinning {
                    chain.sweep()?;
                }
                let (qu, qv) = chain.overlaps();
                q.push(qu * qv);
            }
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            Ok(q.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (q.len() - 1) as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Vec::with_capacity(n_list.len());
    for (i, &n) in n_list.iter().enumerate() {
        let vs = &variances[i * reps..(i + 1) * reps];
        let mean = vs.iter().sum::<f64>() / reps as f64;
        let sd = (vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        out.push(VarianceDiagnostic { n, variance: mean, std_error: sd / (reps as f64).sqrt() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermoPoint {
    pub lambda: f64,
    pub mmse: f64,
    pub mmse_se: f64,
    /// cumulative trapezoid of `(n_u n_v / n^2) mmse / 2` from the first
    /// grid point; equals the mutual information per coordinate when the
    /// grid starts at zero
    pub mi: f64,
    pub mi_se: f64,
    pub warnings: Vec<String>,
}

/// Mutual information along an SNR grid by thermodynamic integration of the
/// Gibbs MMSE estimates. `theta.lambda` is ignored; the grid supplies the
/// SNRs. Each grid point gets an independent instance (seed derived from
/// `seed`). Points within 10% of the threshold double their burn-in, since
/// that is where the chain equilibrates slowest.
pub fn thermo_integration_mi(
    theta: &Hyperparams,
    n: usize,
    lambda_grid: &[f64],
    params: &GibbsParams,
    seed: u64,
) -> Result<Vec<ThermoPoint>> {
    theta.validate()?;
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty SNR grid".into()));
    }
    for w in lambda_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidArgument(format!(
                "SNR grid must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if !(lambda_grid[0] >= 0.0 && lambda_grid.iter().all(|l| l.is_finite())) {
        return Err(Error::InvalidArgument("SNR grid must be finite and nonnegative".into()));
    }
    let threshold = lambda_it(theta);
    let estimates: Vec<MmseEstimate> = lambda_grid
        .par_iter()
        .enumerate()
        .map(|(k, &lam)| -> Result<MmseEstimate> {
            let theta_k = theta.with_lambda(lam);
            let dims = Dimensions::from_scale(n, &theta_k)?;
            let instance = generate_instance(&theta_k, dims, derive_seed(seed, k as u64))?;
            let burn = if (lam - threshold).abs() < 0.1 * threshold {
                2 * params.burn_in
            } else {
                params.burn_in
            };
            estimate_matrix_mmse(&instance, burn, params.n_samples, params.thinning)
        })
        .collect::<Result<Vec<_>>>()?;

    let dims = Dimensions::from_scale(n, theta)?;
    let ratio = dims.n_u as f64 * dims.n_v as f64 / (n as f64 * n as f64);
    let f: Vec<f64> = estimates.iter().map(|e| 0.5 * ratio * e.value).collect();
    let f_se: Vec<f64> = estimates.iter().map(|e| 0.5 * ratio * e.std_error).collect();

    let mut out = Vec::with_capacity(lambda_grid.len());
    for j in 0..lambda_grid.len() {
        let mut mi = 0.0;
        // trapezoid coefficient of each independent cell in the prefix sum
        let mut var = 0.0;
        let mut coef = vec![0.0; j + 1];
        for k in 0..j {
            let dl = lambda_grid[k + 1] - lambda_grid[k];
            mi += 0.5 * dl * (f[k] + f[k + 1]);
            coef[k] += 0.5 * dl;
            coef[k + 1] += 0.5 * dl;
        }
        for (k, c) in coef.iter().enumerate() {
            var += (c * f_se[k]).powi(2);
        }
        out.push(ThermoPoint {
            lambda: lambda_grid[j],
            mmse: estimates[j].value,
            mmse_se: estimates[j].std_error,
            mi,
            mi_se: var.sqrt(),
            warnings: estimates[j].warnings.clone(),
        });
    }
    Ok(out)
}

/// Sampling oracle for the interpolation path: reports the mean v-overlap
/// of the interpolating posterior at `(t, R)` by running a short chain.
///
/// The side-channel noise is drawn once up front and the chain restarts
/// from the same stream on every call, so the reported overlap is a
/// deterministic, common-random-numbers function of `(t, R)`. Internal
/// failures surface as NaN, which the path integrator rejects with the
/// offending time attached.
pub fn interpolation_overlap_oracle<'a>(
    instance: &'a ProblemInstance,
    params: GibbsParams,
    noise_seed: u64,
) -> impl FnMut(f64, (f64, f64)) -> f64 + 'a {
    let mut rng = stream_rng(noise_seed, 0);
    let mut gauss = |len: usize| {
        Array1::from_iter((0..len).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        }))
    };
    let noise_u = gauss(instance.dims.n_u);
    let noise_v = gauss(instance.dims.n_v);
    let rho_v = instance.theta.rho_v;
    move |t: f64, r: (f64, f64)| -> f64 {
        let run = || -> Result<f64> {
            let mut chain =
                GibbsChain::with_interpolation(instance, 0, t, r, &noise_u, &noise_v)?;
            for _ in 0..params.burn_in {
                chain.sweep()?;
            }
            let mut acc = 0.0;
            for _ in 0..params.n_samples {
                for _ in 0..params.thinning {
                    chain.sweep()?;
                }
                acc += chain.overlaps().1;
            }
            Ok(acc / params.n_samples as f64)
        };
        match run() {
            Ok(q) => q.clamp(0.0, rho_v),
            Err(_) => f64::NAN,
        }
    }
}

/// Exact posterior distribution of the v-overlap for 2x2 instances, as a
/// normalized histogram on `bins` equal cells over `[-rho_v, rho_v]`.
///
/// Both factors live on circles, so the posterior reduces to a density over
/// two angles; the histogram comes from periodic-trapezoid quadrature on a
/// 2048^2 angular grid, which is spectrally accurate for this smooth
/// integrand.
pub fn exact_overlap_histogram_2x2(instance: &ProblemInstance, bins: usize) -> Result<Vec<f64>> {
    if instance.dims.n_u != 2 || instance.dims.n_v != 2 {
        return Err(Error::InvalidArgument(format!(
            "exact histogram needs 2x2 factors, got {}x{}",
            instance.dims.n_u, instance.dims.n_v
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let theta = &instance.theta;
    let (r_u, r_v) = ((theta.rho_u * 2.0).sqrt(), (theta.rho_v * 2.0).sqrt());
    let w = (theta.lambda / instance.dims.n as f64).sqrt();
    let y = &instance.y;

    const GRID: usize = 2048;
    let step = std::f64::consts::TAU / GRID as f64;
    // tilt vector contributed by u(theta_u), dotted against v(theta_v) below
    let mut p = Vec::with_capacity(GRID);
    for i in 0..GRID {
        let (s, c) = (i as f64 * step).sin_cos();
        let (u0, u1) = (r_u * c, r_u * s);
        p.push((w * (u0 * y[(0, 0)] + u1 * y[(1, 0)]), w * (u0 * y[(0, 1)] + u1 * y[(1, 1)])));
    }
    let v_coords: Vec<(f64, f64)> = (0..GRID)
        .map(|j| {
            let (s, c) = (j as f64 * step).sin_cos();
            (r_v * c, r_v * s)
        })
        .collect();
    // two passes: global max first so the exponentials cannot overflow
    let mut max_h = f64::NEG_INFINITY;
    for &(v0, v1) in &v_coords {
        for &(p0, p1) in &p {
            max_h = max_h.max(p0 * v0 + p1 * v1);
        }
    }
    let masses: Vec<f64> = v_coords
        .iter()
        .map(|&(v0, v1)| p.iter().map(|&(p0, p1)| (p0 * v0 + p1 * v1 - max_h).exp()).sum())
        .collect();
    let total: f64 = masses.iter().sum();
    let v_true = &instance.v_true;
    let mut hist = vec![0.0f64; bins];
    for (j, mass) in masses.iter().enumerate() {
        let q = (v_coords[j].0 * v_true[0] + v_coords[j].1 * v_true[1]) / 2.0;
        hist[bin_of(q, theta.rho_v, bins)] += mass / total;
    }
    Ok(hist)
}

/// Empirical histogram of the chain's v-overlap over `sweeps` sweeps after
/// `burn_in`, same binning as [`exact_overlap_histogram_2x2`].
pub fn chain_overlap_histogram(
    instance: &ProblemInstance,
    burn_in: usize,
    sweeps: usize,
    bins: usize,
    chain_index: u64,
) -> Result<Vec<f64>> {
    if bins == 0 || sweeps == 0 {
        return Err(Error::InvalidArgument("need at least one bin and one sweep".into()));
    }
    let mut chain = GibbsChain::new(instance, chain_index)?;
    for _ in 0..burn_in {
        chain.sweep()?;
    }
    let mut hist = vec![0.0f64; bins];
    for _ in 0..sweeps {
        chain.sweep()?;
        hist[bin_of(chain.overlaps().1, instance.theta.rho_v, bins)] += 1.0;
    }
    for h in hist.iter_mut() {
        *h /= sweeps as f64;
    }
    Ok(hist)
}

fn bin_of(q: f64, rho: f64, bins: usize) -> usize {
    let pos = (q + rho) / (2.0 * rho) * bins as f64;
    (pos.floor() as isize).clamp(0, bins as isize - 1) as usize
}

/// Total variation distance between two normalized histograms.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
