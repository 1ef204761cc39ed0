//! Experiment execution. Each runner composes library calls, writes one CSV
//! in grid order, and drops a JSON manifest next to it. Identical config and
//! seed produce identical CSV bytes regardless of the parallelism degree;
//! the manifest carries wall time and so is not byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikelab::gibbs::{
    estimate_matrix_mmse, interpolation_overlap_oracle, overlap_variance_diagnostic,
    thermo_integration_mi,
};
use spikelab::spectral::top_singular_pair;
use spikelab::theory::{
    channel_mi_mc, closed_form_extremizer, integrate_interpolation_path, lambda_it, limit_mmse,
    se_surrogate_overlap, PathMode,
};
use spikelab::{derive_seed, generate_instance, Dimensions, Error as LibError};

use crate::config::{
    EstimatorKind, Experiment, McSweepConfig, OracleSpec, PathModeSpec,
};

#[derive(Debug)]
pub enum RunError {
    /// exit code 2: bad config, unusable paths, invalid arguments
    Config(String),
    /// exit code 3: a numerical procedure failed to converge; partial
    /// results are on disk and flagged
    Convergence(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Convergence(m) => write!(f, "convergence error: {m}"),
        }
    }
}

fn classify(e: LibError) -> RunError {
    match e {
        LibError::InvalidArgument(_) => RunError::Config(e.to_string()),
        other => RunError::Convergence(other.to_string()),
    }
}

fn io_err<'a, T: fmt::Display>(what: &'a str, path: &'a Path) -> impl Fn(T) -> RunError + 'a {
    move |e| RunError::Config(format!("cannot {what} {}: {e}", path.display()))
}

/// full double precision; parses back to the identical f64
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub const ESTIMATE_HEADER: &str =
    "lambda,n,estimator,value,std_error,n_samples,burn_in,seed,warn_flags";
pub const THEORY_HEADER: &str = "lambda,m_u_star,m_v_star,mi_limit,mmse_limit,branch";
pub const PATH_HEADER: &str = "epsilon_u,epsilon_v,mode,t,r_u,r_v,r_u_prime,r_v_prime";

/// One row of the shared estimate table. Also the unit stored in sweep
/// checkpoints, so it round-trips through JSON without losing bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstRow {
    pub lambda: f64,
    pub n: usize,
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub warn_flags: String,
}

impl EstRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            fmt_f(self.lambda),
            self.n,
            self.estimator,
            fmt_f(self.value),
            fmt_f(self.std_error),
            self.n_samples,
            self.burn_in,
            self.seed,
            self.warn_flags
        )
    }
}

pub fn config_hash(exp: &Experiment) -> String {
    let mut h = Sha256::new();
    h.update(exp.canonical_json().as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    wall_time_seconds: f64,
    failures: Vec<String>,
    config: serde_json::Value,
}

fn write_manifest(
    exp: &Experiment,
    out_dir: &Path,
    started: Instant,
    failures: &[String],
) -> Result<(), RunError> {
    let mut versions = BTreeMap::new();
    versions.insert("spike-cli", env!("CARGO_PKG_VERSION"));
    versions.insert("spikelab", spikelab::VERSION);
    let manifest = Manifest {
        config_hash: config_hash(exp),
        seed: exp.seed(),
        versions,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        failures: failures.to_vec(),
        config: exp.effective_json(),
    };
    let path = out_dir.join(format!("{}.manifest.json", exp.stem()));
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, body + "\n").map_err(io_err("write", &path))?;
    Ok(())
}

fn write_csv(out_dir: &Path, stem: &str, header: &str, lines: &[String]) -> Result<PathBuf, RunError> {
    let path = out_dir.join(format!("{stem}.csv"));
    let mut body = String::with_capacity(lines.len() * 80 + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    fs::write(&path, body).map_err(io_err("write", &path))?;
    Ok(path)
}

fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, RunError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(k) = jobs {
        if k == 0 {
            return Err(RunError::Config("jobs: must be at least 1".into()));
        }
        b = b.num_threads(k);
    }
    b.build().map_err(|e| RunError::Config(format!("thread pool: {e}")))
}

pub fn execute(exp: &Experiment) -> Result<(), RunError> {
    let started = Instant::now();
    let out_dir = exp.out_dir();
    fs::create_dir_all(&out_dir).map_err(io_err("create output directory", &out_dir))?;

    let failures = match exp {
        Experiment::TheoryCurve(c) => run_theory_curve(c, exp, &out_dir)?,
        Experiment::McSweep(c) => run_mc_sweep(c, exp, &out_dir)?,
        Experiment::Concentration(c) => run_concentration(c, exp, &out_dir)?,
        Experiment::Lemma1(c) => run_lemma1(c, exp, &out_dir)?,
        Experiment::InterpPath(c) => run_interp_path(c, exp, &out_dir)?,
        Experiment::Thermo(c) => run_thermo(c, exp, &out_dir)?,
    };

    write_manifest(exp, &out_dir, started, &failures)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(RunError::Convergence(format!(
            "{} cell(s) failed to converge; partial results flagged in {}: {}",
            failures.len(),
            out_dir.join(format!("{}.csv", exp.stem())).display(),
            failures.join("; ")
        )))
    }
}

fn run_theory_curve(
    c: &crate::config::TheoryCurveConfig,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let grid = c.theta.lambda_grid().map_err(|e| RunError::Config(e.0))?;
    let mut lines = Vec::with_capacity(grid.len());
    for lam in grid {
        let th = c.theta.at(lam).map_err(|e| RunError::Config(e.0))?;
        let sol = closed_form_extremizer(&th);
        let mmse = limit_mmse(&th);
        lines.push(format!(
            "{},{},{},{},{},{}",
            fmt_f(lam),
            fmt_f(sol.m_u_star),
            fmt_f(sol.m_v_star),
            fmt_f(sol.value),
            fmt_f(mmse),
            sol.branch
        ));
    }
    write_csv(out_dir, exp.stem(), THEORY_HEADER, &lines)?;
    Ok(Vec::new())
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    idx: usize,
    lambda: f64,
    rep: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CheckpointCell {
    cell: usize,
    rows: Vec<EstRow>,
}

/// Read completed cells from an existing checkpoint. A missing file, a
/// stale config hash, or a corrupt header all mean "start fresh"; corrupt
/// individual lines are skipped so the cell is simply recomputed.
fn load_checkpoint(path: &Path, hash: &str) -> BTreeMap<usize, Vec<EstRow>> {
    let mut done = BTreeMap::new();
    let Ok(text) = fs::read_to_string(path) else {
        return done;
    };
    let mut lines = text.lines();
    match lines.next().and_then(|l| serde_json::from_str::<CheckpointHeader>(l).ok()) {
        Some(h) if h.config_hash == hash => {}
        _ => return done,
    }
    for line in lines {
        if let Ok(c) = serde_json::from_str::<CheckpointCell>(line) {
            done.insert(c.cell, c.rows);
        }
    }
    done
}

fn run_mc_sweep(
    c: &McSweepConfig,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let grid = c.theta.lambda_grid().map_err(|e| RunError::Config(e.0))?;
    let cells: Vec<Cell> = grid
        .iter()
        .enumerate()
        .flat_map(|(i, &lambda)| {
            (0..c.repetitions).map(move |rep| Cell { idx: i * c.repetitions + rep, lambda, rep })
        })
        .collect();

    let hash = config_hash(exp);
    let ckpt_path = out_dir.join(format!("{}.checkpoint.jsonl", exp.stem()));
    let mut done = load_checkpoint(&ckpt_path, &hash);
    done.retain(|idx, _| *idx < cells.len());
    if done.is_empty() {
        let header = serde_json::to_string(&CheckpointHeader { config_hash: hash }).unwrap();
        fs::write(&ckpt_path, header + "\n").map_err(io_err("write", &ckpt_path))?;
    }
    let mut ckpt = fs::OpenOptions::new()
        .append(true)
        .open(&ckpt_path)
        .map_err(io_err("append to", &ckpt_path))?;

    let pending: Vec<Cell> =
        cells.iter().copied().filter(|cell| !done.contains_key(&cell.idx)).collect();

    let pool = build_pool(exp.jobs())?;
    let (tx, rx) = mpsc::channel::<(Cell, Result<Vec<EstRow>, String>)>();
    std::thread::scope(|s| {
        s.spawn(move || {
            pool.install(|| {
                pending.into_par_iter().for_each_with(tx, |tx, cell| {
                    let rows = run_mc_cell(c, cell);
                    let _ = tx.send((cell, rows));
                });
            });
        });
        let mut errors = Vec::new();
        for (cell, result) in rx {
            match result {
                Ok(rows) => {
                    let line = serde_json::to_string(&CheckpointCell {
                        cell: cell.idx,
                        rows: rows.clone(),
                    })
                    .unwrap();
                    writeln!(ckpt, "{line}").map_err(io_err("append to", &ckpt_path))?;
                    ckpt.flush().map_err(io_err("flush", &ckpt_path))?;
                    done.insert(cell.idx, rows);
                }
                Err(msg) => {
                    errors.push(format!("cell lambda={} rep={}: {msg}", cell.lambda, cell.rep))
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(RunError::Config(errors.join("; ")))
        }
    })?;

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for cell in &cells {
        let rows = &done[&cell.idx];
        for row in rows {
            if row.warn_flags.split(';').any(|f| f == "diverged") {
                failures.push(format!(
                    "power iteration diverged at lambda={} rep={} (last iterate written)",
                    cell.lambda, cell.rep
                ));
            }
            lines.push(row.csv_line());
        }
    }
    failures.dedup();
    write_csv(out_dir, exp.stem(), ESTIMATE_HEADER, &lines)?;
    Ok(failures)
}

fn run_mc_cell(c: &McSweepConfig, cell: Cell) -> Result<Vec<EstRow>, String> {
    let th = c.theta.at(cell.lambda).map_err(|e| e.0)?;
    let dims = Dimensions::from_scale(c.n, &th).map_err(|e| e.to_string())?;
    let cell_seed = derive_seed(c.seed, cell.idx as u64);
    let instance = generate_instance(&th, dims, cell_seed).map_err(|e| e.to_string())?;
    let threshold = lambda_it(&th);
    let near = (cell.lambda - threshold).abs() < 0.1 * threshold;

    let mut rows = Vec::new();
    for est in &c.estimators {
        match est {
            EstimatorKind::GibbsMmse => {
                let burn =
                    if near { 2 * c.gibbs.burn_in } else { c.gibbs.burn_in };
                let e = estimate_matrix_mmse(&instance, burn, c.gibbs.n_samples, c.gibbs.thinning)
                    .map_err(|e| e.to_string())?;
                let mut flags = e.warnings.clone();
                if near {
                    flags.push("near_threshold".into());
                }
                rows.push(EstRow {
                    lambda: cell.lambda,
                    n: c.n,
                    estimator: "gibbs_mmse".into(),
                    value: e.value,
                    std_error: e.std_error,
                    n_samples: e.n_samples,
                    burn_in: e.burn_in,
                    seed: cell_seed,
                    warn_flags: flags.join(";"),
                });
            }
            EstimatorKind::Spectral => {
                let base_flags: Vec<String> =
                    if near { vec!["near_threshold".into()] } else { Vec::new() };
                let (sigma_1, q_u_sq, iters, flags) =
                    match top_singular_pair(&instance, c.spectral_tol, c.spectral_max_iter) {
                        Ok(r) => (r.sigma_1, r.q_u_sq, r.iterations, base_flags),
                        Err(LibError::PowerIterationDiverged {
                            sigma_1, q_u_sq, iters, ..
                        }) => {
                            let mut f = base_flags;
                            f.push("diverged".into());
                            (sigma_1, q_u_sq, iters, f)
                        }
                        Err(e) => return Err(e.to_string()),
                    };
                let flag_str = flags.join(";");
                for (name, value) in [("spectral", q_u_sq), ("spectral_sigma1", sigma_1)] {
                    rows.push(EstRow {
                        lambda: cell.lambda,
                        n: c.n,
                        estimator: name.into(),
                        value,
                        std_error: 0.0,
                        n_samples: iters,
                        burn_in: 0,
                        seed: cell_seed,
                        warn_flags: flag_str.clone(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn run_concentration(
    c: &crate::config::ConcentrationConfig,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let lambda = c.theta.single_lambda().map_err(|e| RunError::Config(e.0))?;
    let th = c.theta.at(lambda).map_err(|e| RunError::Config(e.0))?;
    let pool = build_pool(exp.jobs())?;
    let diags = pool
        .install(|| {
            overlap_variance_diagnostic(&th, &c.n_list, c.repetitions, &c.gibbs.params(), c.seed)
        })
        .map_err(classify)?;
    let lines: Vec<String> = diags
        .iter()
        .map(|d| {
            EstRow {
                lambda,
                n: d.n,
                estimator: "overlap_variance".into(),
                value: d.variance,
                std_error: d.std_error,
                n_samples: c.gibbs.n_samples,
                burn_in: c.gibbs.burn_in,
                seed: c.seed,
                warn_flags: String::new(),
            }
            .csv_line()
        })
        .collect();
    write_csv(out_dir, exp.stem(), ESTIMATE_HEADER, &lines)?;
    Ok(Vec::new())
}

fn run_lemma1(
    c: &crate::config::Lemma1Config,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let snrs = c.snr.values("snr").map_err(|e| RunError::Config(e.0))?;
    let pool = build_pool(exp.jobs())?;
    let rows: Vec<EstRow> = pool
        .install(|| {
            snrs.par_iter()
                .enumerate()
                .map(|(k, &m)| -> spikelab::Result<EstRow> {
                    let seed = derive_seed(c.seed, k as u64);
                    let (value, std_error) = channel_mi_mc(c.n, m, c.samples, seed)?;
                    Ok(EstRow {
                        lambda: m,
                        n: c.n,
                        estimator: "channel_mi".into(),
                        value,
                        std_error,
                        n_samples: c.samples,
                        burn_in: 0,
                        seed,
                        warn_flags: String::new(),
                    })
                })
                .collect::<spikelab::Result<Vec<_>>>()
        })
        .map_err(classify)?;
    let lines: Vec<String> = rows.iter().map(EstRow::csv_line).collect();
    write_csv(out_dir, exp.stem(), ESTIMATE_HEADER, &lines)?;
    Ok(Vec::new())
}

fn run_interp_path(
    c: &crate::config::InterpPathConfig,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let lambda = c.theta.single_lambda().map_err(|e| RunError::Config(e.0))?;
    let th = c.theta.at(lambda).map_err(|e| RunError::Config(e.0))?;
    let mode = match c.mode {
        PathModeSpec::Lower => PathMode::LowerBound,
        PathModeSpec::Upper => PathMode::UpperBound,
    };

    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for (pair_idx, eps) in c.epsilon.iter().enumerate() {
        let epsilon = (eps[0], eps[1]);
        let result = match &c.oracle {
            OracleSpec::Surrogate => integrate_interpolation_path(
                &th,
                epsilon,
                mode,
                c.m_u_const,
                |t, r| se_surrogate_overlap(&th, t, r),
                c.steps,
            ),
            OracleSpec::Gibbs { n, params } => (|| {
                let dims = Dimensions::from_scale(*n, &th)?;
                let instance =
                    generate_instance(&th, dims, derive_seed(c.seed, pair_idx as u64))?;
                let oracle = interpolation_overlap_oracle(
                    &instance,
                    params.params(),
                    derive_seed(c.seed, 1000 + pair_idx as u64),
                );
                integrate_interpolation_path(&th, epsilon, mode, c.m_u_const, oracle, c.steps)
            })(),
        };
        match result {
            Ok(path) => {
                for k in 0..path.grid.len() {
                    lines.push(format!(
                        "{},{},{},{},{},{},{},{}",
                        fmt_f(epsilon.0),
                        fmt_f(epsilon.1),
                        mode,
                        fmt_f(path.grid[k]),
                        fmt_f(path.r_u[k]),
                        fmt_f(path.r_v[k]),
                        fmt_f(path.r_u_prime[k]),
                        fmt_f(path.r_v_prime[k]),
                    ));
                }
            }
            Err(e @ LibError::InvalidArgument(_)) => {
                return Err(RunError::Config(e.to_string()))
            }
            Err(e) => {
                failures.push(format!(
                    "path epsilon=({}, {}) aborted: {e}",
                    epsilon.0, epsilon.1
                ));
            }
        }
    }
    write_csv(out_dir, exp.stem(), PATH_HEADER, &lines)?;
    Ok(failures)
}

fn run_thermo(
    c: &crate::config::ThermoConfig,
    exp: &Experiment,
    out_dir: &Path,
) -> Result<Vec<String>, RunError> {
    let grid = c.theta.lambda_grid().map_err(|e| RunError::Config(e.0))?;
    let th = c.theta.at(grid[0]).map_err(|e| RunError::Config(e.0))?;
    let pool = build_pool(exp.jobs())?;
    let points = pool
        .install(|| thermo_integration_mi(&th, c.n, &grid, &c.gibbs.params(), c.seed))
        .map_err(classify)?;

    let threshold = lambda_it(&th);
    let mut lines = Vec::new();
    for (k, p) in points.iter().enumerate() {
        let near = (p.lambda - threshold).abs() < 0.1 * threshold;
        let burn = if near { 2 * c.gibbs.burn_in } else { c.gibbs.burn_in };
        let mut flags = p.warnings.clone();
        if near {
            flags.push("near_threshold".into());
        }
        let flag_str = flags.join(";");
        let seed = derive_seed(c.seed, k as u64);
        for (name, value, se) in
            [("gibbs_mmse", p.mmse, p.mmse_se), ("thermo_mi", p.mi, p.mi_se)]
        {
            lines.push(
                EstRow {
                    lambda: p.lambda,
                    n: c.n,
                    estimator: name.into(),
                    value,
                    std_error: se,
                    n_samples: c.gibbs.n_samples,
                    burn_in: burn,
                    seed,
                    warn_flags: flag_str.clone(),
                }
                .csv_line(),
            );
        }
    }
    write_csv(out_dir, exp.stem(), ESTIMATE_HEADER, &lines)?;
    Ok(Vec::new())
}
