//! JSON experiment configs. Parsing is fail-closed: unknown fields are
//! rejected so a typo in a sweep definition cannot silently fall back to a
//! default. Every config carries an explicit seed; there is no wall-clock
//! seeding anywhere.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spikelab::Hyperparams;

pub const SCHEMA_VERSION: u32 = 1;

/// Anything that should terminate with exit code 2: unparseable or
/// semantically invalid configs, unusable paths, mismatched inputs.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn one() -> f64 {
    1.0
}

/// A scalar, an explicit list, or an evenly spaced `{start, stop, count}`
/// grid. A bare JSON array is always read as an explicit list; the range
/// form must be spelled as an object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Single(f64),
    List(Vec<f64>),
    Range { start: f64, stop: f64, count: usize },
}

impl GridSpec {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, ConfigError> {
        let vals = match self {
            GridSpec::Single(x) => vec![*x],
            GridSpec::List(xs) => xs.clone(),
            GridSpec::Range { start, stop, count } => {
                if *count == 0 {
                    return Err(ConfigError(format!("{field}: range count must be at least 1")));
                }
                if !(start.is_finite() && stop.is_finite() && stop >= start) {
                    return Err(ConfigError(format!(
                        "{field}: range needs finite start <= stop, got [{start}, {stop}]"
                    )));
                }
                if *count == 1 {
                    if start != stop {
                        return Err(ConfigError(format!(
                            "{field}: a one-point range needs start == stop"
                        )));
                    }
                    vec![*start]
                } else {
                    let step = (stop - start) / (*count as f64 - 1.0);
                    let mut v: Vec<f64> =
                        (0..*count).map(|k| start + step * k as f64).collect();
                    // land exactly on the endpoint
                    *v.last_mut().unwrap() = *stop;
                    v
                }
            }
        };
        if vals.is_empty() {
            return Err(ConfigError(format!("{field}: grid must be nonempty")));
        }
        if let Some(bad) = vals.iter().find(|x| !x.is_finite()) {
            return Err(ConfigError(format!("{field}: non-finite grid value {bad}")));
        }
        Ok(vals)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub lambda: GridSpec,
    #[serde(default = "one")]
    pub alpha_u: f64,
    #[serde(default = "one")]
    pub alpha_v: f64,
    #[serde(default = "one")]
    pub rho_u: f64,
    #[serde(default = "one")]
    pub rho_v: f64,
}

impl ThetaSpec {
    pub fn lambda_grid(&self) -> Result<Vec<f64>, ConfigError> {
        self.lambda.values("theta.lambda")
    }

    pub fn single_lambda(&self) -> Result<f64, ConfigError> {
        let grid = self.lambda_grid()?;
        if grid.len() != 1 {
            return Err(ConfigError(format!(
                "theta.lambda: this experiment takes a single SNR, got {} values",
                grid.len()
            )));
        }
        Ok(grid[0])
    }

    pub fn at(&self, lambda: f64) -> Result<Hyperparams, ConfigError> {
        Hyperparams::new(lambda, self.alpha_u, self.alpha_v, self.rho_u, self.rho_v)
            .map_err(|e| ConfigError(format!("theta: {e}")))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for lam in self.lambda_grid()? {
            self.at(lam)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSpec {
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
}

impl Default for GibbsSpec {
    fn default() -> Self {
        let d = spikelab::gibbs::GibbsParams::default();
        GibbsSpec { burn_in: d.burn_in, n_samples: d.n_samples, thinning: d.thinning }
    }
}

impl GibbsSpec {
    pub fn params(&self) -> spikelab::gibbs::GibbsParams {
        spikelab::gibbs::GibbsParams {
            burn_in: self.burn_in,
            n_samples: self.n_samples,
            thinning: self.thinning,
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.n_samples < 20 {
            return Err(ConfigError(format!(
                "gibbs.n_samples: need at least 20 for batch-means errors, got {}",
                self.n_samples
            )));
        }
        if self.thinning == 0 {
            return Err(ConfigError("gibbs.thinning: must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    GibbsMmse,
    Spectral,
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::GibbsMmse]
}

fn default_spectral_tol() -> f64 {
    1e-10
}

fn default_spectral_max_iter() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleSpec {
    /// Deterministic fixed-point surrogate; no sampling involved.
    Surrogate,
    /// Monte Carlo plug-in from a Gibbs chain on a fresh instance.
    Gibbs {
        n: usize,
        #[serde(default)]
        params: GibbsSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathModeSpec {
    Lower,
    Upper,
}

macro_rules! common_fields_impl {
    ($t:ty) => {
        impl $t {
            pub fn apply_overrides(
                &mut self,
                seed: Option<u64>,
                out: Option<PathBuf>,
                jobs: Option<usize>,
            ) {
                if let Some(s) = seed {
                    self.seed = s;
                }
                if let Some(o) = out {
                    self.out = Some(o);
                }
                if let Some(j) = jobs {
                    self.jobs = Some(j);
                }
            }

            /// Serialization of everything that determines the result bytes.
            /// Output location and parallelism degree are excluded: they
            /// affect where and how fast, never what.
            pub fn canonical_json(&self) -> String {
                let mut c = self.clone();
                c.out = None;
                c.jobs = None;
                serde_json::to_string(&c).expect("config serializes")
            }
        }
    };
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryCurveConfig {
    pub schema_version: u32,
    pub kind: String,
    pub theta: ThetaSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(TheoryCurveConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSweepConfig {
    pub schema_version: u32,
    pub kind: String,
    pub theta: ThetaSpec,
    pub n: usize,
    pub repetitions: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub gibbs: GibbsSpec,
    #[serde(default = "default_spectral_tol")]
    pub spectral_tol: f64,
    #[serde(default = "default_spectral_max_iter")]
    pub spectral_max_iter: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(McSweepConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub schema_version: u32,
    pub kind: String,
    pub theta: ThetaSpec,
    pub n_list: Vec<usize>,
    pub repetitions: usize,
    #[serde(default)]
    pub gibbs: GibbsSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(ConcentrationConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma1Config {
    pub schema_version: u32,
    pub kind: String,
    /// ambient dimension of the scalar spherical channel
    pub n: usize,
    /// channel SNR values; written to the lambda column of the output
    pub snr: GridSpec,
    pub samples: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(Lemma1Config);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpPathConfig {
    pub schema_version: u32,
    pub kind: String,
    pub theta: ThetaSpec,
    /// list of (epsilon_u, epsilon_v) starting points, one path each
    pub epsilon: Vec<[f64; 2]>,
    pub mode: PathModeSpec,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_u_const: Option<f64>,
    pub oracle: OracleSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(InterpPathConfig);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermoConfig {
    pub schema_version: u32,
    pub kind: String,
    pub theta: ThetaSpec,
    pub n: usize,
    #[serde(default)]
    pub gibbs: GibbsSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}
common_fields_impl!(ThermoConfig);

#[derive(Debug, Clone)]
pub enum Experiment {
    TheoryCurve(TheoryCurveConfig),
    McSweep(McSweepConfig),
    Concentration(ConcentrationConfig),
    Lemma1(Lemma1Config),
    InterpPath(InterpPathConfig),
    Thermo(ThermoConfig),
}

/// first pass: just enough to pick the kind and check the schema version
#[derive(Deserialize)]
struct Probe {
    schema_version: u32,
    kind: String,
}

impl Experiment {
    pub fn kind_str(&self) -> &'static str {
        match self {
            Experiment::TheoryCurve(_) => "theory_curve",
            Experiment::McSweep(_) => "mc_sweep",
            Experiment::Concentration(_) => "concentration",
            Experiment::Lemma1(_) => "lemma1",
            Experiment::InterpPath(_) => "interp_path",
            Experiment::Thermo(_) => "thermo",
        }
    }

    /// Base name for all files this experiment writes.
    pub fn stem(&self) -> &'static str {
        self.kind_str()
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::TheoryCurve(c) => c.seed,
            Experiment::McSweep(c) => c.seed,
            Experiment::Concentration(c) => c.seed,
            Experiment::Lemma1(c) => c.seed,
            Experiment::InterpPath(c) => c.seed,
            Experiment::Thermo(c) => c.seed,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        let opt = match self {
            Experiment::TheoryCurve(c) => &c.out,
            Experiment::McSweep(c) => &c.out,
            Experiment::Concentration(c) => &c.out,
            Experiment::Lemma1(c) => &c.out,
            Experiment::InterpPath(c) => &c.out,
            Experiment::Thermo(c) => &c.out,
        };
        opt.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn jobs(&self) -> Option<usize> {
        match self {
            Experiment::TheoryCurve(c) => c.jobs,
            Experiment::McSweep(c) => c.jobs,
            Experiment::Concentration(c) => c.jobs,
            Experiment::Lemma1(c) => c.jobs,
            Experiment::InterpPath(c) => c.jobs,
            Experiment::Thermo(c) => c.jobs,
        }
    }

    pub fn canonical_json(&self) -> String {
        match self {
            Experiment::TheoryCurve(c) => c.canonical_json(),
            Experiment::McSweep(c) => c.canonical_json(),
            Experiment::Concentration(c) => c.canonical_json(),
            Experiment::Lemma1(c) => c.canonical_json(),
            Experiment::InterpPath(c) => c.canonical_json(),
            Experiment::Thermo(c) => c.canonical_json(),
        }
    }

    /// Serialization of the config as it was actually run, overrides
    /// included; embedded in the manifest so results can be regenerated.
    pub fn effective_json(&self) -> serde_json::Value {
        match self {
            Experiment::TheoryCurve(c) => serde_json::to_value(c),
            Experiment::McSweep(c) => serde_json::to_value(c),
            Experiment::Concentration(c) => serde_json::to_value(c),
            Experiment::Lemma1(c) => serde_json::to_value(c),
            Experiment::InterpPath(c) => serde_json::to_value(c),
            Experiment::Thermo(c) => serde_json::to_value(c),
        }
        .expect("config serializes")
    }

    pub fn load(
        path: &std::path::Path,
        seed: Option<u64>,
        out: Option<PathBuf>,
        jobs: Option<usize>,
    ) -> Result<Experiment, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let probe: Probe = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("config {}: {e}", path.display())))?;
        if probe.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                probe.schema_version
            )));
        }
        let parse = |e: serde_json::Error| ConfigError(format!("config {}: {e}", path.display()));
        let mut exp = match probe.kind.as_str() {
            "theory_curve" => {
                Experiment::TheoryCurve(serde_json::from_str(&text).map_err(parse)?)
            }
            "mc_sweep" => Experiment::McSweep(serde_json::from_str(&text).map_err(parse)?),
            "concentration" => {
                Experiment::Concentration(serde_json::from_str(&text).map_err(parse)?)
            }
            "lemma1" => Experiment::Lemma1(serde_json::from_str(&text).map_err(parse)?),
            "interp_path" => {
                Experiment::InterpPath(serde_json::from_str(&text).map_err(parse)?)
            }
            "thermo" => Experiment::Thermo(serde_json::from_str(&text).map_err(parse)?),
            other => {
                return Err(ConfigError(format!(
                    "kind: unknown experiment kind {other:?} (expected one of theory_curve, \
                     mc_sweep, concentration, lemma1, interp_path, thermo)"
                )))
            }
        };
        match &mut exp {
            Experiment::TheoryCurve(c) => c.apply_overrides(seed, out, jobs),
            Experiment::McSweep(c) => c.apply_overrides(seed, out, jobs),
            Experiment::Concentration(c) => c.apply_overrides(seed, out, jobs),
            Experiment::Lemma1(c) => c.apply_overrides(seed, out, jobs),
            Experiment::InterpPath(c) => c.apply_overrides(seed, out, jobs),
            Experiment::Thermo(c) => c.apply_overrides(seed, out, jobs),
        }
        exp.validate()?;
        Ok(exp)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        match self {
            Experiment::TheoryCurve(c) => c.theta.validate(),
            Experiment::McSweep(c) => {
                c.theta.validate()?;
                if c.n < 2 {
                    return Err(ConfigError("n: need n >= 2".into()));
                }
                if c.repetitions == 0 {
                    return Err(ConfigError("repetitions: must be at least 1".into()));
                }
                if c.estimators.is_empty() {
                    return Err(ConfigError("estimators: must be nonempty".into()));
                }
                if c.estimators.contains(&EstimatorKind::GibbsMmse) {
                    c.gibbs.validate()?;
                }
                if c.estimators.contains(&EstimatorKind::Spectral) {
                    if !(c.spectral_tol > 0.0) {
                        return Err(ConfigError("spectral_tol: must be positive".into()));
                    }
                    if c.spectral_max_iter == 0 {
                        return Err(ConfigError("spectral_max_iter: must be at least 1".into()));
                    }
                }
                Ok(())
            }
            Experiment::Concentration(c) => {
                c.theta.validate()?;
                c.theta.single_lambda()?;
                if c.n_list.is_empty() {
                    return Err(ConfigError("n_list: must be nonempty".into()));
                }
                if c.repetitions < 2 {
                    return Err(ConfigError(
                        "repetitions: variance diagnostics need at least 2".into(),
                    ));
                }
                c.gibbs.validate()
            }
            Experiment::Lemma1(c) => {
                if c.n == 0 {
                    return Err(ConfigError("n: must be at least 1".into()));
                }
                let snrs = c.snr.values("snr")?;
                if let Some(bad) = snrs.iter().find(|m| **m < 0.0) {
                    return Err(ConfigError(format!("snr: values must be nonnegative, got {bad}")));
                }
                if c.samples < 2 {
                    return Err(ConfigError("samples: need at least 2".into()));
                }
                Ok(())
            }
            Experiment::InterpPath(c) => {
                c.theta.validate()?;
                c.theta.single_lambda()?;
                if c.epsilon.is_empty() {
                    return Err(ConfigError("epsilon: must be nonempty".into()));
                }
                for e in &c.epsilon {
                    if !(e[0] >= 0.0 && e[1] >= 0.0 && e[0].is_finite() && e[1].is_finite()) {
                        return Err(ConfigError(format!(
                            "epsilon: pairs must be finite and nonnegative, got {e:?}"
                        )));
                    }
                }
                if c.steps == 0 {
                    return Err(ConfigError("steps: must be at least 1".into()));
                }
                match c.mode {
                    PathModeSpec::Lower => {
                        if c.m_u_const.is_none() {
                            return Err(ConfigError(
                                "m_u_const: required in lower mode".into(),
                            ));
                        }
                    }
                    PathModeSpec::Upper => {
                        if c.m_u_const.is_some() {
                            return Err(ConfigError(
                                "m_u_const: must be absent in upper mode".into(),
                            ));
                        }
                    }
                }
                if let OracleSpec::Gibbs { n, params } = &c.oracle {
                    if *n < 2 {
                        return Err(ConfigError("oracle.gibbs.n: need n >= 2".into()));
                    }
                    params.validate()?;
                }
                Ok(())
            }
            Experiment::Thermo(c) => {
                c.theta.validate()?;
                let grid = c.theta.lambda_grid()?;
                if grid.len() < 2 {
                    return Err(ConfigError(
                        "theta.lambda: integration needs at least 2 grid points".into(),
                    ));
                }
                for w in grid.windows(2) {
                    if !(w[1] > w[0]) {
                        return Err(ConfigError(
                            "theta.lambda: grid must be strictly increasing".into(),
                        ));
                    }
                }
                if grid[0] < 0.0 {
                    return Err(ConfigError("theta.lambda: grid must start at >= 0".into()));
                }
                if c.n < 2 {
                    return Err(ConfigError("n: need n >= 2".into()));
                }
                c.gibbs.validate()
            }
        }
    }
}
