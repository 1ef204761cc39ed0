use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A fixed-point iteration ran out of iterations. Carries the last iterate
    /// so callers can inspect how far it got.
    #[error("no convergence after {iterations} iterations (last iterate m_u={m_u:.6e}, m_v={m_v:.6e})")]
    FixedPointDiverged { m_u: f64, m_v: f64, iterations: usize },

    /// Power iteration stopped at max_iter. Carries the last Rayleigh quotient
    /// and overlaps; for diagnostics these are often still usable.
    #[error("power iteration did not converge in {iters} iterations (last sigma_1={sigma_1:.6e})")]
    PowerIterationDiverged { sigma_1: f64, q_u_sq: f64, q_v_sq: f64, iters: usize },

    /// An overlap oracle broke its contract during path integration.
    #[error("overlap oracle returned {value} at t={t}, outside [0, {upper}]")]
    OracleContract { t: f64, value: f64, upper: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
