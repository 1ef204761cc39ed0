//! Asymptotic theory: potentials, their extremizers, sphere partition
//! functions, the scalar-channel consistency check, and the interpolating
//! path ODE.

pub mod bessel;
pub mod channel;
pub mod extremizer;
pub mod path;
pub mod potential;

pub use bessel::{log_bessel_i, log_partition_sphere, log_partition_sphere_from_norm};
pub use channel::channel_mi_mc;
pub use extremizer::{
    closed_form_extremizer, i_mmse_consistency, infsup_solve_numeric, lambda_it, limit_mmse,
    state_evolution_solve, stationarity_maps, supinf_solve_phi, Branch, ExtremizerSolution,
};
pub use path::{
    integrate_interpolation_path, se_surrogate_overlap, InterpolationPath, PathMode,
};
pub use potential::{potential_i, potential_phi, scalar_channel_mi, varphi, varphi_prime};
