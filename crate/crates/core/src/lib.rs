//! Phase-field computation of minimal (anisotropic, density-weighted)
//! partitions and isoperimetric sets in two dimensions.

// Comparisons written `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod cli;
pub mod constraints;
pub mod energy;
pub mod grid;
pub mod optimizer;
pub mod profile;

pub use anisotropy::{make_density_weight, Anisotropy, AnisotropyKind, EllipticFactor};
pub use constraints::{clip_unit, project_admissible, project_mass, project_partition, Residuals};
pub use energy::{energy_gradient, phase_energy, sharp_energy, total_energy, DoubleWell, PhaseSystem};
pub use grid::{gradient_field, integrate, refine_interpolate, Boundary, Field, Grid, Labels};
pub use optimizer::{
    extract_labels, minimize_at_eps, run_continuation, ContinuationSchedule, MinimizeConfig, Problem, RunReport, Stage,
};
pub use profile::{profile_energy_1d, profile_value, recovery_init, signed_distance, Profile};
