//! Anisotropic eikonal activation, cable coupling and template-based Vm.

pub mod eikonal;
pub mod template;
pub mod velocity;

pub use eikonal::{couple_cables, solve_eikonal, ActivationMap, EikonalOptions, EikonalSolver, StimulusSpec};
pub use template::{recover_vm, APTemplate, VmTraces};
pub use velocity::{Conduction, RegionRule, VelocityConfig, VelocityField};
