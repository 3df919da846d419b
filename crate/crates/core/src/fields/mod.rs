//! P1 Laplace–Dirichlet solves and the rules that turn them into structure labels and fibres.

pub mod fem;
pub mod fibers;
pub mod laplace;
pub mod layout;
pub mod rules;
pub mod solves;

pub use fibers::{assign_fibers, FiberReport};
pub use laplace::{solve_laplace, DirichletSpec, FieldSolution, LaplaceSolver, Scheme};
pub use layout::{AtriumLayout, BiatrialLayout, Part};
pub use rules::{label_structures, Band, FieldInterval, StructureLabels, StructureRules};
pub use solves::{compute_fields, dirichlet_sets, FieldSet, FIELD_NAMES};
