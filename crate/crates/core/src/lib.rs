//! Volumetric biatrial modeling: mesh generation, Laplace-driven structure labeling and
//! fibres, universal atrial coordinates, inter-atrial pathways, eikonal activation with
//! action-potential reconstruction, lead-field ECGs and parameter sweeps.

pub mod analysis;
pub mod ecg;
pub mod error;
pub mod fields;
pub mod forward;
pub mod graph;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod monodomain;
pub mod pipeline;
pub mod pathways;
pub mod propagation;
pub mod sweep;
pub mod uac;

pub use error::{Error, Result};
