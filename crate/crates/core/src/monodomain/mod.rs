//! Reaction-diffusion reference model on slabs.

pub mod ionic;
pub mod slab;

pub use ionic::IonicModelParams;
pub use slab::{
    cable_cv, crossing_time, measure_cv, measure_cv_traces, simulate_slab, tune_conductivity, ConductivitySet, FiberAxis, SlabModel,
    SlabRun, SlabSpec, SlabStimulus, TuneOptions, TuneReport,
};
