//! Lead-field ECGs.

pub mod filter;
pub mod leadfield;
pub mod traces;

pub use leadfield::{lead_field_infinite, point_lead, Electrode, ElectrodeSet, LeadFieldSet, LeadFieldSource, LeadWeights, LIMB, PRECORDIAL};
pub use traces::{compute_extracellular, derive_12lead, filter_and_scale, EcgTraces, ElectrodeTraces, FilterRecord, FilterSpec, LEAD_NAMES};
