//! Diagnostics over estimates and trained checkpoints: temporal
//! smoothness, position landscapes and linear embedding probes.

mod landscape;
mod probe;
mod smoothness;

pub use landscape::{grid_axis, landscape_cost_critic, landscape_head, HazardContrast, LandscapeGrid, LandscapeValue};
pub use probe::{probe_dataset, probe_embedding, probe_latents, ridge_fit, ProbeReport, PROBE_RIDGE, PROBE_TRAIN_FRACTION};
pub use smoothness::{
    prop2_audit, prop2_audit_costs, single_cost_closed_forms, temporal_smoothness, trajectory_smoothness,
    two_cost_segment_sums, SmoothnessReport,
};
