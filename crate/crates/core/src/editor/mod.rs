//! Progressive editing: a local edit step optimizes a copy of the source
//! field toward the target prompt inside the region while the constraints
//! hold everything else in place; chains run such steps back to back.

mod adam;
mod chain;
mod eval;
mod report;
mod rig;
mod step;

pub use adam::{adam_update, AdamConfig, AdamMoments, FieldAdam};
pub use chain::{
    full_extent_region, run_chain, vacuum_density_param, vacuum_field, ChainObserver, ChainOutcome, EditChain,
    StepResult,
};
pub use eval::{evaluate_edit, EditEvaluation};
pub use report::{IterationRecord, LossReport, REPORT_HEADER};
pub use rig::{CameraRig, OrbitSpec};
pub use step::{run_edit_step, run_edit_step_observed, source_view, EditConfig, EditOutcome, SourceView};
