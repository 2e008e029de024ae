use super::report::LossReport;
use super::rig::CameraRig;
use super::step::{run_edit_step_observed, EditConfig};
use crate::field::{softplus_inverse, Extent, VoxelField};
use crate::guidance::{Denoiser, PromptId};
use crate::io::field_hash;
use crate::region::{OrientedBox, RegionPrompt};
use crate::{Error, Result};

/// Raw density of empty space in generated scenes, `softplus⁻¹(1e-4)`
/// rounded to f32.
pub fn vacuum_density_param() -> f64 {
    softplus_inverse(1e-4) as f32 as f64
}

/// Field with no content: near-zero density and mid-gray raw color.
pub fn vacuum_field(resolution: [usize; 3], extent: Extent) -> Result<VoxelField> {
    VoxelField::uniform(resolution, extent, vacuum_density_param(), [0.0; 3])
}

/// Region covering the whole extent, used for generation from nothing.
pub fn full_extent_region(extent: &Extent) -> Result<RegionPrompt> {
    RegionPrompt::single(OrientedBox::axis_aligned(extent.center(), extent.size()))
}

/// A starting field and the prompt it is known to satisfy (`None` for an
/// empty scene), followed by edits applied in order.
#[derive(Debug, Clone)]
pub struct EditChain {
    pub initial: VoxelField,
    pub initial_prompt: Option<PromptId>,
    pub steps: Vec<EditConfig>,
}

impl EditChain {
    /// Starts from an empty scene; the first step generates content from
    /// nothing and must have no source prompt.
    pub fn from_scratch(resolution: [usize; 3], extent: Extent, steps: Vec<EditConfig>) -> Result<Self> {
        Ok(Self {
            initial: vacuum_field(resolution, extent)?,
            initial_prompt: None,
            steps,
        })
    }

    /// Checks every step and the prompt linkage between consecutive steps.
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Config("edit chain has no steps".into()));
        }
        let mut prev = self.initial_prompt.clone();
        for (i, step) in self.steps.iter().enumerate() {
            step.validate().map_err(|e| Error::Step {
                step: i,
                source: Box::new(e),
            })?;
            if step.source_prompt != prev {
                let show = |p: &Option<PromptId>| p.as_ref().map_or("<none>".to_owned(), |p| format!("`{p}`"));
                return Err(Error::Config(format!(
                    "chain linkage broken at step {i}: source prompt {} does not match the previous prompt {}",
                    show(&step.source_prompt),
                    show(&prev)
                )));
            }
            prev = Some(step.target_prompt.clone());
        }
        Ok(())
    }
}

/// Callbacks invoked while a chain runs.
pub trait ChainObserver {
    /// Same contract as the observer of
    /// [`run_edit_step_observed`](super::run_edit_step_observed).
    fn iteration(&mut self, _step: usize, _k: usize, _field: &VoxelField) -> Result<()> {
        Ok(())
    }

    fn step_done(&mut self, _step: usize, _result: &StepResult) -> Result<()> {
        Ok(())
    }
}

impl ChainObserver for () {}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub field: VoxelField,
    pub report: LossReport,
    pub source_hash: String,
    pub output_hash: String,
}

#[derive(Debug, Clone)]
pub struct ChainOutcome {
    pub steps: Vec<StepResult>,
}

impl ChainOutcome {
    pub fn final_field(&self) -> &VoxelField {
        &self.steps.last().expect("chains have at least one step").field
    }
}

/// Runs the steps in order, each starting from the previous output.
/// Validation happens before any rendering; the first failing step aborts
/// the chain with its index attached.
pub fn run_chain<D: Denoiser + ?Sized>(
    chain: &EditChain,
    den: &D,
    rig: &CameraRig,
    observer: &mut dyn ChainObserver,
) -> Result<ChainOutcome> {
    chain.validate()?;
    let mut results: Vec<StepResult> = Vec::with_capacity(chain.steps.len());
    for (i, cfg) in chain.steps.iter().enumerate() {
        let source = results.last().map_or(&chain.initial, |r| &r.field);
        let source_hash = field_hash(source);
        let outcome = run_edit_step_observed(source, cfg, den, rig, &mut |k, f| observer.iteration(i, k, f))
            .map_err(|e| Error::Step {
                step: i,
                source: Box::new(e),
            })?;
        let result = StepResult {
            output_hash: field_hash(&outcome.field),
            field: outcome.field,
            report: outcome.report,
            source_hash,
        };
        observer.step_done(i, &result).map_err(|e| Error::Step {
            step: i,
            source: Box::new(e),
        })?;
        results.push(result);
    }
    Ok(ChainOutcome { steps: results })
}
