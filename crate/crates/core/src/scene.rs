//! Toy box scenes, rendered prompt targets for the analytic denoiser, and
//! the edit scenarios used by the demo and the test suites.

use std::collections::BTreeMap;

use crate::editor::{vacuum_density_param, CameraRig};
use crate::field::{logit, softplus_inverse, Extent, VoxelField};
use crate::guidance::{AnalyticDenoiser, NoiseSchedule, PromptId};
use crate::map::{ColorMap, Rgb};
use crate::region::{OrientedBox, RegionPrompt, ViewImages};
use crate::render::render_view;
use crate::{Result, Vec3};

/// Density of solid content in toy scenes.
pub const SOLID_DENSITY: f64 = 25.0;

/// A solid, uniformly colored box.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidBox {
    pub shape: OrientedBox,
    pub color: Rgb,
    pub density: f64,
}

impl SolidBox {
    pub fn new(center: Vec3, size: Vec3, color: Rgb) -> Self {
        Self {
            shape: OrientedBox::axis_aligned(center, size),
            color,
            density: SOLID_DENSITY,
        }
    }
}

/// Voxelizes `boxes` by testing node centers, later boxes winning. Nodes
/// outside every box are vacuum. Parameters are rounded to f32 so the field
/// survives a checkpoint round trip unchanged.
pub fn box_scene(resolution: [usize; 3], extent: Extent, boxes: &[SolidBox]) -> Result<VoxelField> {
    for b in boxes {
        b.shape.validate()?;
    }
    let mut f = VoxelField::uniform(resolution, extent, vacuum_density_param(), [0.0; 3])?;
    let [nx, ny, nz] = resolution;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = f.cell_center(i, j, k);
                if let Some(b) = boxes.iter().rev().find(|b| b.shape.contains(&p)) {
                    let idx = f.index(i, j, k);
                    f.density_params_mut()[idx] = softplus_inverse(b.density) as f32 as f64;
                    f.color_params_mut()[idx] = b.color.map(|c| logit(c) as f32 as f64);
                }
            }
        }
    }
    Ok(f)
}

/// Unjittered color renders of `field` from every rig camera.
pub fn render_targets(field: &VoxelField, rig: &CameraRig, n_samples: usize) -> Vec<ColorMap> {
    rig.cameras()
        .iter()
        .map(|c| render_view(field, c, n_samples, false, 0).color)
        .collect()
}

/// Analytic denoiser whose prompts stand for renders of the given fields
/// from each rig view.
pub fn analytic_denoiser_for(
    prompts: &[(PromptId, &VoxelField)],
    uncond: Vec<(PromptId, f64)>,
    rig: &CameraRig,
    n_samples: usize,
) -> Result<AnalyticDenoiser> {
    let targets: BTreeMap<PromptId, ViewImages<ColorMap>> = prompts
        .iter()
        .map(|(p, f)| (p.clone(), ViewImages::PerView(render_targets(f, rig, n_samples))))
        .collect();
    AnalyticDenoiser::new(NoiseSchedule::default(), targets, uncond)
}

/// Layout shared by the demo scene: a floor plate and a blue block, with two
/// empty spots that edits fill with a red and a yellow box.
pub mod layout {
    use super::*;

    pub fn extent() -> Extent {
        Extent::cube(1.0)
    }

    pub fn floor() -> SolidBox {
        SolidBox::new(Vec3::new(0.0, -0.6, 0.0), Vec3::new(1.6, 0.15, 1.6), [0.6, 0.6, 0.55])
    }

    pub fn blue_block() -> SolidBox {
        SolidBox::new(Vec3::new(-0.4, -0.25, 0.0), Vec3::new(0.5, 0.55, 0.5), [0.2, 0.35, 0.8])
    }

    pub fn red_box() -> SolidBox {
        SolidBox::new(Vec3::new(0.4, -0.32, 0.1), Vec3::new(0.4, 0.4, 0.4), [0.85, 0.15, 0.1])
    }

    pub fn red_region() -> OrientedBox {
        OrientedBox::axis_aligned(Vec3::new(0.4, -0.26, 0.1), Vec3::new(0.6, 0.55, 0.6))
    }

    pub fn yellow_box() -> SolidBox {
        SolidBox::new(Vec3::new(-0.1, -0.35, -0.6), Vec3::new(0.35, 0.35, 0.35), [0.9, 0.8, 0.15])
    }

    pub fn yellow_region() -> OrientedBox {
        OrientedBox::axis_aligned(Vec3::new(-0.1, -0.28, -0.6), Vec3::new(0.5, 0.5, 0.5))
    }

    pub fn base() -> Vec<SolidBox> {
        vec![floor(), blue_block()]
    }
}

/// One local edit with a known answer: `target` is `source` plus the new
/// content, and both prompts are bound to their renders.
#[derive(Debug, Clone)]
pub struct EditScenario {
    pub source: VoxelField,
    pub target: VoxelField,
    pub region: RegionPrompt,
    pub source_prompt: PromptId,
    pub target_prompt: PromptId,
}

impl EditScenario {
    /// The demo scene gaining a red box in an empty spot next to the block.
    pub fn red_box(resolution: [usize; 3]) -> Result<Self> {
        let base = layout::base();
        let mut with_red = base.clone();
        with_red.push(layout::red_box());
        Ok(Self {
            source: box_scene(resolution, layout::extent(), &base)?,
            target: box_scene(resolution, layout::extent(), &with_red)?,
            region: RegionPrompt::single(layout::red_region())?,
            source_prompt: PromptId::from("a floor with a blue block"),
            target_prompt: PromptId::from("a floor with a blue block and a red box"),
        })
    }

    /// Fixture whose unconditional branch is the midpoint of the two prompt
    /// images. The target delta is then exactly opposite to the source delta,
    /// so for `ω = W` the guided prediction is consistent with the target
    /// image: `ε̂ − ε ∝ x − I_target`.
    pub fn denoiser(&self, rig: &CameraRig, n_samples: usize) -> Result<AnalyticDenoiser> {
        analytic_denoiser_for(
            &[
                (self.source_prompt.clone(), &self.source),
                (self.target_prompt.clone(), &self.target),
            ],
            vec![(self.source_prompt.clone(), 0.5), (self.target_prompt.clone(), 0.5)],
            rig,
            n_samples,
        )
    }
}
