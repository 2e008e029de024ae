use super::rig::CameraRig;
use super::step::source_view;
use crate::field::VoxelField;
use crate::map::ColorMap;
use crate::metrics::ErrorAccumulator;
use crate::region::{RegionConfig, RegionPrompt};
use crate::render::render_view;
use crate::{Error, Result};

/// Edit quality over a camera sweep, with masks taken from the source field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditEvaluation {
    /// PSNR of the edited render against the reference on editable pixels.
    pub in_region_psnr: Option<f64>,
    /// Mean absolute color change on kept-content pixels (`M_t = 0`, `M_o = 1`).
    pub locality_mad: Option<f64>,
    /// Mean edited opacity on editable pixels.
    pub in_region_opacity: Option<f64>,
    /// Mean edited opacity on kept-empty pixels (`M_t = 0`, `M_o = 0`).
    pub empty_opacity: Option<f64>,
    pub editable_pixels: usize,
    pub content_pixels: usize,
    pub empty_pixels: usize,
}

/// Renders `source` and `edited` (unjittered) from every camera of `sweep`.
/// `references`, one per camera, are the images the edit should produce.
pub fn evaluate_edit(
    source: &VoxelField,
    edited: &VoxelField,
    region: &RegionPrompt,
    region_cfg: &RegionConfig,
    sweep: &CameraRig,
    references: Option<&[ColorMap]>,
    n_samples: usize,
) -> Result<EditEvaluation> {
    if let Some(r) = references {
        if r.len() != sweep.len() {
            return Err(Error::contract("one reference image per sweep camera is required"));
        }
    }
    let mut psnr = ErrorAccumulator::default();
    let mut mad = ErrorAccumulator::default();
    let (mut in_op, mut in_n) = (0.0, 0usize);
    let (mut empty_op, mut empty_n) = (0.0, 0usize);
    for (v, camera) in sweep.cameras().iter().enumerate() {
        let src = source_view(source, sweep, v, region, region_cfg, n_samples)?;
        let out = render_view(edited, camera, n_samples, false, 0);
        let content = src.masks.keep_content();
        let empty = src.masks.keep_empty();
        if let Some(r) = references {
            psnr.add(&out.color, &r[v], Some(&src.masks.m_t))?;
        }
        mad.add(&out.color, &src.color, Some(&content))?;
        for (i, &o) in out.opacity.as_slice().iter().enumerate() {
            if src.masks.m_t.as_slice()[i] {
                in_op += o;
                in_n += 1;
            }
            if empty.as_slice()[i] {
                empty_op += o;
                empty_n += 1;
            }
        }
    }
    Ok(EditEvaluation {
        in_region_psnr: psnr.psnr(),
        locality_mad: mad.mean_abs(),
        in_region_opacity: (in_n > 0).then(|| in_op / in_n as f64),
        empty_opacity: (empty_n > 0).then(|| empty_op / empty_n as f64),
        editable_pixels: in_n,
        content_pixels: mad.pixels(),
        empty_pixels: empty_n,
    })
}
