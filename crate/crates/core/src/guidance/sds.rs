use super::schedule::NoiseSchedule;
use crate::field::{FieldGradient, VoxelField};
use crate::map::{ColorMap, ScalarMap};
use crate::render::{render_view_adjoint, Camera, RenderCache};
use crate::{Error, Result};

/// Upstream pixel adjoint `w(t)(ε̂ − ε)`. The guided prediction is a
/// constant here: nothing flows back through the denoiser.
pub fn sds_pixel_gradient(eps_hat: &ColorMap, eps: &ColorMap, t: usize, sched: &NoiseSchedule) -> Result<ColorMap> {
    sched.check(t)?;
    eps_hat.check_same_shape(eps, "noise sample")?;
    let w = sched.weight(t);
    Ok(eps_hat.lincomb(w, eps, -w))
}

/// Score-distillation gradient on the raw field parameters for one rendered
/// view.
pub fn sds_gradient(
    field: &VoxelField,
    camera: &Camera,
    eps_hat: &ColorMap,
    eps: &ColorMap,
    t: usize,
    sched: &NoiseSchedule,
    cache: &RenderCache,
) -> Result<FieldGradient> {
    let g = sds_pixel_gradient(eps_hat, eps, t, sched)?;
    if g.dims() != (camera.width, camera.height) {
        return Err(Error::contract("noise prediction does not match the rendered view"));
    }
    let zero = ScalarMap::filled(camera.width, camera.height, 0.0);
    render_view_adjoint(field, camera, &g, &zero, cache)
}
