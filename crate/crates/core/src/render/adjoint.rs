use rayon::prelude::*;

use super::camera::Camera;
use super::volume::{RenderCache, RenderSample};
use crate::field::{raw_color_grad, softplus_grad_from_output, FieldGradient, VoxelField};
use crate::map::{ColorMap, Rgb, ScalarMap};
use crate::{Error, Result};

/// Rows per partial gradient. Partials are summed in row order, so the
/// result does not depend on how many worker threads ran.
const ROWS_PER_CHUNK: usize = 8;

/// Reverse-mode derivative of [`render_view`](super::render_view) with
/// respect to the raw field parameters, for upstream pixel adjoints of color
/// and opacity. Depth carries no gradient.
pub fn render_view_adjoint(
    field: &VoxelField,
    camera: &Camera,
    d_color: &ColorMap,
    d_opacity: &ScalarMap,
    cache: &RenderCache,
) -> Result<FieldGradient> {
    if cache.camera != *camera {
        return Err(Error::contract("render cache was produced for a different camera"));
    }
    let (w, h) = (camera.width, camera.height);
    if d_color.dims() != (w, h) || d_opacity.dims() != (w, h) {
        return Err(Error::contract(format!(
            "upstream gradients {:?}/{:?} do not match the {w}x{h} view",
            d_color.dims(),
            d_opacity.dims()
        )));
    }
    if cache.samples.len() != w * h * cache.n_samples {
        return Err(Error::contract("render cache sample count does not match the view"));
    }

    let (right, up, forward) = camera.basis();
    let n = cache.n_samples;
    let chunks: Vec<usize> = (0..h).step_by(ROWS_PER_CHUNK).collect();
    let partials: Vec<Option<FieldGradient>> = chunks
        .par_iter()
        .map(|&y0| {
            let mut grad: Option<FieldGradient> = None;
            for y in y0..(y0 + ROWS_PER_CHUNK).min(h) {
                for x in 0..w {
                    let p = y * w + x;
                    let g_c = d_color.as_slice()[p];
                    let g_o = d_opacity.as_slice()[p];
                    if g_c == [0.0; 3] && g_o == 0.0 {
                        continue;
                    }
                    let ray = camera.ray_with_basis(x, y, &right, &up, &forward);
                    let samples = &cache.samples[p * n..(p + 1) * n];
                    let grad = grad.get_or_insert_with(|| FieldGradient::zeros_like(field));
                    backprop_ray(samples, cache.delta, g_c, g_o, |k, d_rho, d_c, s| {
                        if let Some(st) = field.stencil(&ray.at(k)) {
                            grad.scatter(
                                &st,
                                d_rho * softplus_grad_from_output(s.density),
                                raw_color_grad(s.color, d_c),
                            );
                        }
                    });
                }
            }
            grad
        })
        .collect();

    let mut total = FieldGradient::zeros_like(field);
    for g in partials.into_iter().flatten() {
        total.add_assign(&g);
    }
    Ok(total)
}

/// Walks one ray's samples back to front, reporting `(k, dL/dρ, dL/dc)` per
/// sample.
///
/// With `τ_i = ρ_i δ`, `T_{i+1} = T_i e^{-τ_i}` and `w_i = T_i − T_{i+1}`:
/// `∂C/∂τ_i = T_{i+1} c_i − Σ_{j>i} w_j c_j` and `∂O/∂τ_i = T_{N+1}`.
pub(crate) fn backprop_ray(
    samples: &[RenderSample],
    delta: f64,
    g_c: Rgb,
    g_o: f64,
    mut emit: impl FnMut(f64, f64, Rgb, &RenderSample),
) {
    let n = samples.len();
    // Forward transmittance before each sample, plus the final one.
    let mut trans = Vec::with_capacity(n + 1);
    let mut t = 1.0;
    trans.push(t);
    for s in samples {
        if s.density != 0.0 {
            t *= (-s.density * delta).exp();
        }
        trans.push(t);
    }
    let t_final = trans[n];
    let mut suffix = [0.0; 3];
    for i in (0..n).rev() {
        let s = &samples[i];
        if s.density == 0.0 {
            // Vacuum or outside the extent: no parameters to reach (and the
            // softplus gradient vanishes with the density).
            continue;
        }
        let w = trans[i] - trans[i + 1];
        let t_next = trans[i + 1];
        let d_tau = g_c[0] * (t_next * s.color[0] - suffix[0])
            + g_c[1] * (t_next * s.color[1] - suffix[1])
            + g_c[2] * (t_next * s.color[2] - suffix[2])
            + g_o * t_final;
        let d_c = [w * g_c[0], w * g_c[1], w * g_c[2]];
        emit(s.k, d_tau * delta, d_c, s);
        suffix[0] += w * s.color[0];
        suffix[1] += w * s.color[1];
        suffix[2] += w * s.color[2];
    }
}
