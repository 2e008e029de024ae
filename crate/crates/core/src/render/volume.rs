use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::camera::{Camera, Ray};
use crate::field::VoxelField;
use crate::map::{ColorMap, Map, Rgb, ScalarMap};

/// Opacity at or below which a ray has no defined depth.
pub const DEPTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRender {
    pub color: Rgb,
    pub opacity: f64,
    /// Opacity-weighted mean termination distance, `+inf` when the ray is
    /// (numerically) transparent.
    pub depth: f64,
    /// Transmittance past the last sample.
    pub transmittance: f64,
}

/// One quadrature sample as seen during the forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSample {
    pub k: f64,
    pub density: f64,
    pub color: Rgb,
}

/// Everything the adjoint pass needs to replay a [`render_view`] call.
#[derive(Debug, Clone)]
pub struct RenderCache {
    pub camera: Camera,
    pub n_samples: usize,
    /// Bin width shared by every sample of every ray.
    pub delta: f64,
    /// `width * height * n_samples` samples, pixel-major.
    pub samples: Vec<RenderSample>,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ColorMap,
    pub opacity: ScalarMap,
    pub depth: ScalarMap,
    pub n_samples: usize,
    pub cache: RenderCache,
}

/// Per-pixel jitter stream: one ChaCha stream per pixel under a run seed.
pub fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel as u64);
    rng
}

/// Quadrature along one ray over `[near, far]` split into `n_samples` equal
/// bins. Each sample stands for its bin (`delta` = bin width); it sits at the
/// bin midpoint, or uniformly inside the bin when `jitter` is given.
pub fn render_ray<R: Rng>(
    field: &VoxelField,
    ray: &Ray,
    n_samples: usize,
    near: f64,
    far: f64,
    jitter: Option<&mut R>,
) -> RayRender {
    march(field, ray, n_samples, near, far, jitter, None)
}

pub(crate) fn march<R: Rng>(
    field: &VoxelField,
    ray: &Ray,
    n_samples: usize,
    near: f64,
    far: f64,
    mut jitter: Option<&mut R>,
    mut record: Option<&mut Vec<RenderSample>>,
) -> RayRender {
    assert!(n_samples >= 1, "render_ray needs at least one sample");
    let delta = (far - near) / n_samples as f64;
    let mut transmittance = 1.0;
    let mut color = [0.0; 3];
    let mut opacity = 0.0;
    let mut depth_acc = 0.0;
    for i in 0..n_samples {
        let offset = match jitter.as_deref_mut() {
            Some(rng) => rng.random::<f64>(),
            None => 0.5,
        };
        let k = near + (i as f64 + offset) * delta;
        let (density, c) = field.sample(&ray.at(k));
        if let Some(rec) = record.as_deref_mut() {
            rec.push(RenderSample { k, density, color: c });
        }
        if density == 0.0 {
            continue;
        }
        let alpha = -(-density * delta).exp_m1();
        let w = transmittance * alpha;
        color[0] += w * c[0];
        color[1] += w * c[1];
        color[2] += w * c[2];
        opacity += w;
        depth_acc += w * k;
        transmittance *= (-density * delta).exp();
    }
    let depth = if opacity > DEPTH_EPS {
        depth_acc / opacity.max(DEPTH_EPS)
    } else {
        f64::INFINITY
    };
    RayRender {
        color,
        opacity,
        depth,
        transmittance,
    }
}

/// Renders every pixel of `camera`. With `stratified`, pixel `p` draws its
/// jitter from [`pixel_rng`]`(seed, p)`; otherwise `seed` is unused.
pub fn render_view(
    field: &VoxelField,
    camera: &Camera,
    n_samples: usize,
    stratified: bool,
    seed: u64,
) -> RenderOutput {
    let (w, h) = (camera.width, camera.height);
    let (right, up, forward) = camera.basis();
    let rows: Vec<(Vec<RayRender>, Vec<RenderSample>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut renders = Vec::with_capacity(w);
            let mut samples = Vec::with_capacity(w * n_samples);
            for x in 0..w {
                let ray = camera.ray_with_basis(x, y, &right, &up, &forward);
                let r = if stratified {
                    let mut rng = pixel_rng(seed, y * w + x);
                    march(
                        field,
                        &ray,
                        n_samples,
                        camera.near,
                        camera.far,
                        Some(&mut rng),
                        Some(&mut samples),
                    )
                } else {
                    march::<ChaCha8Rng>(
                        field,
                        &ray,
                        n_samples,
                        camera.near,
                        camera.far,
                        None,
                        Some(&mut samples),
                    )
                };
                renders.push(r);
            }
            (renders, samples)
        })
        .collect();

    let mut color = Vec::with_capacity(w * h);
    let mut opacity = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut samples = Vec::with_capacity(w * h * n_samples);
    for (renders, row_samples) in rows {
        for r in renders {
            color.push(r.color);
            opacity.push(r.opacity);
            depth.push(r.depth);
        }
        samples.extend(row_samples);
    }
    RenderOutput {
        color: Map::from_vec(w, h, color).expect("row-major fill"),
        opacity: Map::from_vec(w, h, opacity).expect("row-major fill"),
        depth: Map::from_vec(w, h, depth).expect("row-major fill"),
        n_samples,
        cache: RenderCache {
            camera: *camera,
            n_samples,
            delta: (camera.far - camera.near) / n_samples as f64,
            samples,
        },
    }
}
