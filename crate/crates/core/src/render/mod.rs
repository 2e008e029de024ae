//! Cameras, volume rendering of voxel fields and its reverse-mode
//! derivative, and analytic depth of oriented-box regions.

mod adjoint;
mod box_depth;
mod camera;
mod volume;

pub use adjoint::render_view_adjoint;
pub use box_depth::{ray_box_depth, render_box_depth};
pub use camera::{orbit_camera, Camera, Ray};
pub use volume::{
    pixel_rng, render_ray, render_view, RayRender, RenderCache, RenderOutput, RenderSample,
    DEPTH_EPS,
};
