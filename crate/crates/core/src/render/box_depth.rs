use super::camera::{Camera, Ray};
use crate::map::{Map, ScalarMap};
use crate::region::{OrientedBox, RegionPrompt};

/// Distance along `ray` to the first point of `b`, `+inf` on a miss. A ray
/// that starts inside the box reports 0.
pub fn ray_box_depth(ray: &Ray, b: &OrientedBox) -> f64 {
    let rt = b.rotation.transpose();
    let o = rt * (ray.origin - b.center);
    let d = rt * ray.direction;
    let mut t_min = f64::NEG_INFINITY;
    let mut t_max = f64::INFINITY;
    for a in 0..3 {
        let half = 0.5 * b.size[a];
        if d[a] == 0.0 {
            if o[a].abs() > half {
                return f64::INFINITY;
            }
            continue;
        }
        let t1 = (-half - o[a]) / d[a];
        let t2 = (half - o[a]) / d[a];
        t_min = t_min.max(t1.min(t2));
        t_max = t_max.min(t1.max(t2));
    }
    let entry = t_min.max(0.0);
    if t_max < entry {
        f64::INFINITY
    } else {
        entry
    }
}

/// Per-pixel depth of the region's boxes (nearest box wins); `+inf` where no
/// box is hit.
pub fn render_box_depth(region: &RegionPrompt, camera: &Camera) -> ScalarMap {
    let rays = camera.generate_rays();
    let depths = rays
        .iter()
        .map(|r| {
            region
                .boxes
                .iter()
                .map(|b| ray_box_depth(r, b))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Map::from_vec(camera.width, camera.height, depths).expect("one ray per pixel")
}
