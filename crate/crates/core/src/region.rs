//! Editable regions and the per-view masks derived from them.
//!
//! A region is one or more oriented boxes, optionally replaced or extended
//! by externally supplied per-view data: a binary mask (e.g. a segmentation
//! result) or a depth map of a custom region shape. Masks are always derived
//! against the *source* render of a view:
//!
//! * `M_o` marks pixels whose source opacity exceeds `τ_o`;
//! * `M_t` marks pixels whose ray reaches the region before it reaches
//!   source content, where content closer than the region only counts if it
//!   is opaque enough (`Ô ≥ τ_o`), so faint floaters never block an edit.

use crate::map::{Map, Mask, ScalarMap};
use crate::render::{render_box_depth, Camera, RenderOutput};
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Full edge lengths along the box's local axes.
    pub size: Vec3,
    /// Box-local to world rotation.
    pub rotation: Mat3,
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, size: Vec3) -> Self {
        Self {
            center,
            size,
            rotation: Mat3::identity(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!(
                "box size {:?} must be strictly positive",
                self.size.as_slice()
            )));
        }
        let err = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        if !(err <= 1e-6) {
            return Err(Error::Config(format!(
                "box rotation is not orthonormal (|R^T R - I| = {err:e})"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let local = self.rotation.transpose() * (p - self.center);
        (0..3).all(|a| local[a].abs() <= 0.5 * self.size[a])
    }
}

/// Either one image shared by every view or one image per rig view.
#[derive(Debug, Clone, PartialEq)]
pub enum ViewImages<T> {
    Shared(T),
    PerView(Vec<T>),
}

impl<T> ViewImages<T> {
    pub fn for_view(&self, view: usize) -> Result<&T> {
        match self {
            ViewImages::Shared(v) => Ok(v),
            ViewImages::PerView(v) => v.get(view).ok_or_else(|| {
                Error::contract(format!("no per-view image for view {view} ({} supplied)", v.len()))
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPrompt {
    pub boxes: Vec<OrientedBox>,
    /// Replaces the box-derived `M_t` when present.
    pub external_mask: Option<ViewImages<Mask>>,
    /// Pre-rendered depth of a custom region shape, merged with the boxes by
    /// per-pixel minimum.
    pub external_depth: Option<ViewImages<ScalarMap>>,
}

impl RegionPrompt {
    pub fn from_boxes(boxes: Vec<OrientedBox>) -> Result<Self> {
        let r = Self {
            boxes,
            external_mask: None,
            external_depth: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn single(b: OrientedBox) -> Result<Self> {
        Self::from_boxes(vec![b])
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() && self.external_mask.is_none() && self.external_depth.is_none() {
            return Err(Error::Config(
                "region needs at least one box, external mask or external depth map".into(),
            ));
        }
        self.boxes.iter().try_for_each(OrientedBox::validate)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionConfig {
    pub tau_o: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { tau_o: 0.5 }
    }
}

impl RegionConfig {
    pub fn new(tau_o: f64) -> Result<Self> {
        let c = Self { tau_o };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_o > 0.0 && self.tau_o < 1.0) {
            return Err(Error::Config(format!(
                "opacity filter threshold tau_o = {} must lie in (0, 1)",
                self.tau_o
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    /// Editable pixels.
    pub m_t: Mask,
    /// Source-content pixels.
    pub m_o: Mask,
}

impl MaskSet {
    /// `M̄_t · M_o`: unchanged content.
    pub fn keep_content(&self) -> Mask {
        self.m_t.not().and(&self.m_o)
    }

    /// `M̄_t · M̄_o`: unchanged empty space.
    pub fn keep_empty(&self) -> Mask {
        self.m_t.not().and(&self.m_o.not())
    }
}

/// Source depth with faint (`Ô < τ_o`) pixels pushed to infinity.
pub fn modify_depth(d_hat: &ScalarMap, o_hat: &ScalarMap, tau_o: f64) -> Result<ScalarMap> {
    d_hat.check_same_shape(o_hat, "opacity map")?;
    let data = d_hat
        .as_slice()
        .iter()
        .zip(o_hat.as_slice())
        .map(|(&d, &o)| if o < tau_o { f64::INFINITY } else { d })
        .collect();
    Map::from_vec(d_hat.width(), d_hat.height(), data)
}

/// `M_t = [D_b < D̃]`, `M_o = [Ô > τ_o]`. Ties (and `∞ < ∞`) are not editable.
pub fn compute_masks(
    d_b: &ScalarMap,
    d_tilde: &ScalarMap,
    o_hat: &ScalarMap,
    tau_o: f64,
) -> Result<MaskSet> {
    d_b.check_same_shape(d_tilde, "modified depth map")?;
    d_b.check_same_shape(o_hat, "opacity map")?;
    let m_t = d_b
        .as_slice()
        .iter()
        .zip(d_tilde.as_slice())
        .map(|(b, t)| b < t)
        .collect();
    let m_o = o_hat.as_slice().iter().map(|&o| o > tau_o).collect();
    Ok(MaskSet {
        m_t: Map::from_vec(d_b.width(), d_b.height(), m_t)?,
        m_o: Map::from_vec(d_b.width(), d_b.height(), m_o)?,
    })
}

/// Nearest-neighbor resampling to `width × height`.
pub fn resample_nearest<T: Clone>(src: &Map<T>, width: usize, height: usize) -> Result<Map<T>> {
    if src.width() == 0 || src.height() == 0 {
        return Err(Error::contract("cannot resample a map with zero resolution"));
    }
    if src.dims() == (width, height) {
        return Ok(src.clone());
    }
    let (sw, sh) = src.dims();
    Ok(Map::from_fn(width, height, |x, y| {
        let sx = (((x as f64 + 0.5) * sw as f64 / width as f64) as usize).min(sw - 1);
        let sy = (((y as f64 + 0.5) * sh as f64 / height as f64) as usize).min(sh - 1);
        src.get(sx, sy).clone()
    }))
}

/// Region depth `D_b` for one view: boxes plus any external custom-shape depth.
pub fn region_depth(region: &RegionPrompt, camera: &Camera, view: usize) -> Result<ScalarMap> {
    let mut d_b = render_box_depth(region, camera);
    if let Some(ext) = &region.external_depth {
        let ext = resample_nearest(ext.for_view(view)?, camera.width, camera.height)?;
        for (d, e) in d_b.as_mut_slice().iter_mut().zip(ext.as_slice()) {
            *d = d.min(*e);
        }
    }
    Ok(d_b)
}

/// Full mask pipeline for rig view `view`: region depth, depth filtering,
/// mask comparison, then the external mask override.
pub fn region_masks_for_view(
    source: &RenderOutput,
    region: &RegionPrompt,
    camera: &Camera,
    view: usize,
    cfg: &RegionConfig,
) -> Result<MaskSet> {
    if source.cache.camera != *camera {
        return Err(Error::contract("source render was produced for a different camera"));
    }
    let d_b = region_depth(region, camera, view)?;
    let d_tilde = modify_depth(&source.depth, &source.opacity, cfg.tau_o)?;
    let mut masks = compute_masks(&d_b, &d_tilde, &source.opacity, cfg.tau_o)?;
    if let Some(ext) = &region.external_mask {
        masks.m_t = resample_nearest(ext.for_view(view)?, camera.width, camera.height)?;
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Extent, VoxelField};
    use crate::render::render_view;

    fn map(v: &[f64]) -> ScalarMap {
        Map::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn modify_depth_filters_faint_pixels() {
        let inf = f64::INFINITY;
        let d = modify_depth(&map(&[2.0, 2.0, 3.0]), &map(&[0.4, 0.9, 0.5]), 0.5).unwrap();
        assert_eq!(d.as_slice(), &[inf, 2.0, 3.0]);
        let d = modify_depth(&map(&[1.0, 5.0]), &map(&[0.0, 0.0]), 0.5).unwrap();
        assert!(d.as_slice().iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn shape_mismatch_is_a_contract_violation() {
        assert!(matches!(
            modify_depth(&map(&[1.0]), &map(&[1.0, 2.0]), 0.5),
            Err(Error::Contract(_))
        ));
        assert!(compute_masks(&map(&[1.0]), &map(&[1.0]), &map(&[1.0, 0.0]), 0.5).is_err());
    }

    #[test]
    fn mask_comparisons() {
        let inf = f64::INFINITY;
        let m = compute_masks(
            &map(&[inf, 2.5, 2.0, 3.0, 2.0]),
            &map(&[1.0, inf, 2.0, 2.0, inf]),
            &map(&[0.9, 0.0, 0.9, 0.5, 0.2]),
            0.5,
        )
        .unwrap();
        assert_eq!(m.m_t.as_slice(), &[false, true, false, false, true]);
        assert_eq!(m.m_o.as_slice(), &[true, false, true, false, false]);
        // Infinite box depth never makes a pixel editable.
        let m = compute_masks(&map(&[inf]), &map(&[inf]), &map(&[0.0]), 0.5).unwrap();
        assert!(!m.m_t.as_slice()[0]);
    }

    #[test]
    fn gates_partition_unchanged_pixels() {
        let inf = f64::INFINITY;
        let m = compute_masks(
            &map(&[inf, 1.0, inf, 1.0]),
            &map(&[inf, inf, 1.0, 2.0]),
            &map(&[0.0, 0.0, 0.9, 0.9]),
            0.5,
        )
        .unwrap();
        let c = m.keep_content();
        let e = m.keep_empty();
        for i in 0..4 {
            let gates = [m.m_t.as_slice()[i], c.as_slice()[i], e.as_slice()[i]];
            assert_eq!(gates.iter().filter(|&&g| g).count(), 1);
        }
    }

    #[test]
    fn tau_o_must_be_open_unit_interval() {
        assert!(RegionConfig::new(0.0).is_err());
        assert!(RegionConfig::new(1.0).is_err());
        assert!(RegionConfig::new(0.5).is_ok());
        assert_eq!(RegionConfig::default().tau_o, 0.5);
    }

    #[test]
    fn region_validation() {
        assert!(RegionPrompt::from_boxes(vec![]).is_err());
        let mut b = OrientedBox::axis_aligned(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0));
        assert!(RegionPrompt::single(b.clone()).is_err());
        b.size = Vec3::repeat(1.0);
        b.rotation[(0, 1)] = 0.1;
        assert!(RegionPrompt::single(b).is_err());
    }

    fn cam(w: usize) -> Camera {
        Camera::new(Vec3::new(0.0, 0.0, -4.0), Vec3::zeros(), Vec3::y(), 0.8, w, w, 1.0, 7.0).unwrap()
    }

    #[test]
    fn external_mask_passes_through() {
        let f = VoxelField::uniform([4, 4, 4], Extent::cube(1.0), -20.0, [0.0; 3]).unwrap();
        let c = cam(6);
        let src = render_view(&f, &c, 16, false, 0);
        let ext = Map::from_fn(6, 6, |x, y| (x * 7 + y * 3) % 4 == 0);
        let region = RegionPrompt {
            boxes: vec![],
            external_mask: Some(ViewImages::Shared(ext.clone())),
            external_depth: None,
        };
        let m = region_masks_for_view(&src, &region, &c, 0, &RegionConfig::default()).unwrap();
        assert_eq!(m.m_t, ext);

        // Lower-resolution masks are upsampled by nearest neighbor.
        let small = Map::from_vec(2, 2, vec![true, false, false, true]).unwrap();
        let up = resample_nearest(&small, 6, 6).unwrap();
        assert!(*up.get(0, 0) && *up.get(2, 2) && !*up.get(3, 0) && *up.get(5, 5));
        assert!(resample_nearest(&Map::<bool>::filled(0, 0, false), 6, 6).is_err());
    }

    #[test]
    fn external_depth_extends_boxes() {
        let f = VoxelField::uniform([4, 4, 4], Extent::cube(1.0), -20.0, [0.0; 3]).unwrap();
        let c = cam(4);
        let src = render_view(&f, &c, 16, false, 0);
        let mut depth = Map::filled(4, 4, f64::INFINITY);
        depth.set(0, 0, 3.0);
        let region = RegionPrompt {
            boxes: vec![],
            external_mask: None,
            external_depth: Some(ViewImages::PerView(vec![depth])),
        };
        let m = region_masks_for_view(&src, &region, &c, 0, &RegionConfig::default()).unwrap();
        assert_eq!(m.m_t.count(), 1);
        assert!(*m.m_t.get(0, 0));
        assert!(region_masks_for_view(&src, &region, &c, 1, &RegionConfig::default()).is_err());
    }

    #[test]
    fn source_render_must_match_camera() {
        let f = VoxelField::uniform([2, 2, 2], Extent::cube(1.0), -20.0, [0.0; 3]).unwrap();
        let src = render_view(&f, &cam(4), 8, false, 0);
        let region = RegionPrompt::single(OrientedBox::axis_aligned(Vec3::zeros(), Vec3::repeat(0.5))).unwrap();
        assert!(region_masks_for_view(&src, &region, &cam(5), 0, &RegionConfig::default()).is_err());
    }
}
