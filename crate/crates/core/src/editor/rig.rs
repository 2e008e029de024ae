use std::f64::consts::TAU;

use crate::render::{orbit_camera, Camera};
use crate::{Error, Result, Vec3};

/// Orbit layout shared by the training rig and held-out sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSpec {
    pub center: Vec3,
    pub radius: f64,
    pub azimuths: usize,
    /// Elevations in radians.
    pub elevations: Vec<f64>,
    /// Azimuth of the first camera, radians.
    pub azimuth_offset: f64,
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl OrbitSpec {
    /// 16 azimuths at 15° and 35° elevation around the origin.
    pub fn standard(radius: f64, width: usize, height: usize) -> Self {
        Self {
            center: Vec3::zeros(),
            radius,
            azimuths: 16,
            elevations: vec![15f64.to_radians(), 35f64.to_radians()],
            azimuth_offset: 0.0,
            vertical_fov: 40f64.to_radians(),
            width,
            height,
            near: (radius - 2.0).max(0.05),
            far: radius + 2.0,
        }
    }

    /// Eight cameras between the training azimuths at 25° elevation, none of
    /// which coincide with a training view.
    pub fn held_out(&self) -> Self {
        let step = TAU / self.azimuths.max(1) as f64;
        Self {
            azimuths: 8,
            elevations: vec![25f64.to_radians()],
            azimuth_offset: self.azimuth_offset + 0.5 * step + 0.25 * step,
            ..self.clone()
        }
    }
}

/// Cameras indexed in elevation-major, azimuth-minor order. The index is the
/// view id handed to the denoiser and used for per-view images.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    cameras: Vec<Camera>,
}

impl CameraRig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::Config("camera rig is empty".into()));
        }
        let (w, h) = (cameras[0].width, cameras[0].height);
        for c in &cameras {
            c.validate()?;
            if (c.width, c.height) != (w, h) {
                return Err(Error::Config("rig cameras must share one resolution".into()));
            }
        }
        Ok(Self { cameras })
    }

    pub fn orbit(spec: &OrbitSpec) -> Result<Self> {
        if spec.azimuths == 0 || spec.elevations.is_empty() {
            return Err(Error::Config("orbit needs at least one azimuth and one elevation".into()));
        }
        if !(spec.radius > 0.0) {
            return Err(Error::Config(format!("orbit radius must be > 0, got {}", spec.radius)));
        }
        let mut cams = Vec::with_capacity(spec.azimuths * spec.elevations.len());
        for &el in &spec.elevations {
            for i in 0..spec.azimuths {
                let az = spec.azimuth_offset + TAU * i as f64 / spec.azimuths as f64;
                cams.push(orbit_camera(
                    spec.center,
                    spec.radius,
                    az,
                    el,
                    spec.vertical_fov,
                    spec.width,
                    spec.height,
                    spec.near,
                    spec.far,
                )?);
            }
        }
        Self::new(cams)
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, i: usize) -> &Camera {
        &self.cameras[i]
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.cameras[0].width, self.cameras[0].height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_rig_layout() {
        let spec = OrbitSpec::standard(3.5, 8, 8);
        let rig = CameraRig::orbit(&spec).unwrap();
        assert_eq!(rig.len(), 32);
        for c in rig.cameras() {
            assert!(((c.position - spec.center).norm() - 3.5).abs() < 1e-12);
        }
        // Second row is the higher elevation.
        assert!(rig.camera(16).position.y > rig.camera(0).position.y);
    }

    #[test]
    fn held_out_views_avoid_training_views() {
        let spec = OrbitSpec::standard(3.0, 4, 4);
        let train = CameraRig::orbit(&spec).unwrap();
        let test = CameraRig::orbit(&spec.held_out()).unwrap();
        assert_eq!(test.len(), 8);
        for a in test.cameras() {
            for b in train.cameras() {
                assert!((a.position - b.position).norm() > 0.1);
            }
        }
    }

    #[test]
    fn rejects_empty_or_mixed_rigs() {
        assert!(CameraRig::new(vec![]).is_err());
        let a = CameraRig::orbit(&OrbitSpec::standard(3.0, 4, 4)).unwrap().camera(0).clone();
        let b = Camera { width: 5, ..a };
        assert!(CameraRig::new(vec![a, b]).is_err());
    }
}
