use crate::{Error, Result, Vec3};

/// Pinhole camera. Rays start at `position`; `near`/`far` bound the
/// quadrature interval along each (unit) ray direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in radians.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, k: f64) -> Vec3 {
        self.origin + self.direction * k
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        vertical_fov: f64,
        width: usize,
        height: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Self {
            position,
            look_at,
            up,
            vertical_fov,
            width,
            height,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite()) {
            return Err(Error::contract(format!(
                "camera needs 0 < near < far, got near {} far {}",
                self.near, self.far
            )));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(Error::contract(format!(
                "vertical fov {} outside (0, pi)",
                self.vertical_fov
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::contract("camera image has zero pixels"));
        }
        let forward = self.look_at - self.position;
        if forward.norm() == 0.0 || forward.cross(&self.up).norm() < 1e-12 {
            return Err(Error::contract("camera look direction is degenerate or parallel to up"));
        }
        Ok(())
    }

    /// Orthonormal (right, up, forward) frame.
    pub fn basis(&self) -> (Vec3, Vec3, Vec3) {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        (right, up, forward)
    }

    /// Ray through the center of pixel `(x, y)`; `y = 0` is the top row.
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let (right, up, forward) = self.basis();
        self.ray_with_basis(x, y, &right, &up, &forward)
    }

    pub(crate) fn ray_with_basis(
        &self,
        x: usize,
        y: usize,
        right: &Vec3,
        up: &Vec3,
        forward: &Vec3,
    ) -> Ray {
        let half_h = (0.5 * self.vertical_fov).tan();
        let half_w = half_h * self.width as f64 / self.height as f64;
        let sx = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * half_w;
        let sy = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * half_h;
        Ray::new(self.position, forward + right * sx + up * sy)
    }

    /// All pixel rays, row-major.
    pub fn generate_rays(&self) -> Vec<Ray> {
        let (right, up, forward) = self.basis();
        let mut rays = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                rays.push(self.ray_with_basis(x, y, &right, &up, &forward));
            }
        }
        rays
    }

    /// Same camera moved by a rigid transform `p -> rotation * p + translation`.
    pub fn transformed(&self, rotation: &crate::Mat3, translation: &Vec3) -> Camera {
        Camera {
            position: rotation * self.position + translation,
            look_at: rotation * self.look_at + translation,
            up: rotation * self.up,
            ..*self
        }
    }
}

/// Camera on a sphere of `radius` around `center`, looking at the center with
/// +y up. Azimuth is measured in the xz-plane from +x towards +z; elevation
/// upward from that plane; both in radians.
#[allow(clippy::too_many_arguments)]
pub fn orbit_camera(
    center: Vec3,
    radius: f64,
    azimuth: f64,
    elevation: f64,
    vertical_fov: f64,
    width: usize,
    height: usize,
    near: f64,
    far: f64,
) -> Result<Camera> {
    let dir = Vec3::new(
        elevation.cos() * azimuth.cos(),
        elevation.sin(),
        elevation.cos() * azimuth.sin(),
    );
    Camera::new(
        center + dir * radius,
        center,
        Vec3::y(),
        vertical_fov,
        width,
        height,
        near,
        far,
    )
}
