//! Voxel-grid radiance field.
//!
//! Raw (unconstrained) parameters live at cell centers. A point is evaluated
//! by trilinear interpolation of the raw parameters over the eight
//! surrounding centers followed by the activations: softplus for density and
//! a logistic sigmoid per color channel. Within the outer half cell the
//! lattice is edge-extended; outside the extent the field is vacuum.

use crate::map::Rgb;
use crate::{Error, Result, Vec3};

/// Axis-aligned world-space bounds of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent {
    pub min: Vec3,
    pub max: Vec3,
}

impl Extent {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|a| !(max[a] > min[a]) || !min[a].is_finite() || !max[a].is_finite()) {
            return Err(Error::contract(format!(
                "degenerate extent: min {:?} max {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(Self { min, max })
    }

    /// Cube `[-half, half]^3`.
    pub fn cube(half: f64) -> Self {
        Self::new(Vec3::repeat(-half), Vec3::repeat(half)).expect("positive half-size")
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp_m1()).ln()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`] for `y` in (0, 1).
pub fn logit(y: f64) -> f64 {
    (y / (1.0 - y)).ln()
}

/// Derivative of softplus expressed through its output: `σ(x) = 1 − e^{−softplus(x)}`.
#[inline]
pub(crate) fn softplus_grad_from_output(density: f64) -> f64 {
    -(-density).exp_m1()
}

/// The eight lattice nodes around a point and their trilinear weights.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub nodes: [usize; 8],
    pub weights: [f64; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    resolution: [usize; 3],
    extent: Extent,
    density: Vec<f64>,
    color: Vec<Rgb>,
}

impl VoxelField {
    /// Field with every density parameter set to `density_param` and every
    /// color parameter to `color_param`.
    pub fn uniform(
        resolution: [usize; 3],
        extent: Extent,
        density_param: f64,
        color_param: Rgb,
    ) -> Result<Self> {
        let n = node_count(resolution)?;
        Ok(Self {
            resolution,
            extent,
            density: vec![density_param; n],
            color: vec![color_param; n],
        })
    }

    pub fn from_params(
        resolution: [usize; 3],
        extent: Extent,
        density: Vec<f64>,
        color: Vec<Rgb>,
    ) -> Result<Self> {
        let n = node_count(resolution)?;
        if density.len() != n || color.len() != n {
            return Err(Error::contract(format!(
                "parameter arrays ({} density, {} color) do not match {n} nodes",
                density.len(),
                color.len()
            )));
        }
        Ok(Self {
            resolution,
            extent,
            density,
            color,
        })
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn node_count(&self) -> usize {
        self.density.len()
    }

    pub fn density_params(&self) -> &[f64] {
        &self.density
    }

    pub fn density_params_mut(&mut self) -> &mut [f64] {
        &mut self.density
    }

    pub fn color_params(&self) -> &[Rgb] {
        &self.color
    }

    pub fn color_params_mut(&mut self) -> &mut [Rgb] {
        &mut self.color
    }

    /// Linear node index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.resolution;
        i + nx * (j + ny * k)
    }

    pub fn cell_size(&self) -> Vec3 {
        let size = self.extent.size();
        Vec3::new(
            size.x / self.resolution[0] as f64,
            size.y / self.resolution[1] as f64,
            size.z / self.resolution[2] as f64,
        )
    }

    /// World position of the center of cell `(i, j, k)`.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.cell_size();
        self.extent.min
            + Vec3::new(
                (i as f64 + 0.5) * h.x,
                (j as f64 + 0.5) * h.y,
                (k as f64 + 0.5) * h.z,
            )
    }

    pub fn is_finite(&self) -> bool {
        self.density.iter().all(|v| v.is_finite())
            && self.color.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Interpolation stencil at `point`, or `None` outside the extent.
    pub fn stencil(&self, point: &Vec3) -> Option<Stencil> {
        if !self.extent.contains(point) {
            return None;
        }
        let h = self.cell_size();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let u = ((point[a] - self.extent.min[a]) / h[a] - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (u.floor() as usize).min(n.saturating_sub(2));
            base[a] = i0;
            frac[a] = if n == 1 { 0.0 } else { u - i0 as f64 };
        }
        let mut nodes = [0usize; 8];
        let mut weights = [0.0f64; 8];
        for corner in 0..8 {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for a in 0..3 {
                let hi = (corner >> a) & 1 == 1;
                let n = self.resolution[a];
                idx[a] = if hi { (base[a] + 1).min(n - 1) } else { base[a] };
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            nodes[corner] = self.index(idx[0], idx[1], idx[2]);
            weights[corner] = w;
        }
        Some(Stencil { nodes, weights })
    }

    /// Interpolated raw parameters `(density_param, color_params)`.
    pub fn interpolate_raw(&self, stencil: &Stencil) -> (f64, Rgb) {
        let mut d = 0.0;
        let mut c = [0.0; 3];
        for (&n, &w) in stencil.nodes.iter().zip(&stencil.weights) {
            d += w * self.density[n];
            let cn = &self.color[n];
            c[0] += w * cn[0];
            c[1] += w * cn[1];
            c[2] += w * cn[2];
        }
        (d, c)
    }

    /// Activated density and color at `point`; vacuum outside the extent.
    pub fn sample(&self, point: &Vec3) -> (f64, Rgb) {
        match self.stencil(point) {
            None => (0.0, [0.0; 3]),
            Some(s) => {
                let (d, c) = self.interpolate_raw(&s);
                (softplus(d), [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])])
            }
        }
    }

    /// Adds the chain-rule contribution of `d_density`, `d_color` (adjoints of
    /// the activated sample at `point`) into `grad`.
    pub fn accumulate_sample_adjoint(
        &self,
        point: &Vec3,
        d_density: f64,
        d_color: Rgb,
        grad: &mut FieldGradient,
    ) {
        if d_density == 0.0 && d_color == [0.0; 3] {
            return;
        }
        let Some(s) = self.stencil(point) else {
            return;
        };
        let (d, c) = self.interpolate_raw(&s);
        let density = softplus(d);
        let col = [sigmoid(c[0]), sigmoid(c[1]), sigmoid(c[2])];
        grad.scatter(&s, d_density * softplus_grad_from_output(density), raw_color_grad(col, d_color));
    }
}

/// Adjoint of the color sigmoid given its output.
#[inline]
pub(crate) fn raw_color_grad(color: Rgb, d_color: Rgb) -> Rgb {
    [
        d_color[0] * color[0] * (1.0 - color[0]),
        d_color[1] * color[1] * (1.0 - color[1]),
        d_color[2] * color[2] * (1.0 - color[2]),
    ]
}

/// Free function form of [`VoxelField::sample`].
pub fn sample_field(field: &VoxelField, point: &Vec3) -> (f64, Rgb) {
    field.sample(point)
}

/// Free function form of [`VoxelField::accumulate_sample_adjoint`].
pub fn accumulate_sample_adjoint(
    field: &VoxelField,
    point: &Vec3,
    d_density: f64,
    d_color: Rgb,
    grad: &mut FieldGradient,
) {
    field.accumulate_sample_adjoint(point, d_density, d_color, grad)
}

fn node_count(resolution: [usize; 3]) -> Result<usize> {
    if resolution.iter().any(|&n| n == 0) {
        return Err(Error::contract(format!("zero resolution {resolution:?}")));
    }
    Ok(resolution.iter().product())
}

/// Gradient with respect to the raw parameters of a [`VoxelField`].
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    resolution: [usize; 3],
    pub density: Vec<f64>,
    pub color: Vec<Rgb>,
}

impl FieldGradient {
    pub fn zeros_like(field: &VoxelField) -> Self {
        let n = field.node_count();
        Self {
            resolution: field.resolution,
            density: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    /// Adds raw-parameter adjoints at a stencil's nodes.
    #[inline]
    pub(crate) fn scatter(&mut self, s: &Stencil, d_raw_density: f64, d_raw_color: Rgb) {
        for (&n, &w) in s.nodes.iter().zip(&s.weights) {
            if w == 0.0 {
                continue;
            }
            self.density[n] += w * d_raw_density;
            let c = &mut self.color[n];
            c[0] += w * d_raw_color[0];
            c[1] += w * d_raw_color[1];
            c[2] += w * d_raw_color[2];
        }
    }

    pub fn add_assign(&mut self, other: &FieldGradient) {
        debug_assert_eq!(self.resolution, other.resolution);
        for (a, b) in self.density.iter_mut().zip(&other.density) {
            *a += b;
        }
        for (a, b) in self.color.iter_mut().zip(&other.color) {
            a[0] += b[0];
            a[1] += b[1];
            a[2] += b[2];
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.density.iter_mut().for_each(|v| *v *= s);
        self.color
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v *= s));
    }

    /// Inner product with a parameter-space direction laid out like the
    /// gradient.
    pub fn dot(&self, other: &FieldGradient) -> f64 {
        let d: f64 = self.density.iter().zip(&other.density).map(|(a, b)| a * b).sum();
        let c: f64 = self
            .color
            .iter()
            .zip(&other.color)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .sum();
        d + c
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.density.iter().all(|v| v.is_finite())
            && self.color.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.density.iter().all(|&v| v == 0.0) && self.color.iter().all(|c| *c == [0.0; 3])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(seed: u64, res: [usize; 3]) -> VoxelField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = res.iter().product();
        let density = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let color = (0..n)
            .map(|_| {
                [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ]
            })
            .collect();
        VoxelField::from_params(res, Extent::cube(1.0), density, color).unwrap()
    }

    #[test]
    fn uniform_field_samples_activation() {
        let f = VoxelField::uniform([4, 5, 6], Extent::cube(1.0), 0.7, [0.0, 1.0, -1.0]).unwrap();
        let (d, c) = f.sample(&Vec3::new(0.13, -0.4, 0.77));
        assert!((d - softplus(0.7)).abs() < 1e-15);
        assert!((c[0] - 0.5).abs() < 1e-15);
        assert!((c[1] - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn outside_extent_is_vacuum() {
        let f = VoxelField::uniform([4, 4, 4], Extent::cube(1.0), 3.0, [2.0; 3]).unwrap();
        assert_eq!(f.sample(&Vec3::new(1.0001, 0.0, 0.0)), (0.0, [0.0; 3]));
        assert_eq!(f.sample(&Vec3::new(0.0, 0.0, -7.0)), (0.0, [0.0; 3]));
    }

    #[test]
    fn cell_center_puts_all_weight_on_one_node() {
        let mut f = VoxelField::uniform([5, 5, 5], Extent::cube(1.0), 0.0, [0.0; 3]).unwrap();
        let idx = f.index(2, 1, 3);
        f.density_params_mut()[idx] = 1.5;
        f.color_params_mut()[idx] = [2.0, -1.0, 0.5];
        let p = f.cell_center(2, 1, 3);
        let s = f.stencil(&p).unwrap();
        let on_node: f64 = s
            .nodes
            .iter()
            .zip(&s.weights)
            .filter(|(&n, _)| n == idx)
            .map(|(_, &w)| w)
            .sum();
        assert!((on_node - 1.0).abs() < 1e-12);
        let (d, c) = f.sample(&p);
        assert!((d - softplus(1.5)).abs() < 1e-12);
        assert!((c[0] - sigmoid(2.0)).abs() < 1e-12);
        assert!((c[1] - sigmoid(-1.0)).abs() < 1e-12);
    }

    #[test]
    fn activations_invert() {
        for y in [1e-6, 0.3, 1.0, 12.0, 45.0] {
            assert!((softplus(softplus_inverse(y)) - y).abs() < 1e-9 * y.max(1.0));
        }
        for y in [0.01, 0.5, 0.93] {
            assert!((sigmoid(logit(y)) - y).abs() < 1e-12);
        }
        assert!((softplus_grad_from_output(softplus(0.3)) - sigmoid(0.3)).abs() < 1e-14);
    }

    #[test]
    fn zero_adjoint_leaves_gradient() {
        let f = random_field(1, [3, 3, 3]);
        let mut g = FieldGradient::zeros_like(&f);
        f.accumulate_sample_adjoint(&Vec3::new(0.1, 0.2, 0.3), 0.0, [0.0; 3], &mut g);
        f.accumulate_sample_adjoint(&Vec3::new(2.0, 0.2, 0.3), 1.0, [1.0; 3], &mut g);
        assert!(g.is_zero());
    }

    #[test]
    fn unit_density_adjoint_is_weight_times_softplus_grad() {
        let f = random_field(7, [4, 4, 4]);
        let p = Vec3::new(0.21, -0.33, 0.05);
        let mut g = FieldGradient::zeros_like(&f);
        f.accumulate_sample_adjoint(&p, 1.0, [0.0; 3], &mut g);
        let s = f.stencil(&p).unwrap();
        let (raw, _) = f.interpolate_raw(&s);
        for (&n, &w) in s.nodes.iter().zip(&s.weights) {
            assert!((g.density[n] - w * sigmoid(raw)).abs() < 1e-14);
        }
        // Central differences on each node.
        let step = 1e-4;
        for &n in &s.nodes {
            let mut plus = f.clone();
            plus.density_params_mut()[n] += step;
            let mut minus = f.clone();
            minus.density_params_mut()[n] -= step;
            let fd = (plus.sample(&p).0 - minus.sample(&p).0) / (2.0 * step);
            assert!((fd - g.density[n]).abs() <= 1e-4 * g.density[n].abs().max(1e-8));
        }
    }

    proptest! {
        #[test]
        fn adjoint_matches_finite_differences(
            seed in 0u64..1000,
            px in -0.95f64..0.95, py in -0.95f64..0.95, pz in -0.95f64..0.95,
            dd in -2.0f64..2.0, dr in -2.0f64..2.0, dg in -2.0f64..2.0, db in -2.0f64..2.0,
        ) {
            let f = random_field(seed, [3, 4, 5]);
            let p = Vec3::new(px, py, pz);
            let dc = [dr, dg, db];
            let mut g = FieldGradient::zeros_like(&f);
            f.accumulate_sample_adjoint(&p, dd, dc, &mut g);
            let objective = |f: &VoxelField| {
                let (d, c) = f.sample(&p);
                dd * d + dc[0] * c[0] + dc[1] * c[1] + dc[2] * c[2]
            };
            let step = 1e-4;
            let s = f.stencil(&p).unwrap();
            for &n in &s.nodes {
                let mut fp = f.clone();
                fp.density_params_mut()[n] += step;
                let mut fm = f.clone();
                fm.density_params_mut()[n] -= step;
                let fd = (objective(&fp) - objective(&fm)) / (2.0 * step);
                prop_assert!((fd - g.density[n]).abs() <= 1e-4 * fd.abs().max(1e-3));
                for ch in 0..3 {
                    let mut fp = f.clone();
                    fp.color_params_mut()[n][ch] += step;
                    let mut fm = f.clone();
                    fm.color_params_mut()[n][ch] -= step;
                    let fd = (objective(&fp) - objective(&fm)) / (2.0 * step);
                    prop_assert!((fd - g.color[n][ch]).abs() <= 1e-4 * fd.abs().max(1e-3));
                }
            }
        }

        #[test]
        fn sampling_is_continuous(seed in 0u64..1000, px in -0.9f64..0.9, py in -0.9f64..0.9, pz in -0.9f64..0.9) {
            let f = random_field(seed, [4, 4, 4]);
            let p = Vec3::new(px, py, pz);
            let (d0, c0) = f.sample(&p);
            for delta in [1e-3, 1e-5, 1e-7] {
                let (d1, c1) = f.sample(&(p + Vec3::new(delta, -delta, delta)));
                // Lipschitz bound: raw slopes are at most (range 4) / (cell 0.5).
                let bound = 8.0 * 3.0 * delta;
                prop_assert!((d1 - d0).abs() <= bound);
                prop_assert!((c1[0] - c0[0]).abs() <= bound);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = random_field(3, [5, 5, 5]);
        let p = Vec3::new(0.123, 0.456, -0.789);
        let a = f.sample(&p);
        let b = f.sample(&p);
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.map(f64::to_bits), b.1.map(f64::to_bits));
    }

    #[test]
    fn rejects_degenerate_extent() {
        assert!(Extent::new(Vec3::zeros(), Vec3::new(1.0, 0.0, 1.0)).is_err());
        assert!(VoxelField::uniform([0, 1, 1], Extent::cube(1.0), 0.0, [0.0; 3]).is_err());
    }
}
