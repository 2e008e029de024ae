use crate::field::{FieldGradient, VoxelField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        for (name, b) in [("adam_beta1", self.beta1), ("adam_beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("adam_eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam step; `k` counts steps from 1. Updated values are
/// stored at f32 precision so a checkpoint written at any point reloads to
/// the same state. A parameter whose step is exactly zero is left untouched.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamMoments, cfg: &AdamConfig, k: u64) {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.m.len(), "parameter and moment lengths differ");
    assert!(k >= 1, "Adam steps count from 1");
    let bc1 = 1.0 - cfg.beta1.powf(k as f64);
    let bc2 = 1.0 - cfg.beta2.powf(k as f64);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let step = cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
        if step != 0.0 {
            *p = (*p - step) as f32 as f64;
        }
    }
}

/// Adam over all raw parameters of a voxel field.
#[derive(Debug, Clone)]
pub struct FieldAdam {
    cfg: AdamConfig,
    density: AdamMoments,
    color: AdamMoments,
    steps: u64,
}

impl FieldAdam {
    pub fn new(field: &VoxelField, cfg: AdamConfig) -> Self {
        let n = field.node_count();
        Self {
            cfg,
            density: AdamMoments::zeros(n),
            color: AdamMoments::zeros(3 * n),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, field: &mut VoxelField, grad: &FieldGradient) -> Result<()> {
        if grad.resolution() != field.resolution() {
            return Err(Error::contract("gradient resolution does not match the field"));
        }
        self.steps += 1;
        adam_update(field.density_params_mut(), &grad.density, &mut self.density, &self.cfg, self.steps);
        let color = field.color_params_mut().as_flattened_mut();
        adam_update(color, grad.color.as_flattened(), &mut self.color, &self.cfg, self.steps);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_from_zero_state() {
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut p = [0.0];
        let mut s = AdamMoments::zeros(1);
        adam_update(&mut p, &[1.0], &mut s, &cfg, 1);
        let want = (-0.1 / (1.0 + cfg.eps)) as f32 as f64;
        assert_eq!(p[0], want);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut p = [0.3, -1.7];
        let mut s = AdamMoments {
            m: vec![0.5, -0.2],
            v: vec![0.4, 0.1],
        };
        // Non-zero moments still move parameters; zero moments do not.
        let mut q = p;
        let mut z = AdamMoments::zeros(2);
        adam_update(&mut q, &[0.0, 0.0], &mut z, &cfg, 1);
        assert_eq!(q, p);
        adam_update(&mut p, &[0.0, 0.0], &mut s, &cfg, 3);
        assert_eq!(s.m, vec![0.9 * 0.5, 0.9 * -0.2]);
        assert_eq!(s.v, vec![0.999 * 0.4, 0.999 * 0.1]);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut p = [100.0f32 as f64];
        let mut s = AdamMoments::zeros(1);
        let mut last = p[0];
        for k in 1..=2000 {
            adam_update(&mut p, &[-3.0], &mut s, &cfg, k);
            let step = p[0] - last;
            last = p[0];
            assert!((step - 0.01).abs() < 1e-4, "k {k}: step {step}");
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let mut p = [0.1, std::f64::consts::PI];
        let before = p;
        adam_update(&mut p, &[1.0, -2.0], &mut AdamMoments::zeros(2), &cfg, 1);
        assert_eq!(p, before);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig { lr: -1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig { eps: 0.0, ..AdamConfig::default() }.validate().is_err());
    }
}
