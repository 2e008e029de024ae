use rand::Rng;

use crate::map::ColorMap;
use crate::{Error, Result};

/// Discrete DDPM-style schedule over timesteps `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

impl Default for NoiseSchedule {
    /// `T = 1000`, β linear from 1e-4 to 2e-2.
    fn default() -> Self {
        Self::linear(1000, 1e-4, 2e-2).expect("valid default schedule")
    }
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Config(format!("noise schedule needs >= 2 steps, got {steps}")));
        }
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::Config("every beta must lie in (0, 1)".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        // Posterior standard deviation of the reverse step.
        let sigmas = betas
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                (b * (1.0 - prev) / (1.0 - alpha_bars[i])).sqrt()
            })
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            sigmas,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.num_steps() {
            return Err(Error::Timestep {
                t,
                max: self.num_steps(),
            });
        }
        Ok(())
    }

    /// Panics if `t` is outside `1..=T`; see [`check`](Self::check).
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    /// Score-distillation weight `w(t) = 1 − ᾱ_t`.
    pub fn weight(&self, t: usize) -> f64 {
        1.0 - self.alpha_bars[t - 1]
    }
}

/// Closed-form forward marginal `x_t = √ᾱ_t x_0 + √(1−ᾱ_t) ε`.
pub fn add_noise(x0: &ColorMap, t: usize, eps: &ColorMap, sched: &NoiseSchedule) -> Result<ColorMap> {
    sched.check(t)?;
    x0.check_same_shape(eps, "noise")?;
    let ab = sched.alpha_bar(t);
    Ok(x0.lincomb(ab.sqrt(), eps, (1.0 - ab).sqrt()))
}

/// How score distillation picks a timestep per iteration. Both draw from
/// `[⌈0.02 T⌉, ⌊0.98 T⌋]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimestepSampling {
    #[default]
    Uniform,
    /// Deterministic linear decay from the top of the range to the bottom
    /// over the run.
    Annealed,
}

impl TimestepSampling {
    pub fn range(steps: usize) -> (usize, usize) {
        let lo = ((0.02 * steps as f64).ceil() as usize).max(1);
        let hi = ((0.98 * steps as f64).floor() as usize).max(lo);
        (lo, hi)
    }

    pub fn sample(&self, k: usize, iterations: usize, steps: usize, rng: &mut impl Rng) -> usize {
        let (lo, hi) = Self::range(steps);
        match self {
            TimestepSampling::Uniform => rng.random_range(lo..=hi),
            TimestepSampling::Annealed => {
                let frac = if iterations <= 1 {
                    0.0
                } else {
                    k as f64 / (iterations - 1) as f64
                };
                (hi as f64 - frac * (hi - lo) as f64).round() as usize
            }
        }
    }
}
