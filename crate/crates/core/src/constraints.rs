//! Region constraints on rendered maps: content consistency outside the
//! editable region and content initialization inside it. Each loss is a
//! plain sum over pixels and comes with its exact pixel-space gradient.

use crate::map::{ColorMap, ScalarMap};
use crate::region::MaskSet;
use crate::{Error, Result};

/// Ramp weight for the initialization constraint: `κ(k) = λ (1 − k/K)` for
/// `k < K`, zero afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSchedule {
    pub lambda: f64,
    pub k_max: usize,
}

impl InitSchedule {
    pub fn new(lambda: f64, k_max: usize) -> Result<Self> {
        let s = Self { lambda, k_max };
        s.validate()?;
        Ok(s)
    }

    /// `λ = 0.5`, `K = N / 4` (at least 1).
    pub fn for_iterations(n: usize) -> Self {
        Self {
            lambda: 0.5,
            k_max: (n / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("initialization cutoff K must be >= 1".into()));
        }
        Ok(())
    }

    pub fn kappa(&self, k: usize) -> f64 {
        if k < self.k_max {
            self.lambda * (1.0 - k as f64 / self.k_max as f64)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintWeights {
    pub w_consist: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        Self { w_consist: 1.0 }
    }
}

/// Which consistency constraint an edit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConsistencyMode {
    /// Separate content (color) and empty-space (opacity) terms.
    #[default]
    Split,
    /// Color-only over every unchanged pixel; kept for ablations.
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    pub d_color: Option<ColorMap>,
    pub d_opacity: Option<ScalarMap>,
}

fn check_shapes(
    target_color: &ColorMap,
    target_opacity: Option<&ScalarMap>,
    source_color: Option<&ColorMap>,
    masks: &MaskSet,
) -> Result<()> {
    target_color.check_same_shape(&masks.m_t, "editable mask")?;
    target_color.check_same_shape(&masks.m_o, "opacity mask")?;
    if let Some(o) = target_opacity {
        target_color.check_same_shape(o, "target opacity")?;
    }
    if let Some(s) = source_color {
        target_color.check_same_shape(s, "source color")?;
    }
    Ok(())
}

/// `Σ M̄_t M_o ‖Ĉ_t − Ĉ_s‖² + M̄_t M̄_o Ô_t²`. The source is a constant.
pub fn consistency_loss(
    target_color: &ColorMap,
    target_opacity: &ScalarMap,
    source_color: &ColorMap,
    masks: &MaskSet,
) -> Result<LossTerms> {
    check_shapes(target_color, Some(target_opacity), Some(source_color), masks)?;
    let mut loss = 0.0;
    let mut d_color = ColorMap::zeros(target_color.width(), target_color.height());
    let mut d_opacity = ScalarMap::filled(target_color.width(), target_color.height(), 0.0);
    let it = target_color
        .as_slice()
        .iter()
        .zip(source_color.as_slice())
        .zip(target_opacity.as_slice())
        .zip(masks.m_t.as_slice().iter().zip(masks.m_o.as_slice()))
        .zip(d_color.as_mut_slice().iter_mut().zip(d_opacity.as_mut_slice()));
    for ((((ct, cs), &ot), (&mt, &mo)), (dc, dop)) in it {
        if mt {
            continue;
        }
        if mo {
            for ch in 0..3 {
                let r = ct[ch] - cs[ch];
                loss += r * r;
                dc[ch] = 2.0 * r;
            }
        } else {
            loss += ot * ot;
            *dop = 2.0 * ot;
        }
    }
    Ok(LossTerms {
        loss,
        d_color: Some(d_color),
        d_opacity: Some(d_opacity),
    })
}

/// `Σ M̄_t ‖Ĉ_t − Ĉ_s‖²`: background and foreground constrained alike.
pub fn naive_consistency_loss(
    target_color: &ColorMap,
    source_color: &ColorMap,
    masks: &MaskSet,
) -> Result<LossTerms> {
    check_shapes(target_color, None, Some(source_color), masks)?;
    let mut loss = 0.0;
    let mut d_color = ColorMap::zeros(target_color.width(), target_color.height());
    let it = target_color
        .as_slice()
        .iter()
        .zip(source_color.as_slice())
        .zip(masks.m_t.as_slice())
        .zip(d_color.as_mut_slice());
    for (((ct, cs), &mt), dc) in it {
        if mt {
            continue;
        }
        for ch in 0..3 {
            let r = ct[ch] - cs[ch];
            loss += r * r;
            dc[ch] = 2.0 * r;
        }
    }
    Ok(LossTerms {
        loss,
        d_color: Some(d_color),
        d_opacity: None,
    })
}

/// `κ(k) Σ M_t (Ô_t − 1)²`.
pub fn initialization_loss(
    target_opacity: &ScalarMap,
    masks: &MaskSet,
    k: usize,
    sched: &InitSchedule,
) -> Result<LossTerms> {
    target_opacity.check_same_shape(&masks.m_t, "editable mask")?;
    let kappa = sched.kappa(k);
    let mut d_opacity = ScalarMap::filled(target_opacity.width(), target_opacity.height(), 0.0);
    if kappa == 0.0 {
        return Ok(LossTerms {
            loss: 0.0,
            d_color: None,
            d_opacity: Some(d_opacity),
        });
    }
    let mut sum = 0.0;
    for ((&o, &mt), d) in target_opacity
        .as_slice()
        .iter()
        .zip(masks.m_t.as_slice())
        .zip(d_opacity.as_mut_slice())
    {
        if mt {
            let r = o - 1.0;
            sum += r * r;
            *d = 2.0 * kappa * r;
        }
    }
    Ok(LossTerms {
        loss: kappa * sum,
        d_color: None,
        d_opacity: Some(d_opacity),
    })
}
