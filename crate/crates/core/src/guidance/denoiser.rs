use std::collections::BTreeMap;
use std::fmt;

use super::schedule::NoiseSchedule;
use crate::map::ColorMap;
use crate::region::ViewImages;
use crate::{Error, Result};

/// Name of a conditioning prompt. The unconditional branch is `None` wherever
/// a prompt is optional.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PromptId(pub String);

impl PromptId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PromptId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// ε-prediction model.
///
/// `view` is the index of the rig camera the image was rendered from. Text
/// models ignore it, or fold it into a view-dependent prompt; the analytic
/// fixture uses it to pick per-view targets. Predictions must be
/// deterministic in `(x_t, prompt, t, view)` and match the input shape.
pub trait Denoiser {
    fn predict(
        &self,
        x_t: &ColorMap,
        prompt: Option<&PromptId>,
        t: usize,
        view: usize,
    ) -> Result<ColorMap>;

    /// Implementations that cannot take concurrent calls return true; the
    /// editor only ever issues calls from one thread either way.
    fn is_exclusive(&self) -> bool {
        false
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn predict(&self, x_t: &ColorMap, prompt: Option<&PromptId>, t: usize, view: usize) -> Result<ColorMap> {
        (**self).predict(x_t, prompt, t, view)
    }

    fn is_exclusive(&self) -> bool {
        (**self).is_exclusive()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn predict(&self, x_t: &ColorMap, prompt: Option<&PromptId>, t: usize, view: usize) -> Result<ColorMap> {
        (**self).predict(x_t, prompt, t, view)
    }

    fn is_exclusive(&self) -> bool {
        (**self).is_exclusive()
    }
}

/// Stand-in for a pre-trained text-to-image model: each prompt names a clean
/// target image, and the prediction is the noise that would turn that image
/// into `x_t`, i.e. `(x_t − √ᾱ_t I_y) / √(1−ᾱ_t)`. The unconditional branch
/// uses a fixed blend of prompt targets.
#[derive(Debug, Clone)]
pub struct AnalyticDenoiser {
    schedule: NoiseSchedule,
    targets: BTreeMap<PromptId, ViewImages<ColorMap>>,
    uncond: Vec<(PromptId, f64)>,
}

impl AnalyticDenoiser {
    pub fn new(
        schedule: NoiseSchedule,
        targets: BTreeMap<PromptId, ViewImages<ColorMap>>,
        uncond: Vec<(PromptId, f64)>,
    ) -> Result<Self> {
        let mut dims = None;
        for images in targets.values() {
            let all: Vec<&ColorMap> = match images {
                ViewImages::Shared(m) => vec![m],
                ViewImages::PerView(v) => v.iter().collect(),
            };
            for m in all {
                match dims {
                    None => dims = Some(m.dims()),
                    Some(d) if d != m.dims() => {
                        return Err(Error::Config(format!(
                            "target images differ in size: {:?} vs {:?}",
                            d,
                            m.dims()
                        )))
                    }
                    _ => {}
                }
            }
        }
        if uncond.is_empty() {
            return Err(Error::Config("unconditional blend needs at least one prompt".into()));
        }
        for (p, w) in &uncond {
            if !targets.contains_key(p) {
                return Err(Error::UnknownPrompt(p.0.clone()));
            }
            if !w.is_finite() {
                return Err(Error::Config(format!("blend weight for `{p}` is not finite")));
            }
        }
        let total: f64 = uncond.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("unconditional blend weights sum to {total}, not 1")));
        }
        Ok(Self {
            schedule,
            targets,
            uncond,
        })
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn prompts(&self) -> impl Iterator<Item = &PromptId> {
        self.targets.keys()
    }

    /// Clean image a prompt (or the unconditional blend) stands for.
    pub fn target(&self, prompt: Option<&PromptId>, view: usize) -> Result<ColorMap> {
        match prompt {
            Some(p) => self
                .targets
                .get(p)
                .ok_or_else(|| Error::UnknownPrompt(p.0.clone()))?
                .for_view(view)
                .cloned(),
            None => {
                let mut acc: Option<ColorMap> = None;
                for (p, w) in &self.uncond {
                    let img = self.targets[p].for_view(view)?;
                    acc = Some(match acc {
                        None => img.scale(*w),
                        Some(a) => a.lincomb(1.0, img, *w),
                    });
                }
                Ok(acc.expect("non-empty blend"))
            }
        }
    }
}

impl Denoiser for AnalyticDenoiser {
    fn predict(&self, x_t: &ColorMap, prompt: Option<&PromptId>, t: usize, view: usize) -> Result<ColorMap> {
        self.schedule.check(t)?;
        let target = self.target(prompt, view)?;
        x_t.check_same_shape(&target, "target image")?;
        let ab = self.schedule.alpha_bar(t);
        let inv = 1.0 / (1.0 - ab).sqrt();
        Ok(x_t.lincomb(inv, &target, -ab.sqrt() * inv))
    }
}
