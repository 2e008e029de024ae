use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::adam::{AdamConfig, FieldAdam};
use super::report::{IterationRecord, LossReport};
use super::rig::CameraRig;
use crate::constraints::{
    consistency_loss, initialization_loss, naive_consistency_loss, ConsistencyMode, ConstraintWeights,
    InitSchedule, LossTerms,
};
use crate::field::{FieldGradient, VoxelField};
use crate::guidance::{
    add_noise, oscs_predict, sds_pixel_gradient, Denoiser, GuidanceConfig, NoiseSchedule, PromptId,
    TimestepSampling,
};
use crate::map::{ColorMap, ScalarMap};
use crate::region::{region_masks_for_view, MaskSet, RegionConfig, RegionPrompt};
use crate::render::{render_view, render_view_adjoint};
use crate::{Error, Result};

/// Settings for one local edit.
#[derive(Debug, Clone)]
pub struct EditConfig {
    /// `None` only for generation from an empty scene.
    pub source_prompt: Option<PromptId>,
    pub target_prompt: PromptId,
    pub region: RegionPrompt,
    pub iterations: usize,
    pub init: InitSchedule,
    pub region_cfg: RegionConfig,
    pub guidance: GuidanceConfig,
    pub weights: ConstraintWeights,
    pub consistency: ConsistencyMode,
    pub adam: AdamConfig,
    pub batch_views: usize,
    /// Quadrature samples per ray.
    pub n_samples: usize,
    /// Jitter target renders within their bins.
    pub stratified: bool,
    pub timesteps: TimestepSampling,
    pub schedule: NoiseSchedule,
    pub seed: u64,
}

impl EditConfig {
    /// Defaults for everything but the prompts, region, iteration count and
    /// guidance.
    pub fn new(
        source_prompt: Option<PromptId>,
        target_prompt: PromptId,
        region: RegionPrompt,
        iterations: usize,
        guidance: GuidanceConfig,
    ) -> Self {
        Self {
            source_prompt,
            target_prompt,
            region,
            iterations,
            init: InitSchedule::for_iterations(iterations),
            region_cfg: RegionConfig::default(),
            guidance,
            weights: ConstraintWeights::default(),
            consistency: ConsistencyMode::default(),
            adam: AdamConfig::default(),
            batch_views: 1,
            n_samples: 64,
            stratified: true,
            timesteps: TimestepSampling::default(),
            schedule: NoiseSchedule::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        self.init.validate()?;
        if self.init.k_max > self.iterations {
            return Err(Error::Config(format!(
                "initialization cutoff K = {} exceeds the {} iterations",
                self.init.k_max, self.iterations
            )));
        }
        self.region.validate()?;
        self.region_cfg.validate()?;
        self.guidance.validate()?;
        self.adam.validate()?;
        if !(self.weights.w_consist.is_finite() && self.weights.w_consist >= 0.0) {
            return Err(Error::Config(format!(
                "consistency weight must be >= 0, got {}",
                self.weights.w_consist
            )));
        }
        if self.batch_views == 0 {
            return Err(Error::Config("batch_views must be >= 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EditOutcome {
    pub field: VoxelField,
    pub report: LossReport,
}

/// Source render and masks for one rig view. The source never changes
/// during a step, so these are computed once per view.
#[derive(Debug, Clone)]
pub struct SourceView {
    pub color: ColorMap,
    pub opacity: ScalarMap,
    pub masks: MaskSet,
}

pub fn source_view(
    source: &VoxelField,
    rig: &CameraRig,
    view: usize,
    region: &RegionPrompt,
    region_cfg: &RegionConfig,
    n_samples: usize,
) -> Result<SourceView> {
    let camera = rig.camera(view);
    let out = render_view(source, camera, n_samples, false, 0);
    let masks = region_masks_for_view(&out, region, camera, view, region_cfg)?;
    Ok(SourceView {
        color: out.color,
        opacity: out.opacity,
        masks,
    })
}

fn check_finite_color(m: &ColorMap, term: &'static str, k: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { term, iteration: k })
    }
}

fn check_finite_scalar(m: &ScalarMap, term: &'static str, k: usize) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { term, iteration: k })
    }
}

fn check_finite_loss(l: &LossTerms, term: &'static str, k: usize) -> Result<()> {
    if !l.loss.is_finite() {
        return Err(Error::NonFinite { term, iteration: k });
    }
    if let Some(c) = &l.d_color {
        check_finite_color(c, term, k)?;
    }
    if let Some(o) = &l.d_opacity {
        check_finite_scalar(o, term, k)?;
    }
    Ok(())
}

/// Runs one local edit with no observer.
pub fn run_edit_step<D: Denoiser + ?Sized>(
    source: &VoxelField,
    cfg: &EditConfig,
    den: &D,
    rig: &CameraRig,
) -> Result<EditOutcome> {
    run_edit_step_observed(source, cfg, den, rig, &mut |_, _| Ok(()))
}

/// Runs one local edit. `observer(k, field)` sees the target field before
/// iteration `k` updates it, for `k` in `0..N`, and once more with `k = N`
/// after the last update.
pub fn run_edit_step_observed<D: Denoiser + ?Sized>(
    source: &VoxelField,
    cfg: &EditConfig,
    den: &D,
    rig: &CameraRig,
    observer: &mut dyn FnMut(usize, &VoxelField) -> Result<()>,
) -> Result<EditOutcome> {
    cfg.validate()?;
    if rig.is_empty() {
        return Err(Error::Config("camera rig is empty".into()));
    }
    if !source.is_finite() {
        return Err(Error::contract("source field has non-finite parameters"));
    }
    if let Some(w) = cfg.guidance.suppression_warning() {
        log::warn!("{w}");
    }

    let mut target = source.clone();
    let mut adam = FieldAdam::new(&target, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sources: HashMap<usize, SourceView> = HashMap::new();
    let mut report = LossReport::default();
    let (w, h) = rig.resolution();
    let batch = cfg.batch_views as f64;

    for k in 0..cfg.iterations {
        observer(k, &target)?;
        let mut total = FieldGradient::zeros_like(&target);
        let mut rec = IterationRecord {
            k,
            t: 0,
            sds_norm: 0.0,
            consist: 0.0,
            init: 0.0,
            grad_norm: 0.0,
        };
        for b in 0..cfg.batch_views {
            let view = rng.random_range(0..rig.len());
            let t = cfg
                .timesteps
                .sample(k, cfg.iterations, cfg.schedule.num_steps(), &mut rng);
            let eps = ColorMap::from_fn(w, h, |_, _| {
                [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ]
            });
            let jitter_seed = rng.next_u64();
            if b == 0 {
                rec.t = t;
            }

            let camera = rig.camera(view);
            if !sources.contains_key(&view) {
                let sv = source_view(source, rig, view, &cfg.region, &cfg.region_cfg, cfg.n_samples)?;
                sources.insert(view, sv);
            }
            let src = &sources[&view];
            let out = render_view(&target, camera, cfg.n_samples, cfg.stratified, jitter_seed);

            let x_t = add_noise(&out.color, t, &eps, &cfg.schedule)?;
            let pred = oscs_predict(
                den,
                &x_t,
                cfg.source_prompt.as_ref(),
                &cfg.target_prompt,
                t,
                view,
                &cfg.guidance,
            )?;
            check_finite_color(&pred.eps_hat, "guidance", k)?;
            let sds = sds_pixel_gradient(&pred.eps_hat, &eps, t, &cfg.schedule)?;
            check_finite_color(&sds, "sds", k)?;

            let consist = match cfg.consistency {
                ConsistencyMode::Split => consistency_loss(&out.color, &out.opacity, &src.color, &src.masks)?,
                ConsistencyMode::Naive => naive_consistency_loss(&out.color, &src.color, &src.masks)?,
            };
            check_finite_loss(&consist, "consistency", k)?;
            let init = initialization_loss(&out.opacity, &src.masks, k, &cfg.init)?;
            check_finite_loss(&init, "initialization", k)?;

            let wc = cfg.weights.w_consist;
            let mut d_color = sds.clone();
            if let Some(c) = &consist.d_color {
                d_color = d_color.lincomb(1.0, c, wc);
            }
            let mut d_opacity = ScalarMap::filled(w, h, 0.0);
            for (terms, scale) in [(&consist, wc), (&init, 1.0)] {
                if let Some(o) = &terms.d_opacity {
                    for (d, v) in d_opacity.as_mut_slice().iter_mut().zip(o.as_slice()) {
                        *d += scale * v;
                    }
                }
            }
            let grad = render_view_adjoint(&target, camera, &d_color, &d_opacity, &out.cache)?;
            if !grad.is_finite() {
                return Err(Error::NonFinite {
                    term: "render adjoint",
                    iteration: k,
                });
            }
            total.add_assign(&grad);
            rec.sds_norm += sds.norm() / batch;
            rec.consist += consist.loss / batch;
            rec.init += init.loss / batch;
        }
        if cfg.batch_views > 1 {
            total.scale(1.0 / batch);
        }
        rec.grad_norm = total.norm();
        adam.step(&mut target, &total)?;
        if !target.is_finite() {
            return Err(Error::NonFinite {
                term: "parameters",
                iteration: k,
            });
        }
        report.records.push(rec);
    }
    observer(cfg.iterations, &target)?;
    Ok(EditOutcome { field: target, report })
}
