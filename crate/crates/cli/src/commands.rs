use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use prog3d::editor::{evaluate_edit, run_chain, source_view, CameraRig, ChainObserver, StepResult, REPORT_HEADER};
use prog3d::field::VoxelField;
use prog3d::io::{load_field, save_field, write_color_image, write_gray_image, write_mask_image};
use prog3d::map::{ColorMap, Mask};
use prog3d::region::{modify_depth, region_depth, region_masks_for_view, RegionConfig, RegionPrompt};
use prog3d::render::render_view;

use crate::config::{read_config, ImageFormat, Overrides, Prepared, RegionSpec, RigSpec};
use crate::error::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.p3df";

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: at `{}`: {}", path.display(), e.path(), e.inner())))
}

/// Checks a config without running it; returns the warnings.
pub fn validate(config: &Path) -> Result<Vec<String>, CliError> {
    let cfg = read_config(config)?;
    let prepared = cfg.prepare(&base_dir(config), &Overrides::default())?;
    Ok(prepared.warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub source_prompt: Option<String>,
    pub target_prompt: String,
    pub region: String,
    pub iterations: usize,
    pub source_hash: String,
    pub output_hash: String,
    /// Mean abs color change on kept content, over the rig views.
    pub locality_mad: Option<f64>,
    /// PSNR against the target prompt's images on editable pixels; `null`
    /// when undefined or infinite.
    pub in_region_psnr: Option<f64>,
    pub in_region_opacity: Option<f64>,
    pub empty_opacity: Option<f64>,
    pub editable_pixels: usize,
    pub content_pixels: usize,
    pub empty_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// `"ok"`, `"running"` or `"failed"`.
    pub status: String,
    pub error: Option<String>,
    pub steps: Vec<StepSummary>,
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

/// Writes snapshots and per-step artifacts as the chain progresses.
struct Recorder<'a> {
    out: &'a Path,
    prep: &'a Prepared,
    quiet: bool,
    /// Source field of the current step and its turntable masks.
    source: Option<VoxelField>,
    overlay: Vec<Option<Mask>>,
    metrics: fs::File,
    summary: Summary,
}

impl Recorder<'_> {
    fn ext(&self) -> &'static str {
        self.prep.image_format.extension()
    }

    fn step_dir(&self, step: usize) -> PathBuf {
        self.out.join(format!("step_{step:03}"))
    }

    fn write_summary(&self) -> prog3d::Result<()> {
        let path = self.out.join(SUMMARY_FILE);
        let text = serde_json::to_string_pretty(&self.summary).expect("summary is plain data");
        fs::write(&path, text + "\n").map_err(|source| prog3d::Error::Io { path, source })
    }

    fn snapshot(&self, step: usize, k: usize, field: &VoxelField) -> prog3d::Result<()> {
        let cfg = &self.prep.chain.steps[step];
        let dir = self.step_dir(step).join("snapshots").join(format!("k_{k:05}"));
        fs::create_dir_all(&dir).map_err(|e| prog3d::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let ext = self.ext();
        for (v, cam) in self.prep.turntable.cameras().iter().enumerate() {
            let r = render_view(field, cam, cfg.n_samples, false, 0);
            write_color_image(&r.color, dir.join(format!("view_{v:02}_color.{ext}")))?;
            write_gray_image(&r.opacity, 1.0, dir.join(format!("view_{v:02}_opacity.{ext}")))?;
            let overlay = match &self.overlay[v] {
                Some(m_t) => tint(&r.color, m_t),
                None => r.color,
            };
            write_color_image(&overlay, dir.join(format!("view_{v:02}_mask.{ext}")))?;
        }
        Ok(())
    }
}

/// Blends editable pixels halfway towards magenta.
fn tint(color: &ColorMap, m_t: &Mask) -> ColorMap {
    let mut out = color.clone();
    for (c, &m) in out.as_mut_slice().iter_mut().zip(m_t.as_slice()) {
        if m {
            *c = [0.5 * c[0] + 0.5, 0.5 * c[1], 0.5 * c[2] + 0.5];
        }
    }
    out
}

/// The box part of a region; external per-view images belong to the rig's
/// views, not the turntable's.
fn boxes_only(region: &RegionPrompt) -> Option<RegionPrompt> {
    (!region.boxes.is_empty()).then(|| RegionPrompt {
        boxes: region.boxes.clone(),
        external_mask: None,
        external_depth: None,
    })
}

impl ChainObserver for Recorder<'_> {
    fn iteration(&mut self, step: usize, k: usize, field: &VoxelField) -> prog3d::Result<()> {
        let cfg = &self.prep.chain.steps[step];
        if k == 0 {
            self.source = Some(field.clone());
            self.overlay = match boxes_only(&cfg.region) {
                Some(region) => (0..self.prep.turntable.len())
                    .map(|v| {
                        source_view(field, &self.prep.turntable, v, &region, &cfg.region_cfg, cfg.n_samples)
                            .map(|s| Some(s.masks.m_t))
                    })
                    .collect::<prog3d::Result<_>>()?,
                None => vec![None; self.prep.turntable.len()],
            };
        }
        let every = self.prep.snapshot_every[step];
        if k % every == 0 || k == cfg.iterations {
            if !self.quiet {
                info!("step {step}: snapshot at iteration {k}/{}", cfg.iterations);
            }
            self.snapshot(step, k, field)?;
        }
        Ok(())
    }

    fn step_done(&mut self, step: usize, result: &StepResult) -> prog3d::Result<()> {
        let to_io = |path: &Path| {
            let path = path.to_owned();
            move |e| prog3d::Error::Io { path: path.clone(), source: e }
        };
        let dir = self.step_dir(step);
        fs::create_dir_all(&dir).map_err(to_io(&dir))?;
        save_field(&result.field, dir.join(CHECKPOINT_FILE))?;
        result.report.write_csv(dir.join(METRICS_FILE))?;
        let mut rows = String::new();
        for line in result.report.to_csv().lines().skip(1) {
            rows.push_str(&format!("{step},{line}\n"));
        }
        let mpath = self.out.join(METRICS_FILE);
        self.metrics.write_all(rows.as_bytes()).map_err(to_io(&mpath))?;
        self.metrics.flush().map_err(to_io(&mpath))?;

        let cfg = &self.prep.chain.steps[step];
        let source = self.source.take().expect("iteration 0 precedes step completion");
        let rig = &self.prep.rig;
        let refs: Vec<ColorMap> = (0..rig.len())
            .map(|v| self.prep.denoiser.target(Some(&cfg.target_prompt), v))
            .collect::<prog3d::Result<_>>()?;
        let e = evaluate_edit(&source, &result.field, &cfg.region, &cfg.region_cfg, rig, Some(&refs), cfg.n_samples)?;
        self.summary.steps.push(StepSummary {
            step,
            source_prompt: cfg.source_prompt.as_ref().map(|p| p.to_string()),
            target_prompt: cfg.target_prompt.to_string(),
            region: self.prep.region_names[step].clone(),
            iterations: cfg.iterations,
            source_hash: result.source_hash.clone(),
            output_hash: result.output_hash.clone(),
            locality_mad: finite(e.locality_mad),
            in_region_psnr: finite(e.in_region_psnr),
            in_region_opacity: finite(e.in_region_opacity),
            empty_opacity: finite(e.empty_opacity),
            editable_pixels: e.editable_pixels,
            content_pixels: e.content_pixels,
            empty_pixels: e.empty_pixels,
        });
        if !self.quiet {
            info!(
                "step {step} done: locality {:?}, in-region PSNR {:?}",
                e.locality_mad, e.in_region_psnr
            );
        }
        self.write_summary()
    }
}

/// Runs a config's chain, writing everything below the output directory.
pub fn run(config: &Path, ov: &Overrides, quiet: bool) -> Result<Summary, CliError> {
    let cfg = read_config(config)?;
    let prep = cfg.prepare(&base_dir(config), ov)?;
    for w in &prep.warnings {
        log::warn!("{w}");
    }
    let out = prep
        .out_dir
        .clone()
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))?;
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    let mpath = out.join(METRICS_FILE);
    let mut metrics = fs::File::create(&mpath).map_err(io_err(&mpath))?;
    writeln!(metrics, "step,{REPORT_HEADER}").map_err(io_err(&mpath))?;

    let mut rec = Recorder {
        out: &out,
        prep: &prep,
        quiet,
        source: None,
        overlay: Vec::new(),
        metrics,
        summary: Summary {
            status: "running".into(),
            error: None,
            steps: Vec::new(),
        },
    };
    rec.write_summary().map_err(CliError::runtime)?;
    match run_chain(&prep.chain, &prep.denoiser, &prep.rig, &mut rec) {
        Ok(_) => {
            rec.summary.status = "ok".into();
            rec.write_summary().map_err(CliError::runtime)?;
            Ok(rec.summary)
        }
        Err(e) => {
            rec.summary.status = "failed".into();
            rec.summary.error = Some(e.to_string());
            rec.write_summary().map_err(CliError::runtime)?;
            Err(CliError::runtime(e))
        }
    }
}

/// Eight cameras at 25° elevation, 64×64.
pub fn default_cameras() -> RigSpec {
    RigSpec {
        azimuths: 8,
        elevations_deg: vec![25.0],
        ..RigSpec::new(3.5, 64, 64)
    }
}

fn cameras(path: Option<&Path>) -> Result<CameraRig, CliError> {
    match path {
        Some(p) => read_json::<RigSpec>(p)?.build(),
        None => default_cameras().build(),
    }
}

fn region_config(tau_o: Option<f64>) -> Result<RegionConfig, CliError> {
    match tau_o {
        Some(t) => RegionConfig::new(t).map_err(CliError::config),
        None => Ok(RegionConfig::default()),
    }
}

fn load_checkpoint(path: &Path) -> Result<VoxelField, CliError> {
    load_field(path).map_err(CliError::config)
}

/// Color, opacity and depth images of a checkpoint. Depth is the filtered
/// depth of the mask pipeline, written as `depth / far` and black where no
/// surface is denser than `tau_o`.
pub fn render(
    checkpoint: &Path,
    camera_spec: Option<&Path>,
    tau_o: Option<f64>,
    n_samples: usize,
    out: &Path,
    format: ImageFormat,
) -> Result<(), CliError> {
    if n_samples == 0 {
        return Err(CliError::Config("--samples must be >= 1".into()));
    }
    let region_cfg = region_config(tau_o)?;
    let field = load_checkpoint(checkpoint)?;
    let rig = cameras(camera_spec)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let ext = format.extension();
    for (v, cam) in rig.cameras().iter().enumerate() {
        let r = render_view(&field, cam, n_samples, false, 0);
        let depth = modify_depth(&r.depth, &r.opacity, region_cfg.tau_o).map_err(CliError::runtime)?;
        write_color_image(&r.color, out.join(format!("view_{v:02}_color.{ext}"))).map_err(CliError::runtime)?;
        write_gray_image(&r.opacity, 1.0, out.join(format!("view_{v:02}_opacity.{ext}"))).map_err(CliError::runtime)?;
        write_gray_image(&depth, cam.far, out.join(format!("view_{v:02}_depth.{ext}"))).map_err(CliError::runtime)?;
    }
    Ok(())
}

/// Mask pipeline images for a checkpoint and region: `M_t`, `M_o`, the
/// filtered source depth and the region depth.
#[allow(clippy::too_many_arguments)]
pub fn masks(
    checkpoint: &Path,
    region_spec: &Path,
    camera_spec: Option<&Path>,
    tau_o: Option<f64>,
    n_samples: usize,
    out: &Path,
    format: ImageFormat,
) -> Result<(), CliError> {
    if n_samples == 0 {
        return Err(CliError::Config("--samples must be >= 1".into()));
    }
    let region_cfg = region_config(tau_o)?;
    let field = load_checkpoint(checkpoint)?;
    let rig = cameras(camera_spec)?;
    let spec: RegionSpec = read_json(region_spec)?;
    let region = spec.build(field.extent(), rig.len(), &base_dir(region_spec))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let ext = format.extension();
    for (v, cam) in rig.cameras().iter().enumerate() {
        let src = render_view(&field, cam, n_samples, false, 0);
        let m = region_masks_for_view(&src, &region, cam, v, &region_cfg).map_err(CliError::runtime)?;
        let d_tilde = modify_depth(&src.depth, &src.opacity, region_cfg.tau_o).map_err(CliError::runtime)?;
        let d_b = region_depth(&region, cam, v).map_err(CliError::runtime)?;
        let w = |e: prog3d::Error| CliError::runtime(e);
        write_mask_image(&m.m_t, out.join(format!("view_{v:02}_mt.{ext}"))).map_err(w)?;
        write_mask_image(&m.m_o, out.join(format!("view_{v:02}_mo.{ext}"))).map_err(w)?;
        write_gray_image(&d_tilde, cam.far, out.join(format!("view_{v:02}_dtilde.{ext}"))).map_err(w)?;
        write_gray_image(&d_b, cam.far, out.join(format!("view_{v:02}_db.{ext}"))).map_err(w)?;
    }
    Ok(())
}
