//! Declarative run configuration (JSON) and its translation into engine
//! objects. Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use prog3d::constraints::{ConsistencyMode, ConstraintWeights, InitSchedule};
use prog3d::editor::{full_extent_region, AdamConfig, CameraRig, EditChain, EditConfig, OrbitSpec};
use prog3d::field::{Extent, VoxelField};
use prog3d::guidance::{AnalyticDenoiser, GuidanceConfig, NoiseSchedule, PromptId, TimestepSampling};
use prog3d::io::{load_field, read_color_image, read_depth_image, read_mask_image};
use prog3d::map::ColorMap;
use prog3d::region::{OrientedBox, RegionConfig, RegionPrompt, ViewImages};
use prog3d::Vec3;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub prompts: PromptSpec,
    #[serde(default)]
    pub regions: BTreeMap<String, RegionSpec>,
    pub chain: Vec<StepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Base seed; step `i` uses `seed + i` unless it sets its own.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub resolution: [usize; 3],
    #[serde(default)]
    pub extent: ExtentSpec,
    pub initial: InitialSpec,
    pub rig: RigSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtentSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for ExtentSpec {
    fn default() -> Self {
        Self {
            min: [-1.0; 3],
            max: [1.0; 3],
        }
    }
}

impl ExtentSpec {
    pub fn build(&self) -> Result<Extent, CliError> {
        Extent::new(Vec3::from(self.min), Vec3::from(self.max)).map_err(CliError::config)
    }
}

/// Starting field: an empty scene (the first step then generates from
/// scratch) or a checkpoint described by a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Vacuum,
    Checkpoint { path: PathBuf, prompt: Option<String> },
}

/// Orbit of cameras around `center`; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    #[serde(default)]
    pub center: [f64; 3],
    pub radius: f64,
    #[serde(default = "default_azimuths")]
    pub azimuths: usize,
    #[serde(default = "default_elevations")]
    pub elevations_deg: Vec<f64>,
    #[serde(default)]
    pub azimuth_offset_deg: f64,
    #[serde(default = "default_fov")]
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Defaults to `radius − 2`, at least 0.05.
    #[serde(default)]
    pub near: Option<f64>,
    /// Defaults to `radius + 2`.
    #[serde(default)]
    pub far: Option<f64>,
}

fn default_azimuths() -> usize {
    16
}

fn default_elevations() -> Vec<f64> {
    vec![15.0, 35.0]
}

fn default_fov() -> f64 {
    40.0
}

impl RigSpec {
    pub fn new(radius: f64, width: usize, height: usize) -> Self {
        Self {
            center: [0.0; 3],
            radius,
            azimuths: default_azimuths(),
            elevations_deg: default_elevations(),
            azimuth_offset_deg: 0.0,
            vertical_fov_deg: default_fov(),
            width,
            height,
            near: None,
            far: None,
        }
    }

    pub fn orbit(&self) -> OrbitSpec {
        let mut o = OrbitSpec::standard(self.radius, self.width, self.height);
        o.center = Vec3::from(self.center);
        o.azimuths = self.azimuths;
        o.elevations = self.elevations_deg.iter().map(|d| d.to_radians()).collect();
        o.azimuth_offset = self.azimuth_offset_deg.to_radians();
        o.vertical_fov = self.vertical_fov_deg.to_radians();
        if let Some(n) = self.near {
            o.near = n;
        }
        if let Some(f) = self.far {
            o.far = f;
        }
        o
    }

    pub fn build(&self) -> Result<CameraRig, CliError> {
        CameraRig::orbit(&self.orbit()).map_err(CliError::config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    /// Prompt id → target image. A file is shared by every view; a
    /// directory holds `view_000.png`, `view_001.png`, ... one per rig view.
    pub targets: BTreeMap<String, PathBuf>,
    /// Prompt id → weight of that target in the unconditional image.
    pub unconditional: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    /// The whole scene extent, for generation steps.
    #[serde(default)]
    pub full_scene: bool,
    /// Directory of per-view mask images replacing the box-derived mask.
    #[serde(default)]
    pub masks: Option<PathBuf>,
    /// Directory of per-view depth images of a custom region shape.
    #[serde(default)]
    pub depths: Option<PathBuf>,
    /// World distance of a white depth pixel.
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
}

fn default_depth_scale() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub size: [f64; 3],
    /// Roll, pitch, yaw about x, y, z in degrees.
    #[serde(default)]
    pub rotation_deg: [f64; 3],
}

impl BoxSpec {
    pub fn from_box(b: &OrientedBox) -> Self {
        let (r, p, y) = Rotation3::from_matrix_unchecked(b.rotation).euler_angles();
        Self {
            center: b.center.into(),
            size: b.size.into(),
            rotation_deg: [r.to_degrees(), p.to_degrees(), y.to_degrees()],
        }
    }

    pub fn build(&self) -> OrientedBox {
        let [r, p, y] = self.rotation_deg.map(f64::to_radians);
        OrientedBox {
            center: Vec3::from(self.center),
            size: Vec3::from(self.size),
            rotation: *Rotation3::from_euler_angles(r, p, y).matrix(),
        }
    }
}

impl RegionSpec {
    pub fn from_boxes(boxes: &[OrientedBox]) -> Self {
        Self {
            boxes: boxes.iter().map(BoxSpec::from_box).collect(),
            full_scene: false,
            masks: None,
            depths: None,
            depth_scale: default_depth_scale(),
        }
    }

    /// `views` is the number of rig views that per-view images must cover.
    pub fn build(&self, extent: &Extent, views: usize, base: &Path) -> Result<RegionPrompt, CliError> {
        let mut boxes: Vec<OrientedBox> = self.boxes.iter().map(BoxSpec::build).collect();
        if self.full_scene {
            boxes.extend(full_extent_region(extent).map_err(CliError::config)?.boxes);
        }
        let external_mask = match &self.masks {
            Some(dir) => Some(ViewImages::PerView(
                view_paths(&base.join(dir), views)?
                    .iter()
                    .map(|p| read_mask_image(p).map_err(CliError::config))
                    .collect::<Result<_, _>>()?,
            )),
            None => None,
        };
        let external_depth = match &self.depths {
            Some(dir) => Some(ViewImages::PerView(
                view_paths(&base.join(dir), views)?
                    .iter()
                    .map(|p| read_depth_image(p, self.depth_scale).map_err(CliError::config))
                    .collect::<Result<_, _>>()?,
            )),
            None => None,
        };
        let region = RegionPrompt {
            boxes,
            external_mask,
            external_depth,
        };
        region.validate().map_err(CliError::config)?;
        Ok(region)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencySpec {
    #[default]
    Split,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepSpec {
    #[default]
    Uniform,
    Annealed,
}

/// One edit step. Omitted fields take the engine defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    /// `null` only for a generation step from an empty scene.
    pub source_prompt: Option<String>,
    pub target_prompt: String,
    /// Name of an entry in `regions`.
    pub region: String,
    pub iterations: usize,
    /// Guidance scale ω.
    pub omega: f64,
    #[serde(default = "default_w_suppress")]
    pub w_suppress: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Defaults to `iterations / 4`.
    #[serde(default)]
    pub k_max: Option<usize>,
    #[serde(default = "default_one")]
    pub w_consist: f64,
    #[serde(default)]
    pub consistency: ConsistencySpec,
    #[serde(default = "default_tau_o")]
    pub tau_o: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_batch")]
    pub batch_views: usize,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_true")]
    pub stratified: bool,
    #[serde(default)]
    pub timesteps: TimestepSpec,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_w_suppress() -> f64 {
    GuidanceConfig::DEFAULT_SUPPRESSION
}
fn default_lambda() -> f64 {
    0.5
}
fn default_one() -> f64 {
    1.0
}
fn default_tau_o() -> f64 {
    RegionConfig::default().tau_o
}
fn default_lr() -> f64 {
    AdamConfig::default().lr
}
fn default_beta1() -> f64 {
    AdamConfig::default().beta1
}
fn default_beta2() -> f64 {
    AdamConfig::default().beta2
}
fn default_adam_eps() -> f64 {
    AdamConfig::default().eps
}
fn default_batch() -> usize {
    1
}
fn default_samples() -> usize {
    64
}
fn default_true() -> bool {
    true
}

impl StepSpec {
    pub fn new(source: Option<&str>, target: &str, region: &str, iterations: usize, omega: f64) -> Self {
        Self {
            source_prompt: source.map(str::to_owned),
            target_prompt: target.to_owned(),
            region: region.to_owned(),
            iterations,
            omega,
            w_suppress: default_w_suppress(),
            lambda: default_lambda(),
            k_max: None,
            w_consist: default_one(),
            consistency: ConsistencySpec::default(),
            tau_o: default_tau_o(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            batch_views: default_batch(),
            n_samples: default_samples(),
            stratified: true,
            timesteps: TimestepSpec::default(),
            seed: None,
        }
    }

    fn build(&self, region: RegionPrompt, seed: u64) -> EditConfig {
        EditConfig {
            source_prompt: self.source_prompt.as_deref().map(PromptId::from),
            target_prompt: PromptId::from(self.target_prompt.as_str()),
            region,
            iterations: self.iterations,
            init: InitSchedule {
                lambda: self.lambda,
                k_max: self.k_max.unwrap_or(self.iterations / 4),
            },
            region_cfg: RegionConfig { tau_o: self.tau_o },
            guidance: GuidanceConfig {
                omega: self.omega,
                w_suppress: self.w_suppress,
            },
            weights: ConstraintWeights {
                w_consist: self.w_consist,
            },
            consistency: match self.consistency {
                ConsistencySpec::Split => ConsistencyMode::Split,
                ConsistencySpec::Naive => ConsistencyMode::Naive,
            },
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            batch_views: self.batch_views,
            n_samples: self.n_samples,
            stratified: self.stratified,
            timesteps: match self.timesteps {
                TimestepSpec::Uniform => TimestepSampling::Uniform,
                TimestepSpec::Annealed => TimestepSampling::Annealed,
            },
            schedule: NoiseSchedule::default(),
            seed: self.seed.unwrap_or(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageFormat {
    #[default]
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Iterations between snapshots; defaults to a tenth of each step.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub image_format: ImageFormat,
    /// Cameras in the snapshot turntable.
    #[serde(default = "default_turntable")]
    pub turntable_views: usize,
}

fn default_turntable() -> usize {
    4
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            snapshot_every: None,
            image_format: ImageFormat::default(),
            turntable_views: default_turntable(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tau_o: Option<f64>,
    pub out: Option<PathBuf>,
    pub snapshot_every: Option<usize>,
}

/// A config turned into engine objects, with every file loaded.
#[derive(Debug)]
pub struct Prepared {
    pub chain: EditChain,
    pub denoiser: AnalyticDenoiser,
    pub rig: CameraRig,
    pub turntable: CameraRig,
    pub region_names: Vec<String>,
    pub out_dir: Option<PathBuf>,
    pub snapshot_every: Vec<usize>,
    pub image_format: ImageFormat,
    pub warnings: Vec<String>,
}

/// Parses a config document; errors carry the JSON path and line/column.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("at `{path}`: {}", e.into_inner()))
    })
}

pub fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn view_paths(dir: &Path, views: usize) -> Result<Vec<PathBuf>, CliError> {
    (0..views)
        .map(|v| {
            let p = dir.join(format!("view_{v:03}.png"));
            if p.is_file() {
                Ok(p)
            } else {
                Err(CliError::Config(format!("missing per-view image {}", p.display())))
            }
        })
        .collect()
}

fn load_target(path: &Path, views: usize, dims: (usize, usize)) -> Result<ViewImages<ColorMap>, CliError> {
    let check = |m: ColorMap, p: &Path| {
        if m.dims() == dims {
            Ok(m)
        } else {
            Err(CliError::Config(format!(
                "target image {} is {:?}, the rig renders {:?}",
                p.display(),
                m.dims(),
                dims
            )))
        }
    };
    if path.is_dir() {
        let maps = view_paths(path, views)?
            .iter()
            .map(|p| check(read_color_image(p).map_err(CliError::config)?, p))
            .collect::<Result<_, _>>()?;
        Ok(ViewImages::PerView(maps))
    } else if path.is_file() {
        Ok(ViewImages::Shared(check(read_color_image(path).map_err(CliError::config)?, path)?))
    } else {
        Err(CliError::Config(format!("target image {} does not exist", path.display())))
    }
}

impl RunConfig {
    /// Loads every referenced file and checks all cross-references. `base`
    /// is the directory relative paths resolve against.
    pub fn prepare(&self, base: &Path, ov: &Overrides) -> Result<Prepared, CliError> {
        if let Some(t) = ov.tau_o {
            RegionConfig::new(t).map_err(CliError::config)?;
        }
        let extent = self.scene.extent.build()?;
        let rig = self.scene.rig.build()?;
        let mut turn = self.scene.rig.orbit().held_out();
        turn.azimuths = self.output.turntable_views;
        let turntable = CameraRig::orbit(&turn).map_err(CliError::config)?;

        let (initial, initial_prompt) = match &self.scene.initial {
            InitialSpec::Vacuum => (
                prog3d::editor::vacuum_field(self.scene.resolution, extent).map_err(CliError::config)?,
                None,
            ),
            InitialSpec::Checkpoint { path, prompt } => {
                let f: VoxelField = load_field(base.join(path)).map_err(CliError::config)?;
                (f, prompt.as_deref().map(PromptId::from))
            }
        };

        let mut targets = BTreeMap::new();
        for (id, path) in &self.prompts.targets {
            targets.insert(PromptId::from(id.as_str()), load_target(&base.join(path), rig.len(), rig.resolution())?);
        }
        let uncond = self
            .prompts
            .unconditional
            .iter()
            .map(|(p, w)| (PromptId::from(p.as_str()), *w))
            .collect();
        let denoiser = AnalyticDenoiser::new(NoiseSchedule::default(), targets, uncond).map_err(CliError::config)?;

        let seed = ov.seed.unwrap_or(self.seed);
        let mut steps = Vec::with_capacity(self.chain.len());
        let mut warnings = Vec::new();
        let mut snapshot_every = Vec::new();
        for (i, s) in self.chain.iter().enumerate() {
            let spec = self
                .regions
                .get(&s.region)
                .ok_or_else(|| CliError::Config(format!("step {i}: unknown region `{}`", s.region)))?;
            let region = spec.build(&extent, rig.len(), base)?;
            for p in s.source_prompt.iter().chain([&s.target_prompt]) {
                if !self.prompts.targets.contains_key(p) {
                    return Err(CliError::Config(format!("step {i}: unknown prompt `{p}`")));
                }
            }
            let mut cfg = s.build(region, seed.wrapping_add(i as u64));
            if let Some(t) = ov.tau_o {
                cfg.region_cfg.tau_o = t;
            }
            if let Some(w) = cfg.guidance.suppression_warning() {
                warnings.push(format!("step {i}: {w}"));
            }
            let every = ov
                .snapshot_every
                .or(self.output.snapshot_every)
                .unwrap_or((s.iterations / 10).max(1));
            if every == 0 {
                return Err(CliError::Config("snapshot cadence must be >= 1".into()));
            }
            snapshot_every.push(every);
            steps.push(cfg);
        }
        let chain = EditChain {
            initial,
            initial_prompt,
            steps,
        };
        chain.validate().map_err(CliError::config)?;
        if chain.initial.resolution() != self.scene.resolution {
            warnings.push(format!(
                "initial checkpoint resolution {:?} overrides scene.resolution {:?}",
                chain.initial.resolution(),
                self.scene.resolution
            ));
        }
        Ok(Prepared {
            chain,
            denoiser,
            rig,
            turntable,
            region_names: self.chain.iter().map(|s| s.region.clone()).collect(),
            out_dir: ov.out.clone().or_else(|| self.output.dir.as_ref().map(|d| base.join(d))),
            snapshot_every,
            image_format: self.output.image_format,
            warnings,
        })
    }
}
