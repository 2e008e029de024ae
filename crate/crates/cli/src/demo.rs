//! Self-contained two-step demo: a floor with a blue block gains a red box,
//! then a yellow box, each inside its own region.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prog3d::editor::CameraRig;
use prog3d::io::{save_field, write_color_image};
use prog3d::scene::{box_scene, layout, render_targets, SolidBox};

use crate::config::{
    InitialSpec, OutputSpec, PromptSpec, RegionSpec, RigSpec, RunConfig, SceneSpec, StepSpec,
};
use crate::error::CliError;

pub const RESOLUTION: usize = 16;
pub const VIEW_SIZE: usize = 32;
pub const SAMPLES: usize = 32;
pub const ITERATIONS: usize = 1000;
pub const RADIUS: f64 = 3.5;

const BASE: &str = "a floor with a blue block";
const RED: &str = "a floor with a blue block and a red box";
const BOTH: &str = "a floor with a blue block, a red box and a yellow box";

fn scene(extra: &[SolidBox]) -> Result<prog3d::field::VoxelField, CliError> {
    let mut boxes = layout::base();
    boxes.extend_from_slice(extra);
    box_scene([RESOLUTION; 3], layout::extent(), &boxes).map_err(CliError::runtime)
}

pub fn demo_config() -> RunConfig {
    let rig = RigSpec::new(RADIUS, VIEW_SIZE, VIEW_SIZE);
    let targets = [("base", BASE), ("red", RED), ("both", BOTH)]
        .into_iter()
        .map(|(dir, p)| (p.to_owned(), PathBuf::from("targets").join(dir)))
        .collect();
    let regions = BTreeMap::from([
        ("red".to_owned(), RegionSpec::from_boxes(&[layout::red_region()])),
        ("yellow".to_owned(), RegionSpec::from_boxes(&[layout::yellow_region()])),
    ]);
    let step = |src, dst, region| StepSpec {
        n_samples: SAMPLES,
        ..StepSpec::new(Some(src), dst, region, ITERATIONS, 1.0)
    };
    RunConfig {
        scene: SceneSpec {
            resolution: [RESOLUTION; 3],
            extent: Default::default(),
            initial: InitialSpec::Checkpoint {
                path: "initial.p3df".into(),
                prompt: Some(BASE.to_owned()),
            },
            rig,
        },
        prompts: PromptSpec {
            targets,
            unconditional: BTreeMap::from([(BASE.to_owned(), 0.5), (BOTH.to_owned(), 0.5)]),
        },
        regions,
        chain: vec![step(BASE, RED, "red"), step(RED, BOTH, "yellow")],
        output: OutputSpec {
            dir: Some("out".into()),
            ..Default::default()
        },
        seed: 0,
    }
}

/// Writes `config.json`, the initial checkpoint and per-view target images
/// into `dir`; returns the config path.
pub fn write_demo(dir: &Path) -> Result<PathBuf, CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    let cfg = demo_config();
    let rig: CameraRig = cfg.scene.rig.build()?;
    save_field(&scene(&[])?, dir.join("initial.p3df")).map_err(CliError::runtime)?;
    let fields = [
        ("base", scene(&[])?),
        ("red", scene(&[layout::red_box()])?),
        ("both", scene(&[layout::red_box(), layout::yellow_box()])?),
    ];
    for (name, field) in &fields {
        let out = dir.join("targets").join(name);
        std::fs::create_dir_all(&out).map_err(io)?;
        for (v, img) in render_targets(field, &rig, SAMPLES).iter().enumerate() {
            write_color_image(img, out.join(format!("view_{v:03}.png"))).map_err(CliError::runtime)?;
        }
    }
    let path = dir.join("config.json");
    let text = serde_json::to_string_pretty(&cfg).map_err(CliError::runtime)?;
    std::fs::write(&path, text + "\n").map_err(io)?;
    Ok(path)
}
