mod common;

use std::cell::Cell;

use common::{held_out, small_rig, Counting};
use prog3d::editor::{
    evaluate_edit, full_extent_region, run_chain, run_edit_step, run_edit_step_observed, vacuum_field, EditChain,
    EditConfig,
};
use prog3d::field::VoxelField;
use prog3d::guidance::{Denoiser, GuidanceConfig, PromptId};
use prog3d::io::field_hash;
use prog3d::map::ColorMap;
use prog3d::region::RegionConfig;
use prog3d::render::render_view;
use prog3d::scene::{analytic_denoiser_for, box_scene, layout, EditScenario};
use prog3d::{Error, Result};

fn scenario() -> EditScenario {
    EditScenario::red_box([16; 3]).unwrap()
}

fn config(s: &EditScenario, iterations: usize) -> EditConfig {
    let mut cfg = EditConfig::new(
        Some(s.source_prompt.clone()),
        s.target_prompt.clone(),
        s.region.clone(),
        iterations,
        GuidanceConfig::new(4.0, 4.0).unwrap(),
    );
    cfg.n_samples = 32;
    cfg
}

#[test]
fn zero_learning_rate_returns_the_source_bit_for_bit() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let mut cfg = config(&s, 1);
    cfg.adam.lr = 0.0;
    let out = run_edit_step(&s.source, &cfg, &den, &rig).unwrap();
    assert_eq!(out.field, s.source);
    assert_eq!(out.report.len(), 1);
}

#[test]
fn seeded_runs_are_bit_identical() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let cfg = config(&s, 30);
    let a = run_edit_step(&s.source, &cfg, &den, &rig).unwrap();
    let b = run_edit_step(&s.source, &cfg, &den, &rig).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(field_hash(&a.field), field_hash(&b.field));
    let mut other = cfg.clone();
    other.seed = 1;
    let c = run_edit_step(&s.source, &other, &den, &rig).unwrap();
    assert_ne!(a.report.to_csv(), c.report.to_csv());
}

#[test]
fn report_has_one_finite_record_per_iteration() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let mut cfg = config(&s, 12);
    cfg.batch_views = 2;
    let out = run_edit_step(&s.source, &cfg, &den, &rig).unwrap();
    assert_eq!(out.report.len(), 12);
    for (k, r) in out.report.records.iter().enumerate() {
        assert_eq!(r.k, k);
        assert!((20..=980).contains(&r.t));
        for v in [r.sds_norm, r.consist, r.init, r.grad_norm] {
            assert!(v.is_finite() && v >= 0.0);
        }
    }
    // Initialization weight is positive for k < K = 3 and zero afterwards.
    assert!(out.report.records[0].init > 0.0);
    assert_eq!(out.report.records[5].init, 0.0);
}

#[test]
fn observer_sees_source_first_and_final_field_last() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let cfg = config(&s, 5);
    let mut seen = Vec::new();
    let mut first: Option<VoxelField> = None;
    let mut last: Option<VoxelField> = None;
    let out = run_edit_step_observed(&s.source, &cfg, &den, &rig, &mut |k, f| {
        seen.push(k);
        if k == 0 {
            first = Some(f.clone());
        }
        last = Some(f.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
    assert_eq!(first.unwrap(), s.source);
    assert_eq!(last.unwrap(), out.field);
}

/// Returns NaN for the target prompt once a call budget is spent.
struct Poisoned<D> {
    inner: D,
    target: PromptId,
    budget: Cell<usize>,
}

impl<D: Denoiser> Denoiser for Poisoned<D> {
    fn predict(&self, x_t: &ColorMap, prompt: Option<&PromptId>, t: usize, view: usize) -> Result<ColorMap> {
        let mut out = self.inner.predict(x_t, prompt, t, view)?;
        if prompt == Some(&self.target) {
            if self.budget.get() == 0 {
                out.as_mut_slice()[0][1] = f64::NAN;
            } else {
                self.budget.set(self.budget.get() - 1);
            }
        }
        Ok(out)
    }
}

#[test]
fn non_finite_prediction_aborts_naming_the_term() {
    let s = scenario();
    let rig = small_rig(16);
    let den = Poisoned {
        inner: s.denoiser(&rig, 32).unwrap(),
        target: s.target_prompt.clone(),
        budget: Cell::new(3),
    };
    let cfg = config(&s, 10);
    match run_edit_step(&s.source, &cfg, &den, &rig) {
        Err(Error::NonFinite { term, iteration }) => {
            assert_eq!(term, "guidance");
            assert_eq!(iteration, 3);
        }
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let mut cfg = config(&s, 8);
    cfg.init.k_max = 9;
    assert!(matches!(run_edit_step(&s.source, &cfg, &den, &rig), Err(Error::Config(_))));
    let mut cfg = config(&s, 8);
    cfg.batch_views = 0;
    assert!(matches!(run_edit_step(&s.source, &cfg, &den, &rig), Err(Error::Config(_))));
    let mut cfg = config(&s, 8);
    cfg.iterations = 0;
    assert!(matches!(run_edit_step(&s.source, &cfg, &den, &rig), Err(Error::Config(_))));
}

#[test]
fn initialization_phase_raises_in_region_opacity() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let cfg = config(&s, 160);
    let k_max = cfg.init.k_max;
    let sweep = held_out(16);
    let mut at = Vec::new();
    run_edit_step_observed(&s.source, &cfg, &den, &rig, &mut |k, f| {
        if k == 0 || k == k_max {
            let e = evaluate_edit(&s.source, f, &s.region, &RegionConfig::default(), &sweep, None, 32)?;
            at.push(e.in_region_opacity.unwrap());
        }
        Ok(())
    })
    .unwrap();
    assert!(at[1] > at[0], "opacity at K {} vs at 0 {}", at[1], at[0]);
}

#[test]
fn broken_linkage_fails_before_any_denoiser_call() {
    let s = scenario();
    let rig = small_rig(16);
    let den = Counting::new(s.denoiser(&rig, 32).unwrap());
    let first = config(&s, 4);
    let mut second = config(&s, 4);
    second.source_prompt = Some(PromptId::from("something else"));
    let chain = EditChain {
        initial: s.source.clone(),
        initial_prompt: Some(s.source_prompt.clone()),
        steps: vec![first, second],
    };
    match run_chain(&chain, &den, &rig, &mut ()) {
        Err(Error::Config(msg)) => assert!(msg.contains("step 1"), "{msg}"),
        other => panic!("expected a linkage error, got {other:?}"),
    }
    assert_eq!(den.calls.get(), 0);
}

#[test]
fn single_step_chain_matches_the_edit_step() {
    let s = scenario();
    let rig = small_rig(16);
    let den = s.denoiser(&rig, 32).unwrap();
    let cfg = config(&s, 10);
    let chain = EditChain {
        initial: s.source.clone(),
        initial_prompt: Some(s.source_prompt.clone()),
        steps: vec![cfg.clone()],
    };
    let out = run_chain(&chain, &den, &rig, &mut ()).unwrap();
    let direct = run_edit_step(&s.source, &cfg, &den, &rig).unwrap();
    assert_eq!(out.final_field(), &direct.field);
    assert_eq!(out.steps[0].report, direct.report);
    assert_eq!(out.steps[0].source_hash, field_hash(&s.source));
    assert_eq!(out.steps[0].output_hash, field_hash(&direct.field));
}

#[test]
fn generation_from_scratch_then_edit() {
    let res = [16; 3];
    let rig = small_rig(16);
    let empty = vacuum_field(res, layout::extent()).unwrap();
    let base = box_scene(res, layout::extent(), &layout::base()).unwrap();
    let mut with_red = layout::base();
    with_red.push(layout::red_box());
    let red = box_scene(res, layout::extent(), &with_red).unwrap();
    let (p_empty, p_base, p_red) = (PromptId::from("nothing"), PromptId::from("base"), PromptId::from("red"));
    let den = analytic_denoiser_for(
        &[(p_empty.clone(), &empty), (p_base.clone(), &base), (p_red.clone(), &red)],
        vec![(p_empty.clone(), 1.0)],
        &rig,
        32,
    )
    .unwrap();
    let guidance = GuidanceConfig::new(1.0, 1.0).unwrap();
    let mut generate = EditConfig::new(None, p_base.clone(), full_extent_region(&layout::extent()).unwrap(), 400, guidance);
    generate.n_samples = 32;
    let mut edit = EditConfig::new(
        Some(p_base.clone()),
        p_red,
        prog3d::region::RegionPrompt::single(layout::red_region()).unwrap(),
        10,
        guidance,
    );
    edit.n_samples = 32;
    let chain = EditChain::from_scratch(res, layout::extent(), vec![generate, edit]).unwrap();
    let out = run_chain(&chain, &den, &rig, &mut ()).unwrap();
    assert_eq!(out.steps.len(), 2);
    assert_eq!(out.steps[1].source_hash, out.steps[0].output_hash);
    // Generation puts content where there was none. Raw densities start near
    // −9.2 and Adam moves them by about lr per step, hence the long run.
    let cam = rig.camera(0);
    let before = render_view(&chain.initial, cam, 32, false, 0).opacity;
    let after = render_view(&out.steps[0].field, cam, 32, false, 0).opacity;
    let sum = |m: &prog3d::map::ScalarMap| m.as_slice().iter().sum::<f64>();
    assert!(sum(&after) > sum(&before) + 1.0);
}
