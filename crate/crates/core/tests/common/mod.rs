#![allow(dead_code)]

use std::cell::Cell;

use prog3d::editor::{CameraRig, OrbitSpec};
use prog3d::guidance::{Denoiser, PromptId};
use prog3d::map::ColorMap;
use prog3d::Result;

pub fn small_rig(px: usize) -> CameraRig {
    CameraRig::orbit(&OrbitSpec::standard(3.5, px, px)).unwrap()
}

pub fn held_out(px: usize) -> CameraRig {
    CameraRig::orbit(&OrbitSpec::standard(3.5, px, px).held_out()).unwrap()
}

/// Wraps a denoiser and counts its queries.
pub struct Counting<D> {
    pub inner: D,
    pub calls: Cell<usize>,
}

impl<D> Counting<D> {
    pub fn new(inner: D) -> Self {
        Self { inner, calls: Cell::new(0) }
    }
}

impl<D: Denoiser> Denoiser for Counting<D> {
    fn predict(&self, x_t: &ColorMap, prompt: Option<&PromptId>, t: usize, view: usize) -> Result<ColorMap> {
        self.calls.set(self.calls.get() + 1);
        self.inner.predict(x_t, prompt, t, view)
    }
}
