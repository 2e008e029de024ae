use super::denoiser::{Denoiser, PromptId};
use crate::map::ColorMap;
use crate::{Error, Result};

/// Below this squared norm the source delta has no usable direction and the
/// projection is taken as zero.
pub const PROJECTION_EPS: f64 = 1e-12;

/// Guidance scale `ω` and suppression weight `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub omega: f64,
    pub w_suppress: f64,
}

impl GuidanceConfig {
    pub const DEFAULT_SUPPRESSION: f64 = 4.0;

    pub fn new(omega: f64, w_suppress: f64) -> Result<Self> {
        let cfg = Self { omega, w_suppress };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `W` defaults to 4; `ω` has no default.
    pub fn with_omega(omega: f64) -> Result<Self> {
        Self::new(omega, Self::DEFAULT_SUPPRESSION)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            return Err(Error::Config(format!("omega must be finite and >= 0, got {}", self.omega)));
        }
        if !(self.w_suppress.is_finite() && self.w_suppress > 0.0) {
            return Err(Error::Config(format!(
                "suppression weight W must be finite and > 0, got {}",
                self.w_suppress
            )));
        }
        Ok(())
    }

    /// Suppression only removes overlapped semantics for `W > 1`; smaller
    /// values are allowed (ablations) but amplify them instead.
    pub fn suppression_warning(&self) -> Option<String> {
        (self.w_suppress <= 1.0).then(|| {
            format!(
                "suppression weight W = {} does not suppress the overlapped component; W > 1 is required for suppression",
                self.w_suppress
            )
        })
    }
}

/// Classifier-free guidance `(1+ω) ε_c − ω ε_u`.
pub fn cfg_predict<D: Denoiser + ?Sized>(
    den: &D,
    x_t: &ColorMap,
    prompt: &PromptId,
    t: usize,
    view: usize,
    omega: f64,
) -> Result<ColorMap> {
    let cond = den.predict(x_t, Some(prompt), t, view)?;
    let uncond = den.predict(x_t, None, t, view)?;
    Ok(cond.lincomb(1.0 + omega, &uncond, -omega))
}

/// The unconditional prediction and the two prompt deltas measured from it.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaComponents {
    pub uncond: ColorMap,
    pub delta_s: ColorMap,
    pub delta_t: ColorMap,
}

/// `Δε_s = ε(y_s) − ε_u`, `Δε_t = ε(y_t) − ε_u`, with one unconditional query.
/// A missing source prompt (generation from nothing) gives `Δε_s = 0`.
pub fn delta_components<D: Denoiser + ?Sized>(
    den: &D,
    x_t: &ColorMap,
    source: Option<&PromptId>,
    target: &PromptId,
    t: usize,
    view: usize,
) -> Result<DeltaComponents> {
    let uncond = den.predict(x_t, None, t, view)?;
    let delta_t = den.predict(x_t, Some(target), t, view)?.sub(&uncond);
    let delta_s = match source {
        Some(s) if s == target => delta_t.clone(),
        Some(s) => den.predict(x_t, Some(s), t, view)?.sub(&uncond),
        None => ColorMap::zeros(x_t.width(), x_t.height()),
    };
    for (m, what) in [(&uncond, "unconditional"), (&delta_s, "source"), (&delta_t, "target")] {
        x_t.check_same_shape(m, what)?;
    }
    Ok(DeltaComponents {
        uncond,
        delta_s,
        delta_t,
    })
}

/// Splits `Δε_t` into its projection on `Δε_s` and the perpendicular rest.
/// The inner product runs over every pixel and channel at once.
pub fn oscs_decompose(delta_s: &ColorMap, delta_t: &ColorMap) -> Result<(ColorMap, ColorMap)> {
    delta_s.check_same_shape(delta_t, "target delta")?;
    let ss = delta_s.norm_sq();
    let proj = if ss < PROJECTION_EPS {
        ColorMap::zeros(delta_t.width(), delta_t.height())
    } else {
        delta_s.scale(delta_s.dot(delta_t) / ss)
    };
    let prep = delta_t.sub(&proj);
    Ok((proj, prep))
}

/// `ε_u + (ω/W) proj + ω prep`.
pub fn oscs_combine(uncond: &ColorMap, proj: &ColorMap, prep: &ColorMap, cfg: &GuidanceConfig) -> Result<ColorMap> {
    uncond.check_same_shape(proj, "projection")?;
    uncond.check_same_shape(prep, "perpendicular component")?;
    let a = cfg.omega / cfg.w_suppress;
    let b = cfg.omega;
    let data = uncond
        .as_slice()
        .iter()
        .zip(proj.as_slice())
        .zip(prep.as_slice())
        .map(|((u, p), q)| std::array::from_fn(|c| u[c] + a * p[c] + b * q[c]))
        .collect();
    ColorMap::from_vec(uncond.width(), uncond.height(), data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscsPrediction {
    pub eps_hat: ColorMap,
    pub components: DeltaComponents,
    pub proj: ColorMap,
    pub prep: ColorMap,
}

/// Guided prediction with the part of the target delta that the source
/// prompt already explains scaled down by `1/W`.
pub fn oscs_predict<D: Denoiser + ?Sized>(
    den: &D,
    x_t: &ColorMap,
    source: Option<&PromptId>,
    target: &PromptId,
    t: usize,
    view: usize,
    cfg: &GuidanceConfig,
) -> Result<OscsPrediction> {
    cfg.validate()?;
    let components = delta_components(den, x_t, source, target, t, view)?;
    let (proj, prep) = oscs_decompose(&components.delta_s, &components.delta_t)?;
    let eps_hat = oscs_combine(&components.uncond, &proj, &prep, cfg)?;
    Ok(OscsPrediction {
        eps_hat,
        components,
        proj,
        prep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cell::RefCell;
    use std::collections::BTreeMap;

    /// Returns a fixed map per prompt and counts queries.
    struct Table {
        preds: BTreeMap<Option<String>, ColorMap>,
        calls: RefCell<Vec<Option<String>>>,
    }

    impl Table {
        fn new(entries: &[(Option<&str>, &[[f64; 3]])]) -> Self {
            let preds = entries
                .iter()
                .map(|(k, v)| {
                    (k.map(str::to_owned), ColorMap::from_vec(v.len(), 1, v.to_vec()).unwrap())
                })
                .collect();
            Self {
                preds,
                calls: RefCell::new(Vec::new()),
            }
        }
    }

    impl Denoiser for Table {
        fn predict(&self, _x: &ColorMap, p: Option<&PromptId>, _t: usize, _v: usize) -> Result<ColorMap> {
            let key = p.map(|p| p.0.clone());
            self.calls.borrow_mut().push(key.clone());
            self.preds
                .get(&key)
                .cloned()
                .ok_or_else(|| Error::UnknownPrompt(key.unwrap_or_default()))
        }
    }

    fn cm(v: &[[f64; 3]]) -> ColorMap {
        ColorMap::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn cfg_scalar_toy() {
        let d = Table::new(&[(None, &[[1.0, 0.0, 0.0]]), (Some("y"), &[[2.0, 0.0, 0.0]])]);
        let x = ColorMap::zeros(1, 1);
        let e = cfg_predict(&d, &x, &PromptId::from("y"), 10, 0, 3.0).unwrap();
        assert_eq!(e.as_slice()[0][0], 5.0);
        let e = cfg_predict(&d, &x, &PromptId::from("y"), 10, 0, 0.0).unwrap();
        assert_eq!(e.as_slice()[0][0], 2.0);
    }

    #[test]
    fn deltas_scalar_toy_with_one_uncond_query() {
        let d = Table::new(&[
            (None, &[[1.0, 0.0, 0.0]]),
            (Some("s"), &[[3.0, 0.0, 0.0]]),
            (Some("t"), &[[0.0, 0.0, 0.0]]),
        ]);
        let x = ColorMap::zeros(1, 1);
        let c = delta_components(&d, &x, Some(&"s".into()), &"t".into(), 10, 0).unwrap();
        assert_eq!(c.delta_s.as_slice()[0][0], 2.0);
        assert_eq!(c.delta_t.as_slice()[0][0], -1.0);
        assert_eq!(d.calls.borrow().iter().filter(|k| k.is_none()).count(), 1);
    }

    #[test]
    fn oscs_predict_queries_uncond_once() {
        let d = Table::new(&[
            (None, &[[1.0, 2.0, 0.0]]),
            (Some("s"), &[[3.0, 0.0, 1.0]]),
            (Some("t"), &[[0.0, 1.0, 4.0]]),
        ]);
        let x = ColorMap::zeros(1, 1);
        let cfg = GuidanceConfig::new(7.5, 4.0).unwrap();
        oscs_predict(&d, &x, Some(&"s".into()), &"t".into(), 10, 0, &cfg).unwrap();
        let calls = d.calls.borrow();
        assert_eq!(calls.len(), 3);
        assert_eq!(calls.iter().filter(|k| k.is_none()).count(), 1);
    }

    #[test]
    fn decompose_hand_values() {
        let (p, q) = oscs_decompose(&cm(&[[1.0, 0.0, 0.0]]), &cm(&[[1.0, 1.0, 0.0]])).unwrap();
        assert_eq!(p.as_slice()[0], [1.0, 0.0, 0.0]);
        assert_eq!(q.as_slice()[0], [0.0, 1.0, 0.0]);
        // Parallel and orthogonal cases.
        let (p, q) = oscs_decompose(&cm(&[[2.0, 0.0, 0.0]]), &cm(&[[-3.0, 0.0, 0.0]])).unwrap();
        assert_eq!(p.as_slice()[0], [-3.0, 0.0, 0.0]);
        assert_eq!(q.as_slice()[0], [0.0; 3]);
        let (p, q) = oscs_decompose(&cm(&[[0.0, 2.0, 0.0]]), &cm(&[[5.0, 0.0, 1.0]])).unwrap();
        assert_eq!(p.as_slice()[0], [0.0; 3]);
        assert_eq!(q.as_slice()[0], [5.0, 0.0, 1.0]);
        // Degenerate source.
        let (p, q) = oscs_decompose(&cm(&[[1e-7, 0.0, 0.0]]), &cm(&[[1.0, 1.0, 0.0]])).unwrap();
        assert_eq!(p.as_slice()[0], [0.0; 3]);
        assert_eq!(q.as_slice()[0], [1.0, 1.0, 0.0]);
    }

    #[test]
    fn projection_is_global_not_per_pixel() {
        // Per pixel these would be parallel; jointly they are not.
        let ds = cm(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let dt = cm(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let (p, q) = oscs_decompose(&ds, &dt).unwrap();
        assert_eq!(p.norm(), 0.0);
        assert_eq!(q, dt);
    }

    #[test]
    fn predict_two_vector_toy() {
        let d = Table::new(&[
            (None, &[[0.0; 3]]),
            (Some("s"), &[[1.0, 0.0, 0.0]]),
            (Some("t"), &[[1.0, 1.0, 0.0]]),
        ]);
        let x = ColorMap::zeros(1, 1);
        let cfg = GuidanceConfig::new(2.0, 4.0).unwrap();
        let out = oscs_predict(&d, &x, Some(&"s".into()), &"t".into(), 10, 0, &cfg).unwrap();
        assert_eq!(out.eps_hat.as_slice()[0], [0.5, 2.0, 0.0]);
    }

    #[test]
    fn missing_source_prompt_is_plain_guidance() {
        let d = Table::new(&[(None, &[[1.0, 0.0, 2.0]]), (Some("t"), &[[0.0, 3.0, 2.0]])]);
        let x = ColorMap::zeros(1, 1);
        let cfg = GuidanceConfig::new(2.0, 4.0).unwrap();
        let out = oscs_predict(&d, &x, None, &"t".into(), 10, 0, &cfg).unwrap();
        assert_eq!(out.eps_hat.as_slice()[0], [1.0 - 2.0, 6.0, 2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(GuidanceConfig::new(-1.0, 4.0).is_err());
        assert!(GuidanceConfig::new(1.0, 0.0).is_err());
        assert!(GuidanceConfig::new(1.0, f64::NAN).is_err());
        assert!(GuidanceConfig::new(1.0, 0.5).unwrap().suppression_warning().is_some());
        assert!(GuidanceConfig::new(1.0, 1.0).unwrap().suppression_warning().is_some());
        assert!(GuidanceConfig::with_omega(1.0).unwrap().suppression_warning().is_none());
    }

    fn arb_pair() -> impl Strategy<Value = (ColorMap, ColorMap, ColorMap)> {
        (1usize..6, 1usize..4).prop_flat_map(|(w, h)| {
            let n = w * h;
            let v = || prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), n);
            (v(), v(), v()).prop_map(move |(a, b, c)| {
                (
                    ColorMap::from_vec(w, h, a).unwrap(),
                    ColorMap::from_vec(w, h, b).unwrap(),
                    ColorMap::from_vec(w, h, c).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn decomposition_identity_and_orthogonality((ds, dt, _) in arb_pair()) {
            let (p, q) = oscs_decompose(&ds, &dt).unwrap();
            let scale = dt.norm().max(1e-300);
            prop_assert!(p.add(&q).sub(&dt).norm() <= 1e-12 * scale);
            prop_assert!(p.dot(&q).abs() <= 1e-9 * dt.norm_sq());
        }

        #[test]
        fn unit_weight_degenerates((ds, dt, u) in arb_pair(), omega in 0.0f64..20.0) {
            let (p, q) = oscs_decompose(&ds, &dt).unwrap();
            let cfg = GuidanceConfig::new(omega, 1.0).unwrap();
            let got = oscs_combine(&u, &p, &q, &cfg).unwrap();
            let want = u.lincomb(1.0, &dt, omega);
            prop_assert!(got.sub(&want).norm() <= 1e-12 * (1.0 + want.norm()));
        }

        #[test]
        fn suppression_is_monotone((ds, dt, u) in arb_pair(), omega in 0.0f64..20.0) {
            let (p, q) = oscs_decompose(&ds, &dt).unwrap();
            let perp_only = u.lincomb(1.0, &q, omega);
            let mut last = f64::INFINITY;
            for w in [0.5, 1.0, 2.0, 4.0, 16.0] {
                let cfg = GuidanceConfig::new(omega, w).unwrap();
                let d = oscs_combine(&u, &p, &q, &cfg).unwrap().sub(&perp_only).norm();
                prop_assert!(d <= last);
                last = d;
            }
        }
    }
}
