//! Image comparison metrics. Colors are taken to lie in `[0, 1]`.

use crate::map::{ColorMap, Mask};
use crate::{Error, Result};

fn check(a: &ColorMap, b: &ColorMap, mask: Option<&Mask>) -> Result<()> {
    a.check_same_shape(b, "compared image")?;
    if let Some(m) = mask {
        a.check_same_shape(m, "mask")?;
    }
    Ok(())
}

fn selected<'a>(
    a: &'a ColorMap,
    b: &'a ColorMap,
    mask: Option<&'a Mask>,
) -> impl Iterator<Item = (&'a [f64; 3], &'a [f64; 3])> + 'a {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .enumerate()
        .filter(move |(i, _)| mask.is_none_or(|m| m.as_slice()[*i]))
        .map(|(_, p)| p)
}

/// Mean squared error over the selected pixels and all channels; `None` if
/// nothing is selected.
pub fn mse(a: &ColorMap, b: &ColorMap, mask: Option<&Mask>) -> Result<Option<f64>> {
    check(a, b, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in selected(a, b, mask) {
        for c in 0..3 {
            sum += (p[c] - q[c]).powi(2);
        }
        n += 3;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// `10 log10(1 / MSE)` for unit peak; `+inf` for identical images.
pub fn psnr(a: &ColorMap, b: &ColorMap, mask: Option<&Mask>) -> Result<f64> {
    let m = mse(a, b, mask)?.ok_or_else(|| Error::contract("PSNR over an empty mask"))?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Mean absolute difference over the selected pixels and all channels;
/// `None` if nothing is selected.
pub fn mean_abs_diff(a: &ColorMap, b: &ColorMap, mask: Option<&Mask>) -> Result<Option<f64>> {
    check(a, b, mask)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, q) in selected(a, b, mask) {
        for c in 0..3 {
            sum += (p[c] - q[c]).abs();
        }
        n += 3;
    }
    Ok((n > 0).then(|| sum / n as f64))
}

/// Squared errors and pixel counts accumulated across several views, so
/// that a sweep reports one PSNR over all its selected pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    pub sq_sum: f64,
    pub abs_sum: f64,
    pub values: usize,
}

impl ErrorAccumulator {
    pub fn add(&mut self, a: &ColorMap, b: &ColorMap, mask: Option<&Mask>) -> Result<()> {
        check(a, b, mask)?;
        for (p, q) in selected(a, b, mask) {
            for c in 0..3 {
                let d = p[c] - q[c];
                self.sq_sum += d * d;
                self.abs_sum += d.abs();
            }
            self.values += 3;
        }
        Ok(())
    }

    pub fn mse(&self) -> Option<f64> {
        (self.values > 0).then(|| self.sq_sum / self.values as f64)
    }

    pub fn psnr(&self) -> Option<f64> {
        self.mse().map(|m| if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
    }

    pub fn mean_abs(&self) -> Option<f64> {
        (self.values > 0).then(|| self.abs_sum / self.values as f64)
    }

    pub fn pixels(&self) -> usize {
        self.values / 3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let a = ColorMap::from_vec(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        let b = ColorMap::from_vec(2, 1, vec![[0.1; 3], [1.0; 3]]).unwrap();
        // MSE = 3·0.01 / 6 = 0.005
        assert!((mse(&a, &b, None).unwrap().unwrap() - 0.005).abs() < 1e-15);
        assert!((psnr(&a, &b, None).unwrap() - (-10.0 * 0.005f64.log10())).abs() < 1e-12);
        assert!((mean_abs_diff(&a, &b, None).unwrap().unwrap() - 0.05).abs() < 1e-15);
        let m = Mask::from_vec(2, 1, vec![false, true]).unwrap();
        assert_eq!(psnr(&a, &b, Some(&m)).unwrap(), f64::INFINITY);
        let none = Mask::filled(2, 1, false);
        assert_eq!(mean_abs_diff(&a, &b, Some(&none)).unwrap(), None);
        assert!(psnr(&a, &b, Some(&none)).is_err());
    }

    #[test]
    fn accumulator_pools_views() {
        let a = ColorMap::from_vec(1, 1, vec![[0.2; 3]]).unwrap();
        let b = ColorMap::from_vec(1, 1, vec![[0.0; 3]]).unwrap();
        let mut acc = ErrorAccumulator::default();
        acc.add(&a, &b, None).unwrap();
        acc.add(&a, &a, None).unwrap();
        assert_eq!(acc.pixels(), 2);
        assert!((acc.mse().unwrap() - 0.02).abs() < 1e-15);
        assert!((acc.mean_abs().unwrap() - 0.1).abs() < 1e-15);
    }
}
