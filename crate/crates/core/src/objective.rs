//! Design loss and evaluation metrics on amplitude images.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{HoloError, Result};
use crate::grid::AmplitudeImage;

/// Scale applied to `1 / |q0|` when no explicit weight is configured.
pub const DEFAULT_LAMBDA_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// Negative normalized correlation with the target minus an intensity term.
    #[default]
    Correlation,
    /// Negative mean squared amplitude over the target mask.
    Focus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Intensity weight; `None` selects `DEFAULT_LAMBDA_SCALE / |q0|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub kind: LossKind,
}

impl LossConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
            kind: LossKind::Correlation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(HoloError::InvalidArgument(format!("loss weight must be nonnegative, got {l}")));
            }
        }
        Ok(())
    }

    pub fn lambda_for(&self, q0: &AmplitudeImage) -> f64 {
        self.lambda.unwrap_or_else(|| DEFAULT_LAMBDA_SCALE / norm(&q0.values))
    }
}

/// Target amplitude, pattern support and depth beyond the extraction plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub q0: AmplitudeImage,
    pub mask: Array2<bool>,
    pub depth: f64,
}

impl TargetSpec {
    pub fn new(q0: AmplitudeImage, mask: Array2<bool>, depth: f64) -> Result<Self> {
        if mask.shape() != q0.values.shape() {
            return Err(HoloError::ShapeMismatch {
                expected: q0.values.shape().to_vec(),
                found: mask.shape().to_vec(),
            });
        }
        if norm(&q0.values) == 0.0 {
            return Err(HoloError::ZeroNorm("target amplitude"));
        }
        let on = mask.iter().filter(|&&m| m).count();
        if on == 0 || on == mask.len() {
            return Err(HoloError::InvalidArgument(
                "target mask must be a nonempty strict subset of the plane".into(),
            ));
        }
        if !(depth.is_finite() && depth >= 0.0) {
            return Err(HoloError::InvalidArgument(format!("target depth must be nonnegative, got {depth}")));
        }
        Ok(Self { q0, mask, depth })
    }

    /// Target whose mask is `q0 > 0.5 max(q0)`.
    pub fn thresholded(q0: AmplitudeImage, depth: f64) -> Result<Self> {
        let peak = q0.values.iter().cloned().fold(0.0, f64::max);
        let mask = q0.values.mapv(|v| v > 0.5 * peak);
        Self::new(q0, mask, depth)
    }
}

fn norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_shape(q: &AmplitudeImage, q0: &AmplitudeImage) -> Result<()> {
    if q.values.shape() != q0.values.shape() {
        return Err(HoloError::ShapeMismatch {
            expected: q0.values.shape().to_vec(),
            found: q.values.shape().to_vec(),
        });
    }
    Ok(())
}

/// `<q0, q> / (|q0| |q|)`.
pub fn correlation(q: &AmplitudeImage, q0: &AmplitudeImage) -> Result<f64> {
    same_shape(q, q0)?;
    let (nq, n0) = (norm(&q.values), norm(&q0.values));
    if nq == 0.0 {
        return Err(HoloError::ZeroNorm("field amplitude"));
    }
    if n0 == 0.0 {
        return Err(HoloError::ZeroNorm("target amplitude"));
    }
    // One square root of the product keeps correlation(q0, q0) exactly 1.
    let (sq, s0) = (dot(&q.values, &q.values), dot(&q0.values, &q0.values));
    let den = (sq * s0).sqrt();
    let den = if den.is_normal() { den } else { nq * n0 };
    Ok(dot(&q.values, &q0.values) / den)
}

/// Design loss for amplitude `q` against `target`.
pub fn loss(q: &AmplitudeImage, target: &TargetSpec, cfg: &LossConfig) -> Result<f64> {
    Ok(loss_and_sensitivity(q, target, cfg)?.0)
}

/// Loss and its gradient with respect to the amplitude image.
pub fn loss_and_sensitivity(q: &AmplitudeImage, target: &TargetSpec, cfg: &LossConfig) -> Result<(f64, Array2<f64>)> {
    cfg.validate()?;
    let q0 = &target.q0;
    same_shape(q, q0)?;
    match cfg.kind {
        LossKind::Correlation => {
            let lambda = cfg.lambda_for(q0);
            let corr = correlation(q, q0)?;
            let (nq, n0) = (norm(&q.values), norm(&q0.values));
            let value = -corr - lambda * nq;
            // d corr / dq = q0 / (n0 nq) - corr q / nq^2
            let mut g = Array2::zeros(q.values.raw_dim());
            Zip::from(&mut g)
                .and(&q.values)
                .and(&q0.values)
                .for_each(|g, &q, &q0| *g = -(q0 / (n0 * nq) - corr * q / (nq * nq)) - lambda * q / nq);
            Ok((value, g))
        }
        LossKind::Focus => {
            let n = target.mask.iter().filter(|&&m| m).count() as f64;
            let value = -Zip::from(&q.values)
                .and(&target.mask)
                .fold(0.0, |acc, &q, &m| if m { acc + q * q } else { acc })
                / n;
            let g = Zip::from(&q.values)
                .and(&target.mask)
                .map_collect(|&q, &m| if m { -2.0 * q / n } else { 0.0 });
            Ok((value, g))
        }
    }
}

/// Mean amplitude over the mask divided by mean amplitude off the mask.
pub fn cnr(q: &AmplitudeImage, mask: &Array2<bool>) -> Result<f64> {
    if mask.shape() != q.values.shape() {
        return Err(HoloError::ShapeMismatch {
            expected: q.values.shape().to_vec(),
            found: mask.shape().to_vec(),
        });
    }
    let (mut on, mut n_on, mut off, mut n_off) = (0.0, 0usize, 0.0, 0usize);
    Zip::from(&q.values).and(mask).for_each(|&v, &m| {
        if m {
            on += v;
            n_on += 1;
        } else {
            off += v;
            n_off += 1;
        }
    });
    if n_on == 0 || n_off == 0 {
        return Err(HoloError::InvalidArgument("mask and its complement must be nonempty".into()));
    }
    if off == 0.0 {
        return Err(HoloError::ZeroNorm("background amplitude"));
    }
    Ok((on / n_on as f64) / (off / n_off as f64))
}

/// Depth whose plane best correlates with `q0`; ties go to the smallest depth.
pub fn find_target_depth(planes: &[(f64, AmplitudeImage)], q0: &AmplitudeImage) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for (depth, q) in planes {
        let c = correlation(q, q0)?;
        best = match best {
            Some((bd, bc)) if c < bc || (c == bc && *depth >= bd) => Some((bd, bc)),
            _ => Some((*depth, c)),
        };
    }
    best.ok_or_else(|| HoloError::InvalidArgument("no planes to search".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn img(v: Array2<f64>) -> AmplitudeImage {
        AmplitudeImage::new(1e-4, v).unwrap()
    }

    #[test]
    fn two_pixel_closed_form() {
        let c = correlation(&img(array![[1.0, 0.0]]), &img(array![[1.0, 1.0]])).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn cnr_direct_ratios() {
        let mask = array![[true, false], [true, false]];
        assert_eq!(cnr(&img(array![[1.0, 0.5], [1.0, 0.5]]), &mask).unwrap(), 2.0);
        assert_eq!(cnr(&img(Array2::from_elem([2, 2], 3.0)), &mask).unwrap(), 1.0);
        let r = cnr(&img(array![[1.01, 0.01], [1.01, 0.01]]), &mask).unwrap();
        assert!((r - 101.0).abs() < 1e-9);
        assert!(cnr(&img(array![[1.0, 0.0], [1.0, 0.0]]), &mask).is_err());
    }

    #[test]
    fn disjoint_supports_give_zero_loss() {
        let q0 = img(array![[1.0, 0.0, 0.0]]);
        let t = TargetSpec::new(q0, array![[true, false, false]], 0.0).unwrap();
        let l = loss(&img(array![[0.0, 2.0, 1.0]]), &t, &LossConfig::with_lambda(0.0)).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn focus_loss_rewards_mask_energy() {
        let q0 = img(array![[1.0, 0.0]]);
        let t = TargetSpec::new(q0, array![[true, false]], 0.0).unwrap();
        let cfg = LossConfig {
            lambda: None,
            kind: LossKind::Focus,
        };
        let (l, g) = loss_and_sensitivity(&img(array![[3.0, 5.0]]), &t, &cfg).unwrap();
        assert_eq!(l, -9.0);
        assert_eq!(g, array![[-6.0, 0.0]]);
    }

    #[test]
    fn depth_search_breaks_ties_low() {
        let q0 = img(array![[1.0, 2.0]]);
        let planes = vec![
            (3e-3, img(array![[2.0, 0.0]])),
            (2e-3, img(array![[2.0, 4.0]])),
            (1e-3, img(array![[1.0, 2.0]])),
        ];
        let (d, c) = find_target_depth(&planes, &q0).unwrap();
        assert_eq!(d, 1e-3);
        assert!((c - 1.0).abs() < 1e-15);
        assert!(find_target_depth(&[], &q0).is_err());
    }

    #[test]
    fn mask_must_be_strict_subset() {
        let q0 = img(array![[1.0, 1.0]]);
        assert!(TargetSpec::new(q0.clone(), array![[true, true]], 0.0).is_err());
        assert!(TargetSpec::new(q0, array![[false, false]], 0.0).is_err());
    }
}
