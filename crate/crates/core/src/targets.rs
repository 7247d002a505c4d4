//! Target amplitude images on the extraction-plane pixel grid.

use ndarray::Array2;

use crate::error::{HoloError, Result};
use crate::grid::AmplitudeImage;
use crate::io::read_pgm;

/// 64x64 bird silhouette shipped with the crate.
pub const BIRD_PGM: &[u8] = include_bytes!("../data/bird.pgm");

pub fn bird_glyph() -> Array2<f64> {
    read_pgm(BIRD_PGM).expect("bundled glyph parses")
}

/// Overlap lengths, in units of `dst_dx`, between `n_dst` destination cells
/// and `n_src` source cells of width `src_dx`, both centred on zero.
fn overlap_weights(n_dst: usize, dst_dx: f64, n_src: usize, src_dx: f64) -> Vec<Vec<(usize, f64)>> {
    let d0 = -0.5 * n_dst as f64 * dst_dx;
    let s0 = -0.5 * n_src as f64 * src_dx;
    (0..n_dst)
        .map(|i| {
            let (a, b) = (d0 + i as f64 * dst_dx, d0 + (i + 1) as f64 * dst_dx);
            let lo = (((a - s0) / src_dx).floor().max(0.0)) as usize;
            let hi = (((b - s0) / src_dx).ceil().max(0.0) as usize).min(n_src);
            (lo..hi)
                .filter_map(|k| {
                    let (c, d) = (s0 + k as f64 * src_dx, s0 + (k + 1) as f64 * src_dx);
                    let w = (b.min(d) - a.max(c)).max(0.0) / dst_dx;
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Area-weighted resampling of `image` (square pixels, physical `width`)
/// onto a centred `plane` grid with spacing `dx`. Area outside the image
/// counts as zero.
///
/// A single-row plane (2D scenarios) samples a strip one `dx` tall through
/// the vertical centre of the image.
pub fn resample(image: &Array2<f64>, width: f64, plane: [usize; 2], dx: f64) -> Result<Array2<f64>> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(HoloError::InvalidArgument("empty target image".into()));
    }
    if !(width.is_finite() && width > 0.0 && dx > 0.0) {
        return Err(HoloError::InvalidArgument("image width and spacing must be positive".into()));
    }
    let px = width / w as f64;
    let wy = overlap_weights(plane[0], dx, h, px);
    let wx = overlap_weights(plane[1], dx, w, px);
    Ok(Array2::from_shape_fn(plane, |(i, j)| {
        let mut acc = 0.0;
        for &(r, a) in &wy[i] {
            for &(c, b) in &wx[j] {
                acc += a * b * image[[r, c]];
            }
        }
        acc
    }))
}

/// Resample and threshold at 0.5: a binary target.
pub fn glyph_target(image: &Array2<f64>, width: f64, plane: [usize; 2], dx: f64) -> Result<AmplitudeImage> {
    let r = resample(image, width, plane, dx)?;
    AmplitudeImage::new(dx, r.mapv(|v| if v > 0.5 { 1.0 } else { 0.0 }))
}

/// Two discs of diameter `diameter` centred `separation` apart along the
/// last plane axis.
pub fn two_spot(plane: [usize; 2], dx: f64, separation: f64, diameter: f64) -> Result<AmplitudeImage> {
    if !(separation > diameter && diameter > 0.0) {
        return Err(HoloError::InvalidArgument("spots must be separated by more than their diameter".into()));
    }
    let c = |n: usize| 0.5 * (n as f64 - 1.0);
    let r = 0.5 * diameter.max(dx);
    let values = Array2::from_shape_fn(plane, |(i, j)| {
        let y = if plane[0] == 1 { 0.0 } else { (i as f64 - c(plane[0])) * dx };
        let x = (j as f64 - c(plane[1])) * dx;
        let hit = [-0.5, 0.5].iter().any(|s| {
            let dxs = x - s * separation;
            (dxs * dxs + y * y).sqrt() <= r + 1e-9 * dx
        });
        if hit {
            1.0
        } else {
            0.0
        }
    });
    AmplitudeImage::new(dx, values)
}
