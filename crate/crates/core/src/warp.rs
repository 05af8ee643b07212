//! Backward remapping of colour images and bicubic upsampling of flow fields.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{FlowDirection, FlowField, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKernel {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WarpOptions<'a> {
    pub kernel: SampleKernel,
    /// When set, bilinear taps outside this source silhouette are dropped and
    /// the remaining weights renormalised, so silhouette pixels do not blend
    /// in background colour. Falls back to plain taps when all four are
    /// outside.
    pub source_mask: Option<&'a BinaryMask>,
}

const BACKGROUND: [f64; 3] = [0.0, 0.0, 0.0];

/// Bilinear backward warp with clamp-to-edge sampling.
pub fn warp_image(src: &RgbImage, bwd: &FlowField, out_mask: &BinaryMask) -> Result<RgbImage> {
    warp_image_with(src, bwd, out_mask, &WarpOptions::default())
}

/// For each foreground pixel `(a, b)` of `out_mask` with valid flow, samples
/// `src` at `(a + u, b + v)`. Everything else is black.
pub fn warp_image_with(
    src: &RgbImage,
    bwd: &FlowField,
    out_mask: &BinaryMask,
    opts: &WarpOptions<'_>,
) -> Result<RgbImage> {
    if bwd.direction() != FlowDirection::Backward {
        return Err(Error::InvalidInput("warping needs a backward flow".into()));
    }
    ensure_same_size(bwd.size(), out_mask.size())?;
    if let Some(m) = opts.source_mask {
        ensure_same_size(src.size(), m.size())?;
    }
    let (w, h) = bwd.size();
    let mut out = RgbImage::filled(w, h, BACKGROUND);
    for b in 0..h {
        for a in 0..w {
            if !out_mask.get(a, b) {
                continue;
            }
            let Some((u, v)) = bwd.get(a, b) else {
                continue;
            };
            let (sx, sy) = (a as f64 + u, b as f64 + v);
            let rgb = match opts.kernel {
                SampleKernel::Nearest => sample_nearest(src, sx, sy),
                SampleKernel::Bilinear => sample_bilinear(src, sx, sy, opts.source_mask),
            };
            out.set_pixel(a, b, rgb);
        }
    }
    Ok(out)
}

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

fn sample_nearest(src: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let xi = clamp_index(x.round() as i64, src.width());
    let yi = clamp_index(y.round() as i64, src.height());
    src.pixel(xi, yi)
}

fn sample_bilinear(src: &RgbImage, x: f64, y: f64, mask: Option<&BinaryMask>) -> [f64; 3] {
    let (w, h) = src.size();
    let (x0f, y0f) = (x.floor(), y.floor());
    let (tx, ty) = (x - x0f, y - y0f);
    let (x0, y0) = (x0f as i64, y0f as i64);
    let taps = [
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x0 + 1, y0, tx * (1.0 - ty)),
        (x0, y0 + 1, (1.0 - tx) * ty),
        (x0 + 1, y0 + 1, tx * ty),
    ];
    let accumulate = |use_mask: bool| {
        let mut acc = [0.0f64; 3];
        let mut wsum = 0.0;
        for &(px, py, wt) in &taps {
            if wt == 0.0 {
                continue;
            }
            let (cx, cy) = (clamp_index(px, w), clamp_index(py, h));
            if use_mask && !mask.is_some_and(|m| m.get(cx, cy)) {
                continue;
            }
            let p = src.pixel(cx, cy);
            for c in 0..3 {
                acc[c] += wt * p[c];
            }
            wsum += wt;
        }
        (acc, wsum)
    };
    let (mut acc, mut wsum) = accumulate(mask.is_some());
    if wsum <= 0.0 {
        (acc, wsum) = accumulate(false);
    }
    [acc[0] / wsum, acc[1] / wsum, acc[2] / wsum]
}

/// Catmull-Rom cubic convolution kernel (`a = -0.5`).
pub fn cubic_weight(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Resamples a backward flow to `scale` times its resolution.
///
/// Output pixel `X` samples input coordinate `X / scale`, matching
/// intrinsics scaled by multiplying every entry of `K` by `scale`. The `u`
/// and `v` channels are interpolated with Catmull-Rom bicubic weights over
/// the valid taps (weights renormalised when some taps are invalid) and then
/// multiplied by `scale` to stay in output-pixel units. Validity is taken
/// from the nearest input pixel.
pub fn upsample_flow(bwd: &FlowField, scale: f64) -> Result<FlowField> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
    }
    let (w, h) = bwd.size();
    let out_dim = |n: usize| -> Result<usize> {
        let exact = n as f64 * scale;
        let rounded = exact.round();
        if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "scale {scale} gives non-integer size {exact} for dimension {n}"
            )));
        }
        Ok(rounded as usize)
    };
    let (ow, oh) = (out_dim(w)?, out_dim(h)?);
    let mut out = FlowField::empty(ow, oh, bwd.direction());

    for oy in 0..oh {
        let sy = oy as f64 / scale;
        let ny = clamp_index(sy.round() as i64, h);
        let y0 = sy.floor() as i64;
        let wy: Vec<(usize, f64)> = (-1..=2)
            .map(|k| (clamp_index(y0 + k, h), cubic_weight(sy - (y0 + k) as f64)))
            .collect();
        for ox in 0..ow {
            let sx = ox as f64 / scale;
            let nx = clamp_index(sx.round() as i64, w);
            if !bwd.is_valid(nx, ny) {
                continue;
            }
            let x0 = sx.floor() as i64;
            let mut acc_u = 0.0;
            let mut acc_v = 0.0;
            let mut wsum = 0.0;
            for &(yi, wyk) in &wy {
                if wyk == 0.0 {
                    continue;
                }
                for k in -1..=2 {
                    let wxk = cubic_weight(sx - (x0 + k) as f64);
                    if wxk == 0.0 {
                        continue;
                    }
                    let xi = clamp_index(x0 + k, w);
                    if let Some((u, v)) = bwd.get(xi, yi) {
                        let wt = wxk * wyk;
                        acc_u += wt * u;
                        acc_v += wt * v;
                        wsum += wt;
                    }
                }
            }
            let (u, v) = if wsum > 0.5 {
                (acc_u / wsum, acc_v / wsum)
            } else {
                bwd.get(nx, ny).expect("nearest pixel is valid")
            };
            out.set(ox, oy, u * scale, v * scale);
        }
    }
    Ok(out)
}
