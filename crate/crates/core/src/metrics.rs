//! Image, flow and mask accuracy measures, and the combined L1 image + flow
//! objective evaluated as a score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{FlowField, RgbImage};

/// Flow magnitudes below this many pixels count as "no motion" in
/// [`delta_threshold`].
pub const DELTA_EPS: f64 = 1e-3;

/// Mean squared per-channel difference over `region` (full frame when
/// `None`), in squared 8-bit intensity units.
pub fn image_mse(pred: &RgbImage, gt: &RgbImage, region: Option<&BinaryMask>) -> Result<f64> {
    let (sum, n) = squared_error(pred, gt, region)?;
    if n == 0 {
        return Err(Error::InvalidInput("image MSE over an empty region".into()));
    }
    Ok(sum / (n as f64 * 3.0))
}

fn squared_error(pred: &RgbImage, gt: &RgbImage, region: Option<&BinaryMask>) -> Result<(f64, usize)> {
    ensure_same_size(gt.size(), pred.size())?;
    if let Some(r) = region {
        ensure_same_size(gt.size(), r.size())?;
    }
    let mut sum = 0.0;
    let mut n = 0;
    for i in 0..gt.width() * gt.height() {
        if region.is_some_and(|r| !r.bits()[i]) {
            continue;
        }
        for c in 0..3 {
            let d = pred.data()[3 * i + c] - gt.data()[3 * i + c];
            sum += d * d;
        }
        n += 1;
    }
    Ok((sum, n))
}

/// Peak signal-to-noise ratio in dB against a peak of 255. Infinite for
/// identical inputs.
pub fn psnr(pred: &RgbImage, gt: &RgbImage, region: Option<&BinaryMask>) -> Result<f64> {
    let mse = image_mse(pred, gt, region)?;
    Ok(10.0 * (255.0f64 * 255.0 / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 255.0;

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn ssim_gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Mean SSIM over every fully contained 11x11 Gaussian window (σ = 1.5),
/// averaged over the three channels.
pub fn ssim(pred: &RgbImage, gt: &RgbImage) -> Result<f64> {
    ensure_same_size(gt.size(), pred.size())?;
    let (w, h) = gt.size();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let taps = ssim_gaussian_taps();
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let channel = |img: &RgbImage, c: usize| -> Vec<f64> { img.data().iter().skip(c).step_by(3).copied().collect() };

    let mut total = 0.0;
    for c in 0..3 {
        let x = channel(pred, c);
        let y = channel(gt, c);
        let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
        let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mu_x = filter_valid(&x, w, h, &taps);
        let mu_y = filter_valid(&y, w, h, &taps);
        let e_xx = filter_valid(&xx, w, h, &taps);
        let e_yy = filter_valid(&yy, w, h, &taps);
        let e_xy = filter_valid(&xy, w, h, &taps);
        let mut sum = 0.0;
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sxx = e_xx[i] - mx * mx;
            let syy = e_yy[i] - my * my;
            let sxy = e_xy[i] - mx * my;
            sum += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
        }
        total += sum / mu_x.len() as f64;
    }
    Ok(total / 3.0)
}

/// Separable "valid" correlation: output has `(w - k + 1) x (h - k + 1)` entries.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn gt_valid_pixels(pred: &FlowField, gt: &FlowField) -> Result<Vec<usize>> {
    ensure_same_size(gt.size(), pred.size())?;
    let idx: Vec<usize> = (0..gt.valid().len()).filter(|&i| gt.valid()[i]).collect();
    Ok(idx)
}

/// Mean of `(Δu² + Δv²) / 2` over pixels valid in `gt`. Prediction pixels
/// that are invalid read as zero displacement.
pub fn flow_mse(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    let idx = gt_valid_pixels(pred, gt)?;
    if idx.is_empty() {
        return Err(Error::InvalidInput("flow MSE with no valid ground truth".into()));
    }
    let sum: f64 = idx
        .iter()
        .map(|&i| {
            let du = pred.u()[i] - gt.u()[i];
            let dv = pred.v()[i] - gt.v()[i];
            (du * du + dv * dv) / 2.0
        })
        .sum();
    Ok(sum / idx.len() as f64)
}

/// Mean endpoint error over pixels valid in `gt`.
pub fn mean_endpoint_error(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    let idx = gt_valid_pixels(pred, gt)?;
    if idx.is_empty() {
        return Err(Error::InvalidInput("endpoint error with no valid ground truth".into()));
    }
    let sum: f64 = idx
        .iter()
        .map(|&i| (pred.u()[i] - gt.u()[i]).hypot(pred.v()[i] - gt.v()[i]))
        .sum();
    Ok(sum / idx.len() as f64)
}

/// Fraction of `gt`-valid pixels whose flow magnitudes agree within a factor
/// of `delta`: `max(|p|/|g|, |g|/|p|) < delta`. Pixels where both magnitudes
/// are below [`DELTA_EPS`] count as correct; pixels where only one is count as
/// wrong.
pub fn delta_threshold(pred: &FlowField, gt: &FlowField, delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= 1.0 {
        return Err(Error::InvalidParameter(format!("delta must exceed 1, got {delta}")));
    }
    let idx = gt_valid_pixels(pred, gt)?;
    if idx.is_empty() {
        return Err(Error::InvalidInput("delta metric with no valid ground truth".into()));
    }
    let correct = idx
        .iter()
        .filter(|&&i| {
            let p = pred.u()[i].hypot(pred.v()[i]);
            let g = gt.u()[i].hypot(gt.v()[i]);
            match (p > DELTA_EPS, g > DELTA_EPS) {
                (false, false) => true,
                (true, true) => (p / g).max(g / p) < delta,
                _ => false,
            }
        })
        .count();
    Ok(correct as f64 / idx.len() as f64)
}

/// Zero-mean normalised cross-correlation of the concatenated `(u, v)`
/// samples at `gt`-valid pixels.
pub fn ncc(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    let idx = gt_valid_pixels(pred, gt)?;
    if idx.len() < 2 {
        return Err(Error::InvalidInput("NCC needs at least two valid pixels".into()));
    }
    let a: Vec<f64> = idx
        .iter()
        .map(|&i| pred.u()[i])
        .chain(idx.iter().map(|&i| pred.v()[i]))
        .collect();
    let b: Vec<f64> = idx
        .iter()
        .map(|&i| gt.u()[i])
        .chain(idx.iter().map(|&i| gt.v()[i]))
        .collect();
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(Error::InvalidInput("NCC of a constant flow is undefined".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean per-pixel cosine similarity between flow vectors at `gt`-valid
/// pixels where both vectors are longer than [`DELTA_EPS`]. A directional
/// diagnostic alongside [`ncc`].
pub fn mean_cosine_similarity(pred: &FlowField, gt: &FlowField) -> Result<f64> {
    let idx = gt_valid_pixels(pred, gt)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in idx {
        let (pu, pv, gu, gv) = (pred.u()[i], pred.v()[i], gt.u()[i], gt.v()[i]);
        let (pn, gn) = (pu.hypot(pv), gu.hypot(gv));
        if pn > DELTA_EPS && gn > DELTA_EPS {
            sum += (pu * gu + pv * gv) / (pn * gn);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no moving pixels for cosine similarity".into()));
    }
    Ok(sum / n as f64)
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    ensure_same_size(gt.size(), pred.size())?;
    let inter = pred.and(gt)?.count();
    let union = pred.or(gt)?.count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub eta_y: f64,
    pub eta_f: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            eta_y: 1e-6,
            eta_f: 1.0,
        }
    }
}

/// `eta_y · Σ_{fg} |Δrgb|₁ + eta_f · Σ_{gt-valid} |Δflow|₁`, summed (not
/// averaged) over pixels, channels and components.
pub fn combined_loss(
    pred_img: &RgbImage,
    gt_img: &RgbImage,
    fg: &BinaryMask,
    pred_flow: &FlowField,
    gt_flow: &FlowField,
    weights: LossWeights,
) -> Result<f64> {
    if !(weights.eta_y >= 0.0 && weights.eta_f >= 0.0) {
        return Err(Error::InvalidParameter("loss weights must be non-negative".into()));
    }
    ensure_same_size(gt_img.size(), pred_img.size())?;
    ensure_same_size(gt_img.size(), fg.size())?;
    let mut image_term = 0.0;
    for (i, &m) in fg.bits().iter().enumerate() {
        if m {
            for c in 0..3 {
                image_term += (pred_img.data()[3 * i + c] - gt_img.data()[3 * i + c]).abs();
            }
        }
    }
    let flow_term: f64 = gt_valid_pixels(pred_flow, gt_flow)?
        .into_iter()
        .map(|i| (pred_flow.u()[i] - gt_flow.u()[i]).abs() + (pred_flow.v()[i] - gt_flow.v()[i]).abs())
        .sum();
    Ok(weights.eta_y * image_term + weights.eta_f * flow_term)
}

/// Pixels entering each measure of an [`EvalReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub image_pixels: usize,
    pub flow_pixels: usize,
    pub mask_union: usize,
}

/// The six headline measures: image MSE and SSIM, flow MSE, δ₁.₂₅ and NCC,
/// and mask IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub image_mse: f64,
    pub ssim: f64,
    pub flow_mse: f64,
    pub delta_1_25: f64,
    pub ncc: f64,
    pub iou: f64,
    pub counts: EvalCounts,
}

/// Which pixels [`evaluate`] uses for image MSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ImageRegion {
    #[default]
    FullFrame,
    MaskUnion,
}

pub struct EvalInputs<'a> {
    pub pred_rgb: &'a RgbImage,
    pub gt_rgb: &'a RgbImage,
    pub pred_flow: &'a FlowField,
    pub gt_flow: &'a FlowField,
    pub pred_mask: &'a BinaryMask,
    pub gt_mask: &'a BinaryMask,
}

pub fn evaluate(inputs: &EvalInputs<'_>, region: ImageRegion) -> Result<EvalReport> {
    let union = inputs.pred_mask.or(inputs.gt_mask)?;
    let image_region = match region {
        ImageRegion::FullFrame => None,
        ImageRegion::MaskUnion => Some(&union),
    };
    let (_, image_pixels) = squared_error(inputs.pred_rgb, inputs.gt_rgb, image_region)?;
    Ok(EvalReport {
        image_mse: image_mse(inputs.pred_rgb, inputs.gt_rgb, image_region)?,
        ssim: ssim(inputs.pred_rgb, inputs.gt_rgb)?,
        flow_mse: flow_mse(inputs.pred_flow, inputs.gt_flow)?,
        delta_1_25: delta_threshold(inputs.pred_flow, inputs.gt_flow, 1.25)?,
        ncc: ncc(inputs.pred_flow, inputs.gt_flow)?,
        iou: iou(inputs.pred_mask, inputs.gt_mask)?,
        counts: EvalCounts {
            image_pixels,
            flow_pixels: inputs.gt_flow.valid_count(),
            mask_union: union.count(),
        },
    })
}

impl EvalReport {
    /// One `key=value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "image_mse={}", self.image_mse);
        let _ = writeln!(s, "ssim={}", self.ssim);
        let _ = writeln!(s, "flow_mse={}", self.flow_mse);
        let _ = writeln!(s, "delta_1_25={}", self.delta_1_25);
        let _ = writeln!(s, "ncc={}", self.ncc);
        let _ = writeln!(s, "iou={}", self.iou);
        let _ = writeln!(s, "image_pixels={}", self.counts.image_pixels);
        let _ = writeln!(s, "flow_pixels={}", self.counts.flow_pixels);
        let _ = writeln!(s, "mask_union={}", self.counts.mask_union);
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Mean of each measure over several reports; counts are summed.
    pub fn mean(reports: &[EvalReport]) -> Option<EvalReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(EvalReport {
            image_mse: avg(|r| r.image_mse),
            ssim: avg(|r| r.ssim),
            flow_mse: avg(|r| r.flow_mse),
            delta_1_25: avg(|r| r.delta_1_25),
            ncc: avg(|r| r.ncc),
            iou: avg(|r| r.iou),
            counts: EvalCounts {
                image_pixels: reports.iter().map(|r| r.counts.image_pixels).sum(),
                flow_pixels: reports.iter().map(|r| r.counts.flow_pixels).sum(),
                mask_union: reports.iter().map(|r| r.counts.mask_union).sum(),
            },
        })
    }
}
