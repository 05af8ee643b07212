//! End-to-end view synthesis: projection, splatting, mask composition, flow
//! completion and warping, with an optional high-resolution warp.

use serde::{Deserialize, Serialize};

use crate::complete::{DiffusionRefiner, FlowRefiner, NoRefiner};
use crate::error::{ensure_same_size, Result, Stage};
use crate::geometry::{depth_to_forward_flow, CameraIntrinsics, ProjectedFlow, RigidTransform};
use crate::mask::{
    compose_final_mask, default_close_radius, transformed_mask, ClosingPredictor, MaskPredictor, NoResidual,
};
use crate::raster::{DepthImage, FlowField, RgbImage};
use crate::splat::{forward_to_backward_with, SplatValue, TransformedFlow};
use crate::warp::{upsample_flow, warp_image_with, SampleKernel, WarpOptions};
use crate::BinaryMask;

/// Slot for a source-depth estimator. The pipeline itself consumes depth
/// directly; a learned monocular model would implement this.
pub trait DepthPredictor {
    fn predict_depth(&self, rgb: &RgbImage, mask: &BinaryMask) -> Result<DepthImage>;
}

/// Returns a fixed depth image, masked to the requested silhouette.
#[derive(Debug, Clone, Copy)]
pub struct ProvidedDepth<'a>(pub &'a DepthImage);

impl DepthPredictor for ProvidedDepth<'_> {
    fn predict_depth(&self, rgb: &RgbImage, mask: &BinaryMask) -> Result<DepthImage> {
        ensure_same_size(rgb.size(), self.0.size())?;
        self.0.masked(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinerChoice {
    #[default]
    Diffusion,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskChoice {
    #[default]
    Closing,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisOptions {
    pub refiner: RefinerChoice,
    pub mask_predictor: MaskChoice,
    /// Closing radius in target pixels; scales with the target width when
    /// unset.
    pub close_radius: Option<usize>,
    pub kernel: SampleKernel,
    pub splat: SplatValue,
    /// Drop background taps when sampling near the source silhouette.
    pub masked_sampling: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions {
            refiner: RefinerChoice::default(),
            mask_predictor: MaskChoice::default(),
            close_radius: None,
            kernel: SampleKernel::default(),
            splat: SplatValue::default(),
            masked_sampling: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthesisInputs<'a> {
    pub src_rgb: &'a RgbImage,
    pub src_depth: &'a DepthImage,
    pub src_mask: &'a BinaryMask,
    pub k_src: &'a CameraIntrinsics,
    pub k_tgt: &'a CameraIntrinsics,
    pub t_src_to_tgt: &'a RigidTransform,
}

/// The synthesised view and every intermediate.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub rgb: RgbImage,
    /// `M_final`.
    pub mask: BinaryMask,
    /// Completed backward flow, valid inside `mask` wherever completion
    /// reached.
    pub backward_flow: FlowField,
    pub forward: ProjectedFlow,
    pub transformed: TransformedFlow,
    pub transformed_mask: BinaryMask,
    pub residual_mask: BinaryMask,
    /// Pixels of `mask` left without flow, rendered as background.
    pub unfilled: usize,
}

/// Runs the pipeline with the predictor and refiner named in `options`.
pub fn synthesize(inputs: &SynthesisInputs<'_>, options: &SynthesisOptions) -> Result<Synthesis> {
    let radius = options
        .close_radius
        .unwrap_or_else(|| default_close_radius(inputs.k_tgt.width));
    let predictor: &dyn MaskPredictor = match options.mask_predictor {
        MaskChoice::Closing => &ClosingPredictor { radius },
        MaskChoice::None => &NoResidual,
    };
    let refiner: &dyn FlowRefiner = match options.refiner {
        RefinerChoice::Diffusion => &DiffusionRefiner::default(),
        RefinerChoice::None => &NoRefiner,
    };
    synthesize_with(inputs, options, predictor, refiner)
}

/// Runs the pipeline with caller-supplied mask predictor and flow refiner.
pub fn synthesize_with(
    inputs: &SynthesisInputs<'_>,
    options: &SynthesisOptions,
    predictor: &dyn MaskPredictor,
    refiner: &dyn FlowRefiner,
) -> Result<Synthesis> {
    let stage = |s: Stage| move |e: crate::Error| e.in_stage(s);
    let src_size = inputs.k_src.size();
    ensure_same_size(src_size, inputs.src_rgb.size())
        .and_then(|_| inputs.k_tgt.validate())
        .map_err(stage(Stage::Projection))?;

    let forward = depth_to_forward_flow(
        inputs.src_depth,
        inputs.src_mask,
        inputs.k_src,
        inputs.k_tgt,
        inputs.t_src_to_tgt,
    )
    .map_err(stage(Stage::Projection))?;

    let (tw, th) = inputs.k_tgt.size();
    let transformed = forward_to_backward_with(&forward.flow, &forward.target_depth, tw, th, options.splat)
        .map_err(stage(Stage::Splat))?;

    let m_tran = transformed_mask(&transformed);
    let residual = predictor
        .predict_residual(&m_tran, &transformed)
        .and_then(|r| r.and_not(&m_tran))
        .map_err(stage(Stage::Mask))?;
    let m_final = compose_final_mask(&residual, &m_tran).map_err(stage(Stage::Mask))?;

    let backward_flow = refiner
        .refine(&transformed, &m_final)
        .and_then(|f| f.restricted_to(&m_final))
        .map_err(stage(Stage::Completion))?;
    let unfilled = m_final
        .and_not(&backward_flow.valid_mask())
        .map_err(stage(Stage::Completion))?
        .count();

    let warp_opts = WarpOptions {
        kernel: options.kernel,
        source_mask: options.masked_sampling.then_some(inputs.src_mask),
    };
    let rgb = warp_image_with(inputs.src_rgb, &backward_flow, &m_final, &warp_opts).map_err(stage(Stage::Warp))?;

    Ok(Synthesis {
        rgb,
        mask: m_final,
        backward_flow,
        forward,
        transformed,
        transformed_mask: m_tran,
        residual_mask: residual,
        unfilled,
    })
}

/// A view synthesised at a higher resolution from a low-resolution flow.
#[derive(Debug, Clone)]
pub struct HighResSynthesis {
    pub rgb: RgbImage,
    pub mask: BinaryMask,
    pub backward_flow: FlowField,
}

/// Upsamples the completed flow of `lr` by `scale` and warps `hr_src_rgb`
/// with it. The output mask is where the upsampled flow is valid.
pub fn synthesize_high_res(
    lr: &Synthesis,
    hr_src_rgb: &RgbImage,
    hr_src_mask: Option<&BinaryMask>,
    scale: f64,
    kernel: SampleKernel,
) -> Result<HighResSynthesis> {
    let backward_flow = upsample_flow(&lr.backward_flow, scale).map_err(|e| e.in_stage(Stage::Upsample))?;
    let mask = backward_flow.valid_mask();
    let opts = WarpOptions {
        kernel,
        source_mask: hr_src_mask,
    };
    let rgb = warp_image_with(hr_src_rgb, &backward_flow, &mask, &opts).map_err(|e| e.in_stage(Stage::Warp))?;
    Ok(HighResSynthesis {
        rgb,
        mask,
        backward_flow,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::scene::{build_figure, make_pair, Orbit, Pose};

    fn sphere_inputs() -> (RgbImage, DepthImage, BinaryMask, CameraIntrinsics) {
        let k = CameraIntrinsics::new(60.0, 60.0, 20.0, 20.0, 40, 40).unwrap();
        let mut depth = DepthImage::zeros(40, 40);
        let mut rgb = RgbImage::filled(40, 40, [0.0; 3]);
        for y in 0..40 {
            for x in 0..40 {
                let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
                if dx * dx + dy * dy < 100.0 {
                    depth.set(x, y, 2.0 + 0.001 * (dx * dx + dy * dy)).unwrap();
                    rgb.set_pixel(x, y, [(3 * x) as f64, (5 * y) as f64, 77.0]);
                }
            }
        }
        let mask = depth.support();
        (rgb, depth, mask, k)
    }

    #[test]
    fn identity_transform_reproduces_source() {
        let (rgb, depth, mask, k) = sphere_inputs();
        let t = RigidTransform::identity();
        let out = synthesize(
            &SynthesisInputs {
                src_rgb: &rgb,
                src_depth: &depth,
                src_mask: &mask,
                k_src: &k,
                k_tgt: &k,
                t_src_to_tgt: &t,
            },
            &SynthesisOptions::default(),
        )
        .unwrap();
        assert_eq!(out.mask, mask);
        assert_eq!(out.rgb, rgb);
        assert_eq!(out.unfilled, 0);
    }

    #[test]
    fn errors_are_stage_tagged() {
        let (rgb, depth, mask, k) = sphere_inputs();
        let mut bad_mask = mask.clone();
        bad_mask.set(0, 0, true);
        let t = RigidTransform::identity();
        let err = synthesize(
            &SynthesisInputs {
                src_rgb: &rgb,
                src_depth: &depth,
                src_mask: &bad_mask,
                k_src: &k,
                k_tgt: &k,
                t_src_to_tgt: &t,
            },
            &SynthesisOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: Stage::Projection,
                ..
            }
        ));
        assert!(err.to_string().starts_with("[projection]"));
    }

    #[test]
    fn synthetic_pair_is_close_to_ground_truth() {
        let fig = build_figure(
            2,
            &Pose {
                shoulder: [0.9, 0.7],
                elbow: [0.4, 0.2],
                ..Pose::default()
            },
        )
        .unwrap();
        let pair = make_pair(&fig, &Orbit::default(), 10.0).unwrap();
        let src = &pair.source.render;
        let out = synthesize(
            &SynthesisInputs {
                src_rgb: &src.rgb,
                src_depth: &src.depth,
                src_mask: &src.mask,
                k_src: &pair.source.intrinsics,
                k_tgt: &pair.target.intrinsics,
                t_src_to_tgt: &pair.t_src_to_tgt,
            },
            &SynthesisOptions::default(),
        )
        .unwrap();
        let epe = crate::metrics::mean_endpoint_error(&out.backward_flow, &pair.gt_backward_flow).unwrap();
        assert!(epe < 0.75, "epe {epe}");
        assert!(crate::metrics::iou(&out.mask, &pair.target.render.mask).unwrap() > 0.9);
    }
}
