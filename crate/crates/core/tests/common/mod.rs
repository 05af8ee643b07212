#![allow(dead_code)]

pub mod reference;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viewsynth::metrics;
use viewsynth::pipeline::{synthesize, Synthesis, SynthesisInputs, SynthesisOptions};
use viewsynth::scene::{build_figure, make_pair, Orbit, Pose, ScenePair};
use viewsynth::BinaryMask;

/// Random figure, pose and orbit angle (10 to 40 degrees, either side) for
/// pair `i` of a suite.
pub fn suite_pair(seed_base: u64, i: u64, orbit: &Orbit) -> ScenePair {
    let (fig_seed, angle, pose) = suite_params(seed_base, i);
    let fig = build_figure(fig_seed, &pose).unwrap();
    make_pair(&fig, orbit, angle).unwrap()
}

pub fn suite_params(seed_base: u64, i: u64) -> (u64, f64, Pose) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base + i);
    let pose = Pose::sample(&mut rng);
    let mag = rng.random_range(10.0..40.0);
    let angle = if rng.random_bool(0.5) { mag } else { -mag };
    (i, angle, pose)
}

pub fn run(pair: &ScenePair, options: &SynthesisOptions) -> Synthesis {
    let s = &pair.source.render;
    synthesize(
        &SynthesisInputs {
            src_rgb: &s.rgb,
            src_depth: &s.depth,
            src_mask: &s.mask,
            k_src: &pair.source.intrinsics,
            k_tgt: &pair.target.intrinsics,
            t_src_to_tgt: &pair.t_src_to_tgt,
        },
        options,
    )
    .unwrap()
}

/// Per-pair scores against ground truth at covisible pixels the pipeline
/// produced flow for.
#[derive(Debug, Clone, Copy)]
pub struct PairScores {
    pub epe: f64,
    pub delta: f64,
    pub flow_mse: f64,
    pub psnr: f64,
    pub iou: f64,
    /// Fraction of covisible pixels that received flow.
    pub coverage: f64,
}

pub fn score(pair: &ScenePair, out: &Synthesis) -> PairScores {
    let gt = &pair.gt_backward_flow;
    let region = gt.valid_mask().and(&out.backward_flow.valid_mask()).unwrap();
    let gt_r = gt.restricted_to(&region).unwrap();
    PairScores {
        epe: metrics::mean_endpoint_error(&out.backward_flow, &gt_r).unwrap(),
        delta: metrics::delta_threshold(&out.backward_flow, &gt_r, 1.25).unwrap(),
        flow_mse: metrics::flow_mse(&out.backward_flow, &gt_r).unwrap(),
        psnr: metrics::psnr(&out.rgb, &pair.target.render.rgb, Some(&region)).unwrap(),
        iou: metrics::iou(&out.mask, &pair.target.render.mask).unwrap(),
        coverage: region.count() as f64 / gt.valid_count() as f64,
    }
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, p: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
}
