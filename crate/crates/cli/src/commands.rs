use std::fmt;
use std::time::Instant;

use serde::Serialize;
use viewsynth::io;
use viewsynth::metrics::{evaluate, EvalInputs, EvalReport, ImageRegion};
use viewsynth::pipeline::{
    synthesize, synthesize_high_res, HighResSynthesis, MaskChoice, RefinerChoice, Synthesis, SynthesisInputs,
    SynthesisOptions,
};
use viewsynth::scene::{build_figure, make_view_ring, Orbit, ScenePair};
use viewsynth::splat::SplatValue;
use viewsynth::warp::SampleKernel;
use viewsynth::{BinaryMask, FlowDirection, RgbImage};

use crate::config::{FigureConfig, SceneConfig};
use crate::output::Staging;
use crate::{EvalArgs, PipelineTestArgs, Refiner, Region, RenderArgs, Report, Scale, Splat, SynthArgs, SynthOptions};

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct CliError {
    stage: String,
    message: String,
}

impl CliError {
    pub fn new(stage: &str, message: impl Into<String>) -> Self {
        CliError {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn prefixed(self, context: &str) -> Self {
        CliError {
            message: format!("{context}: {}", self.message),
            ..self
        }
    }

    /// Keeps the pipeline's own stage tag when there is one.
    fn from_core(stage: &str, e: viewsynth::Error) -> Self {
        match e {
            viewsynth::Error::Stage { stage, source } => CliError::new(&stage.to_string(), source.to_string()),
            other => CliError::new(stage, other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

fn tag(stage: &'static str) -> impl Fn(viewsynth::Error) -> CliError {
    move |e| CliError::from_core(stage, e)
}

fn pipeline_options(o: &SynthOptions) -> SynthesisOptions {
    SynthesisOptions {
        refiner: match o.refiner {
            Refiner::Diffusion => RefinerChoice::Diffusion,
            Refiner::None => RefinerChoice::None,
        },
        mask_predictor: MaskChoice::Closing,
        close_radius: o.close_radius,
        splat: match o.splat {
            Splat::Subpixel => SplatValue::Subpixel,
            Splat::SourcePixel => SplatValue::SourcePixel,
        },
        ..SynthesisOptions::default()
    }
}

fn image_region(r: Region) -> ImageRegion {
    match r {
        Region::FullFrame => ImageRegion::FullFrame,
        Region::MaskUnion => ImageRegion::MaskUnion,
    }
}

fn angle_dir(angle: f64) -> String {
    format!("target_{angle}")
}

fn synth_inputs(pair: &ScenePair) -> SynthesisInputs<'_> {
    let src = &pair.source;
    SynthesisInputs {
        src_rgb: &src.render.rgb,
        src_depth: &src.render.depth,
        src_mask: &src.render.mask,
        k_src: &src.intrinsics,
        k_tgt: &pair.target.intrinsics,
        t_src_to_tgt: &pair.t_src_to_tgt,
    }
}

pub fn render(args: &RenderArgs) -> Result<(), CliError> {
    let cfg = SceneConfig::load(&args.config)?;
    let hr_orbit = match args.scale {
        Scale::One => None,
        Scale::TwoAndHalf => Some(cfg.orbit.scaled(2.5).map_err(tag("render"))?),
    };
    let mut rendered = Vec::new();
    for f in &cfg.figures {
        let fig = build_figure(f.seed, &f.pose).map_err(tag("render"))?;
        let ring = make_view_ring(&fig, &cfg.orbit, &cfg.angles).map_err(tag("render"))?;
        let hr_ring = match &hr_orbit {
            Some(o) => Some(make_view_ring(&fig, o, &cfg.angles).map_err(tag("render"))?),
            None => None,
        };
        rendered.push((f.name.clone(), ring, hr_ring));
    }

    let mut out = Staging::begin(&args.out_dir)?;
    for (name, ring, hr_ring) in &rendered {
        write_view(&mut out, &format!("{name}/source"), &ring[0].source, "")?;
        if let Some(hr) = hr_ring {
            write_view(&mut out, &format!("{name}/source"), &hr[0].source, "_hr")?;
        }
        for (i, &angle) in cfg.angles.iter().enumerate() {
            let dir = format!("{name}/{}", angle_dir(angle));
            write_view(&mut out, &dir, &ring[i].target, "")?;
            let path = out.path(format!("{dir}/gt_backward.flo"))?;
            io::write_flow(path, &ring[i].gt_backward_flow).map_err(tag("write"))?;
            if let Some(hr) = hr_ring {
                write_view(&mut out, &dir, &hr[i].target, "_hr")?;
                let path = out.path(format!("{dir}/gt_backward_hr.flo"))?;
                io::write_flow(path, &hr[i].gt_backward_flow).map_err(tag("write"))?;
            }
        }
    }
    out.commit()?;
    println!(
        "rendered {} figure(s) x {} view(s) into {}",
        rendered.len(),
        cfg.angles.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn write_view(out: &mut Staging, dir: &str, view: &viewsynth::scene::View, suffix: &str) -> Result<(), CliError> {
    let w = tag("write");
    io::write_rgb(out.path(format!("{dir}/rgb{suffix}.png"))?, &view.render.rgb).map_err(&w)?;
    io::write_depth(
        out.path(format!("{dir}/depth{suffix}.png"))?,
        &view.render.depth,
        io::DEFAULT_DEPTH_SCALE,
    )
    .map_err(&w)?;
    io::write_mask(out.path(format!("{dir}/mask{suffix}.png"))?, &view.render.mask).map_err(&w)?;
    io::write_camera(
        out.path(format!("{dir}/camera{suffix}.txt"))?,
        &view.intrinsics,
        &view.pose,
    )
    .map_err(&w)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthReport {
    width: usize,
    height: usize,
    scale: f64,
    behind_camera: usize,
    dropped_splats: usize,
    transformed_pixels: usize,
    residual_pixels: usize,
    final_pixels: usize,
    /// Pixels of the final mask left without flow, rendered as background.
    unfilled: usize,
}

impl SynthReport {
    fn to_text(&self) -> String {
        format!(
            "width={}\nheight={}\nscale={}\nbehind_camera={}\ndropped_splats={}\ntransformed_pixels={}\nresidual_pixels={}\nfinal_pixels={}\nunfilled={}\n",
            self.width,
            self.height,
            self.scale,
            self.behind_camera,
            self.dropped_splats,
            self.transformed_pixels,
            self.residual_pixels,
            self.final_pixels,
            self.unfilled
        )
    }
}

fn emit(report: Report, text: String, json: String, out: Option<&mut Staging>) -> Result<(), CliError> {
    let (body, file) = match report {
        Report::Text => (text, "report.txt"),
        Report::Structured => (json, "report.json"),
    };
    if let Some(out) = out {
        out.write_text(file, &body)?;
    }
    print!("{body}");
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let load = tag("load");
    let src = io::read_source(&args.src_rgb, &args.src_depth, &args.src_mask).map_err(&load)?;
    let (k_src, pose_src) = io::read_camera(&args.cam_src).map_err(&load)?;
    let (k_tgt, pose_tgt) = io::read_camera(&args.cam_tgt).map_err(&load)?;
    io::check_companions(k_src.size(), &[(args.src_rgb.as_path(), src.rgb.size())]).map_err(&load)?;
    let hr = match args.options.scale {
        Scale::One => None,
        Scale::TwoAndHalf => Some(load_hr_source(args, &k_src)?),
    };

    let t = pose_src.inverse().then(&pose_tgt);
    let inputs = SynthesisInputs {
        src_rgb: &src.rgb,
        src_depth: &src.depth,
        src_mask: &src.mask,
        k_src: &k_src,
        k_tgt: &k_tgt,
        t_src_to_tgt: &t,
    };
    let lr = synthesize(&inputs, &pipeline_options(&args.options)).map_err(tag("synth"))?;
    let high = match &hr {
        Some((rgb, mask)) => {
            Some(synthesize_high_res(&lr, rgb, mask.as_ref(), 2.5, SampleKernel::Bilinear).map_err(tag("upsample"))?)
        }
        None => None,
    };
    let (rgb, mask, flow) = match &high {
        Some(h) => (&h.rgb, &h.mask, &h.backward_flow),
        None => (&lr.rgb, &lr.mask, &lr.backward_flow),
    };
    let report = SynthReport {
        width: rgb.width(),
        height: rgb.height(),
        scale: args.options.scale.factor(),
        behind_camera: lr.forward.behind_camera,
        dropped_splats: lr.transformed.dropped_splats,
        transformed_pixels: lr.transformed_mask.count(),
        residual_pixels: lr.residual_mask.count(),
        final_pixels: lr.mask.count(),
        unfilled: lr.unfilled,
    };

    let mut out = Staging::begin(&args.out_dir)?;
    let w = tag("write");
    io::write_rgb(out.path("rgb.png")?, rgb).map_err(&w)?;
    io::write_mask(out.path("mask.png")?, mask).map_err(&w)?;
    io::write_flow(out.path("backward.flo")?, flow).map_err(&w)?;
    if args.dump_intermediates {
        dump_intermediates(&mut out, &lr, high.as_ref())?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serialises") + "\n";
    emit(args.report, report.to_text(), json, Some(&mut out))?;
    out.commit()
}

fn load_hr_source(
    args: &SynthArgs,
    k_src: &viewsynth::CameraIntrinsics,
) -> Result<(RgbImage, Option<BinaryMask>), CliError> {
    let load = tag("load");
    let Some(rgb_path) = &args.hr_src_rgb else {
        return Err(CliError::new("args", "--scale 2.5 needs --hr-src-rgb"));
    };
    let expected = k_src.scaled(2.5).map_err(&load)?.size();
    let rgb = io::read_rgb(rgb_path).map_err(&load)?;
    io::check_companions(expected, &[(rgb_path.as_path(), rgb.size())]).map_err(&load)?;
    let mask = match &args.hr_src_mask {
        Some(p) => {
            let m = io::read_mask(p).map_err(&load)?;
            io::check_companions(expected, &[(p.as_path(), m.size())]).map_err(&load)?;
            Some(m)
        }
        None => None,
    };
    Ok((rgb, mask))
}

fn dump_intermediates(out: &mut Staging, lr: &Synthesis, high: Option<&HighResSynthesis>) -> Result<(), CliError> {
    let w = tag("write");
    io::write_flow(out.path("intermediates/forward.flo")?, &lr.forward.flow).map_err(&w)?;
    io::write_flow(out.path("intermediates/transformed.flo")?, &lr.transformed.flow).map_err(&w)?;
    io::write_flow(out.path("intermediates/completed.flo")?, &lr.backward_flow).map_err(&w)?;
    io::write_mask(out.path("intermediates/mask_transformed.png")?, &lr.transformed_mask).map_err(&w)?;
    io::write_mask(out.path("intermediates/mask_residual.png")?, &lr.residual_mask).map_err(&w)?;
    io::write_mask(out.path("intermediates/mask_final.png")?, &lr.mask).map_err(&w)?;
    if high.is_some() {
        io::write_rgb(out.path("intermediates/rgb_low_res.png")?, &lr.rgb).map_err(&w)?;
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let load = tag("load");
    let pred_rgb = io::read_rgb(&args.pred_rgb).map_err(&load)?;
    let gt_rgb = io::read_rgb(&args.gt_rgb).map_err(&load)?;
    let pred_flow = io::read_flow(&args.pred_flow, FlowDirection::Backward).map_err(&load)?;
    let gt_flow = io::read_flow(&args.gt_flow, FlowDirection::Backward).map_err(&load)?;
    let pred_mask = io::read_mask(&args.pred_mask).map_err(&load)?;
    let gt_mask = io::read_mask(&args.gt_mask).map_err(&load)?;
    io::check_companions(
        gt_rgb.size(),
        &[
            (args.pred_rgb.as_path(), pred_rgb.size()),
            (args.pred_flow.as_path(), pred_flow.size()),
            (args.gt_flow.as_path(), gt_flow.size()),
            (args.pred_mask.as_path(), pred_mask.size()),
            (args.gt_mask.as_path(), gt_mask.size()),
        ],
    )
    .map_err(&load)?;
    let report = evaluate(
        &EvalInputs {
            pred_rgb: &pred_rgb,
            gt_rgb: &gt_rgb,
            pred_flow: &pred_flow,
            gt_flow: &gt_flow,
            pred_mask: &pred_mask,
            gt_mask: &gt_mask,
        },
        image_region(args.region),
    )
    .map_err(tag("eval"))?;
    let json = report.to_json() + "\n";
    match &args.out_dir {
        Some(dir) => {
            let mut out = Staging::begin(dir)?;
            emit(args.report, report.to_text(), json, Some(&mut out))?;
            out.commit()
        }
        None => emit(args.report, report.to_text(), json, None),
    }
}

#[derive(Serialize)]
struct PairResult {
    figure: String,
    angle: f64,
    unfilled: usize,
    #[serde(flatten)]
    report: EvalReport,
}

#[derive(Serialize)]
struct PipelineReport {
    scale: f64,
    pairs: Vec<PairResult>,
    mean: EvalReport,
}

impl PipelineReport {
    fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pairs {
            s += &format!(
                "figure={} angle={} image_mse={:.4} ssim={:.4} flow_mse={:.4} delta_1_25={:.4} ncc={:.4} iou={:.4} unfilled={}\n",
                p.figure,
                p.angle,
                p.report.image_mse,
                p.report.ssim,
                p.report.flow_mse,
                p.report.delta_1_25,
                p.report.ncc,
                p.report.iou,
                p.unfilled
            );
        }
        s += &format!("pairs={}\nscale={}\n", self.pairs.len(), self.scale);
        s + &self.mean.to_text()
    }
}

pub fn pipeline_test(args: &PipelineTestArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => SceneConfig::load(p)?,
        None => SceneConfig::builtin(),
    };
    let scale = args.options.scale.factor();
    let options = pipeline_options(&args.options);
    let hr_orbit = match args.options.scale {
        Scale::One => None,
        Scale::TwoAndHalf => Some(cfg.orbit.scaled(2.5).map_err(tag("render"))?),
    };
    let start = Instant::now();
    // Figures are independent, so each gets its own thread.
    let per_figure: Vec<Result<Vec<PairResult>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .figures
            .iter()
            .map(|f| scope.spawn(|| run_figure(f, &cfg, &options, hr_orbit.as_ref(), args.region)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("figure thread panicked"))
            .collect()
    });
    let mut pairs = Vec::new();
    for r in per_figure {
        pairs.extend(r?);
    }
    let reports: Vec<EvalReport> = pairs.iter().map(|p| p.report).collect();
    let mean = EvalReport::mean(&reports).expect("config has at least one pair");
    eprintln!("{} pair(s) in {:.2} s", reports.len(), start.elapsed().as_secs_f64());
    let summary = PipelineReport { scale, pairs, mean };
    let json = serde_json::to_string_pretty(&summary).expect("report serialises") + "\n";
    match &args.out_dir {
        Some(dir) => {
            let mut out = Staging::begin(dir)?;
            emit(args.report, summary.to_text(), json, Some(&mut out))?;
            out.commit()
        }
        None => emit(args.report, summary.to_text(), json, None),
    }
}

fn run_figure(
    f: &FigureConfig,
    cfg: &SceneConfig,
    options: &SynthesisOptions,
    hr_orbit: Option<&Orbit>,
    region: Region,
) -> Result<Vec<PairResult>, CliError> {
    let fig = build_figure(f.seed, &f.pose).map_err(tag("render"))?;
    let ring = make_view_ring(&fig, &cfg.orbit, &cfg.angles).map_err(tag("render"))?;
    let hr_ring = match hr_orbit {
        Some(o) => Some(make_view_ring(&fig, o, &cfg.angles).map_err(tag("render"))?),
        None => None,
    };
    let mut pairs = Vec::new();
    for (i, pair) in ring.iter().enumerate() {
        let lr = synthesize(&synth_inputs(pair), options).map_err(tag("synth"))?;
        let scored = match &hr_ring {
            None => score(&lr.rgb, &lr.backward_flow, &lr.mask, pair, region),
            Some(hr) => {
                let hr_pair = &hr[i];
                let src = &hr_pair.source.render;
                let h = synthesize_high_res(&lr, &src.rgb, Some(&src.mask), 2.5, SampleKernel::Bilinear)
                    .map_err(tag("upsample"))?;
                score(&h.rgb, &h.backward_flow, &h.mask, hr_pair, region)
            }
        };
        let report =
            scored.map_err(|e| CliError::new("eval", format!("figure {} angle {}: {e}", f.name, cfg.angles[i])))?;
        pairs.push(PairResult {
            figure: f.name.clone(),
            angle: cfg.angles[i],
            unfilled: lr.unfilled,
            report,
        });
    }
    Ok(pairs)
}

fn score(
    rgb: &RgbImage,
    flow: &viewsynth::FlowField,
    mask: &BinaryMask,
    pair: &ScenePair,
    region: Region,
) -> viewsynth::Result<EvalReport> {
    let tgt = &pair.target.render;
    evaluate(
        &EvalInputs {
            pred_rgb: rgb,
            gt_rgb: &tgt.rgb,
            pred_flow: flow,
            gt_flow: &pair.gt_backward_flow,
            pred_mask: mask,
            gt_mask: &tgt.mask,
        },
        image_region(region),
    )
}
