mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "viewsynth", version, about = "Novel-view synthesis from a single RGB-D view")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic figures and write source/target views with ground truth.
    Render(RenderArgs),
    /// Synthesise a target view from source files and two camera files.
    Synth(SynthArgs),
    /// Score a synthesised view against ground truth.
    Eval(EvalArgs),
    /// Render, synthesise and score every configured pair in one run.
    PipelineTest(PipelineTestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Refiner {
    Diffusion,
    None,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Splat {
    Subpixel,
    SourcePixel,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Report {
    Text,
    Structured,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Region {
    FullFrame,
    MaskUnion,
}

/// Output resolution relative to the 200x200 source; 2.5 upsamples the
/// flow and warps a 500x500 source.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    #[value(name = "1")]
    One,
    #[value(name = "2.5")]
    TwoAndHalf,
}

impl Scale {
    pub fn factor(self) -> f64 {
        match self {
            Scale::One => 1.0,
            Scale::TwoAndHalf => 2.5,
        }
    }
}

#[derive(Args, Clone)]
pub struct SynthOptions {
    /// Closing radius in target pixels for the residual mask.
    #[arg(long)]
    pub close_radius: Option<usize>,
    #[arg(long, value_enum, default_value = "diffusion")]
    pub refiner: Refiner,
    #[arg(long, value_enum, default_value = "subpixel")]
    pub splat: Splat,
    #[arg(long, value_enum, default_value = "1")]
    pub scale: Scale,
}

#[derive(Args)]
pub struct RenderArgs {
    /// TOML file describing figures, poses, orbit and view angles.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// With 2.5, also write 500x500 renders for the high-resolution path.
    #[arg(long, value_enum, default_value = "1")]
    pub scale: Scale,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub src_rgb: PathBuf,
    #[arg(long)]
    pub src_depth: PathBuf,
    #[arg(long)]
    pub src_mask: PathBuf,
    #[arg(long)]
    pub cam_src: PathBuf,
    #[arg(long)]
    pub cam_tgt: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// High-resolution source image, required with `--scale 2.5`.
    #[arg(long)]
    pub hr_src_rgb: Option<PathBuf>,
    /// High-resolution source mask, used to drop background taps.
    #[arg(long)]
    pub hr_src_mask: Option<PathBuf>,
    #[command(flatten)]
    pub options: SynthOptions,
    /// Also write forward, transformed and completed flows and all masks.
    #[arg(long)]
    pub dump_intermediates: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub report: Report,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_rgb: PathBuf,
    #[arg(long)]
    pub pred_flow: PathBuf,
    #[arg(long)]
    pub pred_mask: PathBuf,
    #[arg(long)]
    pub gt_rgb: PathBuf,
    #[arg(long)]
    pub gt_flow: PathBuf,
    #[arg(long)]
    pub gt_mask: PathBuf,
    /// Pixels used for image MSE.
    #[arg(long, value_enum, default_value = "full-frame")]
    pub region: Region,
    #[arg(long, value_enum, default_value = "text")]
    pub report: Report,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args)]
pub struct PipelineTestArgs {
    /// Scene config; a built-in three-figure ring is used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub options: SynthOptions,
    #[arg(long, value_enum, default_value = "full-frame")]
    pub region: Region,
    #[arg(long, value_enum, default_value = "text")]
    pub report: Report,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Render(a) => commands::render(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::PipelineTest(a) => commands::pipeline_test(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
