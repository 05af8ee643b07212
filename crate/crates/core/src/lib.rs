//! Novel-view synthesis by geometric flow.
//!
//! A source RGB-D view with a foreground mask and the relative pose of a
//! target camera is turned into a target view:
//!
//! 1. [`geometry::depth_to_forward_flow`] projects every foreground pixel.
//! 2. [`splat::forward_to_backward_with`] z-buffers those landings into a
//!    sparse backward flow.
//! 3. [`mask`] derives the transformed, residual and final target masks.
//! 4. [`complete`] fills holes inside the target silhouette.
//! 5. [`warp`] samples the source image through the backward flow.
//!
//! [`pipeline::synthesize`] runs the whole chain; [`scene`] renders
//! synthetic articulated figures with exact ground truth and [`metrics`]
//! scores the result.

pub mod complete;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scene;
pub mod splat;
pub mod warp;

pub use error::{Error, Result, Stage};
pub use geometry::{CameraIntrinsics, Point3, RigidTransform};
pub use mask::BinaryMask;
pub use raster::{DepthImage, FlowDirection, FlowField, RgbImage};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/cameras.md")]
    mod cameras {}
    #[doc = include_str!("../../../book/src/splatting.md")]
    mod splatting {}
    #[doc = include_str!("../../../book/src/masks.md")]
    mod masks {}
    #[doc = include_str!("../../../book/src/completion.md")]
    mod completion {}
    #[doc = include_str!("../../../book/src/warping.md")]
    mod warping {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/files.md")]
    mod files {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
