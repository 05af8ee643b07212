//! Pinhole cameras, rigid transforms, and the parameter-free projection layer
//! that turns a depth map into a forward flow field.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_size, Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{DepthImage, FlowDirection, FlowField};

/// A point in some camera frame, in world units.
pub type Point3 = nalgebra::Point3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole intrinsics `K`. `(cx, cy)` is expressed in the pixel-centre
/// convention of [`crate::raster`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidInput(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics for the same camera rendered at `scale` times the
    /// resolution: every parameter is multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        let w = (self.width as f64 * scale).round() as usize;
        let h = (self.height as f64 * scale).round() as usize;
        CameraIntrinsics::new(self.fx * scale, self.fy * scale, self.cx * scale, self.cy * scale, w, h)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Rigid motion `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|c| c.is_finite()) {
            return Err(Error::InvalidInput("non-finite rigid transform".into()));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if gram_err > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (|R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (through the origin).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Result<Self> {
        let axis = Unit::try_new(axis, 1e-12).ok_or_else(|| Error::InvalidInput("zero rotation axis".into()))?;
        Ok(RigidTransform {
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation: Vector3::zeros(),
        })
    }

    /// Rotation by `angle` radians about the line through `pivot` along `axis`.
    pub fn about_pivot(axis: Vector3<f64>, angle: f64, pivot: Point3) -> Result<Self> {
        let rot = RigidTransform::from_axis_angle(axis, angle)?;
        let p = pivot.coords;
        Ok(RigidTransform {
            rotation: rot.rotation,
            translation: p - rot.rotation * p,
        })
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &RigidTransform) -> Self {
        RigidTransform {
            rotation: next.rotation * self.rotation,
            translation: next.rotation * self.translation + next.translation,
        }
    }

    /// Row-major 3x4 `[R | t]`.
    #[rustfmt::skip]
    pub fn to_rows(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
        ]
    }

    pub fn from_rows(rows: &[f64; 12]) -> Result<Self> {
        let r = Matrix3::new(
            rows[0], rows[1], rows[2], rows[4], rows[5], rows[6], rows[8], rows[9], rows[10],
        );
        RigidTransform::new(r, Vector3::new(rows[3], rows[7], rows[11]))
    }
}

pub fn apply_transform(t: &RigidTransform, p: &Point3) -> Point3 {
    t.apply(p)
}

pub fn invert_transform(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Converts a relative pose given as "target view to source view" into the
/// source-to-target transform that [`depth_to_forward_flow`] consumes.
pub fn source_to_target_from_target_to_source(t_tgt_to_src: &RigidTransform) -> RigidTransform {
    t_tgt_to_src.inverse()
}

/// Back-projects pixel `(x, y)` at `depth` into the camera frame.
pub fn unproject(x: f64, y: f64, depth: f64, k: &CameraIntrinsics) -> Result<Point3> {
    if depth <= 0.0 || !depth.is_finite() {
        return Err(Error::InvalidInput(format!(
            "unproject needs positive depth, got {depth}"
        )));
    }
    let (w, h) = (k.width as f64, k.height as f64);
    if !(x > -0.5 && x < w - 0.5 && y > -0.5 && y < h - 0.5) {
        return Err(Error::InvalidInput(format!(
            "pixel ({x}, {y}) outside a {}x{} image",
            k.width, k.height
        )));
    }
    Ok(Point3::new((x - k.cx) / k.fx * depth, (y - k.cy) / k.fy * depth, depth))
}

/// Perspective projection. Returns `(u, v, z)`; `(u, v)` may fall outside
/// the image.
pub fn project_point(p: &Point3, k: &CameraIntrinsics) -> Result<(f64, f64, f64)> {
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(Error::BehindCamera { z: p.z });
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z))
}

/// Output of the projection layer.
#[derive(Debug, Clone)]
pub struct ProjectedFlow {
    /// Forward flow registered to the source image.
    pub flow: FlowField,
    /// Target-camera depth of each source pixel; `+inf` where the flow is
    /// invalid.
    pub target_depth: Vec<f64>,
    /// Foreground pixels dropped because they land behind the target camera.
    pub behind_camera: usize,
}

/// The projection layer: unproject every foreground pixel with its depth,
/// move it into the target camera frame and reproject it.
pub fn depth_to_forward_flow(
    depth: &DepthImage,
    mask: &BinaryMask,
    k_src: &CameraIntrinsics,
    k_tgt: &CameraIntrinsics,
    t_src_to_tgt: &RigidTransform,
) -> Result<ProjectedFlow> {
    ensure_same_size(depth.size(), mask.size())?;
    ensure_same_size(k_src.size(), depth.size())?;
    let (w, h) = depth.size();
    let mut flow = FlowField::empty(w, h, FlowDirection::Forward);
    let mut target_depth = vec![f64::INFINITY; w * h];
    let mut behind_camera = 0;

    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let d = depth.get(x, y);
            let p = unproject(x as f64, y as f64, d, k_src)
                .map_err(|_| Error::InvalidInput(format!("foreground pixel ({x}, {y}) has non-positive depth {d}")))?;
            let q = t_src_to_tgt.apply(&p);
            match project_point(&q, k_tgt) {
                Ok((u, v, z)) => {
                    flow.set(x, y, u - x as f64, v - y as f64);
                    target_depth[y * w + x] = z;
                }
                Err(_) => behind_camera += 1,
            }
        }
    }

    Ok(ProjectedFlow {
        flow,
        target_depth,
        behind_camera,
    })
}
