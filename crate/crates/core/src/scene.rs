//! Synthetic articulated figures, an analytic raycaster and exact
//! ground-truth flow between orbiting cameras.
//!
//! World coordinates are y-up with the figure standing on `y = 0` and facing
//! `+z`. Camera coordinates are x right, y down, z forward, so the depth of a
//! hit is its camera-frame z.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3, RigidTransform};
use crate::mask::BinaryMask;
use crate::raster::{DepthImage, FlowDirection, FlowField, RgbImage};

/// Ambient term added to every lit surface, in unit intensity.
pub const AMBIENT: f64 = 0.2;

/// Relative depth agreement required for a surface point to count as seen
/// from the source camera.
pub const COVISIBILITY_TOL: f64 = 1e-3;

/// Default light direction (towards the light), world frame.
pub fn default_light() -> Vector3<f64> {
    Vector3::new(0.25, 0.9, 0.35).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Sphere {
        radius: f64,
    },
    /// Segment from the local origin to `length` along local `+x`.
    Capsule {
        radius: f64,
        length: f64,
    },
}

impl Shape {
    fn radius(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } | Shape::Capsule { radius, .. } => radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Linear albedo in `[0, 1]` per channel.
    pub albedo: [f64; 3],
    /// Large low-contrast checker in part-local coordinates.
    pub checker: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub name: &'static str,
    pub shape: Shape,
    pub parent: Option<usize>,
    /// Joint angle at the part's proximal end, radians.
    pub angle: f64,
    pub local_to_world: RigidTransform,
    pub material: Material,
}

impl Part {
    /// World-space axis segment for capsules, the centre twice for spheres.
    pub fn segment(&self) -> (Point3, Point3) {
        let a = self.local_to_world.apply(&Point3::origin());
        match self.shape {
            Shape::Sphere { .. } => (a, a),
            Shape::Capsule { length, .. } => (a, self.local_to_world.apply(&Point3::new(length, 0.0, 0.0))),
        }
    }
}

/// Joint angles in radians; index 0 is the figure's left side (`+x`).
///
/// All zeros is the T-pose: arms horizontal, legs straight down. Positive
/// shoulder angles lower the arms, positive elbows bend the forearms forward,
/// positive hips swing the legs forward and positive knees bend them back.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Pose {
    pub shoulder: [f64; 2],
    pub elbow: [f64; 2],
    pub hip: [f64; 2],
    pub knee: [f64; 2],
}

pub const SHOULDER_LIMITS: (f64, f64) = (-1.2, 1.6);
pub const ELBOW_LIMITS: (f64, f64) = (0.0, 2.4);
pub const HIP_LIMITS: (f64, f64) = (-0.6, 1.4);
pub const KNEE_LIMITS: (f64, f64) = (0.0, 2.2);

impl Pose {
    pub fn validate(&self) -> Result<()> {
        let joints = [
            ("shoulder", self.shoulder, SHOULDER_LIMITS),
            ("elbow", self.elbow, ELBOW_LIMITS),
            ("hip", self.hip, HIP_LIMITS),
            ("knee", self.knee, KNEE_LIMITS),
        ];
        for (name, angles, (lo, hi)) in joints {
            for a in angles {
                if !(lo..=hi).contains(&a) {
                    return Err(Error::InvalidParameter(format!(
                        "{name} angle {a} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A moderate random pose: arms between raised and lowered, mild limb
    /// bends.
    pub fn sample(rng: &mut impl Rng) -> Pose {
        let mut pair = |lo: f64, hi: f64| [rng.random_range(lo..hi), rng.random_range(lo..hi)];
        Pose {
            shoulder: pair(-0.3, 1.3),
            elbow: pair(0.0, 1.2),
            hip: pair(-0.3, 0.5),
            knee: pair(0.0, 0.6),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedFigure {
    parts: Vec<Part>,
}

/// Rest-pose description of one part: joint position and orientation in the
/// T-pose, and the world-space joint axis.
struct RestPart {
    name: &'static str,
    shape: Shape,
    parent: Option<usize>,
    origin: [f64; 3],
    rotation: Matrix3<f64>,
    axis: [f64; 3],
}

pub const TORSO: usize = 0;
pub const HEAD: usize = 1;
pub const UPPER_ARM: [usize; 2] = [2, 4];
pub const FOREARM: [usize; 2] = [3, 5];
pub const THIGH: [usize; 2] = [6, 8];
pub const SHIN: [usize; 2] = [7, 9];

pub const UPPER_ARM_LENGTH: f64 = 0.30;
pub const FOREARM_LENGTH: f64 = 0.28;
pub const THIGH_LENGTH: f64 = 0.42;
pub const SHIN_LENGTH: f64 = 0.42;
pub const SHOULDER_JOINT: [f64; 3] = [0.22, 1.40, 0.0];
pub const HIP_JOINT: [f64; 3] = [0.11, 0.92, 0.0];

fn rest_parts() -> Vec<RestPart> {
    let x_to_up = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let x_to_down = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let x_to_right = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
    let [sx, sy, _] = SHOULDER_JOINT;
    let [hx, hy, _] = HIP_JOINT;
    let mut parts = vec![
        RestPart {
            name: "torso",
            shape: Shape::Capsule {
                radius: 0.20,
                length: 0.50,
            },
            parent: None,
            origin: [0.0, 0.95, 0.0],
            rotation: x_to_up,
            axis: [0.0, 0.0, 1.0],
        },
        RestPart {
            name: "head",
            shape: Shape::Sphere { radius: 0.14 },
            parent: Some(TORSO),
            origin: [0.0, 1.64, 0.0],
            rotation: Matrix3::identity(),
            axis: [0.0, 0.0, 1.0],
        },
    ];
    for (side, sign) in [(0, 1.0), (1, -1.0)] {
        let along = if side == 0 { Matrix3::identity() } else { x_to_right };
        parts.push(RestPart {
            name: ["left_upper_arm", "right_upper_arm"][side],
            shape: Shape::Capsule {
                radius: 0.08,
                length: UPPER_ARM_LENGTH,
            },
            parent: Some(TORSO),
            origin: [sign * sx, sy, 0.0],
            rotation: along,
            axis: [0.0, 0.0, -sign],
        });
        parts.push(RestPart {
            name: ["left_forearm", "right_forearm"][side],
            shape: Shape::Capsule {
                radius: 0.07,
                length: FOREARM_LENGTH,
            },
            parent: Some(UPPER_ARM[side]),
            origin: [sign * (sx + UPPER_ARM_LENGTH), sy, 0.0],
            rotation: along,
            axis: [0.0, -sign, 0.0],
        });
    }
    for (side, sign) in [(0, 1.0), (1, -1.0)] {
        parts.push(RestPart {
            name: ["left_thigh", "right_thigh"][side],
            shape: Shape::Capsule {
                radius: 0.11,
                length: THIGH_LENGTH,
            },
            parent: Some(TORSO),
            origin: [sign * hx, hy, 0.0],
            rotation: x_to_down,
            axis: [-1.0, 0.0, 0.0],
        });
        parts.push(RestPart {
            name: ["left_shin", "right_shin"][side],
            shape: Shape::Capsule {
                radius: 0.09,
                length: SHIN_LENGTH,
            },
            parent: Some(THIGH[side]),
            origin: [sign * hx, hy - THIGH_LENGTH, 0.0],
            rotation: x_to_down,
            axis: [1.0, 0.0, 0.0],
        });
    }
    parts
}

fn random_colour(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(0.35..0.85),
        rng.random_range(0.35..0.85),
        rng.random_range(0.35..0.85),
    ]
}

/// Builds a figure in `pose`. The seed picks skin, shirt and trouser colours
/// and whether the clothing carries a checker pattern.
pub fn build_figure(seed: u64, pose: &Pose) -> Result<ArticulatedFigure> {
    pose.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skin = random_colour(&mut rng);
    let shirt = random_colour(&mut rng);
    let trousers = random_colour(&mut rng);
    let checker = rng.random_bool(0.5);
    let clothing = |albedo| Material { albedo, checker };
    let bare = Material {
        albedo: skin,
        checker: false,
    };

    let angles = [
        0.0,
        0.0,
        pose.shoulder[0],
        pose.elbow[0],
        pose.shoulder[1],
        pose.elbow[1],
        pose.hip[0],
        pose.knee[0],
        pose.hip[1],
        pose.knee[1],
    ];
    let rest = rest_parts();
    // Motion of each part relative to the rest pose, accumulated down the chain.
    let mut motion: Vec<RigidTransform> = Vec::with_capacity(rest.len());
    let mut parts = Vec::with_capacity(rest.len());
    for (i, r) in rest.iter().enumerate() {
        let origin = Point3::from(r.origin);
        let joint = RigidTransform::about_pivot(Vector3::from(r.axis), angles[i], origin)?;
        let m = match r.parent {
            Some(p) => joint.then(&motion[p]),
            None => joint,
        };
        let rest_frame = RigidTransform::new(r.rotation, origin.coords)?;
        let material = match i {
            HEAD => bare,
            _ if FOREARM.contains(&i) => bare,
            _ if THIGH.contains(&i) || SHIN.contains(&i) => clothing(trousers),
            _ => clothing(shirt),
        };
        parts.push(Part {
            name: r.name,
            shape: r.shape,
            parent: r.parent,
            angle: angles[i],
            local_to_world: rest_frame.then(&m),
            material,
        });
        motion.push(m);
    }
    Ok(ArticulatedFigure { parts })
}

impl ArticulatedFigure {
    /// A figure from explicit parts. Parents must precede their children.
    pub fn from_parts(parts: Vec<Part>) -> Result<Self> {
        for (i, p) in parts.iter().enumerate() {
            let dims_ok = match p.shape {
                Shape::Sphere { radius } => radius > 0.0 && radius.is_finite(),
                Shape::Capsule { radius, length } => {
                    radius > 0.0 && length > 0.0 && radius.is_finite() && length.is_finite()
                }
            };
            if !dims_ok {
                return Err(Error::InvalidParameter(format!(
                    "part {} has non-positive dimensions",
                    p.name
                )));
            }
            if p.parent.is_some_and(|q| q >= i) {
                return Err(Error::InvalidParameter(format!("part {} precedes its parent", p.name)));
            }
        }
        Ok(ArticulatedFigure { parts })
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    /// Centre of the bounding sphere used for camera placement checks.
    pub fn bounding_center() -> Point3 {
        Point3::new(0.0, 0.9, 0.0)
    }

    pub fn bounding_radius(&self) -> f64 {
        let c = Self::bounding_center();
        self.parts
            .iter()
            .map(|p| {
                let (a, b) = p.segment();
                (a - c).norm().max((b - c).norm()) + p.shape.radius()
            })
            .fold(0.0, f64::max)
    }

    /// Nearest intersection with the ray `origin + t * dir`, `t > 0`.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, part) in self.parts.iter().enumerate() {
            let (a, b) = part.segment();
            let r = part.shape.radius();
            let t = match part.shape {
                Shape::Sphere { .. } => ray_sphere(origin, dir, &a, r),
                Shape::Capsule { .. } => ray_capsule(origin, dir, &a, &b, r),
            };
            if let Some(t) = t {
                if best.as_ref().is_none_or(|h| t < h.t) {
                    best = Some(Hit { t, part: i });
                }
            }
        }
        best
    }

    /// Outward unit normal at a surface point of `part`.
    pub fn normal(&self, part: usize, p: &Point3) -> Vector3<f64> {
        let (a, b) = self.parts[part].segment();
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 {
            ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (a + ab * s)).normalize()
    }

    /// Albedo at a surface point, including the checker when enabled.
    pub fn albedo(&self, part: usize, p: &Point3) -> [f64; 3] {
        let part = &self.parts[part];
        let m = part.material;
        if !m.checker {
            return m.albedo;
        }
        const CELL: f64 = 0.12;
        const SECTORS: f64 = 6.0;
        const CONTRAST: f64 = 0.04;
        let q = part.local_to_world.inverse().apply(p);
        let (axial, azimuth) = match part.shape {
            Shape::Capsule { .. } => (q.x, q.z.atan2(q.y)),
            Shape::Sphere { .. } => (q.y, q.z.atan2(q.x)),
        };
        let sector = std::f64::consts::TAU / SECTORS;
        let parity = ((axial / CELL).floor() + (azimuth / sector).floor()) as i64;
        let k = if parity.rem_euclid(2) == 0 {
            1.0 + CONTRAST
        } else {
            1.0 - CONTRAST
        };
        m.albedo.map(|c| c * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub part: usize,
}

/// Entry parameter of a ray into a sphere, if ahead of the origin.
fn ray_sphere(o: &Point3, d: &Vector3<f64>, c: &Point3, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.norm_squared();
    let b = oc.dot(d);
    let cc = oc.norm_squared() - r * r;
    let disc = b * b - a * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > 0.0).then_some(t)
}

/// Entry parameter into the capsule swept by a sphere of radius `r` along
/// `pa -> pb`: the earliest of the cylinder-side entry (within the segment)
/// and the two end-sphere entries.
fn ray_capsule(o: &Point3, d: &Vector3<f64>, pa: &Point3, pb: &Point3, r: f64) -> Option<f64> {
    let ba = pb - pa;
    let oa = o - pa;
    let baba = ba.dot(&ba);
    let bard = ba.dot(d);
    let baoa = ba.dot(&oa);
    let a = baba * d.norm_squared() - bard * bard;
    let b = baba * oa.dot(d) - baoa * bard;
    let c = baba * oa.norm_squared() - baoa * baoa - r * r * baba;
    let mut best: Option<f64> = None;
    let mut consider = |t: Option<f64>| {
        if let Some(t) = t {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };
    if a > 1e-12 {
        let h = b * b - a * c;
        if h >= 0.0 {
            let t = (-b - h.sqrt()) / a;
            let y = baoa + t * bard;
            if t > 0.0 && y > 0.0 && y < baba {
                consider(Some(t));
            }
        }
    }
    consider(ray_sphere(o, d, pa, r));
    consider(ray_sphere(o, d, pb, r));
    best
}

/// Output of [`raycast_render`].
#[derive(Debug, Clone)]
pub struct Render {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub mask: BinaryMask,
}

/// Camera-frame ray through continuous pixel `(x, y)`, with unit z so the
/// ray parameter equals depth, expressed in world coordinates.
fn world_ray(x: f64, y: f64, k: &CameraIntrinsics, cam_pose: &RigidTransform) -> (Point3, Vector3<f64>) {
    let c2w = cam_pose.inverse();
    let d = Vector3::new((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
    (c2w.apply(&Point3::origin()), c2w.apply_vector(&d))
}

/// Renders `fig` seen by a camera with world-to-camera transform `cam_pose`.
///
/// Colour is `albedo * max(0, n . l) + AMBIENT` per channel, clamped to 1 and
/// scaled to 8-bit units. Misses are black with depth 0.
pub fn raycast_render(
    fig: &ArticulatedFigure,
    k: &CameraIntrinsics,
    cam_pose: &RigidTransform,
    light_dir: &Vector3<f64>,
) -> Render {
    let (w, h) = k.size();
    let light = light_dir.normalize();
    let mut rgb = RgbImage::filled(w, h, [0.0; 3]);
    let mut depth = vec![0.0; w * h];
    let mut mask = BinaryMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let (o, d) = world_ray(x as f64, y as f64, k, cam_pose);
            let Some(hit) = fig.intersect(&o, &d) else {
                continue;
            };
            let p = o + d * hit.t;
            let lambert = fig.normal(hit.part, &p).dot(&light).max(0.0);
            let albedo = fig.albedo(hit.part, &p);
            let shade = albedo.map(|a| (a * lambert + AMBIENT).min(1.0) * 255.0);
            rgb.set_pixel(x, y, shade);
            depth[y * w + x] = hit.t;
            mask.set(x, y, true);
        }
    }
    let depth = DepthImage::new(w, h, depth).expect("hit depths are finite and positive");
    Render { rgb, depth, mask }
}

/// Backward flow from target pixels to source coordinates, valid where the
/// target surface point is visible from the source camera.
///
/// A target hit is projected into the source view; it is covisible when the
/// source ray through the projected position hits the figure at the same
/// depth within [`COVISIBILITY_TOL`] (relative).
pub fn ground_truth_backward_flow(
    fig: &ArticulatedFigure,
    src_pose: &RigidTransform,
    tgt_pose: &RigidTransform,
    k_src: &CameraIntrinsics,
    k_tgt: &CameraIntrinsics,
) -> FlowField {
    let (w, h) = k_tgt.size();
    let (sw, sh) = (k_src.width as f64, k_src.height as f64);
    let mut flow = FlowField::empty(w, h, FlowDirection::Backward);
    for y in 0..h {
        for x in 0..w {
            let (o, d) = world_ray(x as f64, y as f64, k_tgt, tgt_pose);
            let Some(hit) = fig.intersect(&o, &d) else {
                continue;
            };
            let q = src_pose.apply(&(o + d * hit.t));
            if q.z <= 0.0 {
                continue;
            }
            let u = k_src.fx * q.x / q.z + k_src.cx;
            let v = k_src.fy * q.y / q.z + k_src.cy;
            if !(u > -0.5 && v > -0.5 && u < sw - 0.5 && v < sh - 0.5) {
                continue;
            }
            let (so, sd) = world_ray(u, v, k_src, src_pose);
            let seen = fig
                .intersect(&so, &sd)
                .is_some_and(|s| (s.t - q.z).abs() <= COVISIBILITY_TOL * q.z);
            if seen {
                flow.set(x, y, u - x as f64, v - y as f64);
            }
        }
    }
    flow
}

/// Cameras on a horizontal circle around the figure's vertical axis, all
/// looking horizontally at the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub radius: f64,
    pub height: f64,
    pub intrinsics: CameraIntrinsics,
}

impl Default for Orbit {
    fn default() -> Self {
        Orbit {
            radius: 3.2,
            height: 0.9,
            intrinsics: CameraIntrinsics {
                fx: 250.0,
                fy: 250.0,
                cx: 100.0,
                cy: 100.0,
                width: 200,
                height: 200,
            },
        }
    }
}

impl Orbit {
    /// World-to-camera transform at `theta_deg` around the axis; 0 is the
    /// front view from `+z`.
    pub fn pose(&self, theta_deg: f64) -> RigidTransform {
        let th = theta_deg.to_radians();
        let front = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
        let rot_y = Matrix3::new(th.cos(), 0.0, th.sin(), 0.0, 1.0, 0.0, -th.sin(), 0.0, th.cos());
        let r = front * rot_y.transpose();
        let centre = Vector3::new(self.radius * th.sin(), self.height, self.radius * th.cos());
        RigidTransform::new(r, -(r * centre)).expect("product of rotations")
    }

    /// The same orbit rendered at `scale` times the resolution.
    pub fn scaled(&self, scale: f64) -> Result<Orbit> {
        Ok(Orbit {
            intrinsics: self.intrinsics.scaled(scale)?,
            ..*self
        })
    }
}

/// The seventeen target angles around a front source: -90 to 80 degrees in
/// 10 degree steps, without 0.
pub fn default_view_angles() -> Vec<f64> {
    (-9..=8).filter(|&i| i != 0).map(|i| i as f64 * 10.0).collect()
}

#[derive(Debug, Clone)]
pub struct View {
    pub render: Render,
    pub intrinsics: CameraIntrinsics,
    /// World-to-camera.
    pub pose: RigidTransform,
}

#[derive(Debug, Clone)]
pub struct ScenePair {
    pub source: View,
    pub target: View,
    pub gt_backward_flow: FlowField,
    pub t_src_to_tgt: RigidTransform,
}

fn render_view(fig: &ArticulatedFigure, orbit: &Orbit, theta: f64, light: &Vector3<f64>) -> Result<View> {
    let pose = orbit.pose(theta);
    let centre = pose.inverse().apply(&Point3::origin());
    if (centre - ArticulatedFigure::bounding_center()).norm() <= fig.bounding_radius() {
        return Err(Error::InvalidParameter(
            "camera inside the figure's bounding sphere".into(),
        ));
    }
    Ok(View {
        render: raycast_render(fig, &orbit.intrinsics, &pose, light),
        intrinsics: orbit.intrinsics,
        pose,
    })
}

/// Source at the front of `orbit`, target at `theta_deg`.
pub fn make_pair(fig: &ArticulatedFigure, orbit: &Orbit, theta_deg: f64) -> Result<ScenePair> {
    let light = default_light();
    let source = render_view(fig, orbit, 0.0, &light)?;
    pair_from_source(fig, orbit, source, theta_deg, &light)
}

fn pair_from_source(
    fig: &ArticulatedFigure,
    orbit: &Orbit,
    source: View,
    theta_deg: f64,
    light: &Vector3<f64>,
) -> Result<ScenePair> {
    let target = render_view(fig, orbit, theta_deg, light)?;
    let gt_backward_flow =
        ground_truth_backward_flow(fig, &source.pose, &target.pose, &source.intrinsics, &target.intrinsics);
    let t_src_to_tgt = source.pose.inverse().then(&target.pose);
    Ok(ScenePair {
        source,
        target,
        gt_backward_flow,
        t_src_to_tgt,
    })
}

/// One pair per angle, all sharing the front source view.
pub fn make_view_ring(fig: &ArticulatedFigure, orbit: &Orbit, angles_deg: &[f64]) -> Result<Vec<ScenePair>> {
    if angles_deg.is_empty() {
        return Err(Error::InvalidParameter("no view angles".into()));
    }
    let light = default_light();
    let source = render_view(fig, orbit, 0.0, &light)?;
    angles_deg
        .iter()
        .map(|&a| pair_from_source(fig, orbit, source.clone(), a, &light))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn figure_is_deterministic() {
        let pose = Pose {
            shoulder: [0.4, 0.9],
            ..Pose::default()
        };
        assert_eq!(build_figure(7, &pose).unwrap(), build_figure(7, &pose).unwrap());
        assert!(build_figure(
            1,
            &Pose {
                knee: [-0.5, 0.0],
                ..Pose::default()
            }
        )
        .is_err());
    }

    #[test]
    fn t_pose_is_symmetric() {
        let fig = build_figure(3, &Pose::default()).unwrap();
        let mirror = |p: Point3| Point3::new(-p.x, p.y, p.z);
        for side in [UPPER_ARM, FOREARM, THIGH, SHIN] {
            let (a0, b0) = fig.parts()[side[0]].segment();
            let (a1, b1) = fig.parts()[side[1]].segment();
            assert!((mirror(a0) - a1).norm() < 1e-12 && (mirror(b0) - b1).norm() < 1e-12);
        }
        let (_, hand) = fig.parts()[FOREARM[0]].segment();
        assert!((hand - Point3::new(0.80, 1.40, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn sphere_on_axis_depth() {
        let o = Point3::new(0.0, 0.0, 0.0);
        let t = ray_sphere(&o, &Vector3::new(0.0, 0.0, 1.0), &Point3::new(0.0, 0.0, 3.0), 0.5).unwrap();
        assert!((t - 2.5).abs() < 1e-12);
    }

    #[test]
    fn capsule_hits() {
        let o = Point3::new(0.0, 0.0, -5.0);
        let d = Vector3::new(0.0, 0.0, 1.0);
        let (a, b) = (Point3::new(-1.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0));
        assert!((ray_capsule(&o, &d, &a, &b, 0.5).unwrap() - 4.5).abs() < 1e-12);
        // Through an end cap.
        let o2 = Point3::new(1.3, 0.0, -5.0);
        let expect = 5.0 - (0.25f64 - 0.09).sqrt();
        assert!((ray_capsule(&o2, &d, &a, &b, 0.5).unwrap() - expect).abs() < 1e-12);
        assert!(ray_capsule(&Point3::new(2.0, 0.0, -5.0), &d, &a, &b, 0.5).is_none());
        // Along the axis.
        let along = ray_capsule(&Point3::new(-5.0, 0.0, 0.0), &Vector3::new(1.0, 0.0, 0.0), &a, &b, 0.5).unwrap();
        assert!((along - 3.5).abs() < 1e-12);
    }

    #[test]
    fn identical_cameras_give_zero_flow() {
        let fig = build_figure(11, &Pose::default()).unwrap();
        let pairs = make_view_ring(&fig, &Orbit::default(), &[0.0]).unwrap();
        let p = &pairs[0];
        assert_eq!(p.gt_backward_flow.valid_mask(), p.target.render.mask);
        assert!(p
            .gt_backward_flow
            .u()
            .iter()
            .chain(p.gt_backward_flow.v())
            .all(|&c| c.abs() < 1e-9));
        assert!(p.target.render.mask.count() > 2000);
    }

    #[test]
    fn depth_positive_exactly_on_mask() {
        let fig = build_figure(
            5,
            &Pose {
                elbow: [1.0, 0.3],
                ..Pose::default()
            },
        )
        .unwrap();
        let pair = make_pair(&fig, &Orbit::default(), 30.0).unwrap();
        for view in [&pair.source, &pair.target] {
            assert_eq!(view.render.depth.support(), view.render.mask);
        }
        assert!(pair
            .gt_backward_flow
            .valid_mask()
            .is_subset_of(&pair.target.render.mask));
        let valid = pair.gt_backward_flow.valid_count() as f64;
        assert!(valid > 0.8 * pair.target.render.mask.count() as f64);
    }

    #[test]
    fn default_angles() {
        let a = default_view_angles();
        assert_eq!(a.len(), 17);
        assert_eq!((a[0], a[16]), (-90.0, 80.0));
        assert!(!a.contains(&0.0));
    }

    #[test]
    fn orbit_front_camera_looks_at_axis() {
        let orbit = Orbit::default();
        let p = orbit.pose(0.0).apply(&Point3::new(0.0, 0.9, 0.0));
        assert!((p - Point3::new(0.0, 0.0, 3.2)).norm() < 1e-12);
        let q = orbit.pose(90.0).apply(&Point3::new(1.0, 0.9, 0.0));
        assert!((q - Point3::new(0.0, 0.0, 2.2)).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn limb_lengths_are_pose_invariant(
            s0 in SHOULDER_LIMITS.0..SHOULDER_LIMITS.1, e0 in ELBOW_LIMITS.0..ELBOW_LIMITS.1,
            h1 in HIP_LIMITS.0..HIP_LIMITS.1, k1 in KNEE_LIMITS.0..KNEE_LIMITS.1,
        ) {
            let pose = Pose { shoulder: [s0, 0.0], elbow: [e0, 0.0], hip: [0.0, h1], knee: [0.0, k1] };
            let fig = build_figure(0, &pose).unwrap();
            for (i, len) in [(UPPER_ARM[0], UPPER_ARM_LENGTH), (FOREARM[0], FOREARM_LENGTH),
                             (THIGH[1], THIGH_LENGTH), (SHIN[1], SHIN_LENGTH)] {
                let (a, b) = fig.parts()[i].segment();
                prop_assert!(((b - a).norm() - len).abs() < 1e-12);
            }
            // Children stay attached to their parents.
            let (_, elbow) = fig.parts()[UPPER_ARM[0]].segment();
            let (fa, _) = fig.parts()[FOREARM[0]].segment();
            prop_assert!((elbow - fa).norm() < 1e-12);
            let (_, knee) = fig.parts()[THIGH[1]].segment();
            let (sa, _) = fig.parts()[SHIN[1]].segment();
            prop_assert!((knee - sa).norm() < 1e-12);
        }
    }
}
