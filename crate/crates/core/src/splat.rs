//! Forward-to-backward flow conversion by z-buffered splatting.
//!
//! Every valid source pixel lands at a continuous target position. The (up
//! to) four integer target pixels of the unit cell containing that position
//! become candidates; each target pixel keeps the candidate with the smallest
//! target-view depth, ties going to the smaller source row-major index.
//! Target pixels nobody claims are holes: surface the source never saw.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{FlowDirection, FlowField};
use crate::warp::cubic_weight;

/// Landing coordinates within this distance of an integer are treated as
/// integral, so an exact-identity splat claims a single pixel instead of
/// picking up neighbours through rounding noise.
pub const SNAP_EPS: f64 = 1e-6;

/// Neighbouring forward-flow vectors differing by more than this many pixels
/// are treated as lying on different surfaces.
const FLOW_CONTINUITY_PX: f64 = 1.0;

/// Corrections beyond this many pixels are outside the range where the local
/// linearisation of the forward map can be trusted.
const MAX_CORRECTION_PX: f64 = 2.0;

const NEWTON_STEPS: usize = 3;

/// Relative target-depth difference below which two flow-continuous
/// sources are taken to be on the same surface.
const SAME_SURFACE_DEPTH_REL: f64 = 0.02;

/// Forward-map Jacobians with a smaller determinant are replaced by identity.
const MIN_JACOBIAN_DET: f64 = 0.1;

/// What a winning source pixel writes into a target pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplatValue {
    /// The integer source pixel coordinate itself: target `(a, b)` won by
    /// source `(x, y)` stores `(x - a, y - b)`.
    SourcePixel,
    /// The source coordinate corrected to first order for the offset between
    /// the landing position and the target pixel centre, using the local
    /// Jacobian of the forward map. Candidates whose corrected coordinate
    /// falls off the source foreground (or onto a different surface) are
    /// discarded before the depth test.
    #[default]
    Subpixel,
}

/// Backward flow obtained by splatting, registered to the target image.
#[derive(Debug, Clone)]
pub struct TransformedFlow {
    pub flow: FlowField,
    /// Winning target-view depth; `+inf` at holes.
    pub depth: Vec<f64>,
    /// Row-major source index of the winner at each target pixel.
    pub winner: Vec<Option<usize>>,
    /// Candidate cells that fell outside the target image.
    pub dropped_splats: usize,
    /// Candidates discarded by the sub-pixel foreground test.
    pub rejected_candidates: usize,
}

impl TransformedFlow {
    pub fn width(&self) -> usize {
        self.flow.width()
    }

    pub fn height(&self) -> usize {
        self.flow.height()
    }

    pub fn size(&self) -> (usize, usize) {
        self.flow.size()
    }
}

/// Integer span `[lo, hi]` of the unit cell containing `p` along one axis.
pub fn cell_span(p: f64) -> (i64, i64) {
    let r = p.round();
    if (p - r).abs() <= SNAP_EPS {
        (r as i64, r as i64)
    } else {
        let lo = p.floor() as i64;
        (lo, lo + 1)
    }
}

/// Target pixels a splat landing at `(tx, ty)` competes for, in row-major
/// order. One, two or four entries; may lie outside the image.
pub fn splat_candidates(tx: f64, ty: f64) -> Vec<(i64, i64)> {
    let (x0, x1) = cell_span(tx);
    let (y0, y1) = cell_span(ty);
    let mut out = Vec::with_capacity(4);
    for y in y0..=y1 {
        for x in x0..=x1 {
            out.push((x, y));
        }
    }
    out
}

/// Splat with [`SplatValue::SourcePixel`] values.
pub fn forward_to_backward(
    fwd: &FlowField,
    target_depth: &[f64],
    target_width: usize,
    target_height: usize,
) -> Result<TransformedFlow> {
    forward_to_backward_with(fwd, target_depth, target_width, target_height, SplatValue::SourcePixel)
}

pub fn forward_to_backward_with(
    fwd: &FlowField,
    target_depth: &[f64],
    target_width: usize,
    target_height: usize,
    value: SplatValue,
) -> Result<TransformedFlow> {
    if fwd.direction() != FlowDirection::Forward {
        return Err(Error::InvalidInput("splatting needs a forward flow".into()));
    }
    let (sw, sh) = fwd.size();
    if target_depth.len() != sw * sh {
        return Err(Error::InvalidInput(format!(
            "target depth has {} entries for a {sw}x{sh} flow",
            target_depth.len()
        )));
    }
    for (i, &valid) in fwd.valid().iter().enumerate() {
        if valid && !(target_depth[i] > 0.0 && target_depth[i].is_finite()) {
            return Err(Error::InvalidInput(format!(
                "target depth {} at valid source index {i}",
                target_depth[i]
            )));
        }
    }

    let linearisation = match value {
        SplatValue::SourcePixel => None,
        SplatValue::Subpixel => Some(InverseJacobians::new(fwd)),
    };

    let n_tgt = target_width * target_height;
    let mut best_depth = vec![f64::INFINITY; n_tgt];
    let mut best_on_edge = vec![true; n_tgt];
    let mut winner: Vec<Option<usize>> = vec![None; n_tgt];
    let mut dropped_splats = 0;
    let mut rejected_candidates = 0;
    let mut accepted: Vec<(usize, usize)> = Vec::new();

    for sy in 0..sh {
        for sx in 0..sw {
            let Some((u, v)) = fwd.get(sx, sy) else {
                continue;
            };
            let src = sy * sw + sx;
            let z = target_depth[src];
            let (tx, ty) = (sx as f64 + u, sy as f64 + v);
            let corners = splat_candidates(tx, ty);
            let mut candidates = corners.clone();
            if let Some(lin) = &linearisation {
                lin.extend_with_footprint(src, tx, ty, &mut candidates);
            }
            for (k, (a, b)) in candidates.into_iter().enumerate() {
                if a < 0 || b < 0 || a >= target_width as i64 || b >= target_height as i64 {
                    if k < corners.len() {
                        dropped_splats += 1;
                    }
                    continue;
                }
                let mut on_edge = true;
                if let Some(lin) = &linearisation {
                    match lin.corrected_source(fwd, sx, sy, a as f64, b as f64) {
                        Some(c) => on_edge = c.on_edge,
                        None => {
                            rejected_candidates += 1;
                            continue;
                        }
                    }
                }
                let t = b as usize * target_width + a as usize;
                if linearisation.is_some() {
                    accepted.push((t, src));
                }
                // A candidate seeing the outer half-pixel of a silhouette
                // yields to one seeing the inside of a surface. Sources are
                // visited in increasing index, so a strict test leaves ties
                // with the smaller index.
                let better = match (on_edge, best_on_edge[t]) {
                    (false, true) => true,
                    (true, false) => false,
                    _ => z < best_depth[t],
                };
                if better {
                    best_depth[t] = z;
                    best_on_edge[t] = on_edge;
                    winner[t] = Some(src);
                }
            }
        }
    }

    // The value at each target pixel comes from the candidate on the
    // winner's surface whose landing is closest to the pixel centre, which
    // keeps the first-order correction as small as possible.
    let mut value_source = winner.clone();
    let mut best_offset = vec![f64::INFINITY; n_tgt];
    for &(t, src) in &accepted {
        let Some(w) = winner[t] else { continue };
        if src != w && !same_surface(fwd, target_depth, src, w) {
            continue;
        }
        let (u, v) = fwd.get(src % sw, src / sw).expect("accepted sources are valid");
        let ex = (src % sw) as f64 + u - (t % target_width) as f64;
        let ey = (src / sw) as f64 + v - (t / target_width) as f64;
        let d = ex * ex + ey * ey;
        if d < best_offset[t] {
            best_offset[t] = d;
            value_source[t] = Some(src);
        }
    }

    let mut flow = FlowField::empty(target_width, target_height, FlowDirection::Backward);
    for b in 0..target_height {
        for a in 0..target_width {
            let Some(src) = value_source[b * target_width + a] else {
                continue;
            };
            let (sx, sy) = (src % sw, src / sw);
            let (px, py) = match &linearisation {
                None => (sx as f64, sy as f64),
                Some(lin) => {
                    lin.corrected_source(fwd, sx, sy, a as f64, b as f64)
                        .expect("winner passed the candidate test")
                        .position
                }
            };
            flow.set(a, b, px - a as f64, py - b as f64);
        }
    }

    Ok(TransformedFlow {
        flow,
        depth: best_depth,
        winner,
        dropped_splats,
        rejected_candidates,
    })
}

/// Forward flow at a fractional source position: Catmull-Rom over the 4x4
/// neighbourhood when every tap is valid and flow-continuous with `f0`,
/// bilinear over the 2x2 cell when those are, otherwise `None`.
fn interpolate_flow(fwd: &FlowField, x: f64, y: f64, f0: (f64, f64)) -> Option<(f64, f64)> {
    let (w, h) = fwd.size();
    let (x0, y0) = (x.floor() as i64, y.floor() as i64);
    let tap = |i: i64, j: i64| -> Option<(f64, f64)> {
        if i < 0 || j < 0 || i >= w as i64 || j >= h as i64 {
            return None;
        }
        fwd.get(i as usize, j as usize)
            .filter(|f| (f.0 - f0.0).hypot(f.1 - f0.1) <= FLOW_CONTINUITY_PX)
    };
    let (tx, ty) = (x - x0 as f64, y - y0 as f64);
    let mut cubic = (0.0, 0.0);
    let mut complete = true;
    'taps: for j in -1..=2 {
        let wy = cubic_weight(ty - j as f64);
        for i in -1..=2 {
            match tap(x0 + i, y0 + j) {
                Some(f) => {
                    let wt = wy * cubic_weight(tx - i as f64);
                    cubic.0 += wt * f.0;
                    cubic.1 += wt * f.1;
                }
                None => {
                    complete = false;
                    break 'taps;
                }
            }
        }
    }
    if complete {
        return Some(cubic);
    }
    let f00 = tap(x0, y0)?;
    let f10 = tap(x0 + 1, y0)?;
    let f01 = tap(x0, y0 + 1)?;
    let f11 = tap(x0 + 1, y0 + 1)?;
    let lerp = |a: f64, b: f64, c: f64, d: f64| (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d);
    Some((lerp(f00.0, f10.0, f01.0, f11.0), lerp(f00.1, f10.1, f01.1, f11.1)))
}

/// Two sources lie on the same surface when both their flows and their
/// target depths agree.
fn same_surface(fwd: &FlowField, target_depth: &[f64], a: usize, b: usize) -> bool {
    let (fa, fb) = ((fwd.u()[a], fwd.v()[a]), (fwd.u()[b], fwd.v()[b]));
    let (za, zb) = (target_depth[a], target_depth[b]);
    (fa.0 - fb.0).hypot(fa.1 - fb.1) <= FLOW_CONTINUITY_PX && (za - zb).abs() <= SAME_SURFACE_DEPTH_REL * za.min(zb)
}

/// Per-source-pixel inverse Jacobian of the forward map `s -> s + f(s)`,
/// from finite differences over neighbours on the same surface.
struct InverseJacobians {
    jac: Vec<[f64; 4]>,
    inv: Vec<[f64; 4]>,
}

impl InverseJacobians {
    fn new(fwd: &FlowField) -> Self {
        let (w, h) = fwd.size();
        let mut jac = vec![[1.0, 0.0, 0.0, 1.0]; w * h];
        let mut inv = vec![[1.0, 0.0, 0.0, 1.0]; w * h];
        for y in 0..h {
            for x in 0..w {
                let Some(f0) = fwd.get(x, y) else {
                    continue;
                };
                let (jxx, jyx) = axis_derivative(fwd, x, y, f0, 1, 0);
                let (jxy, jyy) = axis_derivative(fwd, x, y, f0, 0, 1);
                let det = jxx * jyy - jxy * jyx;
                if det >= MIN_JACOBIAN_DET {
                    jac[y * w + x] = [jxx, jxy, jyx, jyy];
                    inv[y * w + x] = [jyy / det, -jxy / det, -jyx / det, jxx / det];
                }
            }
        }
        InverseJacobians { jac, inv }
    }

    /// Appends the target pixels covered by the image of source pixel
    /// `src`'s unit square, so stretched surfaces leave no gaps. Pixels
    /// already listed are skipped.
    fn extend_with_footprint(&self, src: usize, tx: f64, ty: f64, out: &mut Vec<(i64, i64)>) {
        let j = &self.jac[src];
        let hx = (0.5 * (j[0].abs() + j[1].abs())).min(MAX_CORRECTION_PX);
        let hy = (0.5 * (j[2].abs() + j[3].abs())).min(MAX_CORRECTION_PX);
        let (x0, x1) = ((tx - hx - SNAP_EPS).ceil() as i64, (tx + hx + SNAP_EPS).floor() as i64);
        let (y0, y1) = ((ty - hy - SNAP_EPS).ceil() as i64, (ty + hy + SNAP_EPS).floor() as i64);
        for b in y0..=y1 {
            for a in x0..=x1 {
                if !out.contains(&(a, b)) {
                    out.push((a, b));
                }
            }
        }
    }

    /// First-order source coordinate seen by target pixel `(a, b)` when the
    /// winning source is `(sx, sy)`, or `None` if that coordinate leaves the
    /// source surface.
    fn corrected_source(&self, fwd: &FlowField, sx: usize, sy: usize, a: f64, b: f64) -> Option<Corrected> {
        let (w, h) = fwd.size();
        let (u, v) = fwd.get(sx, sy)?;
        let (ex, ey) = (sx as f64 + u - a, sy as f64 + v - b);
        if ex.abs() <= SNAP_EPS && ey.abs() <= SNAP_EPS {
            return Some(Corrected {
                position: (sx as f64, sy as f64),
                on_edge: false,
            });
        }
        let m = &self.inv[sy * w + sx];
        let (cx, cy) = (m[0] * ex + m[1] * ey, m[2] * ex + m[3] * ey);
        if cx.abs() > MAX_CORRECTION_PX || cy.abs() > MAX_CORRECTION_PX {
            return None;
        }
        let (mut px, mut py) = (sx as f64 - cx, sy as f64 - cy);
        // Newton steps on the interpolated forward map, with the Jacobian
        // held fixed.
        for _ in 0..NEWTON_STEPS {
            let Some((fu, fv)) = interpolate_flow(fwd, px, py, (u, v)) else {
                break;
            };
            let (rx, ry) = (px + fu - a, py + fv - b);
            px -= m[0] * rx + m[1] * ry;
            py -= m[2] * rx + m[3] * ry;
        }
        if (sx as f64 - px).abs() > MAX_CORRECTION_PX || (sy as f64 - py).abs() > MAX_CORRECTION_PX {
            return None;
        }
        let (nx, ny) = (px.round(), py.round());
        if nx < 0.0 || ny < 0.0 || nx >= w as f64 || ny >= h as f64 {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if (nx, ny) != (sx, sy) {
            let (nu, nv) = fwd.get(nx, ny)?;
            if (nu - u).hypot(nv - v) > FLOW_CONTINUITY_PX {
                return None;
            }
        }
        Some(Corrected {
            position: (px, py),
            on_edge: interpolate_flow(fwd, px, py, (u, v)).is_none(),
        })
    }
}

struct Corrected {
    position: (f64, f64),
    /// Some bilinear tap around `position` is off the surface.
    on_edge: bool,
}

/// Derivative of the forward map along `(dx, dy)` at `(x, y)`: central
/// difference when both neighbours are on the same surface, one-sided when
/// only one is, and the unit step otherwise.
fn axis_derivative(fwd: &FlowField, x: usize, y: usize, f0: (f64, f64), dx: usize, dy: usize) -> (f64, f64) {
    let (w, h) = fwd.size();
    let continuous = |f: (f64, f64)| (f.0 - f0.0).hypot(f.1 - f0.1) <= FLOW_CONTINUITY_PX;
    let ahead = (x + dx < w && y + dy < h)
        .then(|| fwd.get(x + dx, y + dy))
        .flatten()
        .filter(|&f| continuous(f));
    let behind = (x >= dx && y >= dy)
        .then(|| fwd.get(x - dx, y - dy))
        .flatten()
        .filter(|&f| continuous(f));
    let (step_u, step_v) = (dx as f64, dy as f64);
    match (ahead, behind) {
        (Some(fa), Some(fb)) => (step_u + (fa.0 - fb.0) / 2.0, step_v + (fa.1 - fb.1) / 2.0),
        (Some(fa), None) => (step_u + fa.0 - f0.0, step_v + fa.1 - f0.1),
        (None, Some(fb)) => (step_u + f0.0 - fb.0, step_v + f0.1 - fb.1),
        (None, None) => (step_u, step_v),
    }
}
