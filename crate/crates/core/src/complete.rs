//! Completion of the holes left by splatting.
//!
//! The default refiner fills each hole pixel inside the target silhouette by
//! harmonic diffusion: every hole pixel is repeatedly replaced by the mean of
//! its valid 4-neighbours until the largest update drops below a tolerance.
//! Pixels that were valid on input are never touched.

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{ensure_same_size, Error, Result};
use crate::mask::BinaryMask;
use crate::raster::{FlowDirection, FlowField};
use crate::splat::TransformedFlow;

/// Slot for a flow-completion strategy. Implementations must leave every
/// pixel that is valid in the input unchanged.
pub trait FlowRefiner {
    fn refine(&self, tflow: &TransformedFlow, target_mask: &BinaryMask) -> Result<FlowField>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionRefiner {
    /// Stop once the largest per-sweep change, and the remaining error it
    /// implies, are below this many pixels.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DiffusionRefiner {
    fn default() -> Self {
        DiffusionRefiner {
            tolerance: 1e-4,
            max_iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CompletionStats {
    pub filled: usize,
    /// Hole pixels with no path to a seed inside the mask.
    pub unreachable: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl FlowRefiner for DiffusionRefiner {
    fn refine(&self, tflow: &TransformedFlow, target_mask: &BinaryMask) -> Result<FlowField> {
        self.complete(&tflow.flow, target_mask).map(|(f, _)| f)
    }
}

/// Leaves holes empty.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRefiner;

impl FlowRefiner for NoRefiner {
    fn refine(&self, tflow: &TransformedFlow, target_mask: &BinaryMask) -> Result<FlowField> {
        ensure_same_size(tflow.size(), target_mask.size())?;
        Ok(tflow.flow.clone())
    }
}

const NEIGHBOURS: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];

impl DiffusionRefiner {
    pub fn complete(&self, flow: &FlowField, target_mask: &BinaryMask) -> Result<(FlowField, CompletionStats)> {
        ensure_same_size(flow.size(), target_mask.size())?;
        if flow.direction() != FlowDirection::Backward {
            return Err(Error::InvalidInput("completion needs a backward flow".into()));
        }
        let (w, h) = flow.size();
        let mut out = flow.clone();
        let mut stats = CompletionStats {
            converged: true,
            ..CompletionStats::default()
        };
        if target_mask.is_empty() {
            return Ok((out, stats));
        }

        let n = w * h;
        let seeds = (0..n).filter(|&i| target_mask.bits()[i] && flow.valid()[i]).count();
        if seeds == 0 {
            return Err(Error::CannotComplete);
        }

        // Known values: seeds inside the mask, then hole pixels as they are
        // reached.
        let mut known: Vec<bool> = (0..n).map(|i| target_mask.bits()[i] && flow.valid()[i]).collect();
        let mut u = flow.u().to_vec();
        let mut v = flow.v().to_vec();
        let is_hole = |i: usize| target_mask.bits()[i] && !flow.valid()[i];

        let neighbours = |i: usize| {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            NEIGHBOURS.iter().filter_map(move |&(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                (nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64).then(|| ny as usize * w + nx as usize)
            })
        };

        // Breadth-first initialisation: each layer takes the mean of the
        // already-known neighbours.
        let mut holes = Vec::new();
        let mut queued = vec![false; n];
        let mut frontier: VecDeque<usize> = VecDeque::new();
        for (i, q) in queued.iter_mut().enumerate() {
            if is_hole(i) && neighbours(i).any(|j| known[j]) {
                *q = true;
                frontier.push_back(i);
            }
        }
        while !frontier.is_empty() {
            let layer: Vec<usize> = frontier.drain(..).collect();
            let mut values = Vec::with_capacity(layer.len());
            for &i in &layer {
                values.push(mean_of_known(&known, &u, &v, neighbours(i)).expect("queued next to a known pixel"));
            }
            for (&i, (mu, mv)) in layer.iter().zip(values) {
                u[i] = mu;
                v[i] = mv;
                known[i] = true;
                holes.push(i);
            }
            for &i in &layer {
                for j in neighbours(i) {
                    if is_hole(j) && !queued[j] {
                        queued[j] = true;
                        frontier.push_back(j);
                    }
                }
            }
        }
        holes.sort_unstable();

        // Gauss-Seidel sweeps in row-major order. The sweep-to-sweep change
        // understates the remaining error when convergence is slow, so the
        // geometric tail implied by the observed contraction must also be
        // below tolerance.
        if !holes.is_empty() {
            stats.converged = false;
            let mut prev_change = f64::INFINITY;
            while stats.iterations < self.max_iterations {
                stats.iterations += 1;
                let mut max_change: f64 = 0.0;
                for &i in &holes {
                    let (mu, mv) = mean_of_known(&known, &u, &v, neighbours(i)).expect("hole has a known neighbour");
                    max_change = max_change.max((mu - u[i]).abs()).max((mv - v[i]).abs());
                    u[i] = mu;
                    v[i] = mv;
                }
                let ratio = (max_change / prev_change).min(1.0);
                let tail = if ratio < 1.0 {
                    max_change * ratio / (1.0 - ratio)
                } else {
                    f64::INFINITY
                };
                if max_change < self.tolerance && (max_change == 0.0 || tail < self.tolerance) {
                    stats.converged = true;
                    break;
                }
                prev_change = max_change;
            }
        }

        for &i in &holes {
            out.set(i % w, i / w, u[i], v[i]);
        }
        stats.filled = holes.len();
        stats.unreachable = (0..n).filter(|&i| is_hole(i) && !known[i]).count();
        Ok((out, stats))
    }
}

fn mean_of_known(known: &[bool], u: &[f64], v: &[f64], neighbours: impl Iterator<Item = usize>) -> Option<(f64, f64)> {
    let (mut su, mut sv, mut count) = (0.0, 0.0, 0usize);
    for j in neighbours {
        if known[j] {
            su += u[j];
            sv += v[j];
            count += 1;
        }
    }
    (count > 0).then(|| (su / count as f64, sv / count as f64))
}

/// Completes with the default [`DiffusionRefiner`].
pub fn complete_backward_flow(tflow: &TransformedFlow, target_mask: &BinaryMask) -> Result<FlowField> {
    DiffusionRefiner::default().refine(tflow, target_mask)
}
