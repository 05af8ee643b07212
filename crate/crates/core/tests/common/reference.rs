#![allow(clippy::needless_range_loop)]

//! Reference implementations the library is checked against. Each one is
//! written for clarity, not speed, and shares no code with the library.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use viewsynth::{BinaryMask, FlowDirection, FlowField, RgbImage};

/// Integer coordinates of the unit cell around `p`: every integer strictly
/// closer than 1, or just the integer itself when `p` is within 1e-6 of it.
pub fn cell(p: f64) -> Vec<i64> {
    let r = p.round();
    if (p - r).abs() <= 1e-6 {
        return vec![r as i64];
    }
    ((p.floor() as i64 - 1)..=(p.ceil() as i64 + 1))
        .filter(|&a| (a as f64 - p).abs() < 1.0)
        .collect()
}

/// Every (source, target) candidate pair, then the per-target minimum by
/// (depth, source index).
pub fn brute_force_splat(fwd: &FlowField, zt: &[f64], tw: usize, th: usize) -> (Vec<Option<usize>>, FlowField) {
    let (sw, sh) = fwd.size();
    let mut best: HashMap<usize, (f64, usize)> = HashMap::new();
    for sy in 0..sh {
        for sx in 0..sw {
            let Some((u, v)) = fwd.get(sx, sy) else { continue };
            let src = sy * sw + sx;
            for b in cell(sy as f64 + v) {
                for a in cell(sx as f64 + u) {
                    if a < 0 || b < 0 || a >= tw as i64 || b >= th as i64 {
                        continue;
                    }
                    let t = b as usize * tw + a as usize;
                    let cand = (zt[src], src);
                    let e = best.entry(t).or_insert(cand);
                    if cand.0 < e.0 || (cand.0 == e.0 && cand.1 < e.1) {
                        *e = cand;
                    }
                }
            }
        }
    }
    let mut winner = vec![None; tw * th];
    let mut flow = FlowField::empty(tw, th, FlowDirection::Backward);
    for (&t, &(_, src)) in &best {
        winner[t] = Some(src);
        let (a, b) = (t % tw, t / tw);
        flow.set(a, b, (src % sw) as f64 - a as f64, (src / sw) as f64 - b as f64);
    }
    (winner, flow)
}

pub fn random_splat_instance(rng: &mut ChaCha8Rng) -> (FlowField, Vec<f64>, usize, usize) {
    let (sw, sh) = (rng.random_range(1..=16), rng.random_range(1..=16));
    let (tw, th) = (rng.random_range(1..=16), rng.random_range(1..=16));
    let n = sw * sh;
    let style = rng.random_range(0..4);
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut zt = vec![f64::INFINITY; n];
    for i in 0..n {
        if rng.random_bool(0.15) {
            continue;
        }
        valid[i] = true;
        let mut comp = || match style {
            0 => rng.random_range(-3..=3) as f64,
            1 => rng.random_range(-6..=6) as f64 * 0.5,
            2 => rng.random_range(-3..=3) as f64 + rng.random_range(-2e-6..2e-6),
            _ => rng.random_range(-4.0..4.0),
        };
        u[i] = comp();
        v[i] = comp();
        zt[i] = if rng.random_bool(0.5) {
            [1.0, 1.5, 2.0][rng.random_range(0..3)]
        } else {
            rng.random_range(0.5..3.0)
        };
    }
    let fwd = FlowField::from_parts(sw, sh, FlowDirection::Forward, u, v, valid).unwrap();
    (fwd, zt, tw, th)
}

pub fn same_bits(a: &FlowField, b: &FlowField) -> bool {
    a.valid() == b.valid()
        && a.u().iter().zip(b.u()).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.v().iter().zip(b.v()).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub fn set_close(m: &BinaryMask, r: usize) -> BinaryMask {
    let r = r as i64;
    let disc: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    let pts: HashSet<(i64, i64)> = (0..m.height())
        .flat_map(|y| (0..m.width()).map(move |x| (x, y)))
        .filter(|&(x, y)| m.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let dilated: HashSet<(i64, i64)> = pts
        .iter()
        .flat_map(|&(x, y)| disc.iter().map(move |&(dx, dy)| (x + dx, y + dy)))
        .collect();
    BinaryMask::from_fn(m.width(), m.height(), |x, y| {
        disc.iter()
            .all(|&(dx, dy)| dilated.contains(&(x as i64 + dx, y as i64 + dy)))
    })
}

pub fn naive_ssim(x: &RgbImage, y: &RgbImage) -> f64 {
    let (w, h) = x.size();
    let mut g = [[0.0; 11]; 11];
    let mut s = 0.0;
    for (j, row) in g.iter_mut().enumerate() {
        for (i, e) in row.iter_mut().enumerate() {
            let r2 = ((i as f64 - 5.0).powi(2) + (j as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5);
            *e = (-r2).exp();
            s += *e;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut total = 0.0;
    for c in 0..3 {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let px = |img: &RgbImage, i: usize, j: usize| img.pixel(x0 + i, y0 + j)[c];
                let (mut mx, mut my) = (0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        mx += g[j][i] / s * px(x, i, j);
                        my += g[j][i] / s * px(y, i, j);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for j in 0..11 {
                    for i in 0..11 {
                        let (dx, dy) = (px(x, i, j) - mx, px(y, i, j) - my);
                        vx += g[j][i] / s * dx * dx;
                        vy += g[j][i] / s * dy * dy;
                        cxy += g[j][i] / s * dx * dy;
                    }
                }
                sum += (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / 3.0
}

pub fn random_rgb(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RgbImage {
    RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap()
}
