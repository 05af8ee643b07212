//! Binary silhouettes and the mask algebra used to assemble the target
//! silhouette: transformed mask, residual mask, closing and final union.

use crate::error::{ensure_same_size, Error, Result};
use crate::splat::TransformedFlow;

/// Per-pixel foreground flag, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask has {} bits for a {width}x{height} image",
                bits.len()
            )));
        }
        Ok(BinaryMask { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        BinaryMask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    /// `self ∧ ¬other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && !b)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.size() == other.size() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        ensure_same_size(self.size(), other.size())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Mirror about a vertical line, mapping pixel `x` to `pivot_x2 - x`
    /// (`pivot_x2` is twice the line's x coordinate, so half-pixel lines are
    /// representable). Pixels that map outside the image become background.
    pub fn mirrored_about(&self, pivot_x2: i64) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            let sx = pivot_x2 - x as i64;
            sx >= 0 && (sx as usize) < self.width && self.get(sx as usize, y)
        })
    }
}

/// Foreground exactly where the transformed flow received a splat.
pub fn transformed_mask(tflow: &TransformedFlow) -> BinaryMask {
    tflow.flow.valid_mask()
}

/// `M_R = M_tgt ∧ ¬M_tran`.
pub fn residual_mask(m_tgt: &BinaryMask, m_tran: &BinaryMask) -> Result<BinaryMask> {
    m_tgt.and_not(m_tran)
}

/// `M_final = M_pred ∨ M_tran`.
pub fn compose_final_mask(m_pred: &BinaryMask, m_tran: &BinaryMask) -> Result<BinaryMask> {
    m_pred.or(m_tran)
}

/// Integer offsets `(dx, dy)` with `dx² + dy² <= radius²`.
pub fn disc_offsets(radius: usize) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Dilation by a disc. Pixels outside the image count as background.
pub fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    let (w, h) = (m.width as i64, m.height as i64);
    let disc = disc_offsets(radius);
    let mut out = BinaryMask::filled(m.width, m.height, false);
    for y in 0..h {
        for x in 0..w {
            if !m.get(x as usize, y as usize) {
                continue;
            }
            for &(dx, dy) in &disc {
                let (nx, ny) = (x + dx, y + dy);
                if nx >= 0 && ny >= 0 && nx < w && ny < h {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
    }
    out
}

/// Erosion by a disc. Pixels outside the image count as background.
pub fn erode(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    let (w, h) = (m.width as i64, m.height as i64);
    let disc = disc_offsets(radius);
    BinaryMask::from_fn(m.width, m.height, |x, y| {
        disc.iter().all(|&(dx, dy)| {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            nx >= 0 && ny >= 0 && nx < w && ny < h && m.get(nx as usize, ny as usize)
        })
    })
}

/// Closing by a disc, computed as if the mask lay on an unbounded background
/// plane: the mask is padded by `radius` on every side, closed, and cropped.
/// Shapes near the border are therefore not joined to it.
pub fn morphological_close(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return m.clone();
    }
    let (pw, ph) = (m.width + 2 * radius, m.height + 2 * radius);
    let padded = BinaryMask::from_fn(pw, ph, |x, y| {
        x >= radius && y >= radius && x < m.width + radius && y < m.height + radius && m.get(x - radius, y - radius)
    });
    let closed = erode(&dilate(&padded, radius), radius);
    BinaryMask::from_fn(m.width, m.height, |x, y| closed.get(x + radius, y + radius))
}

/// Residual pixels that closing the transformed mask would add: the small
/// gaps and cracks left by splatting.
pub fn standin_predict_residual(m_tran: &BinaryMask, close_radius: usize) -> BinaryMask {
    morphological_close(m_tran, close_radius)
        .and_not(m_tran)
        .expect("closing preserves dimensions")
}

/// Closing radius for an image of the given width, 3 px at 200 px.
pub fn default_close_radius(width: usize) -> usize {
    (3.0 * width as f64 / 200.0).round() as usize
}

/// Slot for a residual-mask predictor. A learned model can replace the
/// closing-based default.
pub trait MaskPredictor {
    /// Predicts the residual mask: target foreground not covered by `m_tran`.
    fn predict_residual(&self, m_tran: &BinaryMask, tflow: &TransformedFlow) -> Result<BinaryMask>;
}

/// Residual mask from morphological closing of the transformed mask.
#[derive(Debug, Clone, Copy)]
pub struct ClosingPredictor {
    pub radius: usize,
}

impl MaskPredictor for ClosingPredictor {
    fn predict_residual(&self, m_tran: &BinaryMask, _tflow: &TransformedFlow) -> Result<BinaryMask> {
        Ok(standin_predict_residual(m_tran, self.radius))
    }
}

/// Predicts nothing: the final mask is the transformed mask.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoResidual;

impl MaskPredictor for NoResidual {
    fn predict_residual(&self, m_tran: &BinaryMask, _tflow: &TransformedFlow) -> Result<BinaryMask> {
        Ok(BinaryMask::filled(m_tran.width(), m_tran.height(), false))
    }
}
