//! Dense per-pixel containers: depth maps, colour images and flow fields.
//!
//! All containers are row-major with pixel `(x, y)` at index `y * width + x`.
//! Pixel coordinates address pixel centres: `x` grows rightward, `y` grows
//! downward, and `(0, 0)` is the centre of the top-left pixel.

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

/// Per-pixel depth in world units. `0` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "depth buffer has {} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth at index {bad} is {} (must be finite and >= 0)",
                data[bad]
            )));
        }
        Ok(DepthImage { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sets one pixel. Negative or non-finite values are rejected.
    pub fn set(&mut self, x: usize, y: usize, depth: f64) -> Result<()> {
        if !depth.is_finite() || depth < 0.0 {
            return Err(Error::InvalidInput(format!("depth {depth} at ({x}, {y})")));
        }
        self.data[y * self.width + x] = depth;
        Ok(())
    }

    /// Foreground support: pixels with positive depth.
    pub fn support(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y) > 0.0)
    }

    /// Zeroes every pixel outside `mask`. The mask is authoritative over the
    /// raw depth values.
    pub fn masked(&self, mask: &BinaryMask) -> Result<DepthImage> {
        crate::error::ensure_same_size(self.size(), mask.size())?;
        let data = self
            .data
            .iter()
            .zip(mask.bits())
            .map(|(&d, &m)| if m { d } else { 0.0 })
            .collect();
        Ok(DepthImage {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Three-channel colour image with channel values in 8-bit intensity units
/// (`0.0..=255.0`), stored interleaved as floats so that resampling stays
/// linear in intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "rgb buffer has {} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        RgbImage { width, height, data }
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        RgbImage::new(width, height, bytes.iter().map(|&b| b as f64).collect())
    }

    /// Rounds and clamps every channel to `0..=255`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&c| c.round().clamp(0.0, 255.0) as u8).collect()
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Registered to the source image; points at target coordinates.
    Forward,
    /// Registered to the target image; points at source sampling coordinates.
    Backward,
}

/// Two-channel per-pixel displacement in pixels, with a validity mask.
///
/// Invalid pixels always hold a zero displacement, so metrics that read a
/// prediction at a pixel it does not cover see "no motion".
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    direction: FlowDirection,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl FlowField {
    /// An all-invalid field.
    pub fn empty(width: usize, height: usize, direction: FlowDirection) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            direction,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    /// Constant displacement `(u, v)` at every pixel, all valid.
    pub fn constant(width: usize, height: usize, direction: FlowDirection, u: f64, v: f64) -> Self {
        let n = width * height;
        FlowField {
            width,
            height,
            direction,
            u: vec![u; n],
            v: vec![v; n],
            valid: vec![true; n],
        }
    }

    pub fn from_parts(
        width: usize,
        height: usize,
        direction: FlowDirection,
        u: Vec<f64>,
        v: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if u.len() != n || v.len() != n || valid.len() != n {
            return Err(Error::InvalidInput(format!(
                "flow channels have lengths {}/{}/{} for a {width}x{height} field",
                u.len(),
                v.len(),
                valid.len()
            )));
        }
        let mut field = FlowField {
            width,
            height,
            direction,
            u,
            v,
            valid,
        };
        for i in 0..n {
            if field.valid[i] {
                if !field.u[i].is_finite() || !field.v[i].is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite flow at valid index {i}")));
                }
            } else {
                field.u[i] = 0.0;
                field.v[i] = 0.0;
            }
        }
        Ok(field)
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

    pub fn direction(&self) -> FlowDirection {
        self.direction
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Displacement at `(x, y)`, or `None` when the pixel is invalid.
    pub fn get(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let i = y * self.width + x;
        self.valid[i].then(|| (self.u[i], self.v[i]))
    }

    /// Marks `(x, y)` valid with displacement `(u, v)`.
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        debug_assert!(u.is_finite() && v.is_finite());
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
        self.valid[i] = true;
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.u[i] = 0.0;
        self.v[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_mask(&self) -> BinaryMask {
        BinaryMask::new(self.width, self.height, self.valid.clone()).expect("validity has one entry per pixel")
    }

    /// Copy with every pixel outside `mask` invalidated.
    pub fn restricted_to(&self, mask: &BinaryMask) -> Result<FlowField> {
        crate::error::ensure_same_size(self.size(), mask.size())?;
        let mut out = self.clone();
        for (i, &m) in mask.bits().iter().enumerate() {
            if !m {
                out.u[i] = 0.0;
                out.v[i] = 0.0;
                out.valid[i] = false;
            }
        }
        Ok(out)
    }
}
