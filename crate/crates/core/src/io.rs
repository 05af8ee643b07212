//! File formats: Middlebury `.flo` flow, 16-bit depth PNG with a scale
//! sidecar, key=value camera files, and 8-bit mask and RGB PNGs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage as PngRgb};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::mask::BinaryMask;
use crate::raster::{DepthImage, FlowDirection, FlowField, RgbImage};

/// `202021.25f32` in little-endian: the ASCII bytes `PIEH`.
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";
/// Written for invalid pixels in both components.
pub const FLO_INVALID: f32 = 1e9;
/// On read, a component larger than this in magnitude marks the pixel invalid.
pub const FLO_INVALID_THRESHOLD: f32 = 1e8;
const FLO_HEADER: usize = 12;

pub const DEFAULT_DEPTH_SCALE: f64 = 1e-3;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Serialises a flow field in Middlebury layout.
pub fn encode_flow(f: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(FLO_HEADER + 8 * f.u().len());
    out.extend_from_slice(&FLO_MAGIC);
    out.extend_from_slice(&(f.width() as i32).to_le_bytes());
    out.extend_from_slice(&(f.height() as i32).to_le_bytes());
    for i in 0..f.u().len() {
        let (u, v) = if f.valid()[i] {
            (f.u()[i] as f32, f.v()[i] as f32)
        } else {
            (FLO_INVALID, FLO_INVALID)
        };
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses Middlebury bytes; `path` only labels errors. The direction is not
/// stored in the format and must be supplied.
pub fn decode_flow(bytes: &[u8], direction: FlowDirection, path: &Path) -> Result<FlowField> {
    let fail = |offset: usize, reason: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 4 {
        return Err(fail(bytes.len(), "file shorter than the magic number".into()));
    }
    if bytes[..4] != FLO_MAGIC {
        return Err(fail(0, format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes.len() < FLO_HEADER {
        return Err(fail(bytes.len(), "truncated header".into()));
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 {
        return Err(fail(4, format!("width {w} is not positive")));
    }
    if h <= 0 {
        return Err(fail(8, format!("height {h} is not positive")));
    }
    let (w, h) = (w as usize, h as usize);
    let payload = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| fail(4, format!("dimensions {w}x{h} overflow")))?;
    let expected = FLO_HEADER + payload;
    if bytes.len() < expected {
        return Err(fail(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(fail(expected, format!("{} trailing bytes", bytes.len() - expected)));
    }
    let n = w * h;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let off = FLO_HEADER + 8 * i;
        let fu = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let fv = f32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        if fu.is_nan() || fv.is_nan() {
            return Err(fail(off, "NaN flow component".into()));
        }
        if fu.abs() > FLO_INVALID_THRESHOLD || fv.abs() > FLO_INVALID_THRESHOLD {
            continue;
        }
        u[i] = fu as f64;
        v[i] = fv as f64;
        valid[i] = true;
    }
    FlowField::from_parts(w, h, direction, u, v, valid)
}

pub fn write_flow(path: impl AsRef<Path>, f: &FlowField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_flow(f))
}

pub fn read_flow(path: impl AsRef<Path>, direction: FlowDirection) -> Result<FlowField> {
    let path = path.as_ref();
    decode_flow(&read_bytes(path)?, direction, path)
}

/// Sidecar file holding the depth scale of `path`.
pub fn depth_meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Stores `round(depth / scale)` as 16-bit grey, 0 for background, and the
/// scale in `<path>.meta`.
pub fn write_depth(path: impl AsRef<Path>, d: &DepthImage, scale: f64) -> Result<()> {
    let path = path.as_ref();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("depth scale {scale} must be positive")));
    }
    let mut raw = Vec::with_capacity(d.data().len());
    for (i, &z) in d.data().iter().enumerate() {
        let q = (z / scale).round();
        if q > u16::MAX as f64 {
            return Err(Error::InvalidInput(format!(
                "depth {z} at index {i} exceeds the range of scale {scale}"
            )));
        }
        if z > 0.0 && q < 1.0 {
            return Err(Error::InvalidInput(format!(
                "depth {z} at index {i} quantises to background at scale {scale}"
            )));
        }
        raw.push(q as u16);
    }
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(d.width() as u32, d.height() as u32, raw).expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    write_bytes(&depth_meta_path(path), format!("depth_scale={scale}\n").as_bytes())
}

/// Reads the scale from `<path>.meta`, or [`DEFAULT_DEPTH_SCALE`] when the
/// sidecar is absent.
pub fn read_depth_scale(path: &Path) -> Result<f64> {
    let meta = depth_meta_path(path);
    let text = match fs::read_to_string(&meta) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(DEFAULT_DEPTH_SCALE),
        Err(e) => return Err(Error::io(meta, e)),
    };
    let pairs = parse_key_values(&text, &meta)?;
    let scale = pairs
        .iter()
        .find(|(k, _)| k == "depth_scale")
        .ok_or_else(|| Error::Validation {
            path: meta.clone(),
            reason: "missing depth_scale".into(),
        })?
        .1
        .parse::<f64>()
        .map_err(|e| Error::Validation {
            path: meta.clone(),
            reason: format!("depth_scale: {e}"),
        })?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Validation {
            path: meta,
            reason: format!("depth_scale {scale} must be positive"),
        });
    }
    Ok(scale)
}

pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthImage> {
    let path = path.as_ref();
    let scale = read_depth_scale(path)?;
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    if img.color() != image::ColorType::L16 {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            reason: format!("expected 16-bit greyscale depth, found {:?}", img.color()),
        });
    }
    let img = img.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().into_iter().map(|q| q as f64 * scale).collect();
    DepthImage::new(w, h, data)
}

/// 8-bit PNG, foreground 255.
pub fn write_mask(path: impl AsRef<Path>, m: &BinaryMask) -> Result<()> {
    let path = path.as_ref();
    let raw = m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(m.width() as u32, m.height() as u32, raw).expect("buffer matches dimensions");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit greyscale mask, found {:?}", img.color()),
        });
    }
    let img = img.into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut bits = Vec::with_capacity(w * h);
    for (i, &p) in img.as_raw().iter().enumerate() {
        match p {
            0 => bits.push(false),
            255 => bits.push(true),
            other => {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    reason: format!(
                        "mask value {other} at pixel ({}, {}) is neither 0 nor 255",
                        i % w,
                        i / w
                    ),
                })
            }
        }
    }
    BinaryMask::new(w, h, bits)
}

/// 8-bit RGB PNG; values are rounded and clamped to `0..=255`.
pub fn write_rgb(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    let path = path.as_ref();
    let buf =
        PngRgb::from_raw(img.width() as u32, img.height() as u32, img.to_u8()).expect("buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    if img.color() != image::ColorType::Rgb8 {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            reason: format!("expected 8-bit RGB, found {:?}", img.color()),
        });
    }
    let img = img.into_rgb8();
    RgbImage::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
}

fn parse_key_values(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Validation {
            path: path.to_path_buf(),
            reason: format!("line {}: expected key=value", n + 1),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// `key=value` lines: intrinsics, image size, and `extrinsic` as the twelve
/// row-major entries of the world-to-camera `[R | t]`.
pub fn encode_camera(k: &CameraIntrinsics, pose: &RigidTransform) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "fx={}", k.fx);
    let _ = writeln!(s, "fy={}", k.fy);
    let _ = writeln!(s, "cx={}", k.cx);
    let _ = writeln!(s, "cy={}", k.cy);
    let _ = writeln!(s, "width={}", k.width);
    let _ = writeln!(s, "height={}", k.height);
    let rows: Vec<String> = pose.to_rows().iter().map(|v| v.to_string()).collect();
    let _ = writeln!(s, "extrinsic={}", rows.join(" "));
    s
}

pub fn decode_camera(text: &str, path: &Path) -> Result<(CameraIntrinsics, RigidTransform)> {
    let invalid = |reason: String| Error::Validation {
        path: path.to_path_buf(),
        reason,
    };
    let pairs = parse_key_values(text, path)?;
    let get = |key: &str| -> Result<&str> {
        let mut found = pairs.iter().filter(|(k, _)| k == key);
        let first = found.next().ok_or_else(|| invalid(format!("missing key {key}")))?;
        if found.next().is_some() {
            return Err(invalid(format!("duplicate key {key}")));
        }
        Ok(first.1.as_str())
    };
    let num = |key: &str| -> Result<f64> { get(key)?.parse::<f64>().map_err(|e| invalid(format!("{key}: {e}"))) };
    let size = |key: &str| -> Result<usize> { get(key)?.parse::<usize>().map_err(|e| invalid(format!("{key}: {e}"))) };
    if let Some((k, _)) = pairs
        .iter()
        .find(|(k, _)| !["fx", "fy", "cx", "cy", "width", "height", "extrinsic"].contains(&k.as_str()))
    {
        return Err(invalid(format!("unknown key {k}")));
    }
    let k = CameraIntrinsics::new(
        num("fx")?,
        num("fy")?,
        num("cx")?,
        num("cy")?,
        size("width")?,
        size("height")?,
    )
    .map_err(|e| invalid(e.to_string()))?;
    let entries: Vec<f64> = get("extrinsic")?
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| invalid(format!("extrinsic: {e}"))))
        .collect::<Result<_>>()?;
    let rows: [f64; 12] = entries
        .try_into()
        .map_err(|v: Vec<f64>| invalid(format!("extrinsic has {} entries, expected 12", v.len())))?;
    let pose = RigidTransform::from_rows(&rows).map_err(|e| invalid(e.to_string()))?;
    Ok((k, pose))
}

pub fn write_camera(path: impl AsRef<Path>, k: &CameraIntrinsics, pose: &RigidTransform) -> Result<()> {
    write_bytes(path.as_ref(), encode_camera(k, pose).as_bytes())
}

pub fn read_camera(path: impl AsRef<Path>) -> Result<(CameraIntrinsics, RigidTransform)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_camera(&text, path)
}

/// Checks that companion rasters share the dimensions of `expected`.
pub fn check_companions(expected: (usize, usize), files: &[(&Path, (usize, usize))]) -> Result<()> {
    for &(path, size) in files {
        if size != expected {
            return Err(Error::Validation {
                path: path.to_path_buf(),
                reason: format!(
                    "dimensions {}x{} do not match companion files ({}x{})",
                    size.0, size.1, expected.0, expected.1
                ),
            });
        }
    }
    Ok(())
}

/// Source-view inputs loaded together and checked for consistent size.
#[derive(Debug, Clone)]
pub struct SourceFiles {
    pub rgb: RgbImage,
    pub depth: DepthImage,
    pub mask: BinaryMask,
}

pub fn read_source(rgb: &Path, depth: &Path, mask: &Path) -> Result<SourceFiles> {
    let files = SourceFiles {
        rgb: read_rgb(rgb)?,
        depth: read_depth(depth)?,
        mask: read_mask(mask)?,
    };
    check_companions(
        files.rgb.size(),
        &[(depth, files.depth.size()), (mask, files.mask.size())],
    )?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flo_golden_bytes() {
        let mut f = FlowField::empty(1, 1, FlowDirection::Backward);
        f.set(0, 0, 0.5, -0.25);
        let bytes = encode_flow(&f);
        let golden: [u8; 20] = [
            0x50, 0x49, 0x45, 0x48, 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x80, 0xbe,
        ];
        assert_eq!(bytes, golden);
        assert_eq!(f32::from_le_bytes(FLO_MAGIC), 202021.25);
    }

    #[test]
    fn flo_errors_carry_offsets() {
        let p = Path::new("x.flo");
        let offset = |r: Result<FlowField>| match r {
            Err(Error::Format { offset, .. }) => offset,
            other => panic!("expected format error, got {other:?}"),
        };
        assert_eq!(
            offset(decode_flow(b"PIEX\x01\0\0\0\x01\0\0\0", FlowDirection::Backward, p)),
            0
        );
        assert_eq!(offset(decode_flow(b"PIEH\x01\0\0", FlowDirection::Backward, p)), 7);
        let mut truncated = encode_flow(&FlowField::constant(2, 2, FlowDirection::Backward, 1.0, 1.0));
        truncated.truncate(30);
        assert_eq!(offset(decode_flow(&truncated, FlowDirection::Backward, p)), 30);
        let huge = [b"PIEH".as_slice(), &i32::MAX.to_le_bytes(), &i32::MAX.to_le_bytes()].concat();
        assert!(matches!(
            decode_flow(&huge, FlowDirection::Backward, p),
            Err(Error::Format { .. })
        ));
        let neg = [b"PIEH".as_slice(), &(-3i32).to_le_bytes(), &1i32.to_le_bytes()].concat();
        assert_eq!(offset(decode_flow(&neg, FlowDirection::Backward, p)), 4);
    }

    #[test]
    fn depth_round_trip_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let d = DepthImage::new(3, 1, vec![0.0, 2.0, 3.27183]).unwrap();
        write_depth(&path, &d, 1e-3).unwrap();
        let raw = image::open(&path).unwrap().into_luma16().into_raw();
        assert_eq!(raw, vec![0, 2000, 3272]);
        let back = read_depth(&path).unwrap();
        for (a, b) in back.data().iter().zip(d.data()) {
            assert!((a - b).abs() <= 0.5e-3 + 1e-12);
        }
        // Missing sidecar falls back to the default scale.
        fs::remove_file(depth_meta_path(&path)).unwrap();
        assert_eq!(read_depth(&path).unwrap().get(1, 0), 2.0);
        assert!(write_depth(&path, &DepthImage::new(1, 1, vec![100.0]).unwrap(), 1e-3).is_err());
    }

    #[test]
    fn camera_round_trip_and_validation() {
        let k = CameraIntrinsics::new(250.0, 251.5, 100.0, 99.25, 200, 180).unwrap();
        let pose = RigidTransform::from_axis_angle(nalgebra::Vector3::new(0.3, 1.0, -0.2), 0.7)
            .unwrap()
            .then(&RigidTransform::from_translation(nalgebra::Vector3::new(
                0.1, -2.0, 3.5,
            )));
        let p = Path::new("cam.txt");
        let (k2, pose2) = decode_camera(&encode_camera(&k, &pose), p).unwrap();
        assert_eq!(k2, k);
        assert_eq!(pose2.to_rows(), pose.to_rows());

        let (_, id) = decode_camera(&encode_camera(&k, &RigidTransform::identity()), p).unwrap();
        assert_eq!(id, RigidTransform::identity());

        let bad = encode_camera(&k, &RigidTransform::identity()).replace("extrinsic=1 ", "extrinsic=2 ");
        assert!(matches!(decode_camera(&bad, p), Err(Error::Validation { .. })));
        let missing = "fx=1\nfy=1\ncx=0\ncy=0\nwidth=1\nheight=1\n";
        assert!(matches!(decode_camera(missing, p), Err(Error::Validation { .. })));
    }

    #[test]
    fn mask_and_rgb_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = BinaryMask::from_fn(5, 4, |x, y| (x + y) % 3 == 0);
        let mp = dir.path().join("m.png");
        write_mask(&mp, &m).unwrap();
        assert_eq!(read_mask(&mp).unwrap(), m);

        let bytes: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = RgbImage::from_u8(5, 4, &bytes).unwrap();
        let rp = dir.path().join("c.png");
        write_rgb(&rp, &img).unwrap();
        assert_eq!(read_rgb(&rp).unwrap(), img);

        let grey = GrayImage::from_raw(2, 1, vec![0, 128]).unwrap();
        grey.save(&mp).unwrap();
        assert!(matches!(read_mask(&mp), Err(Error::Validation { .. })));
    }

    #[test]
    fn companion_dimensions_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let (rp, dp, mp) = (
            dir.path().join("c.png"),
            dir.path().join("d.png"),
            dir.path().join("m.png"),
        );
        write_rgb(&rp, &RgbImage::filled(4, 4, [1.0; 3])).unwrap();
        write_depth(&dp, &DepthImage::zeros(4, 4), 1e-3).unwrap();
        write_mask(&mp, &BinaryMask::filled(4, 3, false)).unwrap();
        assert!(matches!(read_source(&rp, &dp, &mp), Err(Error::Validation { .. })));
        write_mask(&mp, &BinaryMask::filled(4, 4, false)).unwrap();
        assert!(read_source(&rp, &dp, &mp).is_ok());
    }

    proptest! {
        #[test]
        fn flo_round_trip(
            w in 1usize..6, h in 1usize..6,
            vals in proptest::collection::vec((-1e4f32..1e4, -1e4f32..1e4, any::<bool>()), 36),
        ) {
            let n = w * h;
            let u = vals[..n].iter().map(|t| t.0 as f64).collect();
            let v = vals[..n].iter().map(|t| t.1 as f64).collect();
            let valid = vals[..n].iter().map(|t| t.2).collect();
            let f = FlowField::from_parts(w, h, FlowDirection::Forward, u, v, valid).unwrap();
            let back = decode_flow(&encode_flow(&f), FlowDirection::Forward, Path::new("p")).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
