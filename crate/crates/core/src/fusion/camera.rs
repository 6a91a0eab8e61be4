use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense H×W×C image of `f64`, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be ≥ 1"));
        }
        if data.len() != width * height * channels {
            return Err(Error::Dimension(format!(
                "image {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let o = (row * self.width + col) * self.channels;
        &self.data[o..o + self.channels]
    }
}

/// One calibrated RGB-D viewpoint with its per-pixel feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub intrinsics: [[f64; 3]; 3],
    /// Camera-from-world.
    pub extrinsic: [[f64; 4]; 4],
    pub width: usize,
    pub height: usize,
    /// Meters; 0 marks an invalid reading.
    pub depth: Image,
    pub features: Image,
    pub mask: Option<Image>,
}

impl CameraView {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsic: [[f64; 4]; 4],
        depth: Image,
        features: Image,
        mask: Option<Image>,
    ) -> Result<Self> {
        if (intrinsics[2][2] - 1.0).abs() > 1e-12 || intrinsics[2][0] != 0.0 || intrinsics[2][1] != 0.0 {
            return Err(Error::invalid("intrinsics last row must be (0, 0, 1)"));
        }
        if depth.channels != 1 {
            return Err(Error::invalid("depth image must have one channel"));
        }
        if depth.data.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(Error::invalid("depth values must be finite and ≥ 0"));
        }
        let (w, h) = (depth.width, depth.height);
        if features.width != w || features.height != h {
            return Err(Error::Dimension(format!(
                "feature map {}x{} does not match depth {}x{}",
                features.width, features.height, w, h
            )));
        }
        if let Some(m) = &mask {
            if m.width != w || m.height != h {
                return Err(Error::Dimension("mask size does not match depth".into()));
            }
        }
        Ok(Self {
            intrinsics,
            extrinsic,
            width: w,
            height: h,
            depth,
            features,
            mask,
        })
    }
}

/// JSON camera descriptor; image paths are relative to the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub intrinsics: Vec<f64>,
    pub extrinsic: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub depth_file: String,
    pub feature_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<CameraView> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cf: CameraFile = serde_json::from_str(&text)?;
    if cf.intrinsics.len() != 9 || cf.extrinsic.len() != 16 {
        return Err(Error::invalid(format!(
            "{}: intrinsics needs 9 values and extrinsic 16",
            path.display()
        )));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolve = |p: &str| -> PathBuf { base.join(p) };
    let depth = load_pgm16(resolve(&cf.depth_file))?;
    let features = load_feature_image(resolve(&cf.feature_file))?;
    let mask = cf
        .mask_file
        .as_deref()
        .map(|m| load_feature_image(resolve(m)))
        .transpose()?;
    if depth.width != cf.width || depth.height != cf.height {
        return Err(Error::Dimension(format!(
            "{}: depth image is {}x{}, camera declares {}x{}",
            path.display(),
            depth.width,
            depth.height,
            cf.width,
            cf.height
        )));
    }
    let mut k = [[0.0; 3]; 3];
    for (i, v) in cf.intrinsics.iter().enumerate() {
        k[i / 3][i % 3] = *v;
    }
    let mut e = [[0.0; 4]; 4];
    for (i, v) in cf.extrinsic.iter().enumerate() {
        e[i / 4][i % 4] = *v;
    }
    CameraView::new(k, e, depth, features, mask)
}

/// Writes `<stem>.json`, `<stem>_depth.pgm`, `<stem>_feat.bin` (and `<stem>_mask.bin`).
pub fn save_camera(view: &CameraView, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let depth_file = format!("{stem}_depth.pgm");
    let feature_file = format!("{stem}_feat.bin");
    save_pgm16(&view.depth, dir.join(&depth_file))?;
    save_feature_image(&view.features, dir.join(&feature_file))?;
    let mask_file = match &view.mask {
        Some(m) => {
            let f = format!("{stem}_mask.bin");
            save_feature_image(m, dir.join(&f))?;
            Some(f)
        }
        None => None,
    };
    let cf = CameraFile {
        intrinsics: view.intrinsics.iter().flatten().copied().collect(),
        extrinsic: view.extrinsic.iter().flatten().copied().collect(),
        width: view.width,
        height: view.height,
        depth_file,
        feature_file,
        mask_file,
    };
    let path = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&cf)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads a binary 16-bit PGM (P5) holding millimeters; returns meters.
pub fn load_pgm16(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace after maxval
    if tokens[0] != "P5" {
        return Err(bad("expected binary PGM (P5)"));
    }
    let w: usize = tokens[1].parse().map_err(|_| bad("bad width"))?;
    let h: usize = tokens[2].parse().map_err(|_| bad("bad height"))?;
    let maxval: usize = tokens[3].parse().map_err(|_| bad("bad maxval"))?;
    if maxval < 256 {
        return Err(bad("depth PGM must be 16-bit (maxval ≥ 256)"));
    }
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < w * h * 2 {
        return Err(bad("truncated PGM body"));
    }
    let data = body
        .chunks_exact(2)
        .take(w * h)
        .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 1000.0)
        .collect();
    Image::new(w, h, 1, data)
}

pub fn save_pgm16(depth: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n65535\n", depth.width, depth.height).into_bytes();
    for d in &depth.data {
        let mm = (d * 1000.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&mm.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `feat <H> <W> <C>\n` followed by little-endian `f32` values.
pub fn load_feature_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg,
    };
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header = String::from_utf8_lossy(&bytes[..nl]);
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 4 || f[0] != "feat" {
        return Err(bad(format!("malformed header `{header}`")));
    }
    let dims: Vec<usize> = f[1..]
        .iter()
        .map(|s| s.parse().map_err(|_| bad(format!("bad dimension `{s}`"))))
        .collect::<Result<_>>()?;
    let (h, w, c) = (dims[0], dims[1], dims[2]);
    let body = &bytes[nl + 1..];
    if body.len() != h * w * c * 4 {
        return Err(bad(format!(
            "expected {} bytes of data, found {}",
            h * w * c * 4,
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite feature value".into()));
    }
    Image::new(w, h, c, data)
}

pub fn save_feature_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = format!("feat {} {} {}\n", img.height, img.width, img.channels).into_bytes();
    out.reserve(img.data.len() * 4);
    for v in &img.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    f.write_all(&out).map_err(|e| Error::io(path, e))
}
