//! Pixel grids, frame ingestion, and the resolution-degradation protocol:
//! nearest-neighbor downsample, bilinear upsample, and the 18-step ladder.
//!
//! Sampling uses the pixel-center convention `x_src = (i + 0.5) * W / W' - 0.5`
//! with edge clamping, so same-size resampling is an exact identity.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::Shape;

/// A rectangular grayscale image with row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// A pixel-grid size. Width and height are at least one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "resolution {width}x{height} has a zero dimension"
            )));
        }
        Ok(Resolution { width, height })
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// A ladder entry together with the resting lip height it produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionPoint {
    pub resolution: Resolution,
    pub resting_lip_height: f64,
}

impl Image {
    /// Builds an image, validating the type invariants.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "image {width}x{height} has a zero dimension"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidImage(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Constant image of the given intensity.
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> Resolution {
        Resolution {
            width: self.width,
            height: self.height,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    /// Bilinear sample at sub-pixel position; coordinates outside the sample
    /// grid clamp to the edge samples.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let (w, h) = (self.width as isize, self.height as isize);
        let x0 = x.floor() as isize;
        let y0 = y.floor() as isize;
        let tx = (x - x0 as f64) as f32;
        let ty = (y - y0 as f64) as f32;
        let cx0 = x0.clamp(0, w - 1) as usize;
        let cx1 = (x0 + 1).clamp(0, w - 1) as usize;
        let cy0 = y0.clamp(0, h - 1) as usize;
        let cy1 = (y0 + 1).clamp(0, h - 1) as usize;
        let v00 = self.get(cx0, cy0);
        let v10 = self.get(cx1, cy0);
        let v01 = self.get(cx0, cy1);
        let v11 = self.get(cx1, cy1);
        let top = v00 + (v10 - v00) * tx;
        let bot = v01 + (v11 - v01) * tx;
        top + (bot - top) * ty
    }
}

/// Maps output pixel index `i` to a source coordinate under the pixel-center
/// convention.
#[inline]
fn center_map(i: usize, src_len: usize, dst_len: usize) -> f64 {
    (i as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

/// Nearest source index for an output pixel; ties break toward the lower index.
#[inline]
fn nearest_index(i: usize, src_len: usize, dst_len: usize) -> usize {
    let x = center_map(i, src_len, dst_len);
    // round-half-down, then clamp into range
    let idx = (x - 0.5).ceil();
    idx.max(0.0).min((src_len - 1) as f64) as usize
}

/// Downsamples by nearest-neighbor sampling. Upscale requests are rejected.
pub fn downsample_nearest(img: &Image, target: Resolution) -> Result<Image> {
    if target.width > img.width || target.height > img.height {
        return Err(Error::Resample(format!(
            "nearest-neighbor downsample cannot upscale {} to {}",
            img.resolution(),
            target
        )));
    }
    let xs: Vec<usize> = (0..target.width)
        .map(|i| nearest_index(i, img.width, target.width))
        .collect();
    let mut data = Vec::with_capacity(target.width * target.height);
    for j in 0..target.height {
        let sy = nearest_index(j, img.height, target.height);
        let row = &img.data[sy * img.width..(sy + 1) * img.width];
        data.extend(xs.iter().map(|&sx| row[sx]));
    }
    Image::new(target.width, target.height, data)
}

/// Upsamples by bilinear interpolation. Downscale requests are rejected.
pub fn upsample_bilinear(img: &Image, target: Resolution) -> Result<Image> {
    if target.width < img.width || target.height < img.height {
        return Err(Error::Resample(format!(
            "bilinear upsample cannot downscale {} to {}",
            img.resolution(),
            target
        )));
    }
    if target == img.resolution() {
        return Ok(img.clone());
    }
    // Precompute the horizontal sample pairs once per column.
    let mut cols = Vec::with_capacity(target.width);
    for i in 0..target.width {
        let x = center_map(i, img.width, target.width);
        let x0 = x.floor() as isize;
        let t = (x - x0 as f64) as f32;
        let c0 = x0.clamp(0, img.width as isize - 1) as usize;
        let c1 = (x0 + 1).clamp(0, img.width as isize - 1) as usize;
        cols.push((c0, c1, t));
    }
    let mut data = Vec::with_capacity(target.width * target.height);
    for j in 0..target.height {
        let y = center_map(j, img.height, target.height);
        let y0 = y.floor() as isize;
        let ty = (y - y0 as f64) as f32;
        let r0 = y0.clamp(0, img.height as isize - 1) as usize;
        let r1 = (y0 + 1).clamp(0, img.height as isize - 1) as usize;
        let row0 = &img.data[r0 * img.width..(r0 + 1) * img.width];
        let row1 = &img.data[r1 * img.width..(r1 + 1) * img.width];
        for &(c0, c1, tx) in &cols {
            let top = row0[c0] + (row0[c1] - row0[c0]) * tx;
            let bot = row1[c0] + (row1[c1] - row1[c0]) * tx;
            data.push(top + (bot - top) * ty);
        }
    }
    Image::new(target.width, target.height, data)
}

/// Downsamples to `target` and restores the original size, simulating a
/// low-resolution recording shown at the native size. Dimensions never change.
pub fn degrade(img: &Image, target: Resolution) -> Result<Image> {
    let native = img.resolution();
    if target == native {
        return Ok(img.clone());
    }
    let small = downsample_nearest(img, target)?;
    upsample_bilinear(&small, native)
}

/// The fixed 18-entry resolution ladder, in the published row order.
pub fn resolution_ladder() -> Vec<Resolution> {
    const LADDER: [(usize, usize); 18] = [
        (1440, 1080),
        (960, 720),
        (720, 540),
        (360, 270),
        (240, 180),
        (180, 135),
        (144, 108),
        (120, 90),
        (90, 67),
        (80, 60),
        (72, 54),
        (65, 49),
        (69, 45),
        (55, 42),
        (51, 39),
        (48, 36),
        (45, 34),
        (42, 32),
    ];
    LADDER
        .iter()
        .map(|&(width, height)| Resolution { width, height })
        .collect()
}

/// Vertical extent of the closed lips, rescaled from native to target height.
///
/// `rest_shape` must be expressed in native-resolution pixel coordinates.
pub fn resting_lip_height(
    rest_shape: &Shape,
    lip_indices: &[usize],
    native: Resolution,
    target: Resolution,
) -> Result<f64> {
    if lip_indices.is_empty() {
        return Err(Error::Shape("empty lip-landmark set".into()));
    }
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for &i in lip_indices {
        let (_, y) = rest_shape
            .points()
            .get(i)
            .copied()
            .ok_or_else(|| Error::Shape(format!("lip landmark index {i} out of range")))?;
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    Ok((max_y - min_y) * target.height as f64 / native.height as f64)
}

// ---------------------------------------------------------------------------
// File ingestion
// ---------------------------------------------------------------------------

/// Matches a filename against a glob pattern supporting `*` and `?`.
fn glob_match(pattern: &str, name: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let n: Vec<char> = name.chars().collect();
    // DP over (pattern index, name index)
    let mut dp = vec![vec![false; n.len() + 1]; p.len() + 1];
    dp[0][0] = true;
    for i in 1..=p.len() {
        if p[i - 1] == '*' {
            dp[i][0] = dp[i - 1][0];
        }
    }
    for i in 1..=p.len() {
        for j in 1..=n.len() {
            dp[i][j] = match p[i - 1] {
                '*' => dp[i - 1][j] || dp[i][j - 1],
                '?' => dp[i - 1][j - 1],
                c => dp[i - 1][j - 1] && c == n[j - 1],
            };
        }
    }
    dp[p.len()][n.len()]
}

/// Loads all frames matching `pattern` in `dir`, in lexicographic filename
/// order. 8-bit samples map to `[0, 1]` by `v / 255`.
pub fn load_frames(dir: &Path, pattern: &str) -> Result<Vec<Image>> {
    let paths = list_frames(dir, pattern)?;
    paths.iter().map(|p| load_image(p)).collect()
}

/// Lists frame paths matching `pattern` in `dir`, lexicographically sorted.
pub fn list_frames(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(dir, e))?.is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if glob_match(pattern, &name) {
                names.push(name);
            }
        }
    }
    if names.is_empty() {
        return Err(Error::NoMatches {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    names.sort();
    Ok(names.iter().map(|n| dir.join(n)).collect())
}

/// Loads one PGM (binary P5) or PNG (8-bit grayscale or RGB) image.
pub fn load_image(path: &Path) -> Result<Image> {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "pgm" => load_pgm(path),
        "png" => load_png(path),
        other => Err(Error::BadImage {
            path: path.to_path_buf(),
            reason: format!("unsupported extension '{other}' (expected pgm or png)"),
        }),
    }
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::BadImage {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a binary (P5) PGM file with maxval up to 255.
pub fn load_pgm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(bad(path, "missing P5 magic"));
    }
    let mut pos = 2;
    // header tokens: width, height, maxval; '#' starts a comment to end of line
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(path, "truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = tok
            .parse()
            .map_err(|_| bad(path, format!("bad header token '{tok}'")))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad(path, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(bad(path, "zero dimension"));
    }
    // single whitespace byte separates header from raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad(path, "missing raster separator"));
    }
    pos += 1;
    let need = width * height;
    if bytes.len() - pos < need {
        return Err(bad(
            path,
            format!("raster truncated: need {need} bytes, have {}", bytes.len() - pos),
        ));
    }
    let data = bytes[pos..pos + need]
        .iter()
        .map(|&v| v as f32 / 255.0)
        .collect();
    Image::new(width, height, data)
}

/// Writes a binary (P5) PGM file with maxval 255. Intensities quantize by
/// round(v * 255).
pub fn save_pgm(img: &Image, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.width * img.height + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend(
        img.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an 8-bit grayscale or RGB PNG; RGB converts to luma
/// `0.299 R + 0.587 G + 0.114 B`.
pub fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| bad(path, e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let data: Vec<f32> = match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            img.into_raw().iter().map(|&v| v as f32 / 255.0).collect()
        }
        image::DynamicImage::ImageRgb8(img) => img
            .into_raw()
            .chunks_exact(3)
            .map(|px| {
                (0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32) / 255.0
            })
            .collect(),
        image::DynamicImage::ImageRgba8(img) => img
            .into_raw()
            .chunks_exact(4)
            .map(|px| {
                (0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32) / 255.0
            })
            .collect(),
        image::DynamicImage::ImageLumaA8(img) => img
            .into_raw()
            .chunks_exact(2)
            .map(|px| px[0] as f32 / 255.0)
            .collect(),
        _ => {
            return Err(bad(path, "only 8-bit grayscale or RGB PNG is supported"));
        }
    };
    Image::new(w, h, data)
}
