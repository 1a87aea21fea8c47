use std::path::Path;

use gsnmf::DataMatrix;
use ndarray::{Array2, ArrayView2};

use super::{read_file, write_atomic, IoError};

/// Grayscale image, `height × width`, integer intensities in `0..=maxval`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub pixels: Array2<f64>,
    pub maxval: u16,
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0b' | b'\x0c')
}

/// Cursor over the header tokens of a PGM file, skipping `#` comments.
struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Tokens<'_> {
    fn next(&mut self) -> Result<&str, IoError> {
        loop {
            while self.pos < self.bytes.len() && is_space(self.bytes[self.pos]) {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !is_space(self.bytes[self.pos])
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IoError::Truncated {
                expected: self.pos + 1,
                found: self.bytes.len(),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| IoError::Header("non-ASCII header".into()))
    }

    fn number(&mut self, what: &str) -> Result<u64, IoError> {
        let token = self.next()?;
        token
            .parse()
            .map_err(|_| IoError::Header(format!("{what} {token:?} is not a number")))
    }
}

/// Reads a binary (`P5`) or ASCII (`P2`) PGM.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, IoError> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(IoError::Unsupported("expected a P2 or P5 PGM".into())),
    };
    let mut tokens = Tokens { bytes, pos: 2 };
    let width = tokens.number("width")? as usize;
    let height = tokens.number("height")? as usize;
    let maxval = tokens.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(IoError::Header(format!(
            "maxval {maxval} outside 1..=65535"
        )));
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| IoError::Header(format!("size {width}×{height} is too large")))?;
    let mut values = Vec::with_capacity(count.min(1 << 24));
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tokens.pos + 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let expected = count.saturating_mul(depth).saturating_add(start);
        if bytes.len() < expected {
            return Err(IoError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let raster = &bytes[start..expected];
        if depth == 1 {
            values.extend(raster.iter().map(|&b| b as u64));
        } else {
            values.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as u64),
            );
        }
    } else {
        for _ in 0..count {
            values.push(tokens.number("pixel")?);
        }
    }
    if let Some(v) = values.iter().find(|&&v| v > maxval) {
        return Err(IoError::Header(format!(
            "pixel value {v} exceeds maxval {maxval}"
        )));
    }
    let pixels = Array2::from_shape_vec(
        (height, width),
        values.into_iter().map(|v| v as f64).collect(),
    )
    .map_err(|e| IoError::Shape(e.to_string()))?;
    Ok(GrayImage {
        pixels,
        maxval: maxval as u16,
    })
}

pub fn load_pgm(path: &Path) -> Result<GrayImage, IoError> {
    parse_pgm(&read_file(path)?)
}

fn levels(image: &GrayImage) -> Result<Vec<u16>, IoError> {
    let maxval = image.maxval as f64;
    image
        .pixels
        .indexed_iter()
        .map(|((row, col), &p)| {
            if p >= 0.0 && p <= maxval && p.fract() == 0.0 {
                Ok(p as u16)
            } else {
                Err(IoError::Shape(format!(
                    "pixel ({row}, {col}) = {p} is not an integer in 0..={maxval}"
                )))
            }
        })
        .collect()
}

/// Binary PGM (`P5`); two bytes per pixel when `maxval > 255`.
pub fn encode_pgm(image: &GrayImage) -> Result<Vec<u8>, IoError> {
    let levels = levels(image)?;
    let (height, width) = image.pixels.dim();
    let mut out = format!("P5\n{width} {height}\n{}\n", image.maxval).into_bytes();
    for l in levels {
        if image.maxval < 256 {
            out.push(l as u8);
        } else {
            out.extend_from_slice(&l.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn save_pgm(image: &GrayImage, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_pgm(image)?)
}

/// Global histogram equalization: level `k` maps to `⌈cdf(k)·maxval⌉`,
/// where `cdf(k)` is the fraction of pixels at or below `k`. A constant
/// image therefore maps to `maxval`.
pub fn histogram_equalize(image: &GrayImage) -> Result<GrayImage, IoError> {
    let levels = levels(image)?;
    let n = levels.len() as u64;
    if n == 0 {
        return Ok(image.clone());
    }
    let mut histogram = vec![0u64; image.maxval as usize + 1];
    for &l in &levels {
        histogram[l as usize] += 1;
    }
    let maxval = image.maxval as u64;
    let mut cumulative = 0;
    let map: Vec<f64> = histogram
        .iter()
        .map(|&h| {
            cumulative += h;
            (cumulative * maxval).div_ceil(n) as f64
        })
        .collect();
    let pixels = Array2::from_shape_vec(
        image.pixels.dim(),
        levels.iter().map(|&l| map[l as usize]).collect(),
    )
    .map_err(|e| IoError::Shape(e.to_string()))?;
    Ok(GrayImage {
        pixels,
        maxval: image.maxval,
    })
}

/// One image per column, pixels in column-major scan order.
pub fn vectorize_images(images: &[ArrayView2<f64>]) -> Result<DataMatrix, IoError> {
    let first = images
        .first()
        .ok_or_else(|| IoError::Shape("no images".into()))?;
    let shape = first.dim();
    let mut data = Array2::zeros((shape.0 * shape.1, images.len()));
    for (k, image) in images.iter().enumerate() {
        if image.dim() != shape {
            return Err(IoError::Shape(format!(
                "image {k} is {:?}, expected {shape:?}",
                image.dim()
            )));
        }
        for (out, &p) in data.column_mut(k).iter_mut().zip(image.t().iter()) {
            *out = p;
        }
    }
    Ok(DataMatrix::new(data)?)
}

/// Drops the rows of vectorized images where the mask (same scan order as
/// [`vectorize_images`]) is zero.
pub fn apply_mask(data: &DataMatrix, mask: ArrayView2<f64>) -> Result<DataMatrix, IoError> {
    if mask.len() != data.rows() {
        return Err(IoError::Shape(format!(
            "mask has {} pixels, data has {} rows",
            mask.len(),
            data.rows()
        )));
    }
    let keep: Vec<usize> = mask
        .t()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m != 0.0)
        .map(|(k, _)| k)
        .collect();
    if keep.is_empty() {
        return Err(IoError::Shape("mask removes every pixel".into()));
    }
    Ok(DataMatrix::new(
        data.values().select(ndarray::Axis(0), &keep),
    )?)
}

/// Box-filter resampling by `factor` in (0, 1]: each output pixel is the
/// area-weighted mean of the input pixels its footprint covers. For
/// `factor = 1/k` with `k` dividing the size this is plain `k × k` block
/// averaging.
pub fn downsample(image: ArrayView2<f64>, factor: f64) -> Result<Array2<f64>, IoError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(IoError::Unsupported(format!(
            "downsampling factor {factor} outside (0, 1]"
        )));
    }
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(IoError::Shape("empty image".into()));
    }
    let rows = box_weights(h, factor);
    let cols = box_weights(w, factor);
    Ok(rows.dot(&image).dot(&cols.t()))
}

/// `out × n` averaging weights for resampling `n` cells to `round(n·factor)`.
fn box_weights(n: usize, factor: f64) -> Array2<f64> {
    let out = ((n as f64 * factor).round() as usize).max(1);
    let step = n as f64 / out as f64;
    Array2::from_shape_fn((out, n), |(o, k)| {
        let (lo, hi) = (o as f64 * step, (o + 1) as f64 * step);
        let overlap = hi.min(k as f64 + 1.0) - lo.max(k as f64);
        overlap.max(0.0) / step
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapStyle {
    /// Shade proportional to magnitude: white for zero, black for the largest.
    Magnitude,
    /// Black square on white whose side is proportional to √magnitude.
    Hinton,
}

/// Renders each matrix entry as a `cell_px × cell_px` block, magnitudes
/// scaled by the largest absolute entry.
pub fn render_heatmap(
    matrix: ArrayView2<f64>,
    style: HeatmapStyle,
    cell_px: usize,
) -> Result<GrayImage, IoError> {
    if cell_px == 0 {
        return Err(IoError::Unsupported("cell size must be positive".into()));
    }
    if let Some(((row, col), _)) = matrix.indexed_iter().find(|(_, x)| !x.is_finite()) {
        return Err(IoError::NonFinite { row, col });
    }
    let scale = matrix.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (rows, cols) = matrix.dim();
    let mut pixels = Array2::from_elem((rows * cell_px, cols * cell_px), 255.0);
    if scale == 0.0 {
        return Ok(GrayImage {
            pixels,
            maxval: 255,
        });
    }
    for ((r, c), &x) in matrix.indexed_iter() {
        let magnitude = x.abs() / scale;
        let (shade, side) = match style {
            HeatmapStyle::Magnitude => ((255.0 * (1.0 - magnitude)).round(), cell_px),
            HeatmapStyle::Hinton => (0.0, (cell_px as f64 * magnitude.sqrt()).round() as usize),
        };
        let offset = (cell_px - side) / 2;
        let (top, left) = (r * cell_px + offset, c * cell_px + offset);
        pixels
            .slice_mut(ndarray::s![top..top + side, left..left + side])
            .fill(shade);
    }
    Ok(GrayImage {
        pixels,
        maxval: 255,
    })
}

pub fn export_heatmap(
    matrix: ArrayView2<f64>,
    path: &Path,
    style: HeatmapStyle,
    cell_px: usize,
) -> Result<(), IoError> {
    save_pgm(&render_heatmap(matrix, style, cell_px)?, path)
}
