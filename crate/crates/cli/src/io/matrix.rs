use std::path::Path;

use ndarray::Array2;

use super::{read_file, write_atomic, IoError};

const MAGIC: &[u8; 4] = b"GSNM";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.csv` (any case) selects CSV, everything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

/// `"GSNM"`, version byte, rows and cols as little-endian u64, then the
/// entries row-major as little-endian f64.
pub fn encode_binary(matrix: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * matrix.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(matrix.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(matrix.ncols() as u64).to_le_bytes());
    for &x in matrix.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Array2<f64>, IoError> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(IoError::Header("missing GSNM magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(IoError::Header(format!("unsupported version {}", bytes[4])));
    }
    let rows = read_u64(&bytes[5..13]);
    let cols = read_u64(&bytes[13..21]);
    let len = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| IoError::Header(format!("shape {rows}×{cols} is too large")))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != len {
        return Err(IoError::Truncated {
            expected: len,
            found: payload.len(),
        });
    }
    let (rows, cols) = (rows as usize, cols as usize);
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(IoError::NonFinite {
            row: k / cols,
            col: k % cols,
        });
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| IoError::Shape(e.to_string()))
}

fn read_u64(bytes: &[u8]) -> u64 {
    u64::from_le_bytes(bytes.try_into().expect("slice of 8"))
}

/// Comma-separated rows. `f64`'s `Display` prints the shortest string that
/// parses back to the same value, so the text round trip is exact.
pub fn format_csv(matrix: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in matrix.rows() {
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

/// Parses comma-separated reals; blank lines are skipped and every row must
/// have the same number of cells.
pub fn parse_csv(text: &str) -> Result<Array2<f64>, IoError> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let cell = cell.trim();
            let x: f64 = cell.parse().map_err(|_| IoError::Parse {
                line: n + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !x.is_finite() {
                return Err(IoError::NonFinite {
                    row: rows,
                    col: values.len() - before,
                });
            }
            values.push(x);
        }
        let width = values.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(IoError::Shape(format!(
                    "line {} has {width} cells, expected {c}",
                    n + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| IoError::Shape("no rows".into()))?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| IoError::Shape(e.to_string()))
}

/// Detects the binary format by its magic bytes and falls back to CSV.
pub fn parse_matrix(bytes: &[u8]) -> Result<Array2<f64>, IoError> {
    if bytes.starts_with(MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| IoError::Header("neither GSNM nor UTF-8 text".into()))?;
        parse_csv(text)
    }
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>, IoError> {
    parse_matrix(&read_file(path)?)
}

pub fn save_matrix(matrix: &Array2<f64>, path: &Path, format: MatrixFormat) -> Result<(), IoError> {
    match format {
        MatrixFormat::Binary => write_atomic(path, &encode_binary(matrix)),
        MatrixFormat::Csv => write_atomic(path, format_csv(matrix).as_bytes()),
    }
}
