//! File formats: matrices (CSV or binary), model archives, label lists and
//! grayscale PGM images.

mod archive;
mod image;
mod matrix;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use archive::{
    decode_archive, encode_archive, load_archive, save_archive, ModelArchive, RestartTrace,
};
pub use image::{
    apply_mask, downsample, encode_pgm, export_heatmap, histogram_equalize, load_pgm, parse_pgm,
    render_heatmap, save_pgm, vectorize_images, GrayImage, HeatmapStyle,
};
pub use matrix::{
    decode_binary, encode_binary, format_csv, load_matrix, parse_csv, parse_matrix, save_matrix,
    MatrixFormat,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] gsnmf::ModelError),
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io_err = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Parses 1-based integer labels separated by commas or whitespace into
/// 0-based labels.
pub fn parse_labels(text: &str) -> Result<Vec<usize>, IoError> {
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        for token in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let value: usize = token.parse().map_err(|_| IoError::Parse {
                line: n + 1,
                message: format!("label {token:?} is not a positive integer"),
            })?;
            if value == 0 {
                return Err(IoError::Parse {
                    line: n + 1,
                    message: "labels are 1-based".into(),
                });
            }
            labels.push(value - 1);
        }
    }
    if labels.is_empty() {
        return Err(IoError::Parse {
            line: 1,
            message: "no labels".into(),
        });
    }
    Ok(labels)
}

/// One 1-based label per line.
pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for &l in labels {
        out.push_str(&(l + 1).to_string());
        out.push('\n');
    }
    out
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>, IoError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| IoError::Parse {
        line: 1,
        message: "not UTF-8".into(),
    })?;
    parse_labels(&text)
}

pub fn save_labels(labels: &[usize], path: &Path) -> Result<(), IoError> {
    write_atomic(path, format_labels(labels).as_bytes())
}
