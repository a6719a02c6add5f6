//! Binary PGM (P5) rasters for label images and domain masks.
//!
//! Image rows run top to bottom, grid rows bottom to top: row `r` of the
//! image holds grid row `ny - 1 - r`.

use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::cli::report::write_atomic;
use crate::grid::{Grid, GridError, Labels};
use crate::optimizer::{Domain, OptimizerError};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: not a binary 8-bit PGM ({reason})")]
    Format { path: PathBuf, reason: String },
    #[error("label image must be square, got {width}x{height}")]
    NotSquare { width: usize, height: usize },
    #[error("label image has black (masked) pixels but the domain is periodic")]
    MaskedPeriodic,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Domain(#[from] OptimizerError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    /// Top row first.
    pub pixels: Vec<u8>,
}

/// `round(255 i / n)` for label `i` of `n`; 0 for masked nodes.
pub fn gray_level(label: u32, n: u32) -> u8 {
    if label == 0 || n == 0 {
        0
    } else {
        (255.0 * label as f64 / n as f64).round() as u8
    }
}

impl Pgm {
    pub fn from_labels(labels: &Labels) -> Pgm {
        let g = labels.grid();
        let n = labels.max_label();
        let mut pixels = Vec::with_capacity(g.len());
        for r in 0..g.ny() {
            let j = g.ny() - 1 - r;
            for i in 0..g.nx() {
                pixels.push(gray_level(labels.values()[g.idx(i, j)], n));
            }
        }
        Pgm {
            width: g.nx(),
            height: g.ny(),
            pixels,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Pgm, RasterError> {
        let bad = |reason: &str| RasterError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("magic number is not P5"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
        let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(bad("maxval must be 255"));
        }
        // Exactly one whitespace byte separates the header from the data.
        pos += 1;
        let len = width * height;
        if width == 0 || height == 0 || bytes.len() < pos + len {
            return Err(bad("pixel data shorter than width * height"));
        }
        Ok(Pgm {
            width,
            height,
            pixels: bytes[pos..pos + len].to_vec(),
        })
    }

    /// Pixels with the bottom row first, matching grid order.
    pub fn bottom_up(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len());
        for r in (0..self.height).rev() {
            out.extend_from_slice(&self.pixels[r * self.width..(r + 1) * self.width]);
        }
        out
    }

    /// Labels on a `width`-node grid over `domain`: black pixels are masked,
    /// the other gray levels become labels `1..` in increasing order.
    pub fn to_labels(&self, domain: &Domain) -> Result<Labels, RasterError> {
        if self.width != self.height {
            return Err(RasterError::NotSquare {
                width: self.width,
                height: self.height,
            });
        }
        let pixels = self.bottom_up();
        let mut levels: Vec<u8> = pixels.iter().copied().filter(|&p| p > 0).collect();
        levels.sort_unstable();
        levels.dedup();
        let base = Grid::square(self.width, domain.origin, domain.side, domain.boundary)?;
        let grid = if pixels.contains(&0) {
            if domain.boundary == crate::grid::Boundary::Periodic {
                return Err(RasterError::MaskedPeriodic);
            }
            base.with_mask(pixels.iter().map(|&p| p > 0).collect())?
        } else {
            base
        };
        let values = pixels
            .iter()
            .map(|&p| match levels.binary_search(&p) {
                Ok(i) if p > 0 => i as u32 + 1,
                _ => 0,
            })
            .collect();
        Ok(Labels::new(Arc::new(grid), values)?)
    }
}

pub fn read_pgm(path: &Path) -> Result<Pgm, RasterError> {
    let bytes = std::fs::read(path).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Pgm::decode(&bytes, path)
}

/// Write `labels` as a P5 image, atomically.
pub fn render_labels(labels: &Labels, path: &Path) -> Result<(), RasterError> {
    write_atomic(path, &Pgm::from_labels(labels).encode()).map_err(|source| RasterError::Io {
        path: path.to_path_buf(),
        source,
    })
}
