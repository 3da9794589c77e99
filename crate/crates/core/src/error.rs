//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the physical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Value falls outside a lookup table; no extrapolation is performed.
    #[error("value {value} outside table range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    /// Text input could not be parsed. `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A spectral curve does not cover the requested band.
    #[error("curve '{material}' covers {have_lo}-{have_hi} um, band needs {need_lo}-{need_hi} um")]
    Coverage {
        material: String,
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    /// Regression input cannot identify a line.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Invalid polygon or footprint geometry.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Point sample outside every raster extent.
    #[error("location ({x}, {y}) outside raster extent")]
    OutOfExtent { x: f64, y: f64 },

    /// Material name missing from a material table.
    #[error("material '{0}' not found in material table")]
    MissingMaterial(String),

    /// Inconsistent configuration (band mismatch, misaligned rasters, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}
