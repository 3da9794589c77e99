//! Radiometric calibration toolkit for high-resolution aerial thermal imagery.
//!
//! The library converts at-sensor long-wave infrared radiance rasters into
//! kinetic rooftop-temperature maps. The processing chain is:
//!
//! 1. [`spectra`] — band emissivities of surface materials from spectral
//!    reflectance curves (Kirchhoff's law + Planck-weighted band integration).
//! 2. [`instrument`] — field IR-thermometer readings converted from radiant to
//!    kinetic temperature and normalized across instruments against a control.
//! 3. [`elc`] — Empirical Line Calibration: an affine regression between
//!    ground-leaving and at-sensor band exitance of known targets, with
//!    regression diagnostics and Cook's-distance pruning.
//! 4. [`pipeline`] — atmospheric correction of whole rasters, per-material
//!    emissivity correction, Planck inversion over building footprints, and
//!    validation statistics.
//!
//! [`radiometry`] supplies the physical core (Planck's law, band integration,
//! lookup-table inversion), [`raster`] the grid/vector I/O, and [`synth`] a
//! deterministic forward simulator used as the test oracle for the whole
//! inverse chain.
//!
//! All temperatures are Kelvin inside the library; Celsius appears only at
//! I/O boundaries. Band quantities are radiant exitance in W·m⁻².
//!
//! Per-pixel work runs data-parallel through rayon when the `parallel`
//! feature (default) is enabled; disabling it yields a dependency-free
//! sequential build with identical results.

pub mod elc;
pub mod error;
pub mod exec;
pub mod instrument;
pub mod pipeline;
pub mod radiometry;
pub mod raster;
pub mod spectra;
pub mod synth;

pub(crate) mod stats;

pub use error::{Error, Result};

/// Offset between the Kelvin and Celsius scales.
pub const CELSIUS_OFFSET: f64 = 273.15;

/// Celsius to Kelvin.
pub fn c_to_k(c: f64) -> f64 {
    c + CELSIUS_OFFSET
}

/// Kelvin to Celsius.
pub fn k_to_c(k: f64) -> f64 {
    k - CELSIUS_OFFSET
}
