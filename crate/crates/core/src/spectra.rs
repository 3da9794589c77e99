//! Spectral curves and band emissivity.
//!
//! Reflectance spectra from a spectral library are converted to spectral
//! emissivity by Kirchhoff's law for opaque surfaces (ε = 1 − ρ) and reduced
//! to a per-band scalar by a Planck-weighted mean over the band.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::radiometry::{self, WavelengthBand};

/// Reference temperature for the Planck weighting, K. Library samples are
/// taken at room temperature.
pub const DEFAULT_T_REF_K: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Reflectance,
    Emissivity,
}

/// A sampled wavelength → value function for one material.
///
/// Wavelengths are strictly increasing; values lie in [0, 1].
#[derive(Debug, Clone)]
pub struct SpectralCurve {
    pub material_name: String,
    pub kind: CurveKind,
    samples: Vec<(f64, f64)>,
}

impl SpectralCurve {
    pub fn new(material_name: impl Into<String>, kind: CurveKind, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::domain("spectral curve needs at least 2 samples"));
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::domain(format!(
                    "wavelengths not strictly increasing near {} um",
                    w[0].0
                )));
            }
        }
        if let Some(&(lam, v)) = samples.iter().find(|&&(_, v)| !(0.0..=1.0).contains(&v)) {
            return Err(Error::domain(format!("value {v} at {lam} um outside [0, 1]")));
        }
        Ok(SpectralCurve {
            material_name: material_name.into(),
            kind,
            samples,
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Wavelength coverage (first, last), μm.
    pub fn coverage(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Linear interpolation between samples. Callers guarantee coverage.
    fn value_at(&self, lambda_um: f64) -> f64 {
        let idx = self.samples.partition_point(|&(l, _)| l < lambda_um);
        if idx == 0 {
            return self.samples[0].1;
        }
        if idx == self.samples.len() {
            return self.samples[idx - 1].1;
        }
        let (l0, v0) = self.samples[idx - 1];
        let (l1, v1) = self.samples[idx];
        v0 + (lambda_um - l0) / (l1 - l0) * (v1 - v0)
    }
}

/// Parse a two-column curve file: wavelength (μm) and reflectance, whitespace
/// or comma separated, `#` for comments. Values with a maximum above 1.5 are
/// interpreted as percent and divided by 100.
pub fn parse_spectral_curve(text: &str, material_name: &str) -> Result<SpectralCurve> {
    let mut rows: Vec<(f64, f64, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        let lam: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "non-numeric wavelength field"))?;
        let val: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(lineno, "non-numeric value field"))?;
        if fields.next().is_some() {
            return Err(Error::parse(lineno, "expected exactly two columns"));
        }
        if !lam.is_finite() || !val.is_finite() {
            return Err(Error::parse(lineno, "non-finite field"));
        }
        rows.push((lam, val, lineno));
    }
    if rows.len() < 2 {
        return Err(Error::parse(
            text.lines().count().max(1),
            format!("need at least 2 data rows, found {}", rows.len()),
        ));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    for w in rows.windows(2) {
        if w[1].0 == w[0].0 {
            return Err(Error::parse(
                w[1].2,
                format!("duplicate wavelength {} um", w[1].0),
            ));
        }
    }
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > 1.5 { 0.01 } else { 1.0 };
    for &(_, v, lineno) in &rows {
        let v = v * scale;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::parse(lineno, format!("reflectance {v} outside [0, 1]")));
        }
    }
    SpectralCurve::new(
        material_name,
        CurveKind::Reflectance,
        rows.into_iter().map(|(l, v, _)| (l, v * scale)).collect(),
    )
}

/// Kirchhoff's law for opaque surfaces: spectral emissivity = 1 − reflectance.
pub fn emissivity_curve(curve: &SpectralCurve) -> Result<SpectralCurve> {
    if curve.kind != CurveKind::Reflectance {
        return Err(Error::domain(format!(
            "'{}' is already an emissivity curve",
            curve.material_name
        )));
    }
    SpectralCurve::new(
        curve.material_name.clone(),
        CurveKind::Emissivity,
        curve.samples.iter().map(|&(l, v)| (l, 1.0 - v)).collect(),
    )
}

/// Planck-weighted mean emissivity over a band:
/// ∫ ε(λ) R(λ, t_ref) dλ / ∫ R(λ, t_ref) dλ, trapezoid rule on a uniform
/// grid with ε(λ) linearly interpolated between samples.
pub fn band_emissivity(
    curve: &SpectralCurve,
    band: WavelengthBand,
    t_ref_k: f64,
    lambda_step_um: f64,
) -> Result<f64> {
    if curve.kind != CurveKind::Emissivity {
        return Err(Error::domain(format!(
            "band emissivity needs an emissivity curve, '{}' is reflectance",
            curve.material_name
        )));
    }
    if !(t_ref_k > 0.0) {
        return Err(Error::domain(format!("t_ref must be positive, got {t_ref_k}")));
    }
    if !(lambda_step_um > 0.0) || lambda_step_um > band.width_um() {
        return Err(Error::domain(format!(
            "lambda step {lambda_step_um} um invalid for band {band}"
        )));
    }
    let (have_lo, have_hi) = curve.coverage();
    if have_lo > band.lo_um + 1e-12 || have_hi < band.hi_um - 1e-12 {
        return Err(Error::Coverage {
            material: curve.material_name.clone(),
            need_lo: band.lo_um,
            need_hi: band.hi_um,
            have_lo,
            have_hi,
        });
    }
    let width = band.width_um();
    let n = (width / lambda_step_um).round().max(1.0) as usize;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=n {
        let lambda = band.lo_um + width * i as f64 / n as f64;
        let w = radiometry::spectral_exitance(lambda, t_ref_k)?;
        let e = curve.value_at(lambda);
        let trapezoid_w = if i == 0 || i == n { 0.5 } else { 1.0 };
        num += trapezoid_w * e * w;
        den += trapezoid_w * w;
    }
    Ok(num / den)
}

/// Band emissivities per material: the rows of the material table emitted as
/// CSV (`material,band_lo_um,band_hi_um,emissivity`).
#[derive(Debug, Clone, Default)]
pub struct MaterialTable {
    /// material → [(band, emissivity)]
    rows: BTreeMap<String, Vec<(WavelengthBand, f64)>>,
}

impl MaterialTable {
    pub fn new() -> Self {
        MaterialTable::default()
    }

    pub fn insert(&mut self, material: impl Into<String>, band: WavelengthBand, emissivity: f64) -> Result<()> {
        if !(emissivity > 0.0 && emissivity <= 1.0) {
            return Err(Error::domain(format!(
                "band emissivity {emissivity} outside (0, 1]"
            )));
        }
        let entry = self.rows.entry(material.into()).or_default();
        entry.retain(|(b, _)| !b.approx_eq(&band));
        entry.push((band, emissivity));
        entry.sort_by(|a, b| a.0.lo_um.total_cmp(&b.0.lo_um).then(a.0.hi_um.total_cmp(&b.0.hi_um)));
        Ok(())
    }

    pub fn emissivity(&self, material: &str, band: WavelengthBand) -> Result<f64> {
        self.rows
            .get(material)
            .and_then(|bands| bands.iter().find(|(b, _)| b.approx_eq(&band)))
            .map(|&(_, e)| e)
            .ok_or_else(|| Error::MissingMaterial(format!("{material} ({band})")))
    }

    pub fn materials(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(|s| s.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "material,band_lo_um,band_hi_um,emissivity")?;
        for (material, bands) in &self.rows {
            for (band, e) in bands {
                writeln!(w, "{material},{},{},{e}", band.lo_um, band.hi_um)?;
            }
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut table = MaterialTable::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::parse(i + 1, "expected 4 columns"));
            }
            let fnum = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(i + 1, format!("bad number '{s}'")))
            };
            let band = WavelengthBand::new(fnum(parts[1])?, fnum(parts[2])?)?;
            table.insert(parts[0].trim(), band, fnum(parts[3])?)?;
        }
        Ok(table)
    }
}

/// Cross product of [`band_emissivity`] over curves and bands. Coverage
/// errors propagate with the material name attached.
pub fn material_table(
    curves: &[SpectralCurve],
    bands: &[WavelengthBand],
    t_ref_k: f64,
    lambda_step_um: f64,
) -> Result<MaterialTable> {
    let mut table = MaterialTable::new();
    for curve in curves {
        for &band in bands {
            let e = band_emissivity(curve, band, t_ref_k, lambda_step_um)?;
            table.insert(curve.material_name.clone(), band, e)?;
        }
    }
    Ok(table)
}
