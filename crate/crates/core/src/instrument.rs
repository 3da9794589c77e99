//! Field IR-thermometer handling: radiant → kinetic conversion through the
//! emissivity chain, and per-instrument normalization against a control
//! thermometer.
//!
//! A handheld IR thermometer with emissivity setting `e_device` displays the
//! temperature a surface of that emissivity would need to produce the
//! received radiance. The surface actually has emissivity `e_target`, so the
//! blackbody exitance at the true kinetic temperature is the displayed-
//! temperature band exitance times `e_device / e_target`; inverting the
//! Planck table yields the kinetic temperature.
//!
//! Normalization follows the field procedure: every instrument reads a
//! stirred distilled-water bath against an alcohol control thermometer while
//! the bath warms, the readings are converted to kinetic temperature, and
//! `control = slope·kinetic + offset` is fit per instrument.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radiometry::{rescale_exitance, PlanckTable};
use crate::spectra::MaterialTable;
use crate::stats;
use crate::{c_to_k, k_to_c};

/// Factory emissivity setting of the field thermometers.
pub const DEFAULT_DEVICE_EMISSIVITY: f64 = 0.95;
/// Band emissivity of the distilled-water calibration medium (8–14 μm device
/// band).
pub const DEFAULT_MEDIUM_EMISSIVITY: f64 = 0.9838;

/// One row of the field/calibration readings CSV. Temperatures are Celsius
/// in the file; see [`ThermometerReading`] for the Kelvin domain type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReadingRow {
    pub instrument_id: String,
    #[serde(rename = "control_temp_C", default)]
    pub control_temp_c: Option<f64>,
    #[serde(rename = "control_temp_after_C", default)]
    pub control_temp_after_c: Option<f64>,
    #[serde(rename = "displayed_temp_C")]
    pub displayed_temp_c: f64,
    pub material: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub timestamp: f64,
    #[serde(default)]
    pub target_id: Option<String>,
    #[serde(default)]
    pub building_id: Option<String>,
}

/// A single field reading in Kelvin.
#[derive(Debug, Clone)]
pub struct ThermometerReading {
    pub instrument_id: String,
    pub displayed_temp_k: f64,
    pub target_material: String,
    pub location: (f64, f64),
    pub timestamp: f64,
    pub target_id: Option<String>,
    pub building_id: Option<String>,
    /// Control-thermometer temperature, present only for calibration rows.
    /// Bracketing before/after readings are averaged during ingestion.
    pub control_temp_k: Option<f64>,
}

impl ThermometerReading {
    pub fn is_calibration(&self) -> bool {
        self.control_temp_k.is_some()
    }
}

/// Parse the readings CSV (field and/or calibration rows).
pub fn read_readings_csv(text: &str) -> Result<Vec<ThermometerReading>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: ReadingRow = row?;
        let control_temp_k = match (row.control_temp_c, row.control_temp_after_c) {
            (Some(before), Some(after)) => Some(c_to_k((before + after) / 2.0)),
            (Some(before), None) => Some(c_to_k(before)),
            (None, Some(after)) => Some(c_to_k(after)),
            (None, None) => None,
        };
        out.push(ThermometerReading {
            instrument_id: row.instrument_id,
            displayed_temp_k: c_to_k(row.displayed_temp_c),
            target_material: row.material,
            location: (row.x, row.y),
            timestamp: row.timestamp,
            target_id: row.target_id,
            building_id: row.building_id,
            control_temp_k,
        });
    }
    Ok(out)
}

/// Write readings back out in the CSV row format.
pub fn write_readings_csv<W: Write>(w: W, readings: &[ThermometerReading]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for r in readings {
        writer.serialize(ReadingRow {
            instrument_id: r.instrument_id.clone(),
            control_temp_c: r.control_temp_k.map(k_to_c),
            control_temp_after_c: None,
            displayed_temp_c: k_to_c(r.displayed_temp_k),
            material: r.target_material.clone(),
            x: r.location.0,
            y: r.location.1,
            timestamp: r.timestamp,
            target_id: r.target_id.clone(),
            building_id: r.building_id.clone(),
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// Calibration pairs per instrument: (control K, displayed K).
#[derive(Debug, Clone)]
pub struct CalibrationSession {
    pairs_by_instrument: BTreeMap<String, Vec<(f64, f64)>>,
    pub device_emissivity: f64,
    pub medium_emissivity: f64,
}

impl CalibrationSession {
    /// Build a session from (instrument, control K, displayed K) triples.
    /// Each instrument needs at least 2 pairs whose control temperatures span
    /// at least 5 K, so a fit cannot silently run on a degenerate bath run.
    pub fn new(
        triples: impl IntoIterator<Item = (String, f64, f64)>,
        device_emissivity: f64,
        medium_emissivity: f64,
    ) -> Result<Self> {
        let mut pairs_by_instrument: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for (id, control, displayed) in triples {
            pairs_by_instrument.entry(id).or_default().push((control, displayed));
        }
        if pairs_by_instrument.is_empty() {
            return Err(Error::DegenerateFit("no calibration rows".into()));
        }
        for (id, pairs) in &pairs_by_instrument {
            if pairs.len() < 2 {
                return Err(Error::DegenerateFit(format!(
                    "instrument '{id}' has {} calibration pair(s), need at least 2",
                    pairs.len()
                )));
            }
            let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 5.0 {
                return Err(Error::DegenerateFit(format!(
                    "instrument '{id}' control temperatures span {:.3} K, need at least 5 K",
                    hi - lo
                )));
            }
        }
        Ok(CalibrationSession {
            pairs_by_instrument,
            device_emissivity,
            medium_emissivity,
        })
    }

    /// Session from the calibration rows of a readings CSV.
    pub fn from_readings(
        readings: &[ThermometerReading],
        device_emissivity: f64,
        medium_emissivity: f64,
    ) -> Result<Self> {
        CalibrationSession::new(
            readings.iter().filter_map(|r| {
                r.control_temp_k
                    .map(|c| (r.instrument_id.clone(), c, r.displayed_temp_k))
            }),
            device_emissivity,
            medium_emissivity,
        )
    }

    pub fn instrument_ids(&self) -> impl Iterator<Item = &str> {
        self.pairs_by_instrument.keys().map(|s| s.as_str())
    }

    pub fn pairs(&self, instrument_id: &str) -> Option<&[(f64, f64)]> {
        self.pairs_by_instrument.get(instrument_id).map(|v| v.as_slice())
    }
}

/// Normalization parameters for one instrument.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstrumentCalibration {
    pub instrument_id: String,
    pub slope: f64,
    pub offset_k: f64,
    pub r_squared: f64,
}

impl InstrumentCalibration {
    pub fn identity(instrument_id: impl Into<String>) -> Self {
        InstrumentCalibration {
            instrument_id: instrument_id.into(),
            slope: 1.0,
            offset_k: 0.0,
            r_squared: 1.0,
        }
    }
}

/// Convert a displayed (radiant) temperature to kinetic temperature.
///
/// The forward band exitance is interpolated from the same lookup table used
/// for inversion, which keeps displayed → kinetic → displayed round trips
/// exact to float precision.
pub fn radiant_to_kinetic(
    displayed_temp_k: f64,
    e_device: f64,
    e_target: f64,
    table: &PlanckTable,
) -> Result<f64> {
    let displayed_exitance = table.exitance_at(displayed_temp_k)?;
    let blackbody_exitance = rescale_exitance(displayed_exitance, e_target, e_device)?;
    table.invert(blackbody_exitance)
}

/// Fit normalization parameters for one instrument:
/// `control = slope·kinetic + offset` by ordinary least squares, where
/// kinetic is the emissivity-corrected instrument reading.
pub fn fit_instrument(
    session: &CalibrationSession,
    instrument_id: &str,
    table: &PlanckTable,
) -> Result<InstrumentCalibration> {
    let pairs = session
        .pairs(instrument_id)
        .ok_or_else(|| Error::Config(format!("no calibration pairs for instrument '{instrument_id}'")))?;
    let mut kinetic = Vec::with_capacity(pairs.len());
    let mut control = Vec::with_capacity(pairs.len());
    for &(c, displayed) in pairs {
        kinetic.push(radiant_to_kinetic(
            displayed,
            session.device_emissivity,
            session.medium_emissivity,
            table,
        )?);
        control.push(c);
    }
    let fit = stats::linear_fit(&kinetic, &control).map_err(|_| {
        Error::DegenerateFit(format!(
            "instrument '{instrument_id}': fewer than 2 distinct kinetic temperatures"
        ))
    })?;
    if fit.slope <= 0.0 {
        return Err(Error::DegenerateFit(format!(
            "instrument '{instrument_id}': non-positive slope {}",
            fit.slope
        )));
    }
    Ok(InstrumentCalibration {
        instrument_id: instrument_id.to_string(),
        slope: fit.slope,
        offset_k: fit.intercept,
        r_squared: fit.r_squared,
    })
}

/// Fit every instrument in the session, keeping per-instrument errors.
pub fn fit_all_instruments(
    session: &CalibrationSession,
    table: &PlanckTable,
) -> Vec<(String, Result<InstrumentCalibration>)> {
    session
        .instrument_ids()
        .map(|id| (id.to_string(), fit_instrument(session, id, table)))
        .collect()
}

/// Map an instrument kinetic temperature onto the control scale.
pub fn normalize_reading(cal: &InstrumentCalibration, kinetic_temp_k: f64) -> f64 {
    cal.slope * kinetic_temp_k + cal.offset_k
}

/// Calibrations CSV: `instrument_id,slope,offset_K,r_squared,status`. Failed
/// fits become error rows so one bad instrument does not hide the others.
pub fn write_calibrations_csv<W: Write>(
    mut w: W,
    fits: &[(String, Result<InstrumentCalibration>)],
) -> Result<()> {
    writeln!(w, "instrument_id,slope,offset_K,r_squared,status")?;
    for (id, fit) in fits {
        match fit {
            Ok(cal) => writeln!(w, "{id},{},{},{},ok", cal.slope, cal.offset_k, cal.r_squared)?,
            Err(e) => writeln!(w, "{id},,,,\"error: {e}\"")?,
        }
    }
    Ok(())
}

/// Read a calibrations CSV back into a lookup map; error rows are skipped.
pub fn read_calibrations_csv(text: &str) -> Result<BTreeMap<String, InstrumentCalibration>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 5 {
            return Err(Error::parse(i + 1, "expected 5 columns"));
        }
        if parts[4] != "ok" {
            continue;
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(i + 1, format!("bad number '{s}'")))
        };
        out.insert(
            parts[0].to_string(),
            InstrumentCalibration {
                instrument_id: parts[0].to_string(),
                slope: num(parts[1])?,
                offset_k: num(parts[2])?,
                r_squared: num(parts[3])?,
            },
        );
    }
    Ok(out)
}

/// A field reading carried through the full chain:
/// displayed → kinetic (emissivity chain) → normalized (control scale).
#[derive(Debug, Clone)]
pub struct NormalizedReading {
    pub target_id: String,
    pub building_id: Option<String>,
    pub material: String,
    pub kinetic_temp_k: f64,
    pub location: (f64, f64),
}

/// Run the full field chain over the non-calibration rows of a readings set.
///
/// `calibrations` may be empty, in which case every instrument passes through
/// unnormalized; if it is non-empty, a reading from an uncalibrated
/// instrument is an error.
pub fn process_field_readings(
    readings: &[ThermometerReading],
    materials: &MaterialTable,
    calibrations: &BTreeMap<String, InstrumentCalibration>,
    device_emissivity: f64,
    device_table: &PlanckTable,
) -> Result<Vec<NormalizedReading>> {
    let mut out = Vec::new();
    for (i, r) in readings.iter().enumerate() {
        if r.is_calibration() {
            continue;
        }
        let e_target = materials.emissivity(&r.target_material, device_table.band())?;
        let kinetic = radiant_to_kinetic(r.displayed_temp_k, device_emissivity, e_target, device_table)?;
        let normalized = if calibrations.is_empty() {
            kinetic
        } else {
            let cal = calibrations.get(&r.instrument_id).ok_or_else(|| {
                Error::Config(format!("no calibration for instrument '{}'", r.instrument_id))
            })?;
            normalize_reading(cal, kinetic)
        };
        out.push(NormalizedReading {
            target_id: r.target_id.clone().unwrap_or_else(|| format!("t{:03}", i + 1)),
            building_id: r.building_id.clone(),
            material: r.target_material.clone(),
            kinetic_temp_k: normalized,
            location: r.location,
        });
    }
    Ok(out)
}
