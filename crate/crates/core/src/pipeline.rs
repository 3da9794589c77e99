//! End-to-end processing: atmospheric correction of rasters, per-material
//! emissivity correction with Planck inversion over building footprints, and
//! validation statistics (RMSE by material, overlap consistency).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::elc::{apply_elc, ELCModel};
use crate::error::{Error, Result};
use crate::exec;
use crate::instrument::NormalizedReading;
use crate::radiometry::PlanckTable;
use crate::raster::{BuildingMask, FootprintSet, RadianceRaster};
use crate::spectra::MaterialTable;
use crate::{c_to_k, k_to_c};

/// Per-building rooftop statistics for one image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingReport {
    pub building_id: String,
    pub material: String,
    pub image_id: String,
    pub flight_line: String,
    pub pixel_count: usize,
    pub mean_temp_k: f64,
    pub min_temp_k: f64,
    pub max_temp_k: f64,
}

/// One predicted-vs-field comparison point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub building_id: String,
    pub material: String,
    pub predicted_temp_k: f64,
    pub field_temp_k: f64,
    pub image_id: String,
}

/// Pixels dropped during per-pixel processing.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct InvalidCounts {
    /// ELC outputs that were not positive.
    pub non_positive: usize,
    /// Rescaled exitances outside the Planck table.
    pub out_of_table: usize,
}

/// Atmospherically correct an at-sensor raster into ground-leaving exitance.
/// Nodata is preserved; non-positive corrected values become nodata and are
/// counted.
pub fn correct_raster(
    raster: &RadianceRaster,
    model: &ELCModel,
) -> Result<(RadianceRaster, InvalidCounts)> {
    if let Some(model_band) = model.band {
        match raster.band {
            Some(b) if b.approx_eq(&model_band) => {}
            _ => {
                return Err(Error::Config(format!(
                    "raster band {:?} does not match ELC calibration band {model_band}",
                    raster.band
                )))
            }
        }
    }
    let (corrected, non_positive) = apply_elc(model, raster);
    Ok((
        corrected,
        InvalidCounts {
            non_positive,
            out_of_table: 0,
        },
    ))
}

/// Convert a ground-leaving raster into rooftop kinetic temperatures.
///
/// Per masked pixel the blackbody exitance is the ground exitance rescaled
/// from the roof material's band emissivity to 1, then inverted through the
/// lookup table. Pixels whose rescaled exitance falls outside the table are
/// counted and set to nodata rather than aborting the image. Returns the
/// temperature raster (K, nodata off-roof), per-building reports, and the
/// invalid-pixel counts.
pub fn rooftop_temperatures(
    ground: &RadianceRaster,
    mask: &BuildingMask,
    footprints: &FootprintSet,
    materials: &MaterialTable,
    table: &PlanckTable,
) -> Result<(RadianceRaster, Vec<BuildingReport>, InvalidCounts)> {
    if mask.ncols != ground.ncols || mask.nrows != ground.nrows {
        return Err(Error::Config("building mask is not aligned with the raster".into()));
    }
    if let Some(b) = ground.band {
        if !b.approx_eq(&table.band()) {
            return Err(Error::Config(format!(
                "raster band {b} does not match Planck table band {}",
                table.band()
            )));
        }
    }
    // resolve every footprint material up front so a typo fails loudly
    let emissivities: Vec<f64> = footprints
        .buildings
        .iter()
        .map(|b| materials.emissivity(&b.material, table.band()))
        .collect::<Result<_>>()?;

    let nodata = ground.nodata;
    let (m_lo, m_hi) = table.exitance_range();
    let ground_values = &ground.values;
    let values = exec::map_indexed(ground_values.len(), |i| {
        let building = match mask.building_at_index(i) {
            Some(b) => b as usize,
            None => return nodata,
        };
        let v = ground_values[i];
        if v == nodata || v.is_nan() {
            return nodata;
        }
        let blackbody = v / emissivities[building];
        if !(blackbody >= m_lo && blackbody <= m_hi) {
            return nodata;
        }
        table.invert(blackbody).expect("range checked")
    });

    // count pixels lost to the table range (valid ground, masked, no output)
    let mut out_of_table = 0usize;
    for i in 0..values.len() {
        if mask.building_at_index(i).is_some() {
            let v = ground_values[i];
            if !(v == nodata || v.is_nan()) && values[i] == nodata {
                out_of_table += 1;
            }
        }
    }

    let mut temp = ground.clone();
    temp.values = values;
    temp.band = Some(table.band());

    // aggregate per building in deterministic row-major order
    struct Acc {
        count: usize,
        sum: f64,
        min: f64,
        max: f64,
    }
    let mut accs: BTreeMap<usize, Acc> = BTreeMap::new();
    for i in 0..temp.values.len() {
        if let Some(bi) = mask.building_at_index(i) {
            let t = temp.values[i];
            if t == nodata || t.is_nan() {
                continue;
            }
            let acc = accs.entry(bi as usize).or_insert(Acc {
                count: 0,
                sum: 0.0,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            });
            acc.count += 1;
            acc.sum += t;
            acc.min = acc.min.min(t);
            acc.max = acc.max.max(t);
        }
    }
    let mut reports: Vec<BuildingReport> = accs
        .into_iter()
        .map(|(bi, acc)| {
            let b = &footprints.buildings[bi];
            BuildingReport {
                building_id: b.building_id.clone(),
                material: b.material.clone(),
                image_id: ground.image_id.clone(),
                flight_line: ground.flight_line.clone(),
                pixel_count: acc.count,
                mean_temp_k: acc.sum / acc.count as f64,
                min_temp_k: acc.min,
                max_temp_k: acc.max,
            }
        })
        .collect();
    reports.sort_by(|a, b| a.building_id.cmp(&b.building_id));
    Ok((
        temp,
        reports,
        InvalidCounts {
            non_positive: 0,
            out_of_table,
        },
    ))
}

/// Match field readings to building reports by building id. Every report of
/// a building with a field reading yields one record (overlapping images give
/// several records per roof).
pub fn build_validation_records(
    reports: &[BuildingReport],
    field_readings: &[NormalizedReading],
) -> Vec<ValidationRecord> {
    let by_building: BTreeMap<&str, &NormalizedReading> = field_readings
        .iter()
        .filter_map(|r| r.building_id.as_deref().map(|id| (id, r)))
        .collect();
    reports
        .iter()
        .filter_map(|report| {
            by_building.get(report.building_id.as_str()).map(|reading| ValidationRecord {
                building_id: report.building_id.clone(),
                material: report.material.clone(),
                predicted_temp_k: report.mean_temp_k,
                field_temp_k: reading.kinetic_temp_k,
                image_id: report.image_id.clone(),
            })
        })
        .collect()
}

/// Per-material error statistics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaterialErrorStats {
    pub rmse_k: f64,
    pub n: usize,
    /// Mean of (predicted − field); negative means underestimation.
    pub mean_error_k: f64,
}

/// RMSE and signed bias per material.
pub fn rmse_by_material(records: &[ValidationRecord]) -> BTreeMap<String, MaterialErrorStats> {
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        grouped
            .entry(r.material.clone())
            .or_default()
            .push(r.predicted_temp_k - r.field_temp_k);
    }
    grouped
        .into_iter()
        .map(|(material, errors)| {
            let n = errors.len();
            let mean_error = errors.iter().sum::<f64>() / n as f64;
            let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
            (
                material,
                MaterialErrorStats {
                    rmse_k: rmse,
                    n,
                    mean_error_k: mean_error,
                },
            )
        })
        .collect()
}

/// One pair of reports of the same building from different images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapRecord {
    pub building_id: String,
    pub image_a: String,
    pub image_b: String,
    pub temp_a_k: f64,
    pub temp_b_k: f64,
    pub delta_k: f64,
    pub same_flight_line: bool,
}

/// All unordered pairs of reports sharing a building id, sorted by |delta|
/// descending (ties broken by ids for determinism).
pub fn overlap_report(reports: &[BuildingReport]) -> Vec<OverlapRecord> {
    let mut by_building: BTreeMap<&str, Vec<&BuildingReport>> = BTreeMap::new();
    for r in reports {
        by_building.entry(r.building_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (building_id, mut group) in by_building {
        group.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                let (a, b) = (group[i], group[j]);
                out.push(OverlapRecord {
                    building_id: building_id.to_string(),
                    image_a: a.image_id.clone(),
                    image_b: b.image_id.clone(),
                    temp_a_k: a.mean_temp_k,
                    temp_b_k: b.mean_temp_k,
                    delta_k: a.mean_temp_k - b.mean_temp_k,
                    same_flight_line: a.flight_line == b.flight_line,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.delta_k
            .abs()
            .total_cmp(&a.delta_k.abs())
            .then_with(|| a.building_id.cmp(&b.building_id))
            .then_with(|| a.image_a.cmp(&b.image_a))
            .then_with(|| a.image_b.cmp(&b.image_b))
    });
    out
}

// ---------------------------------------------------------------------------
// Report I/O (temperatures in Celsius at the file boundary)
// ---------------------------------------------------------------------------

pub fn write_reports_csv<W: Write>(mut w: W, reports: &[BuildingReport]) -> Result<()> {
    writeln!(w, "building_id,material,image_id,flight_line,pixel_count,mean_C,min_C,max_C")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{:.5},{:.5},{:.5}",
            r.building_id,
            r.material,
            r.image_id,
            r.flight_line,
            r.pixel_count,
            k_to_c(r.mean_temp_k),
            k_to_c(r.min_temp_k),
            k_to_c(r.max_temp_k)
        )?;
    }
    Ok(())
}

pub fn read_reports_csv(text: &str) -> Result<Vec<BuildingReport>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if i == 0 || line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::parse(i + 1, "expected 8 columns"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::parse(i + 1, format!("bad number '{s}'")))
        };
        out.push(BuildingReport {
            building_id: parts[0].to_string(),
            material: parts[1].to_string(),
            image_id: parts[2].to_string(),
            flight_line: parts[3].to_string(),
            pixel_count: parts[4]
                .parse()
                .map_err(|_| Error::parse(i + 1, "bad pixel count"))?,
            mean_temp_k: c_to_k(num(parts[5])?),
            min_temp_k: c_to_k(num(parts[6])?),
            max_temp_k: c_to_k(num(parts[7])?),
        });
    }
    Ok(out)
}

pub fn write_validation_csv<W: Write>(mut w: W, records: &[ValidationRecord]) -> Result<()> {
    writeln!(w, "building_id,material,image_id,predicted_C,field_C,error_K")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:.5},{:.5},{:.5}",
            r.building_id,
            r.material,
            r.image_id,
            k_to_c(r.predicted_temp_k),
            k_to_c(r.field_temp_k),
            r.predicted_temp_k - r.field_temp_k
        )?;
    }
    Ok(())
}

pub fn write_overlap_csv<W: Write>(mut w: W, records: &[OverlapRecord]) -> Result<()> {
    writeln!(w, "building_id,image_a,image_b,temp_a_C,temp_b_C,delta_K,same_flight_line")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{:.5},{:.5},{:.5},{}",
            r.building_id,
            r.image_a,
            r.image_b,
            k_to_c(r.temp_a_k),
            k_to_c(r.temp_b_k),
            r.delta_k,
            r.same_flight_line
        )?;
    }
    Ok(())
}
