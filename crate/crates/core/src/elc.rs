//! Empirical Line Calibration: fit `ground = gain·sensor + offset` over known
//! targets by ordinary least squares, diagnose the fit (residuals, leverage,
//! Cook's distance), prune influential points, and apply the model to whole
//! rasters.
//!
//! The model is treated as a purely empirical affine map in the prediction
//! direction (ground on sensor); it is fit once, pruned once, and refit once.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instrument::NormalizedReading;
use crate::radiometry::{band_exitance, rescale_exitance, PlanckTable, WavelengthBand};
use crate::raster::{sample, RadianceRaster};
use crate::spectra::MaterialTable;
use crate::stats;

/// Default sampling window (cells) around a target location; targets are
/// multi-pixel boards, so a 3×3 mean is the default and single-pixel reads
/// are opt-in.
pub const DEFAULT_SAMPLE_WINDOW: usize = 3;

/// Materials treated as pervious (excluded from the regression).
pub fn default_pervious_materials() -> BTreeSet<String> {
    ["grass", "soil"].iter().map(|s| s.to_string()).collect()
}

/// One calibration point: ground-leaving vs at-sensor band exitance for a
/// known target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetPair {
    pub target_id: String,
    pub material: String,
    pub pervious: bool,
    pub ground_exitance: f64,
    pub sensor_exitance: f64,
    pub x: f64,
    pub y: f64,
    pub image: String,
}

/// Gain/offset atmospheric-correction model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ELCModel {
    pub gain: f64,
    pub offset: f64,
    pub r_squared: f64,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<WavelengthBand>,
}

impl ELCModel {
    /// Predicted ground-leaving exitance for one at-sensor value.
    pub fn predict(&self, sensor_exitance: f64) -> f64 {
        self.gain * sensor_exitance + self.offset
    }
}

/// Per-point regression diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub target_id: String,
    pub sensor_exitance: f64,
    pub ground_exitance: f64,
    pub fitted: f64,
    pub residual: f64,
    pub leverage: f64,
    pub standardized_residual: f64,
    pub cooks_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionDiagnostics {
    pub r_squared: f64,
    pub residual_std: f64,
    pub points: Vec<PointDiagnostics>,
}

impl RegressionDiagnostics {
    /// Data series for the standard evaluation plots: the ground/sensor
    /// scatter, fitted vs residual, and a normal-quantile series of the
    /// standardized residuals (Blom plotting positions).
    pub fn plot_series(&self) -> serde_json::Value {
        let n = self.points.len();
        let mut std_res: Vec<f64> = self.points.iter().map(|p| p.standardized_residual).collect();
        std_res.sort_by(|a, b| a.total_cmp(b));
        let theoretical: Vec<f64> = (0..n)
            .map(|i| stats::inverse_normal_cdf((i as f64 + 1.0 - 0.375) / (n as f64 + 0.25)))
            .collect();
        serde_json::json!({
            "scatter": {
                "sensor_exitance": self.points.iter().map(|p| p.sensor_exitance).collect::<Vec<_>>(),
                "ground_exitance": self.points.iter().map(|p| p.ground_exitance).collect::<Vec<_>>(),
            },
            "fitted_vs_residual": {
                "fitted": self.points.iter().map(|p| p.fitted).collect::<Vec<_>>(),
                "residual": self.points.iter().map(|p| p.residual).collect::<Vec<_>>(),
            },
            "normal_quantile": {
                "theoretical": theoretical,
                "observed": std_res,
            },
        })
    }
}

/// Build calibration pairs from normalized field readings: the ground-leaving
/// exitance is the blackbody band exitance at the reading's kinetic
/// temperature rescaled to the material's band emissivity, and the at-sensor
/// exitance is sampled from whichever raster contains the target.
pub fn prepare_pairs(
    readings: &[NormalizedReading],
    materials: &MaterialTable,
    rasters: &[RadianceRaster],
    table: &PlanckTable,
    window: usize,
    pervious_materials: &BTreeSet<String>,
) -> Result<Vec<TargetPair>> {
    let band = table.band();
    let mut pairs = Vec::with_capacity(readings.len());
    for reading in readings {
        let emissivity = materials.emissivity(&reading.material, band)?;
        let blackbody = band_exitance(band, reading.kinetic_temp_k, table.lambda_step_um())?;
        let ground = rescale_exitance(blackbody, 1.0, emissivity)?;
        let (x, y) = reading.location;
        let raster = rasters
            .iter()
            .find(|r| r.contains(x, y))
            .ok_or(Error::OutOfExtent { x, y })?;
        let sensor = sample(raster, x, y, window)?;
        pairs.push(TargetPair {
            target_id: reading.target_id.clone(),
            material: reading.material.clone(),
            pervious: pervious_materials.contains(&reading.material),
            ground_exitance: ground,
            sensor_exitance: sensor,
            x,
            y,
            image: raster.image_id.clone(),
        });
    }
    Ok(pairs)
}

/// Keep only impervious pairs, preserving order.
pub fn filter_impervious(pairs: &[TargetPair]) -> Vec<TargetPair> {
    pairs.iter().filter(|p| !p.pervious).cloned().collect()
}

/// Fit the ELC model with analytic diagnostics. Needs at least 3 pairs with
/// at least 2 distinct sensor values.
pub fn fit_elc(pairs: &[TargetPair]) -> Result<(ELCModel, RegressionDiagnostics)> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "need at least 3 calibration pairs, got {}",
            pairs.len()
        )));
    }
    let sensor: Vec<f64> = pairs.iter().map(|p| p.sensor_exitance).collect();
    let ground: Vec<f64> = pairs.iter().map(|p| p.ground_exitance).collect();
    let fit = stats::linear_fit(&sensor, &ground)?;
    // a residual std at float-rounding level is an exact fit; influence
    // measures would otherwise amplify representation noise
    let ground_mean = ground.iter().sum::<f64>() / ground.len() as f64;
    let ground_scale = (ground.iter().map(|g| (g - ground_mean).powi(2)).sum::<f64>()
        / (ground.len() as f64 - 1.0))
        .sqrt();
    let s = if fit.residual_std > 1e-12 * ground_scale.max(f64::MIN_POSITIVE) {
        fit.residual_std
    } else {
        0.0
    };
    let points = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let residual = fit.residuals[i];
            let leverage = fit.leverages[i];
            // standardized residual and Cook's D with p = 2 parameters; a
            // perfect fit (s = 0) has zero influence everywhere
            let standardized = if s > 0.0 {
                residual / (s * (1.0 - leverage).sqrt())
            } else {
                0.0
            };
            let cooks = standardized * standardized * leverage / (2.0 * (1.0 - leverage));
            PointDiagnostics {
                target_id: p.target_id.clone(),
                sensor_exitance: p.sensor_exitance,
                ground_exitance: p.ground_exitance,
                fitted: fit.slope * p.sensor_exitance + fit.intercept,
                residual,
                leverage,
                standardized_residual: standardized,
                cooks_distance: cooks,
            }
        })
        .collect();
    Ok((
        ELCModel {
            gain: fit.slope,
            offset: fit.intercept,
            r_squared: fit.r_squared,
            n_points: pairs.len(),
            band: None,
        },
        RegressionDiagnostics {
            r_squared: fit.r_squared,
            residual_std: s,
            points,
        },
    ))
}

/// How influential points are selected for removal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Cook's D above 4/n (default).
    FourOverN,
    /// Cook's D above a fixed value.
    Absolute(f64),
    /// The k points with the largest Cook's D.
    TopK(usize),
    /// Remove nothing; refit is the identity.
    None,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::FourOverN
    }
}

#[derive(Debug, Clone)]
pub struct PruneOutcome {
    pub model: ELCModel,
    pub diagnostics: RegressionDiagnostics,
    pub removed_ids: Vec<String>,
    pub r_squared_before: f64,
    pub r_squared_after: f64,
}

/// Remove influential points per the threshold rule and refit once. Refuses
/// to prune below 3 remaining points.
pub fn prune_and_refit(
    pairs: &[TargetPair],
    diagnostics: &RegressionDiagnostics,
    rule: ThresholdRule,
) -> Result<PruneOutcome> {
    assert_eq!(pairs.len(), diagnostics.points.len());
    let n = pairs.len();
    let removed_idx: Vec<usize> = match rule {
        ThresholdRule::None => Vec::new(),
        ThresholdRule::FourOverN => {
            let thr = 4.0 / n as f64;
            (0..n).filter(|&i| diagnostics.points[i].cooks_distance > thr).collect()
        }
        ThresholdRule::Absolute(thr) => (0..n)
            .filter(|&i| diagnostics.points[i].cooks_distance > thr)
            .collect(),
        ThresholdRule::TopK(k) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                diagnostics.points[b]
                    .cooks_distance
                    .total_cmp(&diagnostics.points[a].cooks_distance)
            });
            let mut top: Vec<usize> = order.into_iter().take(k.min(n)).collect();
            top.sort_unstable();
            top
        }
    };
    if n - removed_idx.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "pruning would leave {} of {} points, need at least 3",
            n - removed_idx.len(),
            n
        )));
    }
    let removed_set: BTreeSet<usize> = removed_idx.iter().copied().collect();
    let retained: Vec<TargetPair> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed_set.contains(i))
        .map(|(_, p)| p.clone())
        .collect();
    let (model, new_diag) = fit_elc(&retained)?;
    Ok(PruneOutcome {
        r_squared_before: diagnostics.r_squared,
        r_squared_after: model.r_squared,
        model,
        diagnostics: new_diag,
        removed_ids: removed_idx.iter().map(|&i| pairs[i].target_id.clone()).collect(),
    })
}

/// Apply the model to a whole raster. Nodata propagates; corrected values
/// that are not positive are physically invalid and become nodata. Returns
/// the corrected raster and the invalid-pixel count.
pub fn apply_elc(model: &ELCModel, raster: &RadianceRaster) -> (RadianceRaster, usize) {
    let (gain, offset) = (model.gain, model.offset);
    let nodata = raster.nodata;
    let corrected = raster.map_cells(|v| {
        let out = gain * v + offset;
        if out > 0.0 {
            out
        } else {
            nodata
        }
    });
    let invalid = raster
        .values
        .iter()
        .filter(|&&v| !raster.is_nodata(v) && gain * v + offset <= 0.0)
        .count();
    (corrected, invalid)
}

/// Pairs table CSV round trip.
pub fn write_pairs_csv<W: Write>(w: W, pairs: &[TargetPair]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for p in pairs {
        writer.serialize(p)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_pairs_csv(text: &str) -> Result<Vec<TargetPair>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let pair: TargetPair = row?;
        if !(pair.ground_exitance > 0.0 && pair.sensor_exitance > 0.0) {
            return Err(Error::domain(format!(
                "target '{}' has non-positive exitance",
                pair.target_id
            )));
        }
        out.push(pair);
    }
    Ok(out)
}
