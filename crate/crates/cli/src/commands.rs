//! Subcommand implementations. Each command reads what it needs from the run
//! config, writes deterministic outputs under the output directory, and
//! returns through `anyhow` (exit 1) or [`NumericalDomainError`] (exit 2).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use rooftherm::elc::{self, ELCModel};
use rooftherm::instrument::{self, CalibrationSession, InstrumentCalibration, ThermometerReading};
use rooftherm::k_to_c;
use rooftherm::pipeline::{self, BuildingReport};
use rooftherm::radiometry::{build_planck_table, PlanckTable, WavelengthBand};
use rooftherm::raster::{read_raster, write_raster, FootprintSet, RadianceRaster};
use rooftherm::spectra::{self, MaterialTable};
use rooftherm::synth::{self, SceneSpec};

use crate::config::RunConfig;

/// Out-of-range pixels exceeded the configured fraction; mapped to exit 2.
#[derive(Debug)]
pub struct NumericalDomainError(pub String);

impl fmt::Display for NumericalDomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for NumericalDomainError {}

pub struct Ctx {
    pub config: RunConfig,
}

impl Ctx {
    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    fn ensure_out(&self) -> Result<()> {
        std::fs::create_dir_all(self.out())
            .with_context(|| format!("creating output dir {}", self.out().display()))
    }

    fn table(&self, band: WavelengthBand) -> Result<PlanckTable> {
        let p = &self.config.planck;
        Ok(build_planck_table(band, p.t_min_k, p.t_max_k, p.t_step_k, p.lambda_step_um)?)
    }

    fn material_table_path(&self) -> PathBuf {
        self.config
            .material_table
            .clone()
            .unwrap_or_else(|| self.out().join("material_table.csv"))
    }

    fn load_material_table(&self) -> Result<MaterialTable> {
        let path = self.material_table_path();
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading material table {} (run `emissivity` first or set material_table)", path.display()))?;
        Ok(MaterialTable::read_csv(&text)?)
    }

    fn load_calibrations(&self) -> Result<BTreeMap<String, InstrumentCalibration>> {
        let path = self
            .config
            .calibrations
            .clone()
            .unwrap_or_else(|| self.out().join("instrument_calibrations.csv"));
        if !path.exists() {
            eprintln!(
                "warning: no calibrations at {}; readings pass through unnormalized",
                path.display()
            );
            return Ok(BTreeMap::new());
        }
        Ok(instrument::read_calibrations_csv(&std::fs::read_to_string(&path)?)?)
    }

    fn load_readings(&self) -> Result<Vec<ThermometerReading>> {
        let path = self
            .config
            .readings
            .as_ref()
            .ok_or_else(|| anyhow!("config has no readings path"))?;
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading readings CSV {}", path.display()))?;
        Ok(instrument::read_readings_csv(&text)?)
    }

    fn load_rasters(&self, dir: &Path) -> Result<Vec<(String, RadianceRaster)>> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("listing raster dir {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("asc") | Some("bin")
                )
            })
            .collect();
        paths.sort();
        if paths.is_empty() {
            bail!("no .asc or .bin rasters in {}", dir.display());
        }
        let mut out = Vec::with_capacity(paths.len());
        for p in paths {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("raster").to_string();
            let mut raster = read_raster(&p).with_context(|| format!("reading {}", p.display()))?;
            if raster.image_id.is_empty() {
                raster.image_id = stem.clone();
            }
            out.push((stem, raster));
        }
        Ok(out)
    }

    fn pervious(&self) -> std::collections::BTreeSet<String> {
        self.config.pervious_materials.iter().cloned().collect()
    }
}

// ---------------------------------------------------------------------------
// emissivity
// ---------------------------------------------------------------------------

pub fn cmd_emissivity(ctx: &Ctx) -> Result<()> {
    let dir = ctx
        .config
        .spectra_dir
        .as_ref()
        .ok_or_else(|| anyhow!("config has no spectra_dir"))?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing spectra dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && !matches!(p.extension().and_then(|e| e.to_str()), Some("json"))
                && !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    files.sort();

    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for path in &files {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("material").to_string();
        let parsed = std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|text| spectra::parse_spectral_curve(&text, &name).map_err(|e| e.to_string()))
            .and_then(|curve| spectra::emissivity_curve(&curve).map_err(|e| e.to_string()));
        match parsed {
            Ok(curve) => curves.push(curve),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                failures.push(path.clone());
            }
        }
    }
    if !failures.is_empty() {
        bail!("{} spectra file(s) failed to parse", failures.len());
    }
    let table = spectra::material_table(
        &curves,
        &ctx.config.bands,
        ctx.config.t_ref_k,
        ctx.config.planck.lambda_step_um,
    )?;
    ctx.ensure_out()?;
    let path = ctx.out().join("material_table.csv");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(&path, buf)?;
    println!(
        "wrote {} ({} materials x {} bands)",
        path.display(),
        table.len(),
        ctx.config.bands.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate-instruments
// ---------------------------------------------------------------------------

pub fn cmd_calibrate_instruments(ctx: &Ctx) -> Result<()> {
    let path = ctx
        .config
        .calibration_readings
        .as_ref()
        .or(ctx.config.readings.as_ref())
        .ok_or_else(|| anyhow!("config has neither calibration_readings nor readings"))?;
    let rows = instrument::read_readings_csv(&std::fs::read_to_string(path)?)?;
    let cal_rows: Vec<&ThermometerReading> = rows.iter().filter(|r| r.is_calibration()).collect();
    if cal_rows.is_empty() {
        bail!("no control temperatures in {} (missing control_temp_C column?)", path.display());
    }
    let table = ctx.table(ctx.config.device_band)?;

    // per-instrument sessions so one bad instrument yields an error row
    // instead of failing the batch
    let mut by_instrument: BTreeMap<String, Vec<(String, f64, f64)>> = BTreeMap::new();
    for r in &cal_rows {
        by_instrument.entry(r.instrument_id.clone()).or_default().push((
            r.instrument_id.clone(),
            r.control_temp_k.unwrap(),
            r.displayed_temp_k,
        ));
    }
    let mut fits: Vec<(String, rooftherm::Result<InstrumentCalibration>)> = Vec::new();
    for (id, triples) in by_instrument {
        let fit = CalibrationSession::new(triples, ctx.config.device_emissivity, ctx.config.medium_emissivity)
            .and_then(|session| instrument::fit_instrument(&session, &id, &table));
        if let Ok(cal) = &fit {
            if cal.r_squared < 0.95 {
                eprintln!(
                    "warning: instrument {} R^2 {:.4} below the 0.95 bar",
                    id, cal.r_squared
                );
            }
        }
        fits.push((id, fit));
    }
    ctx.ensure_out()?;
    let out = ctx.out().join("instrument_calibrations.csv");
    let mut buf = Vec::new();
    instrument::write_calibrations_csv(&mut buf, &fits)?;
    std::fs::write(&out, buf)?;
    let ok = fits.iter().filter(|(_, f)| f.is_ok()).count();
    println!("wrote {} ({ok}/{} instruments fit)", out.display(), fits.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// elc fit / apply
// ---------------------------------------------------------------------------

/// Model file: the fitted model plus pruning provenance.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    model: ELCModel,
    #[serde(default)]
    r_squared_before_prune: Option<f64>,
    #[serde(default)]
    removed_targets: Vec<String>,
}

fn normalized_field_readings(
    ctx: &Ctx,
    materials: &MaterialTable,
    device_table: &PlanckTable,
) -> Result<Vec<instrument::NormalizedReading>> {
    let readings = ctx.load_readings()?;
    let calibrations = ctx.load_calibrations()?;
    Ok(instrument::process_field_readings(
        &readings,
        materials,
        &calibrations,
        ctx.config.device_emissivity,
        device_table,
    )?)
}

pub fn cmd_elc_fit(ctx: &Ctx) -> Result<()> {
    let rasters_dir = ctx
        .config
        .rasters_dir
        .as_ref()
        .ok_or_else(|| anyhow!("config has no rasters_dir"))?;
    let materials = ctx.load_material_table()?;
    let device_table = ctx.table(ctx.config.device_band)?;
    let scene_table = ctx.table(ctx.config.scene_band)?;
    let normalized = normalized_field_readings(ctx, &materials, &device_table)?;
    let targets: Vec<_> = normalized.into_iter().filter(|r| r.building_id.is_none()).collect();
    let rasters: Vec<RadianceRaster> = ctx.load_rasters(rasters_dir)?.into_iter().map(|(_, r)| r).collect();
    let pairs = elc::prepare_pairs(
        &targets,
        &materials,
        &rasters,
        &scene_table,
        ctx.config.sample_window,
        &ctx.pervious(),
    )?;
    ctx.ensure_out()?;
    let pairs_path = ctx.out().join("elc_pairs.csv");
    let mut buf = Vec::new();
    elc::write_pairs_csv(&mut buf, &pairs)?;
    std::fs::write(&pairs_path, buf)?;

    let impervious = elc::filter_impervious(&pairs);
    if impervious.len() < 3 {
        bail!(
            "only {} impervious calibration pairs (of {}); need at least 3",
            impervious.len(),
            pairs.len()
        );
    }
    let (_, diagnostics) = elc::fit_elc(&impervious)?;
    let outcome = elc::prune_and_refit(&impervious, &diagnostics, ctx.config.cooks_rule()?)?;
    let mut model = outcome.model;
    model.band = Some(ctx.config.scene_band);

    let model_path = ctx.out().join("elc_model.json");
    std::fs::write(
        &model_path,
        serde_json::to_string_pretty(&ModelFile {
            model: model.clone(),
            r_squared_before_prune: Some(outcome.r_squared_before),
            removed_targets: outcome.removed_ids.clone(),
        })?,
    )?;
    let diag_path = ctx.out().join("elc_diagnostics.json");
    std::fs::write(
        &diag_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "before_prune": diagnostics,
            "before_prune_plots": diagnostics.plot_series(),
            "after_prune": outcome.diagnostics,
            "after_prune_plots": outcome.diagnostics.plot_series(),
            "removed_targets": outcome.removed_ids,
        }))?,
    )?;
    println!(
        "wrote {} (gain {:.4}, offset {:.4}, R^2 {:.4} -> {:.4}, removed {:?})",
        model_path.display(),
        model.gain,
        model.offset,
        outcome.r_squared_before,
        outcome.r_squared_after,
        outcome.removed_ids
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ImageSummary {
    image_id: String,
    valid_pixels: usize,
    nodata_pixels: usize,
    non_positive: usize,
    out_of_table: usize,
}

fn check_invalid_fraction(ctx: &Ctx, command: &str, invalid: usize, denominator: usize) -> Result<()> {
    if denominator == 0 {
        return Ok(());
    }
    let fraction = invalid as f64 / denominator as f64;
    if fraction > ctx.config.max_invalid_fraction {
        return Err(anyhow::Error::new(NumericalDomainError(format!(
            "{command}: {invalid} of {denominator} pixels ({:.2}%) fell outside the physical range (limit {:.2}%)",
            100.0 * fraction,
            100.0 * ctx.config.max_invalid_fraction
        ))));
    }
    Ok(())
}

pub fn cmd_elc_apply(ctx: &Ctx) -> Result<()> {
    let rasters_dir = ctx
        .config
        .rasters_dir
        .as_ref()
        .ok_or_else(|| anyhow!("config has no rasters_dir"))?;
    let model_path = ctx
        .config
        .elc_model
        .clone()
        .unwrap_or_else(|| ctx.out().join("elc_model.json"));
    let model_file: ModelFile = serde_json::from_str(
        &std::fs::read_to_string(&model_path)
            .with_context(|| format!("reading ELC model {} (run `elc fit` first)", model_path.display()))?,
    )?;
    let model = model_file.model;
    let corrected_dir = ctx.out().join("corrected");
    std::fs::create_dir_all(&corrected_dir)?;

    let mut summaries = Vec::new();
    let mut total_invalid = 0usize;
    let mut total_valid = 0usize;
    for (stem, raster) in ctx.load_rasters(rasters_dir)? {
        let (corrected, counts) = pipeline::correct_raster(&raster, &model)?;
        let valid = raster.values.iter().filter(|&&v| !raster.is_nodata(v)).count();
        total_invalid += counts.non_positive;
        total_valid += valid;
        summaries.push(ImageSummary {
            image_id: corrected.image_id.clone(),
            valid_pixels: valid,
            nodata_pixels: raster.values.len() - valid,
            non_positive: counts.non_positive,
            out_of_table: 0,
        });
        write_raster(&corrected_dir.join(format!("{stem}.asc")), &corrected, Some("W/m^2"))?;
    }
    std::fs::write(
        ctx.out().join("elc_apply_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "command": "elc apply",
            "model": model,
            "images": summaries,
            "total_non_positive": total_invalid,
        }))?,
    )?;
    println!(
        "wrote corrected rasters to {} ({} invalid of {} pixels)",
        corrected_dir.display(),
        total_invalid,
        total_valid
    );
    check_invalid_fraction(ctx, "elc apply", total_invalid, total_valid)
}

// ---------------------------------------------------------------------------
// rooftemp
// ---------------------------------------------------------------------------

pub fn cmd_rooftemp(ctx: &Ctx) -> Result<()> {
    let corrected_dir = ctx
        .config
        .corrected_dir
        .clone()
        .unwrap_or_else(|| ctx.out().join("corrected"));
    let footprints_path = ctx
        .config
        .footprints
        .as_ref()
        .ok_or_else(|| anyhow!("config has no footprints path"))?;
    let footprints = FootprintSet::from_geojson(&std::fs::read_to_string(footprints_path)?)?;
    let materials = ctx.load_material_table()?;
    let table = ctx.table(ctx.config.scene_band)?;

    let temp_dir = ctx.out().join("temperature");
    std::fs::create_dir_all(&temp_dir)?;
    let mut all_reports: Vec<BuildingReport> = Vec::new();
    let mut summaries = Vec::new();
    let mut total_out_of_table = 0usize;
    let mut total_masked_valid = 0usize;
    for (stem, ground) in ctx.load_rasters(&corrected_dir)? {
        let mask = rooftherm::raster::rasterize(&footprints, &ground)?;
        let (temp_k, reports, counts) =
            pipeline::rooftop_temperatures(&ground, &mask, &footprints, &materials, &table)?;
        let converted = reports.iter().map(|r| r.pixel_count).sum::<usize>();
        total_out_of_table += counts.out_of_table;
        total_masked_valid += converted + counts.out_of_table;
        summaries.push(ImageSummary {
            image_id: ground.image_id.clone(),
            valid_pixels: converted,
            nodata_pixels: mask.masked_count() - converted,
            non_positive: 0,
            out_of_table: counts.out_of_table,
        });
        all_reports.extend(reports);
        let temp_c = temp_k.map_cells(k_to_c);
        write_raster(&temp_dir.join(format!("{stem}.asc")), &temp_c, Some("celsius"))?;
    }
    all_reports.sort_by(|a, b| {
        a.building_id
            .cmp(&b.building_id)
            .then_with(|| a.image_id.cmp(&b.image_id))
    });
    ctx.ensure_out()?;
    let reports_path = ctx.out().join("building_reports.csv");
    let mut buf = Vec::new();
    pipeline::write_reports_csv(&mut buf, &all_reports)?;
    std::fs::write(&reports_path, buf)?;
    std::fs::write(
        ctx.out().join("rooftemp_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "command": "rooftemp",
            "images": summaries,
            "buildings_reported": all_reports.len(),
            "total_out_of_table": total_out_of_table,
            "note": "per-building means include every masked pixel, roof edges too",
        }))?,
    )?;
    println!(
        "wrote {} ({} building reports; {} pixels out of table)",
        reports_path.display(),
        all_reports.len(),
        total_out_of_table
    );
    check_invalid_fraction(ctx, "rooftemp", total_out_of_table, total_masked_valid)
}

// ---------------------------------------------------------------------------
// validate / overlap
// ---------------------------------------------------------------------------

fn load_reports(ctx: &Ctx) -> Result<Vec<BuildingReport>> {
    let path = ctx
        .config
        .reports
        .clone()
        .unwrap_or_else(|| ctx.out().join("building_reports.csv"));
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading building reports {} (run `rooftemp` first)", path.display()))?;
    Ok(pipeline::read_reports_csv(&text)?)
}

pub fn cmd_validate(ctx: &Ctx) -> Result<()> {
    let reports = load_reports(ctx)?;
    let materials = ctx.load_material_table()?;
    let device_table = ctx.table(ctx.config.device_band)?;
    let normalized = normalized_field_readings(ctx, &materials, &device_table)?;
    let roof_readings: Vec<_> = normalized.into_iter().filter(|r| r.building_id.is_some()).collect();
    let records = pipeline::build_validation_records(&reports, &roof_readings);
    let stats = pipeline::rmse_by_material(&records);

    ctx.ensure_out()?;
    let validation_path = ctx.out().join("validation.csv");
    let mut buf = Vec::new();
    pipeline::write_validation_csv(&mut buf, &records)?;
    std::fs::write(&validation_path, buf)?;
    std::fs::write(
        ctx.out().join("rmse_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "command": "validate",
            "n_records": records.len(),
            "by_material": stats,
        }))?,
    )?;
    for (material, s) in &stats {
        println!(
            "{material}: RMSE {:.3} K over {} points (mean error {:+.3} K)",
            s.rmse_k, s.n, s.mean_error_k
        );
    }
    println!("wrote {} ({} records)", validation_path.display(), records.len());
    Ok(())
}

pub fn cmd_overlap(ctx: &Ctx) -> Result<()> {
    let reports = load_reports(ctx)?;
    let overlaps = pipeline::overlap_report(&reports);
    ctx.ensure_out()?;
    let path = ctx.out().join("overlap.csv");
    let mut buf = Vec::new();
    pipeline::write_overlap_csv(&mut buf, &overlaps)?;
    std::fs::write(&path, buf)?;
    println!("wrote {} ({} overlapping pairs)", path.display(), overlaps.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub fn cmd_simulate(ctx: &Ctx, scene_path: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut spec = SceneSpec::from_json(
        &std::fs::read_to_string(scene_path)
            .with_context(|| format!("reading scene spec {}", scene_path.display()))?,
    )?;
    if let Some(seed) = seed_override {
        spec.atmosphere.seed = seed;
    }
    let scene_table = ctx.table(spec.band)?;
    let device_table = ctx.table(ctx.config.device_band)?;
    let scene = synth::generate_scene(&spec, &scene_table, &device_table)?;

    ctx.ensure_out()?;
    let sensor_dir = ctx.out().join("sensor");
    std::fs::create_dir_all(&sensor_dir)?;
    for image in spec.image_list() {
        let atmosphere = synth::Atmosphere {
            offset: spec.atmosphere.offset + image.offset_jitter,
            ..spec.atmosphere.clone()
        };
        let mut sensor = match &scene.reflected {
            Some(reflected) => synth::simulate_at_sensor_with_reflection(
                &scene.temperature,
                &scene.emissivity,
                reflected,
                &atmosphere,
                &scene_table,
            )?,
            None => synth::simulate_at_sensor(&scene.temperature, &scene.emissivity, &atmosphere, &scene_table)?,
        };
        sensor.image_id = image.image_id.clone();
        sensor.flight_line = image.flight_line.clone();
        write_raster(&sensor_dir.join(format!("{}.asc", image.image_id)), &sensor, Some("W/m^2"))?;
    }

    write_raster(&ctx.out().join("truth_temperature.asc"), &scene.temperature, Some("kelvin"))?;
    write_raster(&ctx.out().join("truth_emissivity.asc"), &scene.emissivity, Some("dimensionless"))?;
    std::fs::write(ctx.out().join("footprints.geojson"), scene.footprints.to_geojson()?)?;

    let mut buf = Vec::new();
    instrument::write_readings_csv(&mut buf, &scene.readings)?;
    std::fs::write(ctx.out().join("readings.csv"), buf)?;
    let mut buf = Vec::new();
    instrument::write_readings_csv(&mut buf, &scene.calibration)?;
    std::fs::write(ctx.out().join("calibration.csv"), buf)?;

    let materials = spec.material_table(ctx.config.device_band)?;
    let mut buf = Vec::new();
    materials.write_csv(&mut buf)?;
    std::fs::write(ctx.out().join("material_table.csv"), buf)?;

    // a ready-to-run config wired to these outputs
    let run_config = RunConfig {
        rasters_dir: Some(PathBuf::from("sensor")),
        footprints: Some(PathBuf::from("footprints.geojson")),
        readings: Some(PathBuf::from("readings.csv")),
        calibration_readings: Some(PathBuf::from("calibration.csv")),
        material_table: Some(PathBuf::from("material_table.csv")),
        output_dir: PathBuf::from("."),
        scene_band: spec.band,
        device_band: ctx.config.device_band,
        bands: vec![spec.band, ctx.config.device_band],
        planck: ctx.config.planck.clone(),
        device_emissivity: spec.device_emissivity,
        medium_emissivity: spec.medium_emissivity,
        seed: Some(spec.atmosphere.seed),
        ..RunConfig::default()
    };
    std::fs::write(
        ctx.out().join("run_config.json"),
        serde_json::to_string_pretty(&run_config)?,
    )?;
    println!(
        "wrote synthetic dataset to {} ({} images, {} buildings, {} targets, {} readings)",
        ctx.out().display(),
        spec.image_list().len(),
        spec.buildings.len(),
        spec.targets.len(),
        scene.readings.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_accepts_plain_model_json() {
        let plain = r#"{"gain": 2.0, "offset": -1.0, "r_squared": 0.9, "n_points": 5}"#;
        let parsed: ModelFile = serde_json::from_str(plain).unwrap();
        assert_eq!(parsed.model.gain, 2.0);
        assert!(parsed.removed_targets.is_empty());
    }

    #[test]
    fn invalid_fraction_gate() {
        let ctx = Ctx { config: RunConfig::default() };
        assert!(check_invalid_fraction(&ctx, "x", 0, 100).is_ok());
        assert!(check_invalid_fraction(&ctx, "x", 5, 100).is_ok()); // 5% == default limit
        let err = check_invalid_fraction(&ctx, "x", 6, 100).unwrap_err();
        assert!(err.downcast_ref::<NumericalDomainError>().is_some());
    }
}
