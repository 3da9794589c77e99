//! Run configuration: one JSON document, every field overridable from the
//! command line with `--set key=value` (dotted paths).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rooftherm::elc::ThresholdRule;
use rooftherm::radiometry::WavelengthBand;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanckParams {
    pub t_min_k: f64,
    pub t_max_k: f64,
    pub t_step_k: f64,
    pub lambda_step_um: f64,
}

impl Default for PlanckParams {
    fn default() -> Self {
        PlanckParams {
            t_min_k: rooftherm::radiometry::DEFAULT_TABLE_T_MIN_K,
            t_max_k: rooftherm::radiometry::DEFAULT_TABLE_T_MAX_K,
            t_step_k: rooftherm::radiometry::DEFAULT_TABLE_T_STEP_K,
            lambda_step_um: rooftherm::radiometry::DEFAULT_LAMBDA_STEP_UM,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    // inputs
    pub spectra_dir: Option<PathBuf>,
    pub rasters_dir: Option<PathBuf>,
    pub footprints: Option<PathBuf>,
    pub readings: Option<PathBuf>,
    /// Calibration-session rows; defaults to `readings` when absent.
    pub calibration_readings: Option<PathBuf>,
    pub material_table: Option<PathBuf>,
    pub calibrations: Option<PathBuf>,
    pub elc_model: Option<PathBuf>,
    pub corrected_dir: Option<PathBuf>,
    pub reports: Option<PathBuf>,
    // outputs
    pub output_dir: PathBuf,
    // bands and tables
    pub scene_band: WavelengthBand,
    pub device_band: WavelengthBand,
    /// Bands the `emissivity` command integrates over.
    pub bands: Vec<WavelengthBand>,
    pub t_ref_k: f64,
    pub planck: PlanckParams,
    // instrument chain
    pub device_emissivity: f64,
    pub medium_emissivity: f64,
    // elc options
    pub sample_window: usize,
    /// "4/n", "none", "abs:<value>", or "top:<k>".
    pub cooks_rule: String,
    pub pervious_materials: Vec<String>,
    /// Invalid-pixel fraction above which a command exits with code 2.
    pub max_invalid_fraction: f64,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spectra_dir: None,
            rasters_dir: None,
            footprints: None,
            readings: None,
            calibration_readings: None,
            material_table: None,
            calibrations: None,
            elc_model: None,
            corrected_dir: None,
            reports: None,
            output_dir: PathBuf::from("out"),
            scene_band: WavelengthBand::lwir_8_9p2(),
            device_band: WavelengthBand::lwir_8_14(),
            bands: vec![WavelengthBand::lwir_8_9p2(), WavelengthBand::lwir_8_14()],
            t_ref_k: rooftherm::spectra::DEFAULT_T_REF_K,
            planck: PlanckParams::default(),
            device_emissivity: rooftherm::instrument::DEFAULT_DEVICE_EMISSIVITY,
            medium_emissivity: rooftherm::instrument::DEFAULT_MEDIUM_EMISSIVITY,
            sample_window: rooftherm::elc::DEFAULT_SAMPLE_WINDOW,
            cooks_rule: "4/n".into(),
            pervious_materials: vec!["grass".into(), "soil".into()],
            max_invalid_fraction: 0.05,
            seed: None,
            threads: None,
        }
    }
}

impl RunConfig {
    /// Load a config JSON, apply `--set` overrides, and resolve relative
    /// paths against the config file's directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value: serde_json::Value = match path {
            Some(p) => serde_json::from_str(
                &std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            )
            .with_context(|| format!("parsing config {}", p.display()))?,
            None => serde_json::json!({}),
        };
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(value).context("config does not match the expected schema")?;
        if let Some(base) = path.and_then(|p| p.parent()) {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&path);
                }
            }
        };
        fix(&mut self.spectra_dir);
        fix(&mut self.rasters_dir);
        fix(&mut self.footprints);
        fix(&mut self.readings);
        fix(&mut self.calibration_readings);
        fix(&mut self.material_table);
        fix(&mut self.calibrations);
        fix(&mut self.elc_model);
        fix(&mut self.corrected_dir);
        fix(&mut self.reports);
        if self.output_dir.is_relative() {
            self.output_dir = if self.output_dir == Path::new(".") {
                base.to_path_buf()
            } else {
                base.join(&self.output_dir)
            };
        }
    }

    pub fn cooks_rule(&self) -> Result<ThresholdRule> {
        let rule = self.cooks_rule.trim();
        if rule.eq_ignore_ascii_case("4/n") || rule.eq_ignore_ascii_case("four_over_n") {
            Ok(ThresholdRule::FourOverN)
        } else if rule.eq_ignore_ascii_case("none") {
            Ok(ThresholdRule::None)
        } else if let Some(v) = rule.strip_prefix("abs:") {
            Ok(ThresholdRule::Absolute(v.parse().context("bad abs: threshold")?))
        } else if let Some(k) = rule.strip_prefix("top:") {
            Ok(ThresholdRule::TopK(k.parse().context("bad top: count")?))
        } else {
            bail!("unknown cooks_rule '{rule}' (expected 4/n, none, abs:<x>, or top:<k>)")
        }
    }
}

/// Apply one `key.path=value` override to the raw JSON document. Values parse
/// as JSON when possible (numbers, booleans, arrays) and fall back to strings.
fn apply_override(root: &mut serde_json::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .with_context(|| format!("override '{item}' is not key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            bail!("override '{key}': '{}' is not an object", parts[..i].join("."));
        }
        let map = node.as_object_mut().unwrap();
        if i == parts.len() - 1 {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}
