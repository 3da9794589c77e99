//! Forward simulator and scene generator: the independent oracle for
//! end-to-end tests.
//!
//! A scene is a known temperature field plus per-material emissivities; the
//! simulator produces at-sensor rasters through a parametric linear
//! atmosphere (`sensor = gain·ground + offset + noise`), simulated field
//! readings (targets and rooftops) through the inverse of the instrument
//! chain, and calibration-session rows with injected per-instrument
//! distortions. Running the real pipeline over these outputs must recover the
//! scene truth.
//!
//! Pixel noise is counter-based (see [`noise`]): each pixel's Gaussian draw
//! is a pure function of `(seed, pixel index)`, so parallel and sequential
//! simulation produce bit-identical rasters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::instrument::{ThermometerReading, DEFAULT_DEVICE_EMISSIVITY, DEFAULT_MEDIUM_EMISSIVITY};
use crate::radiometry::{PlanckTable, WavelengthBand};
use crate::raster::{rasterize, Building, FootprintSet, RadianceRaster, DEFAULT_NODATA};
use crate::spectra::MaterialTable;

/// Deterministic counter-based random stream.
///
/// `word(seed, counter)` applies the splitmix64 finalizer twice over a
/// golden-ratio counter sequence; [`gaussian`] consumes words `2i` and
/// `2i + 1` through a Box–Muller transform. Draws are pure functions of
/// `(seed, counter)`, so any evaluation order — including a parallel one —
/// yields the same values, and a rerun with the same seed is bit-identical.
pub mod noise {
    const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

    /// splitmix64 output mixing.
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// The `counter`-th word of the stream for `seed`.
    pub fn word(seed: u64, counter: u64) -> u64 {
        mix(mix(seed.wrapping_add(GOLDEN)).wrapping_add(counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(seed: u64, counter: u64) -> f64 {
        (word(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by Box–Muller over words `2·counter` and
    /// `2·counter + 1`.
    pub fn gaussian(seed: u64, counter: u64) -> f64 {
        let u1 = ((word(seed, 2 * counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        let u2 = (word(seed, 2 * counter + 1) >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

}

/// Parametric linear atmosphere: `sensor = gain·ground + offset + N(0, σ²)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atmosphere {
    pub gain: f64,
    pub offset: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Atmosphere {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0) {
            return Err(Error::domain(format!("atmosphere gain must be positive, got {}", self.gain)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::domain(format!("noise sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// A material the scene knows how to paint and read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub name: String,
    /// Band emissivity in the imaging band.
    pub emissivity_scene: f64,
    /// Band emissivity in the 8–14 μm thermometer band.
    pub emissivity_device: f64,
    #[serde(default)]
    pub pervious: bool,
    /// Reflective surfaces pick up a reflected-background term when the scene
    /// configures one.
    #[serde(default)]
    pub reflective: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingSpec {
    pub building_id: String,
    pub material: String,
    pub roof_temp_k: f64,
    /// Single outer ring, map units.
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target_id: String,
    pub material: String,
    pub temperature_k: f64,
    pub x: f64,
    pub y: f64,
    pub instrument_id: String,
}

/// A rooftop field measurement of one building.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoofReadingSpec {
    pub building_id: String,
    pub instrument_id: String,
}

/// Injected distortion: the instrument's kinetic estimates relate to the
/// control scale by `control = slope·kinetic + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub instrument_id: String,
    pub slope: f64,
    pub offset_k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageSpec {
    pub image_id: String,
    pub flight_line: String,
    /// Per-image additive at-sensor perturbation (gust-like), W·m⁻².
    #[serde(default)]
    pub offset_jitter: f64,
}

fn default_cal_points() -> usize {
    40
}

/// Scene description, loadable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub ncols: usize,
    pub nrows: usize,
    pub cellsize: f64,
    #[serde(default)]
    pub xll: f64,
    #[serde(default)]
    pub yll: f64,
    pub band: WavelengthBand,
    pub background_temp_k: f64,
    /// Linear background ramp, K per map unit in x and y.
    #[serde(default)]
    pub background_ramp_x: f64,
    #[serde(default)]
    pub background_ramp_y: f64,
    pub background_emissivity: f64,
    pub materials: Vec<MaterialSpec>,
    #[serde(default)]
    pub buildings: Vec<BuildingSpec>,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub roof_readings: Vec<RoofReadingSpec>,
    #[serde(default)]
    pub instruments: Vec<InstrumentSpec>,
    pub atmosphere: Atmosphere,
    #[serde(default)]
    pub images: Vec<ImageSpec>,
    /// Effective sky temperature reflected into the aerial view by
    /// reflective materials.
    #[serde(default)]
    pub sky_temp_k: Option<f64>,
    /// Effective background temperature reflected into close-range field
    /// readings of reflective materials (operator and surroundings).
    #[serde(default)]
    pub field_reflected_temp_k: Option<f64>,
    #[serde(default = "default_device_emissivity")]
    pub device_emissivity: f64,
    #[serde(default = "default_medium_emissivity")]
    pub medium_emissivity: f64,
    /// Calibration bath readings per instrument.
    #[serde(default = "default_cal_points")]
    pub calibration_points: usize,
    /// Std-dev of kinetic-scale calibration noise, K.
    #[serde(default)]
    pub calibration_noise_sigma_k: f64,
}

fn default_device_emissivity() -> f64 {
    DEFAULT_DEVICE_EMISSIVITY
}

fn default_medium_emissivity() -> f64 {
    DEFAULT_MEDIUM_EMISSIVITY
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn material(&self, name: &str) -> Result<&MaterialSpec> {
        self.materials
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::MissingMaterial(name.to_string()))
    }

    /// Image list, defaulting to a single image.
    pub fn image_list(&self) -> Vec<ImageSpec> {
        if self.images.is_empty() {
            vec![ImageSpec {
                image_id: "sim001".into(),
                flight_line: "1".into(),
                offset_jitter: 0.0,
            }]
        } else {
            self.images.clone()
        }
    }

    /// The scene's material emissivities as a material table covering the
    /// imaging and device bands.
    pub fn material_table(&self, device_band: WavelengthBand) -> Result<MaterialTable> {
        let mut table = MaterialTable::new();
        for m in &self.materials {
            table.insert(m.name.clone(), self.band, m.emissivity_scene)?;
            table.insert(m.name.clone(), device_band, m.emissivity_device)?;
        }
        Ok(table)
    }

    fn instrument_distortion(&self, id: &str) -> (f64, f64) {
        self.instruments
            .iter()
            .find(|i| i.instrument_id == id)
            .map(|i| (i.slope, i.offset_k))
            .unwrap_or((1.0, 0.0))
    }
}

/// Generated scene: ground-truth rasters, footprints, and simulated readings.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Kinetic temperature, K.
    pub temperature: RadianceRaster,
    /// Band emissivity in the imaging band.
    pub emissivity: RadianceRaster,
    /// Reflected-background exitance added to the aerial view, W·m⁻²
    /// (nonzero only on reflective pixels when `sky_temp_k` is set).
    pub reflected: Option<RadianceRaster>,
    pub footprints: FootprintSet,
    /// Field rows: targets plus roof validation readings.
    pub readings: Vec<ThermometerReading>,
    /// Calibration-session rows (control + displayed per instrument).
    pub calibration: Vec<ThermometerReading>,
}

impl Scene {
    /// Ground-truth roof temperature per building id.
    pub fn building_truth(&self, spec: &SceneSpec) -> BTreeMap<String, (String, f64)> {
        spec.buildings
            .iter()
            .map(|b| (b.building_id.clone(), (b.material.clone(), b.roof_temp_k)))
            .collect()
    }
}

/// Displayed temperature that the pipeline's radiant → kinetic conversion
/// maps back onto `kinetic`, via the same lookup table the pipeline uses.
fn displayed_for_kinetic(
    kinetic_k: f64,
    e_device: f64,
    e_target: f64,
    table: &PlanckTable,
) -> Result<f64> {
    let m = table.exitance_at(kinetic_k)? * (e_target / e_device);
    table.invert(m)
}

/// Kinetic temperature a perfect instrument chain would report for a surface
/// at `surface_k` with a reflected-background term the chain does not model.
fn kinetic_with_reflection(
    surface_k: f64,
    emissivity: f64,
    reflected_temp_k: Option<f64>,
    table: &PlanckTable,
) -> Result<f64> {
    match reflected_temp_k {
        None => Ok(surface_k),
        Some(t_bg) => {
            let received =
                emissivity * table.exitance_at(surface_k)? + (1.0 - emissivity) * table.exitance_at(t_bg)?;
            table.invert(received / emissivity)
        }
    }
}

/// Rasterize the scene: background ramp, buildings, target patches, simulated
/// field readings, and calibration sessions.
///
/// `scene_table` must cover the imaging band, `device_table` the 8–14 μm
/// thermometer band.
pub fn generate_scene(
    spec: &SceneSpec,
    scene_table: &PlanckTable,
    device_table: &PlanckTable,
) -> Result<Scene> {
    if !scene_table.band().approx_eq(&spec.band) {
        return Err(Error::Config(format!(
            "scene table band {} does not match scene band {}",
            scene_table.band(),
            spec.band
        )));
    }
    spec.atmosphere.validate()?;
    let mut temperature = RadianceRaster::filled(
        spec.ncols,
        spec.nrows,
        spec.xll,
        spec.yll,
        spec.cellsize,
        DEFAULT_NODATA,
        0.0,
    )?;
    temperature.band = Some(spec.band);
    for row in 0..spec.nrows {
        for col in 0..spec.ncols {
            let (x, y) = temperature.cell_center(row, col);
            let t = spec.background_temp_k
                + spec.background_ramp_x * (x - spec.xll)
                + spec.background_ramp_y * (y - spec.yll);
            temperature.set(row, col, t);
        }
    }
    let mut emissivity = temperature.like(spec.background_emissivity);
    emissivity.band = Some(spec.band);

    let needs_reflection = spec.sky_temp_k.is_some()
        && spec.materials.iter().any(|m| m.reflective)
        && (spec.buildings.iter().any(|b| spec.material(&b.material).map(|m| m.reflective).unwrap_or(false))
            || spec.targets.iter().any(|t| spec.material(&t.material).map(|m| m.reflective).unwrap_or(false)));
    let sky_exitance = match spec.sky_temp_k {
        Some(t) => Some(scene_table.exitance_at(t)?),
        None => None,
    };
    let mut reflected = if needs_reflection {
        Some(temperature.like(0.0))
    } else {
        None
    };

    // buildings
    let mut buildings = Vec::with_capacity(spec.buildings.len());
    let (gx0, gy0, gx1, gy1) = temperature.extent();
    for b in &spec.buildings {
        let ring: Vec<(f64, f64)> = b.polygon.iter().map(|p| (p[0], p[1])).collect();
        let building = Building::new(b.building_id.clone(), b.material.clone(), vec![ring])?;
        let (bx0, by0, bx1, by1) = building.bbox();
        if bx1 < gx0 || bx0 > gx1 || by1 < gy0 || by0 > gy1 {
            return Err(Error::Geometry(format!(
                "building '{}' lies outside the scene grid",
                b.building_id
            )));
        }
        buildings.push(building);
    }
    let footprints = FootprintSet { buildings };
    let mask = rasterize(&footprints, &temperature)?;
    for row in 0..spec.nrows {
        for col in 0..spec.ncols {
            if let Some(bi) = mask.building_at(row, col) {
                let b = &spec.buildings[bi as usize];
                let mat = spec.material(&b.material)?;
                temperature.set(row, col, b.roof_temp_k);
                emissivity.set(row, col, mat.emissivity_scene);
                if let (Some(refl), Some(sky), true) = (reflected.as_mut(), sky_exitance, mat.reflective) {
                    refl.set(row, col, (1.0 - mat.emissivity_scene) * sky);
                }
            }
        }
    }

    // targets: 3x3 patches so windowed sampling reads them exactly
    for t in &spec.targets {
        let (row, col) = temperature
            .cell_at(t.x, t.y)
            .ok_or(Error::OutOfExtent { x: t.x, y: t.y })?;
        let mat = spec.material(&t.material)?;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                if r < 0 || c < 0 || r >= spec.nrows as i64 || c >= spec.ncols as i64 {
                    continue;
                }
                temperature.set(r as usize, c as usize, t.temperature_k);
                emissivity.set(r as usize, c as usize, mat.emissivity_scene);
                if let (Some(refl), Some(sky), true) = (reflected.as_mut(), sky_exitance, mat.reflective) {
                    refl.set(r as usize, c as usize, (1.0 - mat.emissivity_scene) * sky);
                }
            }
        }
    }

    // all painted temperatures must be invertible later
    let (mut t_lo, mut t_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &temperature.values {
        if !temperature.is_nodata(v) {
            t_lo = t_lo.min(v);
            t_hi = t_hi.max(v);
        }
    }
    if t_lo < scene_table.t_min_k() || t_hi > scene_table.t_max_k() {
        return Err(Error::domain(format!(
            "scene temperatures [{t_lo}, {t_hi}] K exceed the table range [{}, {}] K",
            scene_table.t_min_k(),
            scene_table.t_max_k()
        )));
    }

    // field readings: targets, then roofs
    let mut readings = Vec::new();
    let mut timestamp = 0.0;
    for t in &spec.targets {
        let mat = spec.material(&t.material)?;
        let field_reflection = if mat.reflective { spec.field_reflected_temp_k } else { None };
        let k_phys = kinetic_with_reflection(t.temperature_k, mat.emissivity_device, field_reflection, device_table)?;
        let (slope, offset) = spec.instrument_distortion(&t.instrument_id);
        let k_inst = (k_phys - offset) / slope;
        let displayed = displayed_for_kinetic(k_inst, spec.device_emissivity, mat.emissivity_device, device_table)?;
        readings.push(ThermometerReading {
            instrument_id: t.instrument_id.clone(),
            displayed_temp_k: displayed,
            target_material: t.material.clone(),
            location: (t.x, t.y),
            timestamp,
            target_id: Some(t.target_id.clone()),
            building_id: None,
            control_temp_k: None,
        });
        timestamp += 1.0;
    }
    for rr in &spec.roof_readings {
        let b = spec
            .buildings
            .iter()
            .find(|b| b.building_id == rr.building_id)
            .ok_or_else(|| Error::Config(format!("roof reading for unknown building '{}'", rr.building_id)))?;
        let mat = spec.material(&b.material)?;
        let field_reflection = if mat.reflective { spec.field_reflected_temp_k } else { None };
        let k_phys = kinetic_with_reflection(b.roof_temp_k, mat.emissivity_device, field_reflection, device_table)?;
        let (slope, offset) = spec.instrument_distortion(&rr.instrument_id);
        let k_inst = (k_phys - offset) / slope;
        let displayed = displayed_for_kinetic(k_inst, spec.device_emissivity, mat.emissivity_device, device_table)?;
        let centroid = {
            let ring = &b.polygon;
            let n = ring.len() as f64;
            (
                ring.iter().map(|p| p[0]).sum::<f64>() / n,
                ring.iter().map(|p| p[1]).sum::<f64>() / n,
            )
        };
        readings.push(ThermometerReading {
            instrument_id: rr.instrument_id.clone(),
            displayed_temp_k: displayed,
            target_material: b.material.clone(),
            location: centroid,
            timestamp,
            target_id: None,
            building_id: Some(rr.building_id.clone()),
            control_temp_k: None,
        });
        timestamp += 1.0;
    }

    // calibration sessions: a distilled-water bath warming from 3 C, read
    // against the control at every 0.5 K step
    let mut calibration = Vec::new();
    let mut cal_counter = 0u64;
    for inst in &spec.instruments {
        for j in 0..spec.calibration_points {
            let control = 276.15 + 0.5 * j as f64;
            let mut k_inst = (control - inst.offset_k) / inst.slope;
            if spec.calibration_noise_sigma_k > 0.0 {
                k_inst += spec.calibration_noise_sigma_k
                    * noise::gaussian(spec.atmosphere.seed ^ 0xCA11, cal_counter);
            }
            cal_counter += 1;
            let displayed = displayed_for_kinetic(
                k_inst,
                spec.device_emissivity,
                spec.medium_emissivity,
                device_table,
            )?;
            calibration.push(ThermometerReading {
                instrument_id: inst.instrument_id.clone(),
                displayed_temp_k: displayed,
                target_material: "tap_water".into(),
                location: (spec.xll, spec.yll),
                timestamp: j as f64,
                target_id: None,
                building_id: None,
                control_temp_k: Some(control),
            });
        }
    }

    Ok(Scene {
        temperature,
        emissivity,
        reflected,
        footprints,
        readings,
        calibration,
    })
}

/// Forward-model an at-sensor raster: per pixel,
/// `ground = ε·M(T)` (band exitance interpolated from the lookup table) and
/// `sensor = gain·ground + offset + N(0, σ²)` with counter-based noise.
/// Deterministic given the seed; nodata propagates.
pub fn simulate_at_sensor(
    temperature: &RadianceRaster,
    emissivity: &RadianceRaster,
    atmosphere: &Atmosphere,
    table: &PlanckTable,
) -> Result<RadianceRaster> {
    simulate_at_sensor_impl(temperature, emissivity, None, atmosphere, table)
}

/// [`simulate_at_sensor`] plus a per-pixel reflected-background exitance term
/// added to the ground-leaving radiance (the pipeline does not model it).
pub fn simulate_at_sensor_with_reflection(
    temperature: &RadianceRaster,
    emissivity: &RadianceRaster,
    reflected: &RadianceRaster,
    atmosphere: &Atmosphere,
    table: &PlanckTable,
) -> Result<RadianceRaster> {
    simulate_at_sensor_impl(temperature, emissivity, Some(reflected), atmosphere, table)
}

fn simulate_at_sensor_impl(
    temperature: &RadianceRaster,
    emissivity: &RadianceRaster,
    reflected: Option<&RadianceRaster>,
    atmosphere: &Atmosphere,
    table: &PlanckTable,
) -> Result<RadianceRaster> {
    atmosphere.validate()?;
    if !temperature.aligned_with(emissivity) {
        return Err(Error::Config("temperature and emissivity rasters are not aligned".into()));
    }
    if let Some(r) = reflected {
        if !temperature.aligned_with(r) {
            return Err(Error::Config("reflected raster is not aligned".into()));
        }
    }
    // validate the temperature range up front so the parallel map cannot fail
    for &v in &temperature.values {
        if !temperature.is_nodata(v) && table.exitance_at(v).is_err() {
            return Err(Error::OutOfRange {
                value: v,
                min: table.t_min_k(),
                max: table.t_max_k(),
            });
        }
    }
    let nodata = temperature.nodata;
    let gain = atmosphere.gain;
    let offset = atmosphere.offset;
    let sigma = atmosphere.noise_sigma;
    let seed = atmosphere.seed;
    let temp_values = &temperature.values;
    let emis_values = &emissivity.values;
    let refl_values = reflected.map(|r| &r.values);
    let values = exec::map_indexed(temp_values.len(), |i| {
        let t = temp_values[i];
        if t == nodata || t.is_nan() {
            return nodata;
        }
        let mut ground = emis_values[i] * table.exitance_at(t).expect("range pre-checked");
        if let Some(refl) = refl_values {
            ground += refl[i];
        }
        let mut sensor = gain * ground + offset;
        if sigma > 0.0 {
            sensor += sigma * noise::gaussian(seed, i as u64);
        }
        sensor
    });
    let mut out = temperature.clone();
    out.values = values;
    out.band = Some(table.band());
    Ok(out)
}
