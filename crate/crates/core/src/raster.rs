//! Raster and vector plumbing: ESRI ASCII grids (plus a raw binary twin),
//! JSON sidecars, coordinate ↔ pixel mapping, window sampling, and
//! rasterization of building footprints into per-building masks.
//!
//! Grid values are stored row-major with the top (northernmost) row first,
//! matching the ASCII grid layout. The origin is the lower-left corner in map
//! units. All inputs are assumed to share one planar coordinate system.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::radiometry::WavelengthBand;

/// Default nodata sentinel for rasters we create.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// A georeferenced grid of band exitance (or temperature) values.
#[derive(Debug, Clone, PartialEq)]
pub struct RadianceRaster {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner of the grid, map units.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, top row first.
    pub values: Vec<f64>,
    pub band: Option<WavelengthBand>,
    pub image_id: String,
    pub flight_line: String,
}

impl RadianceRaster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::domain("raster needs at least one row and column"));
        }
        if !(cellsize > 0.0) {
            return Err(Error::domain(format!("cellsize must be positive, got {cellsize}")));
        }
        if values.len() != ncols * nrows {
            return Err(Error::domain(format!(
                "value count {} does not match {}x{} grid",
                values.len(),
                ncols,
                nrows
            )));
        }
        Ok(RadianceRaster {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
            band: None,
            image_id: String::new(),
            flight_line: String::new(),
        })
    }

    /// Uniform raster filled with one value.
    pub fn filled(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        fill: f64,
    ) -> Result<Self> {
        RadianceRaster::new(ncols, nrows, xll, yll, cellsize, nodata, vec![fill; ncols * nrows])
    }

    /// Empty grid with the same georeferencing and metadata as `self`.
    pub fn like(&self, fill: f64) -> Self {
        let mut r = self.clone();
        r.values = vec![fill; self.ncols * self.nrows];
        r
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.index(row, col);
        self.values[i] = v;
    }

    /// Map-unit extent (x_min, y_min, x_max, y_max).
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        (
            self.xll,
            self.yll,
            self.xll + self.ncols as f64 * self.cellsize,
            self.yll + self.nrows as f64 * self.cellsize,
        )
    }

    /// Center of cell (row, col) in map units.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + ((self.nrows - 1 - row) as f64 + 0.5) * self.cellsize,
        )
    }

    /// Cell containing a map point; `None` outside the extent. Left/bottom
    /// edges are inclusive, right/top exclusive.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (x0, y0, x1, y1) = self.extent();
        if !(x >= x0 && x < x1 && y >= y0 && y < y1) {
            return None;
        }
        let col = ((x - x0) / self.cellsize) as usize;
        let row_from_bottom = ((y - y0) / self.cellsize) as usize;
        let col = col.min(self.ncols - 1);
        let row_from_bottom = row_from_bottom.min(self.nrows - 1);
        Some((self.nrows - 1 - row_from_bottom, col))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some()
    }

    /// Apply a function to every valid cell, preserving nodata. Runs
    /// data-parallel when the `parallel` feature is enabled.
    pub fn map_cells<F>(&self, f: F) -> RadianceRaster
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let nodata = self.nodata;
        let mut out = self.clone();
        out.values = exec::map_values(&self.values, |v| {
            if v == nodata || v.is_nan() {
                nodata
            } else {
                f(v)
            }
        });
        out
    }

    /// Sequential twin of [`RadianceRaster::map_cells`], kept callable under
    /// all feature sets for benchmarking.
    pub fn map_cells_seq<F>(&self, f: F) -> RadianceRaster
    where
        F: Fn(f64) -> f64,
    {
        let nodata = self.nodata;
        let mut out = self.clone();
        out.values = exec::map_values_seq(&self.values, |v| {
            if v == nodata || v.is_nan() {
                nodata
            } else {
                f(v)
            }
        });
        out
    }

    /// Two rasters are aligned if they share dimensions and georeferencing.
    pub fn aligned_with(&self, other: &RadianceRaster) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && (self.xll - other.xll).abs() < 1e-9
            && (self.yll - other.yll).abs() < 1e-9
            && (self.cellsize - other.cellsize).abs() < 1e-12
    }
}

/// Point sample: `window = 1` reads the containing cell, `window = k` (odd)
/// averages the k×k neighborhood around it, ignoring nodata and clipping at
/// the grid edge.
pub fn sample(raster: &RadianceRaster, x: f64, y: f64, window: usize) -> Result<f64> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::domain(format!("window must be odd and positive, got {window}")));
    }
    let (row, col) = raster.cell_at(x, y).ok_or(Error::OutOfExtent { x, y })?;
    let half = (window / 2) as isize;
    let mut sum = 0.0;
    let mut count = 0usize;
    for dr in -half..=half {
        for dc in -half..=half {
            let r = row as isize + dr;
            let c = col as isize + dc;
            if r < 0 || c < 0 || r >= raster.nrows as isize || c >= raster.ncols as isize {
                continue;
            }
            let v = raster.value(r as usize, c as usize);
            if !raster.is_nodata(v) {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::domain(format!(
            "all-nodata sample window at ({x}, {y})"
        )));
    }
    Ok(sum / count as f64)
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid
// ---------------------------------------------------------------------------

/// Parse an ESRI ASCII grid. Header keys are case-insensitive; all six
/// (ncols, nrows, xllcorner, yllcorner, cellsize, NODATA_value) are required.
pub fn read_ascii_grid(text: &str) -> Result<RadianceRaster> {
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut values: Vec<f64> = Vec::new();
    let mut in_data = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let first = fields.next().unwrap();
        if !in_data && first.parse::<f64>().is_err() {
            let key = first.to_ascii_lowercase();
            let value: f64 = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(i + 1, format!("bad header value for '{first}'")))?;
            if fields.next().is_some() {
                return Err(Error::parse(i + 1, "trailing fields in header line"));
            }
            header.insert(key, value);
        } else {
            in_data = true;
            for tok in line.split_whitespace() {
                values.push(tok.parse().map_err(|_| {
                    Error::parse(i + 1, format!("bad cell value '{tok}' at cell {}", values.len() + 1))
                })?);
            }
        }
    }
    let get = |key: &str| -> Result<f64> {
        header
            .get(key)
            .copied()
            .ok_or_else(|| Error::parse(1, format!("missing header key '{key}'")))
    };
    let ncols = get("ncols")? as usize;
    let nrows = get("nrows")? as usize;
    let xll = get("xllcorner")?;
    let yll = get("yllcorner")?;
    let cellsize = get("cellsize")?;
    let nodata = get("nodata_value")?;
    if values.len() != ncols * nrows {
        return Err(Error::parse(
            text.lines().count(),
            format!("expected {} cells, found {}", ncols * nrows, values.len()),
        ));
    }
    let mut r = RadianceRaster::new(ncols, nrows, xll, yll, cellsize, nodata, values)?;
    r.nodata = nodata;
    Ok(r)
}

/// Write the ASCII grid form. Values use the shortest representation that
/// round-trips exactly, so `read(write(r)) == r` bit for bit and reruns are
/// byte-identical.
pub fn write_ascii_grid(raster: &RadianceRaster) -> String {
    let mut out = String::with_capacity(raster.values.len() * 12 + 128);
    out.push_str(&format!("ncols {}\n", raster.ncols));
    out.push_str(&format!("nrows {}\n", raster.nrows));
    out.push_str(&format!("xllcorner {}\n", raster.xll));
    out.push_str(&format!("yllcorner {}\n", raster.yll));
    out.push_str(&format!("cellsize {}\n", raster.cellsize));
    out.push_str(&format!("NODATA_value {}\n", raster.nodata));
    for row in 0..raster.nrows {
        for col in 0..raster.ncols {
            if col > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", raster.value(row, col)));
        }
        out.push('\n');
    }
    out
}

/// JSON sidecar stored next to a raster file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RasterSidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_lo_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_hi_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flight_line: Option<String>,
    /// Optional affine DN → exitance pre-pass applied on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dn_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dn_offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl RasterSidecar {
    pub fn for_raster(raster: &RadianceRaster, units: Option<&str>) -> Self {
        RasterSidecar {
            band_lo_um: raster.band.map(|b| b.lo_um),
            band_hi_um: raster.band.map(|b| b.hi_um),
            image_id: if raster.image_id.is_empty() {
                None
            } else {
                Some(raster.image_id.clone())
            },
            flight_line: if raster.flight_line.is_empty() {
                None
            } else {
                Some(raster.flight_line.clone())
            },
            dn_scale: None,
            dn_offset: None,
            units: units.map(str::to_string),
        }
    }
}

/// Header of the raw binary format (`.bin` + this header as `.json`).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct BinaryHeader {
    ncols: usize,
    nrows: usize,
    xllcorner: f64,
    yllcorner: f64,
    cellsize: f64,
    nodata_value: f64,
    format: String,
    #[serde(flatten)]
    sidecar: RasterSidecar,
}

fn apply_sidecar(raster: &mut RadianceRaster, sidecar: &RasterSidecar) -> Result<()> {
    if let (Some(lo), Some(hi)) = (sidecar.band_lo_um, sidecar.band_hi_um) {
        raster.band = Some(WavelengthBand::new(lo, hi)?);
    }
    if let Some(id) = &sidecar.image_id {
        raster.image_id = id.clone();
    }
    if let Some(fl) = &sidecar.flight_line {
        raster.flight_line = fl.clone();
    }
    if sidecar.dn_scale.is_some() || sidecar.dn_offset.is_some() {
        let scale = sidecar.dn_scale.unwrap_or(1.0);
        let offset = sidecar.dn_offset.unwrap_or(0.0);
        *raster = raster.map_cells(|v| v * scale + offset);
    }
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

/// Read a raster from disk: `.asc` text or `.bin` raw floats, plus an
/// optional `.json` sidecar with the same stem (band, ids, DN pre-pass).
pub fn read_raster(path: &Path) -> Result<RadianceRaster> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let mut raster = match ext {
        "bin" => {
            let header: BinaryHeader =
                serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
            if header.format != "f64le" {
                return Err(Error::Config(format!("unsupported binary format '{}'", header.format)));
            }
            let bytes = std::fs::read(path)?;
            if bytes.len() != header.ncols * header.nrows * 8 {
                return Err(Error::parse(1, format!(
                    "binary payload is {} bytes, expected {}",
                    bytes.len(),
                    header.ncols * header.nrows * 8
                )));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let mut r = RadianceRaster::new(
                header.ncols,
                header.nrows,
                header.xllcorner,
                header.yllcorner,
                header.cellsize,
                header.nodata_value,
                values,
            )?;
            apply_sidecar(&mut r, &header.sidecar)?;
            return Ok(r);
        }
        _ => read_ascii_grid(&std::fs::read_to_string(path)?)?,
    };
    let sc = sidecar_path(path);
    if sc.exists() {
        let sidecar: RasterSidecar = serde_json::from_str(&std::fs::read_to_string(sc)?)?;
        apply_sidecar(&mut raster, &sidecar)?;
    }
    Ok(raster)
}

/// Write a raster plus sidecar. The format follows the extension: `.bin`
/// writes raw little-endian f64, anything else the ASCII grid.
pub fn write_raster(path: &Path, raster: &RadianceRaster, units: Option<&str>) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "bin" {
        let mut bytes = Vec::with_capacity(raster.values.len() * 8);
        for v in &raster.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        let header = BinaryHeader {
            ncols: raster.ncols,
            nrows: raster.nrows,
            xllcorner: raster.xll,
            yllcorner: raster.yll,
            cellsize: raster.cellsize,
            nodata_value: raster.nodata,
            format: "f64le".into(),
            sidecar: RasterSidecar::for_raster(raster, units),
        };
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&header)?)?;
    } else {
        std::fs::write(path, write_ascii_grid(raster))?;
        let sidecar = RasterSidecar::for_raster(raster, units);
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Footprints
// ---------------------------------------------------------------------------

/// One building footprint: one or more polygon rings (holes included — the
/// even-odd rule handles them uniformly).
#[derive(Debug, Clone)]
pub struct Building {
    pub building_id: String,
    pub material: String,
    pub rings: Vec<Vec<(f64, f64)>>,
}

impl Building {
    pub fn new(
        building_id: impl Into<String>,
        material: impl Into<String>,
        rings: Vec<Vec<(f64, f64)>>,
    ) -> Result<Self> {
        let building_id = building_id.into();
        if rings.is_empty() {
            return Err(Error::Geometry(format!("building '{building_id}' has no rings")));
        }
        let mut cleaned = Vec::with_capacity(rings.len());
        for mut ring in rings {
            // drop a GeoJSON-style closing vertex
            if ring.len() > 1 && ring.first() == ring.last() {
                ring.pop();
            }
            if ring.len() < 3 {
                return Err(Error::Geometry(format!(
                    "building '{building_id}' has a ring with {} vertices, need at least 3",
                    ring.len()
                )));
            }
            cleaned.push(ring);
        }
        Ok(Building {
            building_id,
            material: material.into(),
            rings: cleaned,
        })
    }

    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for ring in &self.rings {
            for &(x, y) in ring {
                b.0 = b.0.min(x);
                b.1 = b.1.min(y);
                b.2 = b.2.max(x);
                b.3 = b.3.max(y);
            }
        }
        b
    }

    /// Even-odd point-in-polygon over all rings. The crossing test makes
    /// left/bottom edges inclusive and right/top exclusive, so cells on a
    /// shared boundary land in exactly one polygon.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            let n = ring.len();
            for i in 0..n {
                let (x1, y1) = ring[i];
                let (x2, y2) = ring[(i + 1) % n];
                if (y1 > y) != (y2 > y) {
                    let x_cross = x1 + (y - y1) / (y2 - y1) * (x2 - x1);
                    if x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

/// The set of building footprints for a scene.
#[derive(Debug, Clone, Default)]
pub struct FootprintSet {
    pub buildings: Vec<Building>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "type")]
enum GeoGeometry {
    Polygon { coordinates: Vec<Vec<[f64; 2]>> },
    MultiPolygon { coordinates: Vec<Vec<Vec<[f64; 2]>>> },
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(untagged)]
enum IdValue {
    Text(String),
    Number(i64),
}

impl IdValue {
    fn into_string(self) -> String {
        match self {
            IdValue::Text(s) => s,
            IdValue::Number(n) => n.to_string(),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct GeoProperties {
    building_id: IdValue,
    material: String,
}

#[derive(Debug, Deserialize, Serialize)]
struct GeoFeature {
    #[serde(rename = "type")]
    kind: String,
    geometry: GeoGeometry,
    properties: GeoProperties,
}

#[derive(Debug, Deserialize, Serialize)]
struct GeoCollection {
    #[serde(rename = "type")]
    kind: String,
    features: Vec<GeoFeature>,
}

impl FootprintSet {
    /// Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features
    /// with `building_id` and `material` properties.
    pub fn from_geojson(text: &str) -> Result<Self> {
        let collection: GeoCollection = serde_json::from_str(text)?;
        if collection.kind != "FeatureCollection" {
            return Err(Error::Geometry(format!(
                "expected a FeatureCollection, got '{}'",
                collection.kind
            )));
        }
        let mut buildings = Vec::with_capacity(collection.features.len());
        for feature in collection.features {
            let rings: Vec<Vec<(f64, f64)>> = match feature.geometry {
                GeoGeometry::Polygon { coordinates } => coordinates
                    .into_iter()
                    .map(|ring| ring.into_iter().map(|p| (p[0], p[1])).collect())
                    .collect(),
                GeoGeometry::MultiPolygon { coordinates } => coordinates
                    .into_iter()
                    .flatten()
                    .map(|ring| ring.into_iter().map(|p| (p[0], p[1])).collect())
                    .collect(),
            };
            buildings.push(Building::new(
                feature.properties.building_id.into_string(),
                feature.properties.material,
                rings,
            )?);
        }
        Ok(FootprintSet { buildings })
    }

    pub fn to_geojson(&self) -> Result<String> {
        let features = self
            .buildings
            .iter()
            .map(|b| GeoFeature {
                kind: "Feature".into(),
                geometry: GeoGeometry::Polygon {
                    coordinates: b
                        .rings
                        .iter()
                        .map(|ring| {
                            let mut coords: Vec<[f64; 2]> =
                                ring.iter().map(|&(x, y)| [x, y]).collect();
                            if let Some(&first) = coords.first() {
                                coords.push(first);
                            }
                            coords
                        })
                        .collect(),
                },
                properties: GeoProperties {
                    building_id: IdValue::Text(b.building_id.clone()),
                    material: b.material.clone(),
                },
            })
            .collect();
        Ok(serde_json::to_string_pretty(&GeoCollection {
            kind: "FeatureCollection".into(),
            features,
        })?)
    }
}

// ---------------------------------------------------------------------------
// Rasterization
// ---------------------------------------------------------------------------

/// Grid aligned with a raster; each cell holds the index of the building that
/// claims it (by cell-center containment), if any.
#[derive(Debug, Clone)]
pub struct BuildingMask {
    pub ncols: usize,
    pub nrows: usize,
    cells: Vec<Option<u32>>,
}

impl BuildingMask {
    pub fn building_at(&self, row: usize, col: usize) -> Option<u32> {
        self.cells[row * self.ncols + col]
    }

    pub fn building_at_index(&self, index: usize) -> Option<u32> {
        self.cells[index]
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// Rasterize footprints onto the template grid: a cell belongs to a building
/// iff its center is inside the polygon by the even-odd rule. Overlaps
/// resolve to the lowest building_id.
pub fn rasterize(footprints: &FootprintSet, template: &RadianceRaster) -> Result<BuildingMask> {
    let mut order: Vec<usize> = (0..footprints.buildings.len()).collect();
    order.sort_by(|&a, &b| {
        footprints.buildings[a]
            .building_id
            .cmp(&footprints.buildings[b].building_id)
    });
    let mut cells: Vec<Option<u32>> = vec![None; template.ncols * template.nrows];
    for &bi in &order {
        let building = &footprints.buildings[bi];
        let (bx0, by0, bx1, by1) = building.bbox();
        let (gx0, gy0, gx1, gy1) = template.extent();
        if bx1 < gx0 || bx0 > gx1 || by1 < gy0 || by0 > gy1 {
            continue;
        }
        // candidate cell range from the bbox, clamped to the grid
        let col_lo = (((bx0 - gx0) / template.cellsize).floor().max(0.0)) as usize;
        let col_hi = (((bx1 - gx0) / template.cellsize).ceil() as usize).min(template.ncols);
        let rb_lo = (((by0 - gy0) / template.cellsize).floor().max(0.0)) as usize;
        let rb_hi = (((by1 - gy0) / template.cellsize).ceil() as usize).min(template.nrows);
        for rb in rb_lo..rb_hi {
            let row = template.nrows - 1 - rb;
            for col in col_lo..col_hi {
                let idx = row * template.ncols + col;
                if cells[idx].is_some() {
                    continue; // lowest id already claimed it
                }
                let (cx, cy) = template.cell_center(row, col);
                if building.contains_point(cx, cy) {
                    cells[idx] = Some(bi as u32);
                }
            }
        }
    }
    Ok(BuildingMask {
        ncols: template.ncols,
        nrows: template.nrows,
        cells,
    })
}
