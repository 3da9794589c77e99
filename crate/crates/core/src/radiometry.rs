//! Planck-law radiometry: spectral exitance, band integration by the
//! trapezoid rule, monotone lookup-table inversion, and emissivity rescaling.
//!
//! Everything works in band-integrated radiant exitance (W·m⁻²). Temperature
//! is Kelvin, wavelength is micrometers at the API surface (converted to
//! meters internally).

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;

/// Planck constant, J·s (exact SI).
pub const PLANCK: f64 = 6.62607015e-34;
/// Speed of light in vacuum, m·s⁻¹ (exact SI).
pub const SPEED_OF_LIGHT: f64 = 2.99792458e8;
/// Boltzmann constant, J·K⁻¹ (exact SI).
pub const BOLTZMANN: f64 = 1.380649e-23;

/// First radiation constant for exitance, 2πhc² (W·m²).
pub const C1_EXITANCE: f64 = 2.0 * std::f64::consts::PI * PLANCK * SPEED_OF_LIGHT * SPEED_OF_LIGHT;
/// Second radiation constant, hc/k (m·K).
pub const C2: f64 = PLANCK * SPEED_OF_LIGHT / BOLTZMANN;

/// Default wavelength step for band integration, μm.
pub const DEFAULT_LAMBDA_STEP_UM: f64 = 0.001;
/// Default lookup-table range and spacing, K. The range covers cold-season
/// field conditions with ample margin on both sides.
pub const DEFAULT_TABLE_T_MIN_K: f64 = 230.0;
pub const DEFAULT_TABLE_T_MAX_K: f64 = 330.0;
pub const DEFAULT_TABLE_T_STEP_K: f64 = 0.1;

/// A wavelength interval in micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthBand {
    pub lo_um: f64,
    pub hi_um: f64,
}

impl WavelengthBand {
    pub fn new(lo_um: f64, hi_um: f64) -> Result<Self> {
        if !(lo_um.is_finite() && hi_um.is_finite()) || lo_um <= 0.0 || lo_um >= hi_um {
            return Err(Error::domain(format!(
                "invalid wavelength band [{lo_um}, {hi_um}] um"
            )));
        }
        Ok(WavelengthBand { lo_um, hi_um })
    }

    /// The 8–9.2 μm LWIR imaging band.
    pub fn lwir_8_9p2() -> Self {
        WavelengthBand { lo_um: 8.0, hi_um: 9.2 }
    }

    /// The 8–14 μm LWIR band of handheld IR thermometers.
    pub fn lwir_8_14() -> Self {
        WavelengthBand { lo_um: 8.0, hi_um: 14.0 }
    }

    pub fn width_um(&self) -> f64 {
        self.hi_um - self.lo_um
    }

    /// Bands compare equal within a small absolute slack, enough to survive
    /// serialization round trips.
    pub fn approx_eq(&self, other: &WavelengthBand) -> bool {
        (self.lo_um - other.lo_um).abs() < 1e-9 && (self.hi_um - other.hi_um).abs() < 1e-9
    }
}

impl std::fmt::Display for WavelengthBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{} um", self.lo_um, self.hi_um)
    }
}

/// Blackbody spectral radiant exitance, W·m⁻²·μm⁻¹.
///
/// 2πhc²/λ⁵ · 1/(e^{hc/λkT} − 1) with λ in meters internally and the result
/// expressed per micrometer.
pub fn spectral_exitance(lambda_um: f64, temperature_k: f64) -> Result<f64> {
    if !(lambda_um > 0.0) || !(temperature_k > 0.0) {
        return Err(Error::domain(format!(
            "spectral exitance needs positive wavelength and temperature, got ({lambda_um} um, {temperature_k} K)"
        )));
    }
    Ok(spectral_exitance_unchecked(lambda_um, temperature_k))
}

#[inline]
fn spectral_exitance_unchecked(lambda_um: f64, temperature_k: f64) -> f64 {
    let lambda_m = lambda_um * 1e-6;
    let x = C2 / (lambda_m * temperature_k);
    // per-meter exitance scaled to per-micrometer
    C1_EXITANCE / lambda_m.powi(5) / x.exp_m1() * 1e-6
}

/// Band radiant exitance, W·m⁻²: trapezoid-rule integral of
/// [`spectral_exitance`] over the band on a uniform grid that includes both
/// endpoints. `lambda_step_um` is the target spacing; the actual spacing is
/// `width / round(width / step)` so the endpoints land exactly.
pub fn band_exitance(
    band: WavelengthBand,
    temperature_k: f64,
    lambda_step_um: f64,
) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(Error::domain(format!(
            "band exitance needs positive temperature, got {temperature_k} K"
        )));
    }
    if !(lambda_step_um > 0.0) || lambda_step_um > band.width_um() {
        return Err(Error::domain(format!(
            "lambda step {lambda_step_um} um invalid for band {band}"
        )));
    }
    let width = band.width_um();
    let n = (width / lambda_step_um).round().max(1.0) as usize;
    let h = width / n as f64;
    let f = |i: usize| {
        let lambda = band.lo_um + width * i as f64 / n as f64;
        spectral_exitance_unchecked(lambda, temperature_k)
    };
    let mut sum = 0.5 * (f(0) + f(n));
    for i in 1..n {
        sum += f(i);
    }
    Ok(sum * h)
}

/// Rescale a band exitance from one emissivity to another: the input is
/// interpreted as associated with emissivity `e_from` and re-expressed at
/// `e_to`, i.e. `exitance · e_to / e_from`.
pub fn rescale_exitance(exitance: f64, e_from: f64, e_to: f64) -> Result<f64> {
    if !(e_from > 0.0 && e_from <= 1.0) || !(e_to > 0.0 && e_to <= 1.0) {
        return Err(Error::domain(format!(
            "emissivities must be in (0, 1], got ({e_from}, {e_to})"
        )));
    }
    if !(exitance >= 0.0) {
        return Err(Error::domain(format!(
            "exitance must be non-negative, got {exitance}"
        )));
    }
    Ok(exitance * (e_to / e_from))
}

/// Monotone band-exitance ↔ temperature lookup table for one band.
///
/// Used in place of closed-form Planck inversion: temperatures on a uniform
/// grid, band exitance per entry, binary search plus linear interpolation in
/// both directions. Values outside the table range are a hard error — no
/// extrapolation, so unit mistakes surface instead of hiding.
#[derive(Debug, Clone)]
pub struct PlanckTable {
    band: WavelengthBand,
    t_min_k: f64,
    t_max_k: f64,
    t_step_k: f64,
    lambda_step_um: f64,
    /// (temperature K, band exitance W·m⁻²), strictly increasing in both.
    entries: Vec<(f64, f64)>,
}

/// Sidecar parameters stored next to a table CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanckTableParams {
    pub band_lo_um: f64,
    pub band_hi_um: f64,
    pub t_min_k: f64,
    pub t_max_k: f64,
    pub t_step_k: f64,
    pub lambda_step_um: f64,
}

/// Build a lookup table by integrating the Planck law at each grid
/// temperature. Grid temperatures run parallel when the `parallel` feature is
/// enabled; each integral is summed sequentially so results are identical
/// either way.
pub fn build_planck_table(
    band: WavelengthBand,
    t_min_k: f64,
    t_max_k: f64,
    t_step_k: f64,
    lambda_step_um: f64,
) -> Result<PlanckTable> {
    if !(t_min_k > 0.0) || !(t_min_k < t_max_k) {
        return Err(Error::domain(format!(
            "degenerate table range [{t_min_k}, {t_max_k}] K"
        )));
    }
    if !(t_step_k > 0.0) || t_step_k > (t_max_k - t_min_k) {
        return Err(Error::domain(format!(
            "temperature step {t_step_k} K invalid for range [{t_min_k}, {t_max_k}]"
        )));
    }
    let span = t_max_k - t_min_k;
    let n = (span / t_step_k).round().max(1.0) as usize;
    let exitances = exec::map_indexed(n + 1, |i| {
        let t = t_min_k + span * i as f64 / n as f64;
        band_exitance(band, t, lambda_step_um).expect("grid temperature is positive")
    });
    let entries: Vec<(f64, f64)> = (0..=n)
        .map(|i| (t_min_k + span * i as f64 / n as f64, exitances[i]))
        .collect();
    PlanckTable::from_entries(band, t_step_k, lambda_step_um, entries)
}

impl PlanckTable {
    fn from_entries(
        band: WavelengthBand,
        t_step_k: f64,
        lambda_step_um: f64,
        entries: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::domain("Planck table needs at least 2 entries"));
        }
        for w in entries.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::domain(format!(
                    "Planck table entries not strictly increasing near T = {} K",
                    w[0].0
                )));
            }
        }
        Ok(PlanckTable {
            band,
            t_min_k: entries[0].0,
            t_max_k: entries[entries.len() - 1].0,
            t_step_k,
            lambda_step_um,
            entries,
        })
    }

    pub fn band(&self) -> WavelengthBand {
        self.band
    }

    pub fn t_min_k(&self) -> f64 {
        self.t_min_k
    }

    pub fn t_max_k(&self) -> f64 {
        self.t_max_k
    }

    pub fn lambda_step_um(&self) -> f64 {
        self.lambda_step_um
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    /// Smallest and largest representable exitance.
    pub fn exitance_range(&self) -> (f64, f64) {
        (self.entries[0].1, self.entries[self.entries.len() - 1].1)
    }

    /// Band exitance at a temperature inside the table range, linearly
    /// interpolated between the two bracketing entries. This is the exact
    /// inverse of [`PlanckTable::invert`], which keeps forward/inverse
    /// conversion chains self-consistent.
    pub fn exitance_at(&self, temperature_k: f64) -> Result<f64> {
        if !(temperature_k >= self.t_min_k && temperature_k <= self.t_max_k) {
            return Err(Error::OutOfRange {
                value: temperature_k,
                min: self.t_min_k,
                max: self.t_max_k,
            });
        }
        let n = self.entries.len() - 1;
        let pos = (temperature_k - self.t_min_k) / (self.t_max_k - self.t_min_k) * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let (t0, m0) = self.entries[i];
        let (t1, m1) = self.entries[i + 1];
        Ok(m0 + (temperature_k - t0) / (t1 - t0) * (m1 - m0))
    }

    /// Temperature whose band exitance equals `exitance`: binary search over
    /// the entries plus linear interpolation between the bracketing pair.
    pub fn invert(&self, exitance: f64) -> Result<f64> {
        let (lo, hi) = self.exitance_range();
        if !(exitance >= lo && exitance <= hi) {
            return Err(Error::OutOfRange {
                value: exitance,
                min: lo,
                max: hi,
            });
        }
        // first entry with exitance >= target; partition point is in [1, len]
        let idx = self.entries.partition_point(|&(_, m)| m < exitance);
        let i = idx.clamp(1, self.entries.len() - 1);
        let (t0, m0) = self.entries[i - 1];
        let (t1, m1) = self.entries[i];
        Ok(t0 + (exitance - m0) / (m1 - m0) * (t1 - t0))
    }

    pub fn params(&self) -> PlanckTableParams {
        PlanckTableParams {
            band_lo_um: self.band.lo_um,
            band_hi_um: self.band.hi_um,
            t_min_k: self.t_min_k,
            t_max_k: self.t_max_k,
            t_step_k: self.t_step_k,
            lambda_step_um: self.lambda_step_um,
        }
    }

    /// Write the two-column CSV form (`temperature_K,exitance_Wm2`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "temperature_K,exitance_Wm2")?;
        for &(t, m) in &self.entries {
            writeln!(w, "{t},{m}")?;
        }
        Ok(())
    }

    /// Read the CSV form back. `params` must come from the JSON sidecar.
    pub fn read_csv<R: BufRead>(r: R, params: &PlanckTableParams) -> Result<Self> {
        let band = WavelengthBand::new(params.band_lo_um, params.band_hi_um)?;
        let mut entries = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::parse(lineno + 1, "expected two numeric columns"))
            };
            let t = parse(parts.next())?;
            let m = parse(parts.next())?;
            entries.push((t, m));
        }
        PlanckTable::from_entries(band, params.t_step_k, params.lambda_step_um, entries)
    }

    /// Save as `<path>` (CSV) plus a `.json` sidecar with the same stem.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let sidecar = path.with_extension("json");
        let json = serde_json::to_string_pretty(&self.params())?;
        std::fs::write(sidecar, json)?;
        Ok(())
    }

    /// Load a table saved by [`PlanckTable::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = path.with_extension("json");
        let params: PlanckTableParams = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let file = std::fs::File::open(path)?;
        PlanckTable::read_csv(std::io::BufReader::new(file), &params)
    }
}

/// Build a table with the default range, spacing, and integration step.
pub fn default_planck_table(band: WavelengthBand) -> Result<PlanckTable> {
    build_planck_table(
        band,
        DEFAULT_TABLE_T_MIN_K,
        DEFAULT_TABLE_T_MAX_K,
        DEFAULT_TABLE_T_STEP_K,
        DEFAULT_LAMBDA_STEP_UM,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_rel(actual: f64, expected: f64, tol: f64) {
        let denom = expected.abs().max(1e-300);
        assert!(
            ((actual - expected) / denom).abs() <= tol,
            "actual {actual} vs expected {expected} (rel tol {tol})"
        );
    }

    // Independent oracle: band exitance from the blackbody band-fraction
    // series F(0->lambda*T) = 15/pi^4 * sum_n e^{-nx}(x^3/n + 3x^2/n^2
    // + 6x/n^3 + 6/n^4), x = c2/(lambda*T). Entirely separate route from the
    // trapezoid integration under test.
    fn band_fraction(lambda_um: f64, t: f64) -> f64 {
        let x = C2 / (lambda_um * 1e-6 * t);
        let mut s = 0.0;
        for n in 1..=200 {
            let n = n as f64;
            s += (-n * x).exp() * (x * x * x / n + 3.0 * x * x / (n * n) + 6.0 * x / (n * n * n) + 6.0 / (n * n * n * n));
        }
        15.0 / std::f64::consts::PI.powi(4) * s
    }

    fn band_exitance_series(band: WavelengthBand, t: f64) -> f64 {
        let sigma = 2.0 * std::f64::consts::PI.powi(5) * BOLTZMANN.powi(4)
            / (15.0 * PLANCK.powi(3) * SPEED_OF_LIGHT.powi(2));
        sigma * t.powi(4) * (band_fraction(band.hi_um, t) - band_fraction(band.lo_um, t))
    }

    #[test]
    fn spectral_exitance_reference_point() {
        // frozen from a high-precision evaluation of the Planck law with
        // exact SI constants
        assert_rel(spectral_exitance(10.0, 300.0).unwrap(), 31.177270203730338, 1e-12);
    }

    #[test]
    fn spectral_exitance_vanishes_at_low_temperature() {
        let v = spectral_exitance(10.0, 1.0).unwrap();
        assert!(v >= 0.0 && v < 1e-300, "got {v}");
    }

    #[test]
    fn spectral_exitance_monotone_in_temperature() {
        assert!(spectral_exitance(10.0, 310.0).unwrap() > spectral_exitance(10.0, 300.0).unwrap());
    }

    #[test]
    fn spectral_exitance_domain_errors() {
        assert!(spectral_exitance(0.0, 300.0).is_err());
        assert!(spectral_exitance(-1.0, 300.0).is_err());
        assert!(spectral_exitance(10.0, 0.0).is_err());
    }

    #[test]
    fn band_exitance_reference_values() {
        // frozen from the independent fine-grid evaluation; cross-checked
        // against the series oracle below
        let b14 = band_exitance(WavelengthBand::lwir_8_14(), 300.0, 0.001).unwrap();
        let b92 = band_exitance(WavelengthBand::lwir_8_9p2(), 300.0, 0.001).unwrap();
        assert_rel(b14, 172.5785581945504, 1e-12);
        assert_rel(b92, 36.09836263416036, 1e-12);
        assert_rel(b14, band_exitance_series(WavelengthBand::lwir_8_14(), 300.0), 1e-8);
        assert_rel(b92, band_exitance_series(WavelengthBand::lwir_8_9p2(), 300.0), 1e-7);
    }

    #[test]
    fn band_exitance_step_halving_converges() {
        for band in [WavelengthBand::lwir_8_14(), WavelengthBand::lwir_8_9p2()] {
            let coarse = band_exitance(band, 300.0, 0.001).unwrap();
            let fine = band_exitance(band, 300.0, 0.0005).unwrap();
            assert_rel(coarse, fine, 1e-6);
        }
    }

    #[test]
    fn band_exitance_additive_over_adjacent_bands() {
        let whole = band_exitance(WavelengthBand::lwir_8_14(), 300.0, 0.001).unwrap();
        let left = band_exitance(WavelengthBand::lwir_8_9p2(), 300.0, 0.001).unwrap();
        let right = band_exitance(WavelengthBand::new(9.2, 14.0).unwrap(), 300.0, 0.001).unwrap();
        assert_rel(left + right, whole, 1e-9);
    }

    #[test]
    fn band_exitance_rejects_bad_step() {
        let band = WavelengthBand::lwir_8_9p2();
        assert!(band_exitance(band, 300.0, 0.0).is_err());
        assert!(band_exitance(band, 300.0, 2.0).is_err());
    }

    #[test]
    fn table_has_expected_shape() {
        let table = default_planck_table(WavelengthBand::lwir_8_14()).unwrap();
        assert_eq!(table.len(), 1001);
        for w in table.entries().windows(2) {
            assert!(w[1].1 > w[0].1);
        }
        // grid entry equals the direct integral exactly
        let direct = band_exitance(WavelengthBand::lwir_8_14(), 300.0, 0.001).unwrap();
        let idx = table
            .entries()
            .iter()
            .position(|&(t, _)| (t - 300.0).abs() < 1e-9)
            .unwrap();
        assert_eq!(table.entries()[idx].1, direct);
    }

    #[test]
    fn table_entries_positive_for_short_band() {
        let table = default_planck_table(WavelengthBand::lwir_8_9p2()).unwrap();
        assert!(table.entries().iter().all(|&(_, m)| m > 0.0));
    }

    #[test]
    fn invert_round_trip() {
        let band = WavelengthBand::lwir_8_14();
        let table = default_planck_table(band).unwrap();
        let m = band_exitance(band, 287.35, 0.001).unwrap();
        let t = table.invert(m).unwrap();
        assert!((t - 287.35).abs() <= 0.01, "got {t}");
    }

    #[test]
    fn invert_rejects_out_of_range() {
        let table = default_planck_table(WavelengthBand::lwir_8_14()).unwrap();
        let (lo, hi) = table.exitance_range();
        match table.invert(lo - 1.0) {
            Err(Error::OutOfRange { value, .. }) => assert_eq!(value, lo - 1.0),
            other => panic!("expected out-of-range error, got {other:?}"),
        }
        assert!(table.invert(hi + 1.0).is_err());
    }

    #[test]
    fn exitance_at_is_inverse_of_invert() {
        let table = default_planck_table(WavelengthBand::lwir_8_9p2()).unwrap();
        for &t in &[230.0, 255.3, 287.35, 300.0, 329.97, 330.0] {
            let m = table.exitance_at(t).unwrap();
            assert!((table.invert(m).unwrap() - t).abs() < 1e-9);
        }
        assert!(table.exitance_at(229.9).is_err());
        assert!(table.exitance_at(330.1).is_err());
    }

    #[test]
    fn degenerate_table_range_rejected() {
        let band = WavelengthBand::lwir_8_14();
        assert!(build_planck_table(band, 300.0, 300.0, 0.1, 0.001).is_err());
        assert!(build_planck_table(band, 310.0, 300.0, 0.1, 0.001).is_err());
        assert!(build_planck_table(band, 300.0, 310.0, 0.0, 0.001).is_err());
    }

    #[test]
    fn rescale_reference_and_errors() {
        assert_rel(rescale_exitance(100.0, 0.95, 1.0).unwrap(), 100.0 / 0.95, 1e-15);
        assert_eq!(rescale_exitance(42.0, 0.87, 0.87).unwrap(), 42.0);
        assert!(rescale_exitance(1.0, 0.0, 0.5).is_err());
        assert!(rescale_exitance(1.0, 0.5, 1.5).is_err());
        assert!(rescale_exitance(-1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let table = build_planck_table(WavelengthBand::lwir_8_9p2(), 270.0, 290.0, 1.0, 0.01).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = PlanckTable::read_csv(std::io::BufReader::new(buf.as_slice()), &table.params()).unwrap();
        assert_eq!(back.entries(), table.entries());
        assert!(back.band().approx_eq(&table.band()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn band_exitance_strictly_monotone(
            lo in 3.0f64..12.0,
            width in 0.5f64..6.0,
            t1 in 240.0f64..320.0,
            dt in 0.5f64..30.0,
        ) {
            let band = WavelengthBand::new(lo, lo + width).unwrap();
            let a = band_exitance(band, t1, 0.01).unwrap();
            let b = band_exitance(band, t1 + dt, 0.01).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn rescale_composes_multiplicatively(
            m in 0.0f64..500.0,
            a in 0.05f64..1.0,
            b in 0.05f64..1.0,
            c in 0.05f64..1.0,
        ) {
            let via_b = rescale_exitance(rescale_exitance(m, a, b).unwrap(), b, c).unwrap();
            let direct = rescale_exitance(m, a, c).unwrap();
            prop_assert!((via_b - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            let back = rescale_exitance(rescale_exitance(m, a, b).unwrap(), b, a).unwrap();
            prop_assert!((back - m).abs() <= 1e-9 * m.max(1.0));
        }

        #[test]
        fn invert_monotone_in_exitance(f1 in 0.01f64..0.99, f2 in 0.01f64..0.99) {
            let table = build_planck_table(WavelengthBand::lwir_8_14(), 250.0, 310.0, 0.5, 0.01).unwrap();
            let (lo, hi) = table.exitance_range();
            let m1 = lo + f1 * (hi - lo);
            let m2 = lo + f2 * (hi - lo);
            let t1 = table.invert(m1).unwrap();
            let t2 = table.invert(m2).unwrap();
            if m1 < m2 {
                prop_assert!(t1 < t2);
            } else if m1 > m2 {
                prop_assert!(t1 > t2);
            }
        }
    }
}
