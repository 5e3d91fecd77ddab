//! Battery cycling data: ingestion, end-of-life thresholds, and
//! leave-one-battery-out fleet splits.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("unknown battery id: {0}")]
    UnknownBattery(String),
    #[error("prediction start point {sp} out of range (need 2 <= sp < {last})")]
    SpOutOfRange { sp: u32, last: u32 },
    #[error("manifest error in {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
}

fn parse_err(line: usize, column: usize, reason: impl Into<String>) -> DatasetError {
    DatasetError::Parse { line, column, reason: reason.into() }
}

/// Input CSV flavors understood by [`load_cycle_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvFormat {
    /// Canonical interchange format: header `cycle,capacity_ah`, one row per cycle.
    GenericCsv,
    /// Per-record export with `cycle` and `capacity` columns; rows are reduced
    /// to one capacity per cycle (maximum integrated discharge capacity).
    NasaCsv,
    /// Per-record export with `Cycle_Index` and `Discharge_Capacity(Ah)`
    /// columns; reduced the same way.
    CalceCsv,
}

impl fmt::Display for CsvFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CsvFormat::GenericCsv => "generic_csv",
            CsvFormat::NasaCsv => "nasa_csv",
            CsvFormat::CalceCsv => "calce_csv",
        };
        f.write_str(s)
    }
}

/// One measured cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclePoint {
    /// Dense cycle index, 1-based.
    pub index: u32,
    /// Measured capacity in ampere-hours.
    pub capacity_ah: f64,
}

/// Per-cycle capacity measurements for one battery.
///
/// Cycle indices are dense (1..=N) after construction; the indices found in
/// the input are retained as metadata. Capacity regeneration (non-monotone
/// jumps) is preserved as measured.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitySeries {
    battery_id: String,
    cycles: Vec<CyclePoint>,
    original_indices: Vec<u32>,
    rated_capacity_ah: f64,
    eol_fraction: f64,
}

impl CapacitySeries {
    /// Build a series from raw `(cycle_index, capacity)` pairs.
    ///
    /// Input indices must be strictly increasing but may contain gaps; they
    /// are re-indexed densely starting at 1.
    pub fn new(
        battery_id: impl Into<String>,
        raw: Vec<(u32, f64)>,
        rated_capacity_ah: f64,
        eol_fraction: f64,
    ) -> Result<Self, DatasetError> {
        let battery_id = battery_id.into();
        if raw.is_empty() {
            return Err(DatasetError::InvariantViolation(format!(
                "battery {battery_id}: series has no cycles"
            )));
        }
        if !(rated_capacity_ah.is_finite() && rated_capacity_ah > 0.0) {
            return Err(DatasetError::InvariantViolation(format!(
                "battery {battery_id}: rated capacity must be positive, got {rated_capacity_ah}"
            )));
        }
        if !(eol_fraction > 0.0 && eol_fraction < 1.0) {
            return Err(DatasetError::InvariantViolation(format!(
                "battery {battery_id}: eol_fraction must lie in (0,1), got {eol_fraction}"
            )));
        }
        let mut cycles = Vec::with_capacity(raw.len());
        let mut original_indices = Vec::with_capacity(raw.len());
        let mut prev: Option<u32> = None;
        for (i, (idx, cap)) in raw.into_iter().enumerate() {
            if let Some(p) = prev {
                if idx <= p {
                    return Err(DatasetError::InvariantViolation(format!(
                        "battery {battery_id}: cycle indices not strictly increasing ({p} then {idx})"
                    )));
                }
            }
            prev = Some(idx);
            if !cap.is_finite() || cap <= 0.0 {
                return Err(DatasetError::InvariantViolation(format!(
                    "battery {battery_id}: capacity at cycle {idx} must be positive and finite, got {cap}"
                )));
            }
            if cap > 1.2 * rated_capacity_ah {
                return Err(DatasetError::InvariantViolation(format!(
                    "battery {battery_id}: capacity {cap} at cycle {idx} exceeds 1.2 x rated \
                     capacity {rated_capacity_ah} (unit error?)"
                )));
            }
            cycles.push(CyclePoint { index: (i + 1) as u32, capacity_ah: cap });
            original_indices.push(idx);
        }
        Ok(CapacitySeries { battery_id, cycles, original_indices, rated_capacity_ah, eol_fraction })
    }

    pub fn battery_id(&self) -> &str {
        &self.battery_id
    }

    pub fn cycles(&self) -> &[CyclePoint] {
        &self.cycles
    }

    /// Cycle indices as they appeared in the input, before dense re-indexing.
    pub fn original_indices(&self) -> &[u32] {
        &self.original_indices
    }

    pub fn rated_capacity_ah(&self) -> f64 {
        self.rated_capacity_ah
    }

    pub fn eol_fraction(&self) -> f64 {
        self.eol_fraction
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn last_cycle(&self) -> u32 {
        self.cycles.last().map(|c| c.index).unwrap_or(0)
    }

    /// Capacities in cycle order.
    pub fn capacities(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.capacity_ah).collect()
    }

    /// The end-of-life threshold in ampere-hours.
    pub fn eol_capacity(&self) -> f64 {
        self.eol_fraction * self.rated_capacity_ah
    }

    /// A copy truncated to cycles `<= sp`, tagged as a training prefix.
    pub fn prefix(&self, sp: u32) -> CapacitySeries {
        let n = (sp as usize).min(self.cycles.len());
        CapacitySeries {
            battery_id: format!("{}[..{sp}]", self.battery_id),
            cycles: self.cycles[..n].to_vec(),
            original_indices: self.original_indices[..n].to_vec(),
            rated_capacity_ah: self.rated_capacity_ah,
            eol_fraction: self.eol_fraction,
        }
    }
}

/// Leave-one-battery-out split with a prediction start point.
#[derive(Debug, Clone)]
pub struct FleetSplit {
    /// Full series of every other battery, plus the test battery truncated to
    /// cycles `<= sp` (tagged with a `[..sp]` suffix).
    pub train: Vec<CapacitySeries>,
    /// The full test series.
    pub test: CapacitySeries,
    /// Prediction start point: cycles `<= sp` of the test series are observed.
    pub sp: u32,
}

/// Build the leave-one-battery-out split used throughout the pipeline.
///
/// Training data is every other battery in full plus the observed prefix of
/// the test battery. Inputs are not mutated.
pub fn split_fleet(
    batteries: &[CapacitySeries],
    test_id: &str,
    sp: u32,
) -> Result<FleetSplit, DatasetError> {
    let test = batteries
        .iter()
        .find(|b| b.battery_id() == test_id)
        .ok_or_else(|| DatasetError::UnknownBattery(test_id.to_string()))?;
    if sp < 2 || sp >= test.last_cycle() {
        return Err(DatasetError::SpOutOfRange { sp, last: test.last_cycle() });
    }
    let mut train: Vec<CapacitySeries> =
        batteries.iter().filter(|b| b.battery_id() != test_id).cloned().collect();
    train.push(test.prefix(sp));
    Ok(FleetSplit { train, test: test.clone(), sp })
}

/// Load one battery's capacity series from a CSV file.
pub fn load_cycle_data(
    path: impl AsRef<Path>,
    format: CsvFormat,
    battery_id: impl Into<String>,
    rated_capacity_ah: f64,
    eol_fraction: f64,
) -> Result<CapacitySeries, DatasetError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let raw = match format {
        CsvFormat::GenericCsv => parse_generic_csv(&text)?,
        CsvFormat::NasaCsv => parse_record_csv(&text, &["cycle"], &["capacity"])?,
        CsvFormat::CalceCsv => {
            parse_record_csv(&text, &["cycle_index"], &["discharge_capacity(ah)"])?
        }
    };
    CapacitySeries::new(battery_id, raw, rated_capacity_ah, eol_fraction)
}

/// Write a series in the canonical `cycle,capacity_ah` format.
pub fn write_generic_csv(series: &CapacitySeries, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = String::from("cycle,capacity_ah\n");
    for c in series.cycles() {
        out.push_str(&format!("{},{}\n", c.index, c.capacity_ah));
    }
    let mut f = fs::File::create(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    f.write_all(out.as_bytes())
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    Ok(())
}

fn parse_generic_csv(text: &str) -> Result<Vec<(u32, f64)>, DatasetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    if header.trim_end_matches('\r').trim() != "cycle,capacity_ah" {
        return Err(parse_err(1, 1, format!("expected header `cycle,capacity_ah`, got `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let cycle_str = parts.next().unwrap_or("");
        let cap_str = parts.next().ok_or_else(|| parse_err(lineno, 1, "missing capacity column"))?;
        if parts.next().is_some() {
            return Err(parse_err(lineno, line.len(), "too many columns"));
        }
        let cycle: u32 = cycle_str
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, 1, format!("bad cycle index `{cycle_str}`")))?;
        let col = cycle_str.len() + 2;
        let cap: f64 = cap_str
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, col, format!("bad capacity `{cap_str}`")))?;
        if !cap.is_finite() {
            return Err(parse_err(lineno, col, format!("non-finite capacity `{cap_str}`")));
        }
        rows.push((cycle, cap));
    }
    if rows.is_empty() {
        return Err(parse_err(1, 1, "no data rows"));
    }
    Ok(rows)
}

/// Parse a per-record CSV and reduce to one capacity per cycle (the maximum
/// capacity measured within the cycle). Header matching is case-insensitive;
/// extra columns are ignored.
fn parse_record_csv(
    text: &str,
    cycle_names: &[&str],
    capacity_names: &[&str],
) -> Result<Vec<(u32, f64)>, DatasetError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, 1, "empty file"))?;
    let cols: Vec<String> = header
        .trim_end_matches('\r')
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let find = |names: &[&str]| cols.iter().position(|c| names.contains(&c.as_str()));
    let cycle_col = find(cycle_names)
        .ok_or_else(|| parse_err(1, 1, format!("missing cycle column (one of {cycle_names:?})")))?;
    let cap_col = find(capacity_names).ok_or_else(|| {
        parse_err(1, 1, format!("missing capacity column (one of {capacity_names:?})"))
    })?;

    let mut per_cycle: BTreeMap<u32, f64> = BTreeMap::new();
    let mut any = false;
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() <= cycle_col.max(cap_col) {
            return Err(parse_err(lineno, 1, "row has too few columns"));
        }
        let cycle_raw = fields[cycle_col].trim();
        // Some exports carry cycle indices as floats ("12.0").
        let cycle: u32 = cycle_raw
            .parse::<u32>()
            .or_else(|_| cycle_raw.parse::<f64>().map(|v| v.round() as u32))
            .map_err(|_| parse_err(lineno, cycle_col + 1, format!("bad cycle index `{cycle_raw}`")))?;
        let cap: f64 = fields[cap_col]
            .trim()
            .parse()
            .map_err(|_| parse_err(lineno, cap_col + 1, format!("bad capacity `{}`", fields[cap_col])))?;
        if !cap.is_finite() {
            return Err(parse_err(lineno, cap_col + 1, "non-finite capacity"));
        }
        any = true;
        per_cycle
            .entry(cycle)
            .and_modify(|best| {
                if cap > *best {
                    *best = cap;
                }
            })
            .or_insert(cap);
    }
    if !any {
        return Err(parse_err(1, 1, "no data rows"));
    }
    Ok(per_cycle.into_iter().collect())
}

#[derive(Debug, Deserialize)]
struct ManifestDoc {
    battery: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
    #[serde(default = "default_format")]
    format: CsvFormat,
    rated_capacity_ah: f64,
    eol_fraction: f64,
}

fn default_format() -> CsvFormat {
    CsvFormat::GenericCsv
}

/// Load a fleet manifest (TOML) and every battery it lists.
///
/// ```toml
/// [[battery]]
/// id = "B0005"
/// file = "B0005.csv"            # relative to the manifest
/// format = "generic_csv"        # optional
/// rated_capacity_ah = 2.0
/// eol_fraction = 0.70
/// ```
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CapacitySeries>, DatasetError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let doc: ManifestDoc = toml::from_str(&text)
        .map_err(|e| DatasetError::Manifest { path: path.to_path_buf(), reason: e.to_string() })?;
    if doc.battery.is_empty() {
        return Err(DatasetError::Manifest {
            path: path.to_path_buf(),
            reason: "manifest lists no batteries".into(),
        });
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::with_capacity(doc.battery.len());
    for entry in doc.battery {
        let file = base.join(&entry.file);
        out.push(load_cycle_data(
            &file,
            entry.format,
            entry.id,
            entry.rated_capacity_ah,
            entry.eol_fraction,
        )?);
    }
    Ok(out)
}
