//! Input parsing and the crime-to-block-group assignment pipeline: CSV crime
//! and license records, GeoJSON block groups, day/night window
//! classification, and per-capita rate tables.
//!
//! Timestamps are naive local date-times; report time stands in for event
//! time. All column and field names are remappable through the schema
//! structs so arbitrary city extracts can be ingested without editing code.

use crate::geo::{self, Geometry, LinearScale, Point, PolygonGeom, SpatialIndex};
use chrono::{NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("required column {0:?} missing from header")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("geometry: {0}")]
    Geometry(#[from] geo::GeometryError),
    #[error("{0}")]
    Data(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
}

// ---------------------------------------------------------------------------
// Crime categories and time windows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CrimeType {
    Burglary,
    Robbery,
    TheftOfMv,
    TheftFromMv,
}

pub const CRIME_TYPES: [CrimeType; 4] =
    [CrimeType::Burglary, CrimeType::Robbery, CrimeType::TheftOfMv, CrimeType::TheftFromMv];

impl CrimeType {
    /// Stable machine key used in config maps, CSV columns, and file names.
    pub fn key(&self) -> &'static str {
        match self {
            CrimeType::Burglary => "burglary",
            CrimeType::Robbery => "robbery",
            CrimeType::TheftOfMv => "theft_of_mv",
            CrimeType::TheftFromMv => "theft_from_mv",
        }
    }

    pub fn display(&self) -> &'static str {
        match self {
            CrimeType::Burglary => "Burglaries",
            CrimeType::Robbery => "Robberies",
            CrimeType::TheftOfMv => "Theft of MV",
            CrimeType::TheftFromMv => "Theft From MV",
        }
    }

    pub fn from_key(key: &str) -> Option<CrimeType> {
        CRIME_TYPES.iter().copied().find(|t| t.key() == key)
    }

    /// Parse a raw CSV label: lowercased with non-alphanumerics stripped,
    /// then matched against built-in aliases.
    pub fn parse_label(raw: &str) -> Option<CrimeType> {
        let norm: String = raw.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "burglary" | "burglaries" | "burg" => Some(CrimeType::Burglary),
            "robbery" | "robberies" | "rob" => Some(CrimeType::Robbery),
            "theftofmv" | "theftofmotorvehicle" | "mvtheft" | "motorvehicletheft" | "autotheft"
            | "vehicletheft" | "tmv" => Some(CrimeType::TheftOfMv),
            "theftfrommv" | "theftfrommotorvehicle" | "larcenyfromauto" | "theftfromauto"
            | "tfmv" => Some(CrimeType::TheftFromMv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayNight {
    Day,
    Night,
}

/// Half-open time-of-day window [start, end), wrapping midnight when
/// start > end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl TimeWindow {
    pub fn new(start: NaiveTime, end: NaiveTime) -> Result<TimeWindow, IngestError> {
        if start == end {
            return Err(IngestError::Data("time window start equals end".into()));
        }
        Ok(TimeWindow { start, end })
    }

    /// Parse "HH:MM-HH:MM".
    pub fn parse(text: &str) -> Result<TimeWindow, IngestError> {
        let (a, b) = text
            .split_once('-')
            .ok_or_else(|| IngestError::Data(format!("bad window {text:?}, expected HH:MM-HH:MM")))?;
        let parse = |s: &str| {
            NaiveTime::parse_from_str(s.trim(), "%H:%M")
                .map_err(|e| IngestError::Data(format!("bad time {s:?}: {e}")))
        };
        TimeWindow::new(parse(a)?, parse(b)?)
    }

    pub fn contains(&self, t: NaiveTime) -> bool {
        if self.start < self.end {
            t >= self.start && t < self.end
        } else {
            t >= self.start || t < self.end
        }
    }

    /// Window length as a fraction of the day.
    pub fn day_fraction(&self) -> f64 {
        let s = self.start.num_seconds_from_midnight() as f64;
        let e = self.end.num_seconds_from_midnight() as f64;
        let len = if e > s { e - s } else { 86_400.0 - s + e };
        len / 86_400.0
    }
}

impl std::fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start.format("%H:%M"), self.end.format("%H:%M"))
    }
}

/// Night windows: 22:00-04:00 for everything except robberies at 21:00-03:00.
pub fn default_night_windows() -> BTreeMap<CrimeType, TimeWindow> {
    let t = |h, m| NaiveTime::from_hms_opt(h, m, 0).unwrap();
    CRIME_TYPES
        .iter()
        .map(|&ct| {
            let w = if ct == CrimeType::Robbery {
                TimeWindow { start: t(21, 0), end: t(3, 0) }
            } else {
                TimeWindow { start: t(22, 0), end: t(4, 0) }
            };
            (ct, w)
        })
        .collect()
}

pub fn classify_daynight(timestamp: NaiveDateTime, window: &TimeWindow) -> DayNight {
    if window.contains(timestamp.time()) {
        DayNight::Night
    } else {
        DayNight::Day
    }
}

// ---------------------------------------------------------------------------
// Crime and license CSV parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrimeRecord {
    pub crime_type: CrimeType,
    pub timestamp: NaiveDateTime,
    pub location: Point,
}

fn default_type_col() -> String {
    "type".into()
}
fn default_datetime_col() -> String {
    "datetime".into()
}
fn default_x_col() -> String {
    "x".into()
}
fn default_y_col() -> String {
    "y".into()
}

/// Column names for the crime CSV, plus optional raw-label overrides
/// (raw value → one of burglary/robbery/theft_of_mv/theft_from_mv).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrimeCsvSchema {
    #[serde(default = "default_type_col")]
    pub type_col: String,
    #[serde(default = "default_datetime_col")]
    pub datetime_col: String,
    #[serde(default = "default_x_col")]
    pub x_col: String,
    #[serde(default = "default_y_col")]
    pub y_col: String,
    #[serde(default)]
    pub type_map: BTreeMap<String, String>,
}

impl Default for CrimeCsvSchema {
    fn default() -> Self {
        CrimeCsvSchema {
            type_col: default_type_col(),
            datetime_col: default_datetime_col(),
            x_col: default_x_col(),
            y_col: default_y_col(),
            type_map: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LicenseCsvSchema {
    #[serde(default = "default_x_col")]
    pub x_col: String,
    #[serde(default = "default_y_col")]
    pub y_col: String,
}

impl Default for LicenseCsvSchema {
    fn default() -> Self {
        LicenseCsvSchema { x_col: default_x_col(), y_col: default_y_col() }
    }
}

#[derive(Debug, Clone)]
pub struct ParseReport<T> {
    pub records: Vec<T>,
    /// (1-based line number, reason) per skipped row.
    pub rejected: Vec<(u64, String)>,
}

const DATETIME_FORMATS: [&str; 4] =
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"];

pub fn parse_datetime(raw: &str) -> Option<NaiveDateTime> {
    DATETIME_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(raw.trim(), f).ok())
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn parse_coord(raw: &str) -> Option<f64> {
    let v: f64 = raw.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Parse the crime CSV. A missing column is fatal; a malformed row is
/// skipped and reported with its line number.
pub fn parse_crimes<R: Read>(
    reader: R,
    schema: &CrimeCsvSchema,
) -> Result<ParseReport<CrimeRecord>, IngestError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let c_type = column_index(&headers, &schema.type_col)?;
    let c_dt = column_index(&headers, &schema.datetime_col)?;
    let c_x = column_index(&headers, &schema.x_col)?;
    let c_y = column_index(&headers, &schema.y_col)?;
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i as u64 + 2; // header is line 1
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((line, format!("unreadable row: {e}")));
                continue;
            }
        };
        let raw_type = row.get(c_type).unwrap_or("");
        let mapped = schema.type_map.get(raw_type).map(|s| s.as_str());
        let crime_type = match mapped
            .and_then(CrimeType::from_key)
            .or_else(|| CrimeType::parse_label(mapped.unwrap_or(raw_type)))
        {
            Some(t) => t,
            None => {
                rejected.push((line, format!("unknown crime type {raw_type:?}")));
                continue;
            }
        };
        let timestamp = match parse_datetime(row.get(c_dt).unwrap_or("")) {
            Some(t) => t,
            None => {
                rejected.push((line, format!("bad datetime {:?}", row.get(c_dt).unwrap_or(""))));
                continue;
            }
        };
        let (x, y) = match (
            parse_coord(row.get(c_x).unwrap_or("")),
            parse_coord(row.get(c_y).unwrap_or("")),
        ) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                rejected.push((line, "missing or non-finite coordinates".into()));
                continue;
            }
        };
        records.push(CrimeRecord { crime_type, timestamp, location: Point::new(x, y) });
    }
    Ok(ParseReport { records, rejected })
}

pub fn parse_licenses<R: Read>(
    reader: R,
    schema: &LicenseCsvSchema,
) -> Result<ParseReport<Point>, IngestError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let c_x = column_index(&headers, &schema.x_col)?;
    let c_y = column_index(&headers, &schema.y_col)?;
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejected.push((line, format!("unreadable row: {e}")));
                continue;
            }
        };
        match (parse_coord(row.get(c_x).unwrap_or("")), parse_coord(row.get(c_y).unwrap_or(""))) {
            (Some(x), Some(y)) => records.push(Point::new(x, y)),
            _ => rejected.push((line, "missing or non-finite coordinates".into())),
        }
    }
    Ok(ParseReport { records, rejected })
}

// ---------------------------------------------------------------------------
// Temporal summaries
// ---------------------------------------------------------------------------

/// Count of records per hour of day (bin h covers [h:00, h+1:00)).
pub fn hourly_histogram<'a, I: IntoIterator<Item = &'a CrimeRecord>>(records: I) -> [u64; 24] {
    let mut bins = [0u64; 24];
    for r in records {
        bins[r.timestamp.time().hour() as usize] += 1;
    }
    bins
}

/// Lower median of times of day: element ⌊(n−1)/2⌋ of the ascending sort.
pub fn median_report_time(times: &[NaiveTime]) -> Option<NaiveTime> {
    if times.is_empty() {
        return None;
    }
    let mut sorted = times.to_vec();
    sorted.sort();
    Some(sorted[(sorted.len() - 1) / 2])
}

// ---------------------------------------------------------------------------
// Block groups
// ---------------------------------------------------------------------------

fn default_bg_id() -> String {
    "id".into()
}
fn default_bg_pop() -> String {
    "pop".into()
}
fn default_bg_percrent() -> String {
    "percrent".into()
}
fn default_bg_percwhite() -> String {
    "percwhite".into()
}
fn default_bg_percvac() -> String {
    "percvac".into()
}
fn default_bg_popdens() -> String {
    "popdens".into()
}
fn default_bg_medy() -> String {
    "medy".into()
}
fn default_bg_poverty() -> String {
    "poverty".into()
}
fn default_bg_unemployment() -> String {
    "unemployment".into()
}
fn default_bg_no_diploma() -> String {
    "no_diploma".into()
}
fn default_bg_snap() -> String {
    "snap".into()
}

/// GeoJSON property names for block-group attributes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockGroupSchema {
    #[serde(default = "default_bg_id")]
    pub id: String,
    #[serde(default = "default_bg_pop")]
    pub pop: String,
    #[serde(default = "default_bg_percrent")]
    pub percrent: String,
    #[serde(default = "default_bg_percwhite")]
    pub percwhite: String,
    #[serde(default = "default_bg_percvac")]
    pub percvac: String,
    #[serde(default = "default_bg_popdens")]
    pub popdens: String,
    #[serde(default = "default_bg_medy")]
    pub medy: String,
    #[serde(default = "default_bg_poverty")]
    pub poverty: String,
    #[serde(default = "default_bg_unemployment")]
    pub unemployment: String,
    #[serde(default = "default_bg_no_diploma")]
    pub no_diploma: String,
    #[serde(default = "default_bg_snap")]
    pub snap: String,
}

impl Default for BlockGroupSchema {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct BlockGroup {
    pub id: String,
    pub geometry: PolygonGeom,
    pub pop: f64,
    pub percrent: Option<f64>,
    pub percwhite: Option<f64>,
    pub percvac: Option<f64>,
    pub popdens: Option<f64>,
    pub medy: Option<f64>,
    pub poverty: Option<f64>,
    pub unemployment: Option<f64>,
    pub no_diploma: Option<f64>,
    pub snap: Option<f64>,
    pub centroid: Point,
}

fn property_number(
    props: &serde_json::Map<String, serde_json::Value>,
    name: &str,
) -> Result<Option<f64>, IngestError> {
    match props.get(name) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(serde_json::Value::Number(n)) => Ok(n.as_f64()),
        Some(serde_json::Value::String(s)) => {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                s.trim()
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| IngestError::Data(format!("property {name:?} not numeric: {s:?}")))
            }
        }
        Some(other) => {
            Err(IngestError::Data(format!("property {name:?} not numeric: {other}")))
        }
    }
}

fn validate_percent(id: &str, name: &str, v: Option<f64>) -> Result<Option<f64>, IngestError> {
    if let Some(x) = v {
        if !(0.0..=100.0).contains(&x) {
            return Err(IngestError::Data(format!(
                "block group {id}: {name} = {x} outside [0, 100]"
            )));
        }
    }
    Ok(v)
}

/// Parse a GeoJSON FeatureCollection of block groups.
pub fn parse_blockgroups(text: &str, schema: &BlockGroupSchema) -> Result<Vec<BlockGroup>, IngestError> {
    let gj: geojson::GeoJson = text
        .parse()
        .map_err(|e| IngestError::Data(format!("block groups: invalid GeoJSON: {e}")))?;
    let fc = match gj {
        geojson::GeoJson::FeatureCollection(fc) => fc,
        _ => return Err(IngestError::Data("block groups: expected a FeatureCollection".into())),
    };
    if fc.features.is_empty() {
        return Err(IngestError::EmptyInput("block groups".into()));
    }
    let mut out = Vec::with_capacity(fc.features.len());
    for (i, feature) in fc.features.iter().enumerate() {
        let props = feature
            .properties
            .as_ref()
            .ok_or_else(|| IngestError::Data(format!("feature {i}: no properties")))?;
        let id = match props.get(&schema.id) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(IngestError::Data(format!("feature {i}: missing id field {:?}", schema.id))),
        };
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| IngestError::Data(format!("block group {id}: no geometry")))
            .and_then(|g| geo::polygon_from_geojson(g).map_err(IngestError::from))?;
        let pop = property_number(props, &schema.pop)?
            .ok_or_else(|| IngestError::Data(format!("block group {id}: missing population")))?;
        if pop < 0.0 {
            return Err(IngestError::Data(format!("block group {id}: negative population {pop}")));
        }
        let medy = property_number(props, &schema.medy)?;
        if let Some(m) = medy {
            if m <= 0.0 {
                return Err(IngestError::Data(format!("block group {id}: median income {m} not positive")));
            }
        }
        let centroid = geometry.centroid();
        out.push(BlockGroup {
            percrent: validate_percent(&id, "percrent", property_number(props, &schema.percrent)?)?,
            percwhite: validate_percent(&id, "percwhite", property_number(props, &schema.percwhite)?)?,
            percvac: validate_percent(&id, "percvac", property_number(props, &schema.percvac)?)?,
            popdens: property_number(props, &schema.popdens)?,
            medy,
            poverty: validate_percent(&id, "poverty", property_number(props, &schema.poverty)?)?,
            unemployment: validate_percent(
                &id,
                "unemployment",
                property_number(props, &schema.unemployment)?,
            )?,
            no_diploma: validate_percent(&id, "no_diploma", property_number(props, &schema.no_diploma)?)?,
            snap: validate_percent(&id, "snap", property_number(props, &schema.snap)?)?,
            id,
            geometry,
            pop,
            centroid,
        });
    }
    Ok(out)
}

/// Citywide counts for one crime type, regardless of spatial assignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCount {
    pub all: u64,
    pub day: u64,
    pub night: u64,
}

impl TypeCount {
    /// Night share as a percentage; None when no records.
    pub fn pct_night(&self) -> Option<f64> {
        (self.all > 0).then(|| 100.0 * self.night as f64 / self.all as f64)
    }
}

/// Count every record per type and window, including records that fall
/// outside the study area.
pub fn count_by_window(
    records: &[CrimeRecord],
    windows: &BTreeMap<CrimeType, TimeWindow>,
) -> Result<BTreeMap<CrimeType, TypeCount>, IngestError> {
    for ct in CRIME_TYPES {
        if !windows.contains_key(&ct) {
            return Err(IngestError::Data(format!("no night window configured for {}", ct.key())));
        }
    }
    let mut counts: BTreeMap<CrimeType, TypeCount> =
        CRIME_TYPES.iter().map(|&ct| (ct, TypeCount::default())).collect();
    for rec in records {
        let c = counts.get_mut(&rec.crime_type).unwrap();
        c.all += 1;
        match classify_daynight(rec.timestamp, &windows[&rec.crime_type]) {
            DayNight::Day => c.day += 1,
            DayNight::Night => c.night += 1,
        }
    }
    Ok(counts)
}

// ---------------------------------------------------------------------------
// Assignment and rates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CountTriple {
    pub all: Vec<u64>,
    pub day: Vec<u64>,
    pub night: Vec<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RateTriple {
    pub all: Vec<Option<f64>>,
    pub day: Vec<Option<f64>>,
    pub night: Vec<Option<f64>>,
}

/// Per-block-group counts, rates, and derived covariates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatesTable {
    pub unit_ids: Vec<String>,
    pub pop: Vec<f64>,
    pub counts: BTreeMap<CrimeType, CountTriple>,
    /// Crimes per 1,000 residents; None where pop = 0.
    pub rates: BTreeMap<CrimeType, RateTriple>,
    pub license_counts: Vec<u64>,
    /// Licenses per 1,000 residents; None where pop = 0.
    pub liqdens: Vec<Option<f64>>,
    pub lnmedy: Vec<Option<f64>>,
    /// ln of centroid-to-CBD distance in miles; None at distance 0.
    pub lndistcbd: Vec<Option<f64>>,
    pub unassigned_crimes: u64,
    pub unassigned_licenses: u64,
    /// Indices of block groups with zero population (rates suppressed).
    pub zero_pop_units: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Assign crimes and licenses to containing block groups and compute rate
/// and covariate columns. A point on a shared boundary goes to the
/// lowest-index block group; points outside every polygon are counted as
/// unassigned.
pub fn assign_and_rate(
    records: &[CrimeRecord],
    windows: &BTreeMap<CrimeType, TimeWindow>,
    blockgroups: &[BlockGroup],
    licenses: &[Point],
    cbd: Point,
    scale: LinearScale,
) -> Result<RatesTable, IngestError> {
    if blockgroups.is_empty() {
        return Err(IngestError::EmptyInput("block groups".into()));
    }
    for ct in CRIME_TYPES {
        if !windows.contains_key(&ct) {
            return Err(IngestError::Data(format!("no night window configured for {}", ct.key())));
        }
    }
    let n = blockgroups.len();
    let index = SpatialIndex::build(
        blockgroups
            .iter()
            .enumerate()
            .map(|(i, bg)| (i as u64, Geometry::Polygon(bg.geometry.clone())))
            .collect(),
    );
    // containment = distance 0; within_radius returns ascending ids, so the
    // first hit is the lowest-index unit
    let locate = |p: Point| index.within_radius(p, 0.0).first().map(|&id| id as usize);

    let mut counts: BTreeMap<CrimeType, CountTriple> = CRIME_TYPES
        .iter()
        .map(|&ct| {
            (ct, CountTriple { all: vec![0; n], day: vec![0; n], night: vec![0; n] })
        })
        .collect();
    let mut unassigned_crimes = 0;
    for rec in records {
        let Some(unit) = locate(rec.location) else {
            unassigned_crimes += 1;
            continue;
        };
        let triple = counts.get_mut(&rec.crime_type).unwrap();
        triple.all[unit] += 1;
        match classify_daynight(rec.timestamp, &windows[&rec.crime_type]) {
            DayNight::Day => triple.day[unit] += 1,
            DayNight::Night => triple.night[unit] += 1,
        }
    }

    let mut license_counts = vec![0u64; n];
    let mut unassigned_licenses = 0;
    for p in licenses {
        match locate(*p) {
            Some(unit) => license_counts[unit] += 1,
            None => unassigned_licenses += 1,
        }
    }

    let mut warnings = Vec::new();
    let zero_pop_units: Vec<usize> =
        (0..n).filter(|&i| blockgroups[i].pop == 0.0).collect();
    if !zero_pop_units.is_empty() {
        warnings.push(format!(
            "{} block groups have zero population; their rates are suppressed",
            zero_pop_units.len()
        ));
    }
    let per_1000 = |count: u64, pop: f64| (pop > 0.0).then(|| 1000.0 * count as f64 / pop);
    let rates: BTreeMap<CrimeType, RateTriple> = counts
        .iter()
        .map(|(&ct, c)| {
            let rate = |v: &Vec<u64>| -> Vec<Option<f64>> {
                v.iter().zip(blockgroups).map(|(&k, bg)| per_1000(k, bg.pop)).collect()
            };
            (ct, RateTriple { all: rate(&c.all), day: rate(&c.day), night: rate(&c.night) })
        })
        .collect();
    let liqdens: Vec<Option<f64>> = license_counts
        .iter()
        .zip(blockgroups)
        .map(|(&k, bg)| per_1000(k, bg.pop))
        .collect();
    let lnmedy: Vec<Option<f64>> = blockgroups.iter().map(|bg| bg.medy.map(f64::ln)).collect();
    let lndistcbd: Vec<Option<f64>> = blockgroups
        .iter()
        .enumerate()
        .map(|(i, bg)| {
            let miles = scale.units_to_miles(bg.centroid.distance_to(cbd));
            if miles > 0.0 {
                Some(miles.ln())
            } else {
                warnings.push(format!(
                    "block group {}: centroid coincides with the CBD point; ln distance undefined",
                    blockgroups[i].id
                ));
                None
            }
        })
        .collect();

    Ok(RatesTable {
        unit_ids: blockgroups.iter().map(|bg| bg.id.clone()).collect(),
        pop: blockgroups.iter().map(|bg| bg.pop).collect(),
        counts,
        rates,
        license_counts,
        liqdens,
        lnmedy,
        lndistcbd,
        unassigned_crimes,
        unassigned_licenses,
        zero_pop_units,
        warnings,
    })
}
