//! Multiunit-housing parcel selection and proximity metrics: threshold and
//! cluster selection rules, per-block-group parcel counts, crime-to-parcel
//! distance summaries, grid coverage, and CBD histograms.

use crate::geo::{Geometry, GeometryError, LinearScale, Point, PolygonGeom, SpatialIndex};
use crate::ingest::{classify_daynight, CrimeRecord, CrimeType, DayNight, TimeWindow, CRIME_TYPES};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParcelError {
    #[error("required column {0:?} missing from header")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Data(String),
    #[error("no parcels selected; distance summaries undefined")]
    EmptySelection,
}

#[derive(Debug, Clone)]
pub struct Parcel {
    pub id: String,
    pub geometry: PolygonGeom,
    pub landuse_code: i64,
    pub units: u64,
    /// Representative point (centroid, derived from the geometry).
    pub rep_point: Point,
}

impl Parcel {
    pub fn new(id: String, geometry: PolygonGeom, landuse_code: i64, units: u64) -> Parcel {
        let rep_point = geometry.centroid();
        Parcel { id, geometry, landuse_code, units, rep_point }
    }
}

/// Selection thresholds. Rule (a) takes parcels with `units >= unit_threshold`;
/// rule (b) takes every member of a cluster of parcels with
/// `units > cluster_min_units` chained by boundary gaps `< cluster_gap_ft`,
/// provided the cluster has at least two members and
/// `total units >= unit_threshold`. Both rules require a land-use code in
/// `codes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionRules {
    pub codes: BTreeSet<i64>,
    pub unit_threshold: u64,
    pub cluster_min_units: u64,
    pub cluster_gap_ft: f64,
}

impl Default for SelectionRules {
    fn default() -> Self {
        SelectionRules {
            codes: [8830, 8899].into(),
            unit_threshold: 24,
            cluster_min_units: 10,
            cluster_gap_ft: 30.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParcelCluster {
    pub member_ids: Vec<String>,
    pub total_units: u64,
    pub qualifies: bool,
}

#[derive(Debug, Clone)]
pub struct Selection {
    /// Indices into the input slice, ascending.
    pub selected: Vec<usize>,
    /// Indices selected by the unit threshold alone.
    pub direct: Vec<usize>,
    /// Qualifying and non-qualifying clusters of near-adjacent parcels.
    pub clusters: Vec<ParcelCluster>,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // canonical root = smaller index, so grouping ignores input order
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Select large multiunit parcels under `rules`.
pub fn select_multiunit(parcels: &[Parcel], rules: &SelectionRules, scale: LinearScale) -> Selection {
    let gap_units = scale.feet_to_units(rules.cluster_gap_ft);
    // proximity graph over parcels eligible for clustering
    let members: Vec<usize> = parcels
        .iter()
        .enumerate()
        .filter(|(_, p)| rules.codes.contains(&p.landuse_code) && p.units > rules.cluster_min_units)
        .map(|(i, _)| i)
        .collect();
    let mut uf = UnionFind::new(members.len());
    for a in 0..members.len() {
        let pa = &parcels[members[a]];
        let ba = pa.geometry.bbox();
        for b in (a + 1)..members.len() {
            let pb = &parcels[members[b]];
            if ba.distance_to_rect(&pb.geometry.bbox()) >= gap_units {
                continue;
            }
            if pa.geometry.boundary_distance(&pb.geometry) < gap_units {
                uf.union(a, b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for a in 0..members.len() {
        let root = uf.find(a);
        groups.entry(root).or_default().push(members[a]);
    }
    let mut selected: BTreeSet<usize> = BTreeSet::new();
    let mut direct = Vec::new();
    for (i, p) in parcels.iter().enumerate() {
        if rules.codes.contains(&p.landuse_code) && p.units >= rules.unit_threshold {
            selected.insert(i);
            direct.push(i);
        }
    }
    let mut clusters = Vec::new();
    for group in groups.values() {
        let total_units: u64 = group.iter().map(|&i| parcels[i].units).sum();
        let qualifies = group.len() >= 2 && total_units >= rules.unit_threshold;
        if qualifies {
            selected.extend(group.iter().copied());
        }
        clusters.push(ParcelCluster {
            member_ids: group.iter().map(|&i| parcels[i].id.clone()).collect(),
            total_units,
            qualifies,
        });
    }
    Selection { selected: selected.into_iter().collect(), direct, clusters }
}

/// Per-block-group count of selected parcels whose representative point lies
/// within `radius_miles` of the block-group centroid (boundary inclusive).
pub fn qmi_parc(
    centroids: &[Point],
    selected: &[&Parcel],
    radius_miles: f64,
    scale: LinearScale,
) -> Vec<u64> {
    if selected.is_empty() {
        return vec![0; centroids.len()];
    }
    let index = SpatialIndex::build(
        selected.iter().enumerate().map(|(i, p)| (i as u64, Geometry::Point(p.rep_point))).collect(),
    );
    let r = scale.miles_to_units(radius_miles);
    centroids.iter().map(|&c| index.within_radius(c, r).len() as u64).collect()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DistanceCell {
    pub n: u64,
    pub median_miles: Option<f64>,
    pub within_quarter_mile: u64,
}

impl DistanceCell {
    pub fn share_within_quarter(&self) -> Option<f64> {
        (self.n > 0).then(|| self.within_quarter_mile as f64 / self.n as f64)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DistanceTriple {
    pub all: DistanceCell,
    pub day: DistanceCell,
    pub night: DistanceCell,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrimeDistanceSummary {
    /// Nearest-parcel distance in miles, parallel to the input records.
    pub distances_miles: Vec<f64>,
    pub cells: BTreeMap<CrimeType, DistanceTriple>,
}

/// Midpoint median: mean of the two central order statistics for even n.
fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn distance_cell(values: &[f64]) -> DistanceCell {
    DistanceCell {
        n: values.len() as u64,
        median_miles: median(values),
        within_quarter_mile: values.iter().filter(|&&d| d <= 0.25).count() as u64,
    }
}

/// Distance from each crime to the nearest selected parcel (0 inside one),
/// summarized per type and day/night split. One distance pass feeds both the
/// medians and the quarter-mile shares.
pub fn crime_parcel_distances(
    records: &[CrimeRecord],
    windows: &BTreeMap<CrimeType, TimeWindow>,
    selected: &[&Parcel],
    scale: LinearScale,
) -> Result<CrimeDistanceSummary, ParcelError> {
    if selected.is_empty() {
        return Err(ParcelError::EmptySelection);
    }
    let index = SpatialIndex::build(
        selected
            .iter()
            .enumerate()
            .map(|(i, p)| (i as u64, Geometry::Polygon(p.geometry.clone())))
            .collect(),
    );
    let mut distances_miles = Vec::with_capacity(records.len());
    let mut by_cell: BTreeMap<CrimeType, (Vec<f64>, Vec<f64>)> =
        CRIME_TYPES.iter().map(|&ct| (ct, (Vec::new(), Vec::new()))).collect();
    for rec in records {
        let (_, d) = index.nearest(rec.location)?;
        let miles = scale.units_to_miles(d);
        distances_miles.push(miles);
        let window = windows.get(&rec.crime_type).ok_or_else(|| {
            ParcelError::Data(format!("no night window configured for {}", rec.crime_type.key()))
        })?;
        let (day, night) = by_cell.get_mut(&rec.crime_type).unwrap();
        match classify_daynight(rec.timestamp, window) {
            DayNight::Day => day.push(miles),
            DayNight::Night => night.push(miles),
        }
    }
    let cells = by_cell
        .into_iter()
        .map(|(ct, (day, night))| {
            let all: Vec<f64> = day.iter().chain(night.iter()).copied().collect();
            (
                ct,
                DistanceTriple {
                    all: distance_cell(&all),
                    day: distance_cell(&day),
                    night: distance_cell(&night),
                },
            )
        })
        .collect();
    Ok(CrimeDistanceSummary { distances_miles, cells })
}

/// Fraction of the city within `radius_miles` of a selected parcel, estimated
/// on a regular grid of sample points (`grid_step_ft` spacing, offset half a
/// step from the boundary bounding box) restricted to points inside the
/// boundary.
pub fn coverage_fraction(
    boundary: &PolygonGeom,
    selected: &[&Parcel],
    radius_miles: f64,
    grid_step_ft: f64,
    scale: LinearScale,
) -> f64 {
    let step = scale.feet_to_units(grid_step_ft);
    let r = scale.miles_to_units(radius_miles);
    let bbox = boundary.bbox();
    let index = (!selected.is_empty()).then(|| {
        SpatialIndex::build(
            selected
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u64, Geometry::Polygon(p.geometry.clone())))
                .collect(),
        )
    });
    let (mut inside, mut covered) = (0u64, 0u64);
    let mut y = bbox.min_y + step / 2.0;
    while y < bbox.max_y {
        let mut x = bbox.min_x + step / 2.0;
        while x < bbox.max_x {
            let p = Point::new(x, y);
            if boundary.contains(p) {
                inside += 1;
                if let Some(index) = &index {
                    let (_, d) = index.nearest(p).unwrap();
                    if d <= r {
                        covered += 1;
                    }
                }
            }
            x += step;
        }
        y += step;
    }
    if inside == 0 {
        0.0
    } else {
        covered as f64 / inside as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParcelHistograms {
    /// Counts per distance-from-CBD bin i = [i·w, (i+1)·w) with w = 0.5 mile.
    pub distance_bins: Vec<u64>,
    pub distance_bin_width_miles: f64,
    /// Counts per unit-count bin i = [i·w, (i+1)·w).
    pub unit_bins: Vec<u64>,
    pub unit_bin_width: u64,
}

/// Histogram the selected parcels by representative-point distance from the
/// CBD (0.5-mile bins) and by dwelling-unit count.
pub fn parcel_histograms(
    selected: &[&Parcel],
    cbd: Point,
    unit_bin_width: u64,
    scale: LinearScale,
) -> ParcelHistograms {
    let distance_bin_width_miles = 0.5;
    let unit_bin_width = unit_bin_width.max(1);
    let mut distance_bins: Vec<u64> = Vec::new();
    let mut unit_bins: Vec<u64> = Vec::new();
    for p in selected {
        let miles = scale.units_to_miles(p.rep_point.distance_to(cbd));
        let db = (miles / distance_bin_width_miles).floor() as usize;
        if db >= distance_bins.len() {
            distance_bins.resize(db + 1, 0);
        }
        distance_bins[db] += 1;
        let ub = (p.units / unit_bin_width) as usize;
        if ub >= unit_bins.len() {
            unit_bins.resize(ub + 1, 0);
        }
        unit_bins[ub] += 1;
    }
    ParcelHistograms { distance_bins, distance_bin_width_miles, unit_bins, unit_bin_width }
}

// ---------------------------------------------------------------------------
// Parcel input parsing
// ---------------------------------------------------------------------------

fn default_parcel_id() -> String {
    "id".into()
}
fn default_parcel_code() -> String {
    "landuse_code".into()
}
fn default_parcel_units() -> String {
    "units".into()
}
fn default_parcel_geometry() -> String {
    "geometry".into()
}

/// Field names for parcel inputs. GeoJSON reads `id`, `landuse_code`, and
/// `units` from feature properties; CSV additionally reads `geometry` as an
/// embedded GeoJSON geometry string.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParcelSchema {
    #[serde(default = "default_parcel_id")]
    pub id: String,
    #[serde(default = "default_parcel_code")]
    pub landuse_code: String,
    #[serde(default = "default_parcel_units")]
    pub units: String,
    #[serde(default = "default_parcel_geometry")]
    pub geometry: String,
}

impl Default for ParcelSchema {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

fn integer_field(raw: &serde_json::Value, name: &str, id: &str) -> Result<i64, ParcelError> {
    let as_f64 = match raw {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    };
    match as_f64 {
        Some(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
        _ => Err(ParcelError::Data(format!("parcel {id}: {name} is not an integer: {raw}"))),
    }
}

fn build_parcel(
    id: String,
    code: i64,
    units: i64,
    geometry: PolygonGeom,
) -> Result<Parcel, ParcelError> {
    if units < 0 {
        return Err(ParcelError::Data(format!("parcel {id}: negative unit count {units}")));
    }
    Ok(Parcel::new(id, geometry, code, units as u64))
}

/// Parse a GeoJSON FeatureCollection of parcels.
pub fn parse_parcels_geojson(text: &str, schema: &ParcelSchema) -> Result<Vec<Parcel>, ParcelError> {
    let gj: geojson::GeoJson =
        text.parse().map_err(|e| ParcelError::Data(format!("parcels: invalid GeoJSON: {e}")))?;
    let fc = match gj {
        geojson::GeoJson::FeatureCollection(fc) => fc,
        _ => return Err(ParcelError::Data("parcels: expected a FeatureCollection".into())),
    };
    let mut out = Vec::with_capacity(fc.features.len());
    for (i, feature) in fc.features.iter().enumerate() {
        let props = feature
            .properties
            .as_ref()
            .ok_or_else(|| ParcelError::Data(format!("parcel feature {i}: no properties")))?;
        let id = match props.get(&schema.id) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(serde_json::Value::Number(n)) => n.to_string(),
            _ => return Err(ParcelError::Data(format!("parcel feature {i}: missing id field {:?}", schema.id))),
        };
        let code = props
            .get(&schema.landuse_code)
            .ok_or_else(|| ParcelError::Data(format!("parcel {id}: missing {:?}", schema.landuse_code)))
            .and_then(|v| integer_field(v, "landuse_code", &id))?;
        let units = props
            .get(&schema.units)
            .ok_or_else(|| ParcelError::Data(format!("parcel {id}: missing {:?}", schema.units)))
            .and_then(|v| integer_field(v, "units", &id))?;
        let geometry = feature
            .geometry
            .as_ref()
            .ok_or_else(|| ParcelError::Data(format!("parcel {id}: no geometry")))
            .and_then(|g| crate::geo::polygon_from_geojson(g).map_err(ParcelError::from))?;
        out.push(build_parcel(id, code, units, geometry)?);
    }
    Ok(out)
}

/// Parse a parcel CSV whose geometry column holds a GeoJSON geometry string.
pub fn parse_parcels_csv<R: Read>(reader: R, schema: &ParcelSchema) -> Result<Vec<Parcel>, ParcelError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| ParcelError::MissingColumn(name.to_string()))
    };
    let c_id = col(&schema.id)?;
    let c_code = col(&schema.landuse_code)?;
    let c_units = col(&schema.units)?;
    let c_geom = col(&schema.geometry)?;
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row?;
        let id = row.get(c_id).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(ParcelError::Data("parcel row with empty id".into()));
        }
        let int_col = |idx: usize, name: &str| {
            integer_field(&serde_json::Value::String(row.get(idx).unwrap_or("").into()), name, &id)
        };
        let code = int_col(c_code, "landuse_code")?;
        let units = int_col(c_units, "units")?;
        let geom_raw = row.get(c_geom).unwrap_or("");
        let gj: geojson::Geometry = geom_raw
            .parse()
            .map_err(|e| ParcelError::Data(format!("parcel {id}: bad geometry: {e}")))?;
        let geometry = crate::geo::polygon_from_geojson(&gj)?;
        out.push(build_parcel(id, code, units, geometry)?);
    }
    Ok(out)
}
