//! Pipeline stages. Each stage reads raw inputs and/or upstream caches,
//! computes through library operations only, writes its cache files, and
//! records a staleness meta. Consumers verify dependency metas and fail with
//! a stale-cache error instead of recomputing on their own.

use crate::config::RunConfig;
use crate::error::{io_config, CliError};
use crate::workspace::Workspace;
use crimegrid::esda::{
    self, correlation_tables, deprivation_pca, getis_ord_gstar, hotspot_profile, morans_i,
    morans_permutation, CorrelationTables, HotClass, ProfileRow,
};
use crimegrid::geo::{polygon_from_geojson, Point, PolygonGeom};
use crimegrid::ingest::{
    assign_and_rate, count_by_window, parse_blockgroups, parse_crimes, parse_licenses,
    CrimeRecord, CrimeType, RateTriple, RatesTable, TypeCount, CRIME_TYPES,
};
use crimegrid::parcels::{
    coverage_fraction, crime_parcel_distances, parcel_histograms, parse_parcels_csv,
    parse_parcels_geojson, qmi_parc, select_multiunit, DistanceTriple, Parcel, ParcelCluster,
    ParcelHistograms,
};
use crimegrid::slm::{fit_all, LagModelFit, NamedSeries};
use crimegrid::weights::ContiguityWeights;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Windows of every analysis cell, in canonical cache order.
pub const WINDOWS: [&str; 3] = ["all", "day", "night"];

/// Covariates entering correlations and regressions, in table order.
pub const COVARIATE_KEYS: [&str; 9] = [
    "liqdens", "percrent", "percwhite", "percvac", "popdens", "lnmedy", "deprivation",
    "qmiparc", "lndistcbd",
];

/// Variables profiled over hot-spot units, in table order.
pub const PROFILE_KEYS: [&str; 6] =
    ["deprivation", "qmiparc", "liqdens", "percwhite", "percrent", "medy"];

pub fn rate_series<'a>(triple: &'a RateTriple, window: &str) -> &'a [Option<f64>] {
    match window {
        "all" => &triple.all,
        "day" => &triple.day,
        "night" => &triple.night,
        other => panic!("unknown window {other}"),
    }
}

// ---------------------------------------------------------------------------
// Cache file contents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrimeCache {
    pub records: Vec<CrimeRecord>,
    pub rejected: Vec<(u64, String)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LicenseCache {
    pub points: Vec<Point>,
    pub rejected: Vec<(u64, String)>,
}

/// Per-unit covariates shared by the analysis stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariateCache {
    pub unit_ids: Vec<String>,
    pub centroids: Vec<Point>,
    pub pop: Vec<f64>,
    pub percrent: Vec<Option<f64>>,
    pub percwhite: Vec<Option<f64>>,
    pub percvac: Vec<Option<f64>>,
    pub popdens: Vec<Option<f64>>,
    pub medy: Vec<Option<f64>>,
    pub deprivation: Vec<Option<f64>>,
    pub deprivation_loadings: Vec<(String, f64)>,
    pub deprivation_explained_share: Option<f64>,
    pub deprivation_lambda1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestReport {
    pub crime_rows: usize,
    pub crime_rows_rejected: usize,
    pub license_rows: usize,
    pub license_rows_rejected: usize,
    pub blockgroup_count: usize,
    /// Citywide counts per type and window over every parsed record,
    /// assigned or not.
    pub counts: BTreeMap<CrimeType, TypeCount>,
    pub unassigned_crimes: u64,
    pub unassigned_licenses: u64,
    pub zero_pop_units: usize,
    pub windows: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsMeta {
    pub n: usize,
    pub island_count: usize,
    pub island_ids: Vec<String>,
    /// Binary total weight = twice the undirected edge count.
    pub s0_binary: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectedParcel {
    pub id: String,
    pub landuse_code: i64,
    pub units: u64,
    /// "direct" (unit threshold) or "cluster" (near-adjacent group).
    pub selected_by: String,
    /// Combined units of the parcel's qualifying cluster, when in one.
    pub cluster_units: Option<u64>,
    /// GeoJSON geometry, carried for the output layer.
    pub geometry: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionCache {
    /// Selected parcels sorted by id.
    pub records: Vec<SelectedParcel>,
    pub total_parcels: usize,
    pub clusters: Vec<ParcelCluster>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QmiParcCache {
    pub unit_ids: Vec<String>,
    pub counts: Vec<u64>,
    pub radius_miles: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceCache {
    pub cells: BTreeMap<CrimeType, DistanceTriple>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageCache {
    pub fraction: f64,
    pub radius_miles: f64,
    pub grid_step_ft: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoranCell {
    pub crime_type: String,
    pub window: String,
    pub n: usize,
    pub i: Option<f64>,
    pub expected: Option<f64>,
    pub p_perm: Option<f64>,
    pub permutations: usize,
    pub seed: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MoranCache {
    pub rows: Vec<MoranCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GstarCell {
    pub crime_type: String,
    pub window: String,
    pub z: Vec<Option<f64>>,
    pub class: Vec<String>,
    pub error: Option<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GstarCache {
    /// Units entering the G* runs (positive population), in unit order.
    pub unit_ids: Vec<String>,
    pub threshold: f64,
    pub cells: Vec<GstarCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileCell {
    pub crime_type: String,
    pub window: String,
    pub class: String,
    pub unit_count: usize,
    pub rows: Vec<ProfileRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfilesCache {
    pub cells: Vec<ProfileCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelateCache {
    pub tables: CorrelationTables,
    pub unit_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitCell {
    pub crime_type: String,
    pub window: String,
    pub fit: Option<LagModelFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitsCache {
    pub kept_units: usize,
    pub dropped_missing: usize,
    pub dropped_islands: Vec<String>,
    pub cells: Vec<FitCell>,
}

// ---------------------------------------------------------------------------
// Input helpers
// ---------------------------------------------------------------------------

fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_config(&path.display().to_string(), e))
}

/// Parse the city boundary: every Polygon/MultiPolygon in the file, merged
/// into one (possibly multi-part) region.
pub fn parse_boundary(text: &str) -> Result<PolygonGeom, CliError> {
    let gj: geojson::GeoJson = text
        .parse()
        .map_err(|e| CliError::Data(format!("boundary: invalid GeoJSON: {e}")))?;
    let mut geoms: Vec<geojson::Geometry> = Vec::new();
    match gj {
        geojson::GeoJson::Geometry(g) => geoms.push(g),
        geojson::GeoJson::Feature(f) => geoms.extend(f.geometry),
        geojson::GeoJson::FeatureCollection(fc) => {
            geoms.extend(fc.features.into_iter().filter_map(|f| f.geometry))
        }
    }
    let mut parts = Vec::new();
    for g in &geoms {
        parts.extend(polygon_from_geojson(g)?.parts().to_vec());
    }
    if parts.is_empty() {
        return Err(CliError::Data("boundary: no polygon geometry found".into()));
    }
    PolygonGeom::new(parts).map_err(CliError::from)
}

/// Parse parcels by file extension: .csv as CSV, .geojson/.json as GeoJSON.
pub fn parse_parcels_file(cfg: &RunConfig) -> Result<Vec<Parcel>, CliError> {
    let path = &cfg.parcels;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "csv" => {
            let file = std::fs::File::open(path)
                .map_err(|e| io_config(&path.display().to_string(), e))?;
            parse_parcels_csv(file, &cfg.parcel_schema).map_err(CliError::from)
        }
        "geojson" | "json" => {
            parse_parcels_geojson(&read_input(path)?, &cfg.parcel_schema).map_err(CliError::from)
        }
        other => Err(CliError::Config(format!(
            "parcels file {}: unsupported extension {other:?} (expected .csv, .json, or .geojson)",
            path.display()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Parse all point inputs, assign them to block groups, and derive the
/// per-unit rate and covariate columns.
pub fn run_ingest(cfg: &RunConfig, ws: &Workspace) -> Result<IngestReport, CliError> {
    let windows = cfg.effective_windows()?;
    let crimes_file = std::fs::File::open(&cfg.crimes)
        .map_err(|e| io_config(&cfg.crimes.display().to_string(), e))?;
    let crimes = parse_crimes(crimes_file, &cfg.crime_schema)?;
    let licenses_file = std::fs::File::open(&cfg.licenses)
        .map_err(|e| io_config(&cfg.licenses.display().to_string(), e))?;
    let licenses = parse_licenses(licenses_file, &cfg.license_schema)?;
    let blockgroups = parse_blockgroups(&read_input(&cfg.blockgroups)?, &cfg.blockgroup_schema)?;

    let rates = assign_and_rate(
        &crimes.records,
        &windows,
        &blockgroups,
        &licenses.records,
        cfg.cbd(),
        cfg.scale(),
    )?;
    let counts = count_by_window(&crimes.records, &windows)?;

    let mut warnings = rates.warnings.clone();
    if !crimes.rejected.is_empty() {
        warnings.push(format!("{} crime rows rejected during parsing", crimes.rejected.len()));
    }
    if !licenses.rejected.is_empty() {
        warnings.push(format!("{} license rows rejected during parsing", licenses.rejected.len()));
    }
    if rates.unassigned_crimes > 0 {
        warnings.push(format!(
            "{} crimes fall outside every block group",
            rates.unassigned_crimes
        ));
    }
    if rates.unassigned_licenses > 0 {
        warnings.push(format!(
            "{} licenses fall outside every block group",
            rates.unassigned_licenses
        ));
    }

    // deprivation index over the four hardship indicators; a failed fit
    // degrades to an absent column rather than aborting the pipeline
    let indicator = |f: fn(&crimegrid::ingest::BlockGroup) -> Option<f64>| -> Vec<Option<f64>> {
        blockgroups.iter().map(f).collect()
    };
    let indicators: Vec<(String, Vec<Option<f64>>)> = vec![
        ("poverty".into(), indicator(|bg| bg.poverty)),
        ("unemployment".into(), indicator(|bg| bg.unemployment)),
        ("no_diploma".into(), indicator(|bg| bg.no_diploma)),
        ("snap".into(), indicator(|bg| bg.snap)),
    ];
    let n = blockgroups.len();
    let (deprivation, loadings, explained, lambda1) = match deprivation_pca(&indicators) {
        Ok(idx) => {
            if !idx.dropped.is_empty() {
                warnings.push(format!(
                    "deprivation index dropped constant indicators: {}",
                    idx.dropped.join(", ")
                ));
            }
            (idx.score, idx.loadings, Some(idx.explained_share), Some(idx.lambda1))
        }
        Err(e) => {
            warnings.push(format!("deprivation index unavailable: {e}"));
            (vec![None; n], Vec::new(), None, None)
        }
    };

    let covariates = CovariateCache {
        unit_ids: rates.unit_ids.clone(),
        centroids: blockgroups.iter().map(|bg| bg.centroid).collect(),
        pop: rates.pop.clone(),
        percrent: blockgroups.iter().map(|bg| bg.percrent).collect(),
        percwhite: blockgroups.iter().map(|bg| bg.percwhite).collect(),
        percvac: blockgroups.iter().map(|bg| bg.percvac).collect(),
        popdens: blockgroups.iter().map(|bg| bg.popdens).collect(),
        medy: blockgroups.iter().map(|bg| bg.medy).collect(),
        deprivation,
        deprivation_loadings: loadings,
        deprivation_explained_share: explained,
        deprivation_lambda1: lambda1,
    };

    let report = IngestReport {
        crime_rows: crimes.records.len(),
        crime_rows_rejected: crimes.rejected.len(),
        license_rows: licenses.records.len(),
        license_rows_rejected: licenses.rejected.len(),
        blockgroup_count: blockgroups.len(),
        counts,
        unassigned_crimes: rates.unassigned_crimes,
        unassigned_licenses: rates.unassigned_licenses,
        zero_pop_units: rates.zero_pop_units.len(),
        windows: windows.iter().map(|(ct, w)| (ct.key().to_string(), w.to_string())).collect(),
        warnings,
    };

    ws.write_json("crimes.json", &CrimeCache { records: crimes.records, rejected: crimes.rejected })?;
    ws.write_json(
        "licenses.json",
        &LicenseCache { points: licenses.records, rejected: licenses.rejected },
    )?;
    ws.write_json("rates.json", &rates)?;
    ws.write_json("covariates.json", &covariates)?;
    ws.write_json("ingest_report.json", &report)?;
    ws.record_stage(cfg, "ingest-check")?;
    Ok(report)
}

/// Build Queen contiguity over the block-group polygons and cache the sparse
/// structure as text.
pub fn run_weights(cfg: &RunConfig, ws: &Workspace) -> Result<WeightsMeta, CliError> {
    let blockgroups = parse_blockgroups(&read_input(&cfg.blockgroups)?, &cfg.blockgroup_schema)?;
    let polys: Vec<PolygonGeom> = blockgroups.iter().map(|bg| bg.geometry.clone()).collect();
    let w = ContiguityWeights::build_queen(&polys, cfg.contiguity_tol)?;
    let labels: Vec<String> = blockgroups.iter().map(|bg| bg.id.clone()).collect();
    let islands = w.islands();
    let mut warnings = Vec::new();
    if !islands.is_empty() {
        warnings.push(format!("{} block groups have no contiguity neighbors", islands.len()));
    }
    let meta = WeightsMeta {
        n: w.n(),
        island_count: islands.len(),
        island_ids: islands.iter().map(|&i| labels[i].clone()).collect(),
        s0_binary: w.s0(),
        warnings,
    };
    ws.write_text("weights.txt", &w.to_text(&labels))?;
    ws.write_json("weights_meta.json", &meta)?;
    ws.record_stage(cfg, "weights")?;
    Ok(meta)
}

fn load_weights(ws: &Workspace, unit_ids: &[String]) -> Result<ContiguityWeights, CliError> {
    let text = ws.read_text("weights.txt", "weights")?;
    ContiguityWeights::from_text(&text, unit_ids).map_err(CliError::from)
}

/// Apply the multiunit selection rules to the parcel file and derive the
/// parcel-based measures: per-unit counts, crime distances, coverage, and
/// histogram bins.
pub fn run_select_parcels(cfg: &RunConfig, ws: &Workspace) -> Result<SelectionCache, CliError> {
    ws.check_deps(cfg, "select-parcels")?;
    let covariates: CovariateCache = ws.read_json("covariates.json", "ingest-check")?;
    let crimes: CrimeCache = ws.read_json("crimes.json", "ingest-check")?;
    let parcels = parse_parcels_file(cfg)?;
    let boundary = parse_boundary(&read_input(&cfg.boundary)?)?;
    let windows = cfg.effective_windows()?;
    let scale = cfg.scale();
    let rules = cfg.selection_rules();

    let selection = select_multiunit(&parcels, &rules, scale);
    let selected: Vec<&Parcel> = selection.selected.iter().map(|&i| &parcels[i]).collect();

    let mut warnings = Vec::new();
    if selected.is_empty() {
        warnings.push("no parcels satisfy the selection rules".into());
    }

    // qualifying-cluster units per member id, for the output layer
    let mut cluster_units: BTreeMap<&str, u64> = BTreeMap::new();
    for cluster in selection.clusters.iter().filter(|c| c.qualifies) {
        for id in &cluster.member_ids {
            cluster_units.insert(id, cluster.total_units);
        }
    }
    let direct: std::collections::BTreeSet<usize> = selection.direct.iter().copied().collect();
    let mut records: Vec<SelectedParcel> = selection
        .selected
        .iter()
        .map(|&i| {
            let p = &parcels[i];
            SelectedParcel {
                id: p.id.clone(),
                landuse_code: p.landuse_code,
                units: p.units,
                selected_by: if direct.contains(&i) { "direct" } else { "cluster" }.into(),
                cluster_units: cluster_units.get(p.id.as_str()).copied(),
                geometry: serde_json::to_value(crimegrid::geo::polygon_to_geojson(&p.geometry))
                    .expect("geometry serializes"),
            }
        })
        .collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let qmi = QmiParcCache {
        unit_ids: covariates.unit_ids.clone(),
        counts: qmi_parc(&covariates.centroids, &selected, cfg.radius_miles, scale),
        radius_miles: cfg.radius_miles,
    };

    let distances = match crime_parcel_distances(&crimes.records, &windows, &selected, scale) {
        Ok(summary) => DistanceCache { cells: summary.cells },
        Err(e) => {
            warnings.push(format!("crime-to-parcel distances unavailable: {e}"));
            DistanceCache { cells: BTreeMap::new() }
        }
    };

    let coverage = CoverageCache {
        fraction: coverage_fraction(&boundary, &selected, cfg.radius_miles, cfg.grid_step_ft, scale),
        radius_miles: cfg.radius_miles,
        grid_step_ft: cfg.grid_step_ft,
    };

    let hist: ParcelHistograms =
        parcel_histograms(&selected, cfg.cbd(), cfg.unit_bin_width, scale);

    let cache = SelectionCache {
        records,
        total_parcels: parcels.len(),
        clusters: selection.clusters,
        warnings,
    };
    ws.write_json("selection.json", &cache)?;
    ws.write_json("qmiparc.json", &qmi)?;
    ws.write_json("distances.json", &distances)?;
    ws.write_json("coverage.json", &coverage)?;
    ws.write_json("parcel_hist.json", &hist)?;
    ws.record_stage(cfg, "select-parcels")?;
    Ok(cache)
}

/// Units with defined rates (positive population), with the weights restricted
/// to them. The shared spatial frame for Moran and G* runs.
fn positive_pop_frame(
    rates: &RatesTable,
    w: &ContiguityWeights,
) -> (Vec<usize>, Vec<String>, ContiguityWeights) {
    let keep: Vec<usize> = (0..rates.pop.len()).filter(|&i| rates.pop[i] > 0.0).collect();
    let ids = keep.iter().map(|&i| rates.unit_ids[i].clone()).collect();
    let sub = w.subset(&keep);
    (keep, ids, sub)
}

/// Global Moran's I with permutation inference for each crime type and
/// window.
pub fn run_moran(cfg: &RunConfig, ws: &Workspace) -> Result<MoranCache, CliError> {
    ws.check_deps(cfg, "moran")?;
    let rates: RatesTable = ws.read_json("rates.json", "ingest-check")?;
    let w = load_weights(ws, &rates.unit_ids)?;
    let (keep, _, sub) = positive_pop_frame(&rates, &w);
    let w_std = sub.row_standardized()?;

    let mut rows = Vec::new();
    for ct in CRIME_TYPES {
        for window in WINDOWS {
            let series = rate_series(&rates.rates[&ct], window);
            let values: Vec<f64> = keep
                .iter()
                .map(|&i| series[i].expect("positive population implies a defined rate"))
                .collect();
            let mut cell = MoranCell {
                crime_type: ct.key().into(),
                window: window.into(),
                n: values.len(),
                i: None,
                expected: None,
                p_perm: None,
                permutations: cfg.permutations,
                seed: cfg.seed,
                error: None,
            };
            if cfg.permutations == 0 {
                match morans_i(&values, &w_std) {
                    Ok(i) => cell.i = Some(i),
                    Err(e) => cell.error = Some(e.to_string()),
                }
                cell.seed = None;
            } else {
                let seed = cfg.seed.expect("validated: seed required with permutations");
                match morans_permutation(&values, &w_std, cfg.permutations, seed) {
                    Ok(res) => {
                        cell.i = Some(res.i);
                        cell.expected = Some(res.expected);
                        cell.p_perm = Some(res.p_perm);
                    }
                    Err(e) => cell.error = Some(e.to_string()),
                }
            }
            rows.push(cell);
        }
    }
    let cache = MoranCache { rows };
    ws.write_json("moran.json", &cache)?;
    ws.record_stage(cfg, "moran")?;
    Ok(cache)
}

/// G* hot/cold classification per crime type and window, plus covariate
/// profiles of the hot units for the day and night windows.
pub fn run_hotspots(cfg: &RunConfig, ws: &Workspace) -> Result<GstarCache, CliError> {
    ws.check_deps(cfg, "hotspots")?;
    let rates: RatesTable = ws.read_json("rates.json", "ingest-check")?;
    let covariates: CovariateCache = ws.read_json("covariates.json", "ingest-check")?;
    let qmi: QmiParcCache = ws.read_json("qmiparc.json", "select-parcels")?;
    let w = load_weights(ws, &rates.unit_ids)?;
    let (keep, kept_ids, sub) = positive_pop_frame(&rates, &w);
    let w_star = sub.with_self();

    // profile variables restricted to the kept units
    let pick = |v: &[Option<f64>]| -> Vec<Option<f64>> { keep.iter().map(|&i| v[i]).collect() };
    let qmi_f64: Vec<Option<f64>> = qmi.counts.iter().map(|&c| Some(c as f64)).collect();
    let liqdens = pick(&rates.liqdens);
    let profile_vars: Vec<(String, Vec<Option<f64>>)> = PROFILE_KEYS
        .iter()
        .map(|&key| {
            let column = match key {
                "deprivation" => pick(&covariates.deprivation),
                "qmiparc" => pick(&qmi_f64),
                "liqdens" => liqdens.clone(),
                "percwhite" => pick(&covariates.percwhite),
                "percrent" => pick(&covariates.percrent),
                "medy" => pick(&covariates.medy),
                other => panic!("unknown profile variable {other}"),
            };
            (key.to_string(), column)
        })
        .collect();

    let mut cells = Vec::new();
    let mut profiles = Vec::new();
    for ct in CRIME_TYPES {
        for window in WINDOWS {
            let series = rate_series(&rates.rates[&ct], window);
            let values: Vec<f64> = keep
                .iter()
                .map(|&i| series[i].expect("positive population implies a defined rate"))
                .collect();
            match getis_ord_gstar(&values, &w_star, cfg.gstar_z) {
                Ok(res) => {
                    if window != "all" {
                        let profile = hotspot_profile(&res.class, &profile_vars, HotClass::Hot);
                        profiles.push(ProfileCell {
                            crime_type: ct.key().into(),
                            window: window.into(),
                            class: HotClass::Hot.label().into(),
                            unit_count: profile.unit_count,
                            rows: profile.rows,
                        });
                    }
                    cells.push(GstarCell {
                        crime_type: ct.key().into(),
                        window: window.into(),
                        z: res.z,
                        class: res.class.iter().map(|c| c.label().to_string()).collect(),
                        error: None,
                        warnings: res.warnings,
                    });
                }
                Err(e) => cells.push(GstarCell {
                    crime_type: ct.key().into(),
                    window: window.into(),
                    z: Vec::new(),
                    class: Vec::new(),
                    error: Some(e.to_string()),
                    warnings: Vec::new(),
                }),
            }
        }
    }
    let cache = GstarCache { unit_ids: kept_ids, threshold: cfg.gstar_z, cells };
    ws.write_json("gstar.json", &cache)?;
    ws.write_json("profiles.json", &ProfilesCache { cells: profiles })?;
    ws.record_stage(cfg, "hotspots")?;
    Ok(cache)
}

/// Crime-rate series in table order: BURG, TFMV, ROB, TMV.
pub const CORRELATION_CRIME_ORDER: [(CrimeType, &str); 4] = [
    (CrimeType::Burglary, "BURG"),
    (CrimeType::TheftFromMv, "TFMV"),
    (CrimeType::Robbery, "ROB"),
    (CrimeType::TheftOfMv, "TMV"),
];

/// Covariate columns in table order, upper-case display names.
pub fn covariate_series(
    rates: &RatesTable,
    covariates: &CovariateCache,
    qmi: &QmiParcCache,
) -> Vec<NamedSeries> {
    COVARIATE_KEYS
        .iter()
        .map(|&key| {
            let column: Vec<Option<f64>> = match key {
                "liqdens" => rates.liqdens.clone(),
                "percrent" => covariates.percrent.clone(),
                "percwhite" => covariates.percwhite.clone(),
                "percvac" => covariates.percvac.clone(),
                "popdens" => covariates.popdens.clone(),
                "lnmedy" => rates.lnmedy.clone(),
                "deprivation" => covariates.deprivation.clone(),
                "qmiparc" => qmi.counts.iter().map(|&c| Some(c as f64)).collect(),
                "lndistcbd" => rates.lndistcbd.clone(),
                other => panic!("unknown covariate {other}"),
            };
            (key.to_string(), column)
        })
        .collect()
}

/// Spearman correlations of crime rates and covariates, full sample and
/// night window, plus their difference.
pub fn run_correlate(cfg: &RunConfig, ws: &Workspace) -> Result<CorrelateCache, CliError> {
    ws.check_deps(cfg, "correlate")?;
    let rates: RatesTable = ws.read_json("rates.json", "ingest-check")?;
    let covariates: CovariateCache = ws.read_json("covariates.json", "ingest-check")?;
    let qmi: QmiParcCache = ws.read_json("qmiparc.json", "select-parcels")?;

    let crime = |window: &str| -> Vec<NamedSeries> {
        CORRELATION_CRIME_ORDER
            .iter()
            .map(|&(ct, name)| (name.to_string(), rate_series(&rates.rates[&ct], window).to_vec()))
            .collect()
    };
    let covars: Vec<NamedSeries> = covariate_series(&rates, &covariates, &qmi)
        .into_iter()
        .map(|(name, v)| (name.to_ascii_uppercase(), v))
        .collect();
    let tables = correlation_tables(&crime("all"), &crime("night"), &covars);
    let cache = CorrelateCache { tables, unit_count: rates.unit_ids.len() };
    ws.write_json("correlations.json", &cache)?;
    ws.record_stage(cfg, "correlate")?;
    Ok(cache)
}

/// Maximum-likelihood spatial lag fits of every crime type and window on the
/// shared covariate set.
pub fn run_regress(cfg: &RunConfig, ws: &Workspace) -> Result<FitsCache, CliError> {
    ws.check_deps(cfg, "regress")?;
    let rates: RatesTable = ws.read_json("rates.json", "ingest-check")?;
    let covariates: CovariateCache = ws.read_json("covariates.json", "ingest-check")?;
    let qmi: QmiParcCache = ws.read_json("qmiparc.json", "select-parcels")?;
    let w = load_weights(ws, &rates.unit_ids)?;

    let mut cell_keys = Vec::new();
    let mut responses: Vec<NamedSeries> = Vec::new();
    for ct in CRIME_TYPES {
        for window in WINDOWS {
            cell_keys.push((ct.key().to_string(), window.to_string()));
            responses.push((
                format!("{}_{}", ct.key(), window),
                rate_series(&rates.rates[&ct], window).to_vec(),
            ));
        }
    }
    let covars = covariate_series(&rates, &covariates, &qmi);
    let result = fit_all(&rates.unit_ids, &responses, &covars, &w, cfg.drop_islands)?;

    let cells = result
        .fits
        .into_iter()
        .zip(cell_keys)
        .map(|((_, fit), (crime_type, window))| match fit {
            Ok(fit) => FitCell { crime_type, window, fit: Some(fit), error: None },
            Err(e) => FitCell { crime_type, window, fit: None, error: Some(e.to_string()) },
        })
        .collect();
    let cache = FitsCache {
        kept_units: result.kept_units.len(),
        dropped_missing: result.dropped_missing.len(),
        dropped_islands: result.dropped_islands,
        cells,
    };
    ws.write_json("fits.json", &cache)?;
    ws.record_stage(cfg, "regress")?;
    Ok(cache)
}

/// Summary statistics feeding the variable-summary table, in table order.
pub fn summary_variables(
    rates: &RatesTable,
    covariates: &CovariateCache,
    qmi: &QmiParcCache,
) -> Vec<(String, Vec<Option<f64>>)> {
    let mut out: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    let order = [CrimeType::Burglary, CrimeType::TheftFromMv, CrimeType::Robbery, CrimeType::TheftOfMv];
    for ct in order {
        for window in ["all", "night", "day"] {
            out.push((
                format!("{} {}", ct.display(), capitalize(window)),
                rate_series(&rates.rates[&ct], window).to_vec(),
            ));
        }
    }
    out.push(("Liq. Dens".into(), rates.liqdens.clone()));
    out.push(("Percrent".into(), covariates.percrent.clone()));
    out.push(("Pop".into(), covariates.pop.iter().map(|&p| Some(p)).collect()));
    out.push(("Percwhite".into(), covariates.percwhite.clone()));
    out.push(("Percvac".into(), covariates.percvac.clone()));
    out.push(("Popdens".into(), covariates.popdens.clone()));
    out.push(("MedY".into(), covariates.medy.clone()));
    out.push(("Deprivation".into(), covariates.deprivation.clone()));
    out.push(("QmiParc".into(), qmi.counts.iter().map(|&c| Some(c as f64)).collect()));
    out
}

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn summary_stats_rows(
    variables: &[(String, Vec<Option<f64>>)],
) -> Vec<(String, Option<esda::SummaryStats>)> {
    variables.iter().map(|(name, values)| (name.clone(), esda::summary_stats(values))).collect()
}
