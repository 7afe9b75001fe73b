//! Artifact rendering: turn cached stage results into the final CSV and
//! GeoJSON bundle. Values are written at full precision alongside a display
//! column rounded to the customary precision, so nothing is lost to
//! formatting. No arithmetic happens here beyond formatting.

use crate::config::RunConfig;
use crate::error::{io_data, CliError};
use crate::stages::{
    summary_stats_rows, summary_variables, CorrelateCache, CovariateCache, CrimeCache,
    DistanceCache, FitsCache, GstarCache, IngestReport, MoranCache, ProfilesCache, QmiParcCache,
    SelectionCache, WeightsMeta, COVARIATE_KEYS, PROFILE_KEYS, WINDOWS,
};
use crate::workspace::{sha256_file, sha256_hex, Workspace, CACHE_VERSION, STAGES};
use crimegrid::ingest::{
    hourly_histogram, median_report_time, parse_blockgroups, CrimeType, RatesTable, CRIME_TYPES,
};
use crimegrid::parcels::ParcelHistograms;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

fn full(v: f64) -> String {
    format!("{v}")
}

fn opt_full(v: Option<f64>) -> String {
    v.map(full).unwrap_or_default()
}

fn disp(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

fn opt_disp(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| disp(x, decimals)).unwrap_or_default()
}

fn write_artifact(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), text).map_err(|e| io_data(&format!("writing {name}"), e))
}

/// Paper-style row order for count/distance/Moran tables.
const TABLE_CRIME_ORDER: [CrimeType; 4] =
    [CrimeType::Burglary, CrimeType::Robbery, CrimeType::TheftOfMv, CrimeType::TheftFromMv];

fn profile_label(key: &str) -> &'static str {
    match key {
        "deprivation" => "Deprivation",
        "qmiparc" => "QmiParc",
        "liqdens" => "Liq. Dens",
        "percwhite" => "Percwhite",
        "percrent" => "Percrent",
        "medy" => "MedY",
        other => panic!("unknown profile variable {other}"),
    }
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

pub fn table1_counts(report: &IngestReport) -> String {
    let mut out = String::from("crime_type,label,all,day,night,pct_night,pct_night_display\n");
    for ct in TABLE_CRIME_ORDER {
        let c = report.counts.get(&ct).copied().unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            ct.key(),
            ct.display(),
            c.all,
            c.day,
            c.night,
            opt_full(c.pct_night()),
            opt_disp(c.pct_night(), 2),
        ));
    }
    out
}

pub fn table2_distances(distances: &DistanceCache) -> String {
    let mut out = String::from(
        "crime_type,label,window,n,within_quarter_mile,share_within_quarter,share_pct_display,median_miles,median_display\n",
    );
    for ct in TABLE_CRIME_ORDER {
        let Some(triple) = distances.cells.get(&ct) else { continue };
        for window in WINDOWS {
            let cell = match window {
                "all" => &triple.all,
                "day" => &triple.day,
                _ => &triple.night,
            };
            let share = cell.share_within_quarter();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                ct.key(),
                ct.display(),
                window,
                cell.n,
                cell.within_quarter_mile,
                opt_full(share),
                opt_disp(share.map(|s| 100.0 * s), 1),
                opt_full(cell.median_miles),
                opt_disp(cell.median_miles, 3),
            ));
        }
    }
    out
}

pub fn table3_moran(moran: &MoranCache) -> String {
    moran_csv(moran, None, None)
}

/// Moran rows as CSV, optionally restricted to one crime type and window.
pub fn moran_csv(moran: &MoranCache, crime: Option<&str>, window: Option<&str>) -> String {
    let mut out = String::from(
        "crime_type,label,window,n,moran_i,i_display,expected,p_perm,permutations,seed,error\n",
    );
    for ct in TABLE_CRIME_ORDER {
        if crime.is_some_and(|c| c != ct.key()) {
            continue;
        }
        for win in WINDOWS {
            if window.is_some_and(|w| w != win) {
                continue;
            }
            let Some(cell) = moran
                .rows
                .iter()
                .find(|c| c.crime_type == ct.key() && c.window == win)
            else {
                continue;
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                cell.crime_type,
                ct.display(),
                cell.window,
                cell.n,
                opt_full(cell.i),
                opt_disp(cell.i, 3),
                opt_full(cell.expected),
                opt_full(cell.p_perm),
                cell.permutations,
                cell.seed.map(|s| s.to_string()).unwrap_or_default(),
                cell.error.clone().unwrap_or_default().replace(',', ";"),
            ));
        }
    }
    out
}

pub fn table4_summary(
    rates: &RatesTable,
    covariates: &CovariateCache,
    qmi: &QmiParcCache,
) -> String {
    let mut out =
        String::from("variable,n,mean,mean_display,sd,sd_display,min,min_display,max,max_display\n");
    for (name, stats) in summary_stats_rows(&summary_variables(rates, covariates, qmi)) {
        match stats {
            Some(s) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                name,
                s.n,
                full(s.mean),
                disp(s.mean, 2),
                opt_full(s.sd),
                opt_disp(s.sd, 2),
                full(s.min),
                disp(s.min, 2),
                full(s.max),
                disp(s.max, 2),
            )),
            None => out.push_str(&format!("{name},0,,,,,,,,\n")),
        }
    }
    out
}

pub fn table5_hotspot_profiles(profiles: &ProfilesCache) -> String {
    let mut out = String::from(
        "crime_type,label,window,class,hot_units,variable,n,mean,mean_display,sd,sd_display\n",
    );
    // fixed block order
    let order = [CrimeType::Robbery, CrimeType::Burglary, CrimeType::TheftFromMv, CrimeType::TheftOfMv];
    for ct in order {
        for window in ["day", "night"] {
            let Some(cell) = profiles
                .cells
                .iter()
                .find(|c| c.crime_type == ct.key() && c.window == window)
            else {
                continue;
            };
            for key in PROFILE_KEYS {
                let Some(row) = cell.rows.iter().find(|r| r.var == key) else { continue };
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    ct.key(),
                    ct.display(),
                    window,
                    cell.class,
                    cell.unit_count,
                    profile_label(key),
                    row.n,
                    opt_full(row.mean),
                    opt_disp(row.mean, 2),
                    opt_full(row.sd),
                    opt_disp(row.sd, 2),
                ));
            }
        }
    }
    out
}

pub fn table6_correlations(corr: &CorrelateCache) -> String {
    let mut out = String::from("row_var,col_var,rho,rho_display\n");
    let t = &corr.tables.full;
    for i in 0..t.names.len() {
        for j in 0..=i {
            let v = t.cells[i][j];
            out.push_str(&format!(
                "{},{},{},{}\n",
                t.names[i],
                t.names[j],
                opt_full(v),
                opt_disp(v, 2)
            ));
        }
    }
    out
}

pub fn table7_night_diffs(corr: &CorrelateCache) -> String {
    let mut out =
        String::from("row_var,col_var,rho_night,rho_night_display,difference,difference_display\n");
    let night = &corr.tables.night;
    let diff = &corr.tables.difference;
    for i in 0..night.names.len() {
        for j in 0..=i {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                night.names[i],
                night.names[j],
                opt_full(night.cells[i][j]),
                opt_disp(night.cells[i][j], 2),
                opt_full(diff.cells[i][j]),
                opt_disp(diff.cells[i][j], 2),
            ));
        }
    }
    out
}

pub fn table8_regressions(fits: &FitsCache) -> String {
    let mut out = String::from(
        "crime_type,label,window,term,estimate,estimate_display,se,p,p_display,significant_5pct,note\n",
    );
    // fixed block order
    let order = [CrimeType::TheftOfMv, CrimeType::Burglary, CrimeType::Robbery, CrimeType::TheftFromMv];
    let window_order = ["all", "night", "day"];
    let term_order: Vec<&str> = std::iter::once("rho")
        .chain(std::iter::once("constant"))
        .chain(COVARIATE_KEYS)
        .collect();
    for ct in order {
        for window in window_order {
            let Some(cell) = fits
                .cells
                .iter()
                .find(|c| c.crime_type == ct.key() && c.window == window)
            else {
                continue;
            };
            let head = format!("{},{},{}", ct.key(), ct.display(), window);
            let Some(fit) = &cell.fit else {
                let note = cell.error.clone().unwrap_or_default().replace(',', ";");
                out.push_str(&format!("{head},error,,,,,,{note}\n"));
                continue;
            };
            // estimates appear as [rho, beta...] aligned with se/p
            for (slot, term) in term_order.iter().enumerate() {
                let estimate = if slot == 0 { fit.rho } else { fit.beta[slot - 1] };
                let se = fit.se.as_ref().map(|v| v[slot]);
                let p = fit.p.as_ref().map(|v| v[slot]);
                let significant = p.map(|p| if p < 0.05 { "yes" } else { "no" }).unwrap_or("");
                out.push_str(&format!(
                    "{head},{term},{},{},{},{},{},{significant},\n",
                    full(estimate),
                    disp(estimate, 3),
                    opt_full(se),
                    opt_full(p),
                    opt_disp(p, 3),
                ));
            }
            for (term, value) in [
                ("sigma2", fit.sigma2),
                ("loglik", fit.loglik),
                ("pseudo_r2", fit.pseudo_r2),
                ("aic", fit.aic),
                ("n", fit.n as f64),
                ("k", fit.k as f64),
            ] {
                out.push_str(&format!("{head},{term},{},{},,,,,\n", full(value), disp(value, 3)));
            }
        }
    }
    out
}

pub fn fig2_histograms(crimes: &CrimeCache) -> String {
    let mut out = String::from("hour,burglaries,robberies,theft_of_mv,theft_from_mv\n");
    let hist: BTreeMap<CrimeType, [u64; 24]> = CRIME_TYPES
        .iter()
        .map(|&ct| {
            (ct, hourly_histogram(crimes.records.iter().filter(|r| r.crime_type == ct)))
        })
        .collect();
    for hour in 0..24 {
        out.push_str(&format!(
            "{hour},{},{},{},{}\n",
            hist[&CrimeType::Burglary][hour],
            hist[&CrimeType::Robbery][hour],
            hist[&CrimeType::TheftOfMv][hour],
            hist[&CrimeType::TheftFromMv][hour],
        ));
    }
    let median = |ct: CrimeType| -> String {
        let times: Vec<chrono::NaiveTime> = crimes
            .records
            .iter()
            .filter(|r| r.crime_type == ct)
            .map(|r| r.timestamp.time())
            .collect();
        median_report_time(&times).map(|t| t.format("%H:%M").to_string()).unwrap_or_default()
    };
    out.push_str(&format!(
        "median,{},{},{},{}\n",
        median(CrimeType::Burglary),
        median(CrimeType::Robbery),
        median(CrimeType::TheftOfMv),
        median(CrimeType::TheftFromMv),
    ));
    out
}

pub fn fig3_parcel_histograms(hist: &ParcelHistograms) -> String {
    let mut out = String::from("kind,bin_index,bin_start,bin_end,count\n");
    for (i, &count) in hist.distance_bins.iter().enumerate() {
        let w = hist.distance_bin_width_miles;
        out.push_str(&format!(
            "distance_miles,{i},{},{},{count}\n",
            full(i as f64 * w),
            full((i + 1) as f64 * w)
        ));
    }
    for (i, &count) in hist.unit_bins.iter().enumerate() {
        let w = hist.unit_bin_width;
        out.push_str(&format!("units,{i},{},{},{count}\n", i as u64 * w, (i as u64 + 1) * w));
    }
    out
}

// ---------------------------------------------------------------------------
// GeoJSON layers
// ---------------------------------------------------------------------------

fn json_opt(v: Option<f64>) -> serde_json::Value {
    v.and_then(serde_json::Number::from_f64)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

pub fn blockgroups_geojson(
    cfg: &RunConfig,
    rates: &RatesTable,
    covariates: &CovariateCache,
    qmi: &QmiParcCache,
    gstar: &GstarCache,
) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&cfg.blockgroups)
        .map_err(|e| io_data(&cfg.blockgroups.display().to_string(), e))?;
    let blockgroups = parse_blockgroups(&text, &cfg.blockgroup_schema)?;
    // kept-unit position per id for the G* columns
    let star_pos: BTreeMap<&str, usize> =
        gstar.unit_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let features: Vec<serde_json::Value> = blockgroups
        .iter()
        .enumerate()
        .map(|(i, bg)| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), serde_json::Value::String(bg.id.clone()));
            props.insert("pop".into(), json_opt(Some(bg.pop)));
            for ct in CRIME_TYPES {
                let triple = &rates.rates[&ct];
                for window in WINDOWS {
                    let series = crate::stages::rate_series(triple, window);
                    props.insert(format!("rate_{}_{}", ct.key(), window), json_opt(series[i]));
                }
            }
            props.insert("liqdens".into(), json_opt(rates.liqdens[i]));
            props.insert("lnmedy".into(), json_opt(rates.lnmedy[i]));
            props.insert("lndistcbd".into(), json_opt(rates.lndistcbd[i]));
            props.insert("deprivation".into(), json_opt(covariates.deprivation[i]));
            props.insert("qmiparc".into(), serde_json::Value::from(qmi.counts[i]));
            let pos = star_pos.get(bg.id.as_str()).copied();
            for cell in &gstar.cells {
                let gz_key = format!("gz_{}_{}", cell.crime_type, cell.window);
                let class_key = format!("class_{}_{}", cell.crime_type, cell.window);
                match pos.filter(|&p| p < cell.class.len()) {
                    Some(p) => {
                        props.insert(gz_key, json_opt(cell.z[p]));
                        props
                            .insert(class_key, serde_json::Value::String(cell.class[p].clone()));
                    }
                    None => {
                        props.insert(gz_key, serde_json::Value::Null);
                        props.insert(class_key, serde_json::Value::Null);
                    }
                }
            }
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": serde_json::to_value(crimegrid::geo::polygon_to_geojson(&bg.geometry))
                    .expect("geometry serializes"),
            })
        })
        .collect();
    let fc = json!({ "type": "FeatureCollection", "features": features });
    Ok(serde_json::to_string_pretty(&fc).expect("collection serializes") + "\n")
}

pub fn parcels_geojson(selection: &SelectionCache) -> String {
    let features: Vec<serde_json::Value> = selection
        .records
        .iter()
        .map(|p| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), serde_json::Value::String(p.id.clone()));
            props.insert("landuse_code".into(), serde_json::Value::from(p.landuse_code));
            props.insert("units".into(), serde_json::Value::from(p.units));
            props.insert("selected_by".into(), serde_json::Value::String(p.selected_by.clone()));
            props.insert(
                "cluster_units".into(),
                p.cluster_units.map(serde_json::Value::from).unwrap_or(serde_json::Value::Null),
            );
            json!({
                "type": "Feature",
                "properties": props,
                "geometry": p.geometry,
            })
        })
        .collect();
    let fc = json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&fc).expect("collection serializes") + "\n"
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

fn input_hashes(cfg: &RunConfig) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for (role, path) in [
        ("crimes", &cfg.crimes),
        ("licenses", &cfg.licenses),
        ("blockgroups", &cfg.blockgroups),
        ("parcels", &cfg.parcels),
        ("boundary", &cfg.boundary),
    ] {
        if let Ok(hash) = sha256_file(path) {
            out.insert(role.to_string(), hash);
        }
    }
    out
}

fn manifest_json(
    cfg: &RunConfig,
    status: &str,
    completed: &[&str],
    error: Option<&str>,
    warnings: &BTreeMap<String, Vec<String>>,
    artifacts: &BTreeMap<String, String>,
) -> String {
    let value = json!({
        "tool": { "name": "crimegrid", "version": env!("CARGO_PKG_VERSION") },
        "cache_version": CACHE_VERSION,
        "status": status,
        "completed_stages": completed,
        "error": error,
        "config": cfg,
        "input_hashes": input_hashes(cfg),
        "warnings": warnings,
        "artifacts": artifacts,
    });
    serde_json::to_string_pretty(&value).expect("manifest serializes") + "\n"
}

/// Best-effort failure manifest: which stages completed and what stopped the
/// run.
pub fn write_partial_manifest(
    cfg: &RunConfig,
    completed: &[&str],
    error: &str,
) -> Result<(), CliError> {
    let text = manifest_json(cfg, "failed", completed, Some(error), &BTreeMap::new(), &BTreeMap::new());
    write_artifact(&cfg.out_dir, "run_manifest.json", &text)
}

// ---------------------------------------------------------------------------
// The report stage
// ---------------------------------------------------------------------------

pub struct ReportOutcome {
    pub artifacts: Vec<(String, String)>,
    pub out_dir: PathBuf,
}

/// Render every artifact from the cached stage results.
pub fn run_report(cfg: &RunConfig, ws: &Workspace) -> Result<ReportOutcome, CliError> {
    ws.check_deps(cfg, "report")?;
    let report: IngestReport = ws.read_json("ingest_report.json", "ingest-check")?;
    let crimes: CrimeCache = ws.read_json("crimes.json", "ingest-check")?;
    let rates: RatesTable = ws.read_json("rates.json", "ingest-check")?;
    let covariates: CovariateCache = ws.read_json("covariates.json", "ingest-check")?;
    let weights_meta: WeightsMeta = ws.read_json("weights_meta.json", "weights")?;
    let selection: SelectionCache = ws.read_json("selection.json", "select-parcels")?;
    let qmi: QmiParcCache = ws.read_json("qmiparc.json", "select-parcels")?;
    let distances: DistanceCache = ws.read_json("distances.json", "select-parcels")?;
    let hist: ParcelHistograms = ws.read_json("parcel_hist.json", "select-parcels")?;
    let moran: MoranCache = ws.read_json("moran.json", "moran")?;
    let gstar: GstarCache = ws.read_json("gstar.json", "hotspots")?;
    let profiles: ProfilesCache = ws.read_json("profiles.json", "hotspots")?;
    let corr: CorrelateCache = ws.read_json("correlations.json", "correlate")?;
    let fits: FitsCache = ws.read_json("fits.json", "regress")?;

    let files: Vec<(&str, String)> = vec![
        ("table1_counts.csv", table1_counts(&report)),
        ("table2_distances.csv", table2_distances(&distances)),
        ("table3_moran.csv", table3_moran(&moran)),
        ("table4_summary.csv", table4_summary(&rates, &covariates, &qmi)),
        ("table5_hotspot_profiles.csv", table5_hotspot_profiles(&profiles)),
        ("table6_correlations.csv", table6_correlations(&corr)),
        ("table7_night_diffs.csv", table7_night_diffs(&corr)),
        ("table8_regressions.csv", table8_regressions(&fits)),
        ("fig2_histograms.csv", fig2_histograms(&crimes)),
        ("fig3_parcel_histograms.csv", fig3_parcel_histograms(&hist)),
        (
            "blockgroups_out.geojson",
            blockgroups_geojson(cfg, &rates, &covariates, &qmi, &gstar)?,
        ),
        ("parcels_selected.geojson", parcels_geojson(&selection)),
    ];

    let mut artifacts = BTreeMap::new();
    for (name, text) in &files {
        write_artifact(&cfg.out_dir, name, text)?;
        artifacts.insert(name.to_string(), sha256_hex(text.as_bytes()));
    }

    let mut warnings: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut push = |stage: &str, list: Vec<String>| {
        if !list.is_empty() {
            warnings.insert(stage.to_string(), list);
        }
    };
    push("ingest-check", report.warnings.clone());
    push("weights", weights_meta.warnings.clone());
    push("select-parcels", selection.warnings.clone());
    push(
        "moran",
        moran
            .rows
            .iter()
            .filter_map(|c| {
                c.error.as_ref().map(|e| format!("{} {}: {e}", c.crime_type, c.window))
            })
            .collect(),
    );
    let mut hotspot_notes: Vec<String> = gstar
        .cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("{} {}: {e}", c.crime_type, c.window)))
        .collect();
    let degenerate: usize = gstar.cells.iter().map(|c| c.warnings.len()).sum();
    if degenerate > 0 {
        hotspot_notes.push(format!("{degenerate} unit-level G* variance degeneracies"));
    }
    push("hotspots", hotspot_notes);
    let mut regress_notes: Vec<String> = fits
        .cells
        .iter()
        .filter_map(|c| c.error.as_ref().map(|e| format!("{} {}: {e}", c.crime_type, c.window)))
        .collect();
    if fits.dropped_missing > 0 {
        regress_notes.push(format!("{} units dropped for missing values", fits.dropped_missing));
    }
    if !fits.dropped_islands.is_empty() {
        regress_notes
            .push(format!("{} units dropped as islands", fits.dropped_islands.len()));
    }
    push("regress", regress_notes);

    let completed: Vec<&str> = STAGES.to_vec();
    let manifest = manifest_json(cfg, "complete", &completed, None, &warnings, &artifacts);
    write_artifact(&cfg.out_dir, "run_manifest.json", &manifest)?;
    ws.record_stage(cfg, "report")?;

    let mut listed: Vec<(String, String)> =
        artifacts.into_iter().collect();
    listed.push(("run_manifest.json".into(), sha256_hex(manifest.as_bytes())));
    Ok(ReportOutcome { artifacts: listed, out_dir: cfg.out_dir.clone() })
}
