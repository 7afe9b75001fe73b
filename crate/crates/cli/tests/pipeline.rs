//! End-to-end subcommand contract: exit codes, cache staleness, artifact
//! determinism, and the per-stage console surfaces, all driven through the
//! compiled binary on generated fixtures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

fn run_bin<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_crimegrid"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("crimegrid-it-{name}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Generate a small synthetic city and return (fixture dir, config path).
fn synth_fixture(name: &str) -> (PathBuf, PathBuf) {
    let dir = fresh_dir(name);
    let out = run_bin([
        "synth",
        "--out-dir",
        dir.to_str().unwrap(),
        "--rows",
        "5",
        "--cols",
        "5",
        "--seed",
        "11",
    ]);
    assert!(out.status.success(), "synth failed: {}", String::from_utf8_lossy(&out.stderr));
    let config = dir.join("config.json");
    (dir, config)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_manifest(out_dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(out_dir.join("run_manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const ARTIFACTS: [&str; 13] = [
    "table1_counts.csv",
    "table2_distances.csv",
    "table3_moran.csv",
    "table4_summary.csv",
    "table5_hotspot_profiles.csv",
    "table6_correlations.csv",
    "table7_night_diffs.csv",
    "table8_regressions.csv",
    "fig2_histograms.csv",
    "fig3_parcel_histograms.csv",
    "blockgroups_out.geojson",
    "parcels_selected.geojson",
    "run_manifest.json",
];

#[test]
fn full_run_emits_complete_bundle() {
    let (dir, config) = synth_fixture("full-run");
    let out = run_bin(["run", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("pipeline complete"));

    let out_dir = dir.join("out");
    for name in ARTIFACTS {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }
    let manifest = read_manifest(&out_dir);
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["artifacts"].as_object().unwrap().len(), ARTIFACTS.len() - 1);
    assert_eq!(manifest["tool"]["name"], "crimegrid");
}

#[test]
fn regress_before_ingest_reports_stale_cache() {
    let (_dir, config) = synth_fixture("stale-regress");
    let out = run_bin(["regress", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("no cached results for ingest-check"), "{err}");
    assert!(err.contains("crimegrid ingest-check"), "{err}");
}

#[test]
fn moran_prints_single_filtered_row() {
    let (_dir, config) = synth_fixture("moran-filter");
    let cfg = config.to_str().unwrap();
    for stage in ["ingest-check", "weights"] {
        let out = run_bin([stage, "--config", cfg]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    let out = run_bin(["moran", "--config", cfg, "--crime", "robbery", "--window", "night"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "want header plus one row, got:\n{text}");
    assert!(lines[0].starts_with("crime_type,label,window,n,moran_i"));
    assert!(lines[1].starts_with("robbery,Robberies,night,"), "{}", lines[1]);
}

#[test]
fn bad_inputs_exit_with_config_code() {
    let (dir, config) = synth_fixture("config-errors");
    let cfg = config.to_str().unwrap();

    let out = run_bin(["run", "--config", cfg, "--crimes", "/no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("not readable"));

    let out = run_bin(["moran", "--config", cfg, "--crime", "arson"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("unknown crime type"));

    let out = run_bin(["moran", "--config", cfg, "--window", "dusk"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    // permutations without a seed cannot be reproduced, so it is refused
    let mut parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    parsed.as_object_mut().unwrap().remove("seed");
    let cfg_noseed = dir.join("config_noseed.json");
    fs::write(&cfg_noseed, serde_json::to_string(&parsed).unwrap()).unwrap();
    let out = run_bin(["run", "--config", cfg_noseed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
}

#[test]
fn shuffled_input_rows_yield_identical_artifacts() {
    let (dir, config) = synth_fixture("row-order");
    let out = run_bin(["run", "--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    // reversing the data rows is a pure reordering of the same records
    let crimes = fs::read_to_string(dir.join("crimes.csv")).unwrap();
    let mut lines: Vec<&str> = crimes.lines().collect();
    lines[1..].reverse();
    let reversed = dir.join("crimes_reversed.csv");
    fs::write(&reversed, lines.join("\n") + "\n").unwrap();

    let out2 = dir.join("out2");
    let out = run_bin([
        "run",
        "--config",
        config.to_str().unwrap(),
        "--crimes",
        reversed.to_str().unwrap(),
        "--out-dir",
        out2.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let a = read_manifest(&dir.join("out"));
    let b = read_manifest(&out2);
    assert_eq!(
        a["artifacts"], b["artifacts"],
        "artifact hashes changed under input row reordering"
    );
    assert_ne!(
        a["input_hashes"]["crimes"], b["input_hashes"]["crimes"],
        "fixture mutation did not take"
    );
}

#[test]
fn report_rerenders_from_cache_and_detects_config_drift() {
    let (_dir, config) = synth_fixture("report-cache");
    let cfg = config.to_str().unwrap();
    let out = run_bin(["run", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run_bin(["report", "--config", cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("artifacts rendered"));

    // a changed threshold invalidates the cached hot spot results
    let out = run_bin(["report", "--config", cfg, "--gstar-z", "2.58"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("hotspots"), "{}", stderr(&out));
}

#[test]
fn weights_reports_islands_and_writes_sparse_file() {
    let dir = fresh_dir("islands");
    let square = |x0: f64, y0: f64| {
        serde_json::json!({
            "type": "Polygon",
            "coordinates": [[[x0, y0], [x0 + 10.0, y0], [x0 + 10.0, y0 + 10.0], [x0, y0 + 10.0], [x0, y0]]]
        })
    };
    let props = |id: &str| {
        serde_json::json!({
            "id": id, "pop": 100, "percrent": 40.0, "percwhite": 60.0,
            "percvac": 5.0, "popdens": 1000.0, "medy": 40000.0,
            "poverty": 10.0, "unemployment": 6.0, "no_diploma": 12.0, "snap": 8.0
        })
    };
    let bg = serde_json::json!({
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": props("A"), "geometry": square(0.0, 0.0)},
            {"type": "Feature", "properties": props("B"), "geometry": square(10.0, 0.0)},
            {"type": "Feature", "properties": props("C"), "geometry": square(50.0, 50.0)},
        ]
    });
    fs::write(dir.join("blockgroups.geojson"), serde_json::to_string(&bg).unwrap()).unwrap();
    fs::write(dir.join("crimes.csv"), "type,datetime,x,y\n").unwrap();
    fs::write(dir.join("licenses.csv"), "x,y\n").unwrap();
    fs::write(
        dir.join("parcels.geojson"),
        serde_json::to_string(&serde_json::json!({"type": "FeatureCollection", "features": []}))
            .unwrap(),
    )
    .unwrap();
    fs::write(
        dir.join("boundary.geojson"),
        serde_json::to_string(&square(0.0, 0.0)).unwrap(),
    )
    .unwrap();

    let out = run_bin([
        "weights",
        "--crimes",
        dir.join("crimes.csv").to_str().unwrap(),
        "--licenses",
        dir.join("licenses.csv").to_str().unwrap(),
        "--blockgroups",
        dir.join("blockgroups.geojson").to_str().unwrap(),
        "--parcels",
        dir.join("parcels.geojson").to_str().unwrap(),
        "--boundary",
        dir.join("boundary.geojson").to_str().unwrap(),
        "--out-dir",
        dir.join("out").to_str().unwrap(),
        "--cbd-x",
        "5",
        "--cbd-y",
        "5",
        "--seed",
        "1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("3 units, 1 islands"), "{text}");
    assert!(text.contains("island units: C"), "{text}");

    let sparse = fs::read_to_string(dir.join("out/workspace/weights.txt")).unwrap();
    let mut lines = sparse.lines();
    assert_eq!(lines.next(), Some("3"));
    assert!(sparse.contains("A B 1"), "{sparse}");
    assert!(!sparse.contains('C'), "island C must have no edges:\n{sparse}");
}

#[test]
fn failed_stage_leaves_partial_manifest() {
    let (dir, config) = synth_fixture("partial-manifest");
    // geometry-free parcels break the selection stage after ingest and
    // weights have already succeeded
    let broken = dir.join("parcels_broken.geojson");
    fs::write(&broken, "{\"type\": \"FeatureCollection\"").unwrap();
    let out = run_bin([
        "run",
        "--config",
        config.to_str().unwrap(),
        "--parcels",
        broken.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(0));

    let manifest = read_manifest(&dir.join("out"));
    assert_eq!(manifest["status"], "failed");
    let completed: Vec<&str> = manifest["completed_stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(completed, ["ingest-check", "weights"]);
    assert!(manifest["error"].as_str().unwrap_or("").len() > 0);
}

#[test]
fn night_window_override_changes_counts() {
    let (dir, config) = synth_fixture("window-override");
    let cfg = config.to_str().unwrap();

    let night_line = |out: &Output| -> String {
        stdout(out)
            .lines()
            .find(|l| l.trim_start().starts_with("burglary:"))
            .expect("burglary line")
            .to_string()
    };

    let base = run_bin(["ingest-check", "--config", cfg]);
    assert!(base.status.success(), "{}", stderr(&base));

    let out2 = dir.join("out-override");
    let wide = run_bin([
        "ingest-check",
        "--config",
        cfg,
        "--out-dir",
        out2.to_str().unwrap(),
        "--night-window",
        "burglary=00:00-12:00",
    ]);
    assert!(wide.status.success(), "{}", stderr(&wide));
    assert_ne!(
        night_line(&base),
        night_line(&wide),
        "a 12-hour night window must change the burglary split"
    );
}
