//! Versioned on-disk workspace of cached intermediates under
//! `<out_dir>/workspace/`. Every stage records the hashes of the raw inputs
//! and the parameters its results depend on (transitively); consumers verify
//! that record before trusting the cache, so edits to inputs or settings are
//! caught as staleness instead of silently mixed results.

use crate::config::RunConfig;
use crate::error::{io_data, CliError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const CACHE_VERSION: u32 = 1;

/// Pipeline stages in execution order.
pub const STAGES: [&str; 8] = [
    "ingest-check",
    "weights",
    "select-parcels",
    "moran",
    "hotspots",
    "correlate",
    "regress",
    "report",
];

/// Stages whose caches a stage reads (direct dependencies).
pub fn stage_deps(stage: &str) -> &'static [&'static str] {
    match stage {
        "ingest-check" | "weights" => &[],
        "select-parcels" => &["ingest-check"],
        "moran" => &["ingest-check", "weights"],
        "hotspots" => &["ingest-check", "weights", "select-parcels"],
        "correlate" => &["ingest-check", "select-parcels"],
        "regress" => &["ingest-check", "select-parcels", "weights"],
        "report" => &[
            "ingest-check",
            "weights",
            "select-parcels",
            "moran",
            "hotspots",
            "correlate",
            "regress",
        ],
        other => panic!("unknown stage {other}"),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| io_data(&format!("hashing {}", path.display()), e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .map_err(|e| io_data(&format!("hashing {}", path.display()), e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let mut out = String::with_capacity(64);
    for b in hasher.finalize() {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// What a stage's cached results were computed from: raw input hashes and a
/// digest of every parameter the stage (or anything upstream of it) uses.
/// Matching metas imply byte-identical results, so consumers need not track
/// whether upstream stages re-ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageMeta {
    pub cache_version: u32,
    pub source_hashes: BTreeMap<String, String>,
    pub params: String,
}

fn param_digest(value: &serde_json::Value) -> String {
    sha256_hex(serde_json::to_string(value).expect("params serialize").as_bytes())
}

/// Parameter subset relevant to one stage, own plus transitive. serde_json
/// maps are sorted, so the serialization (and its digest) is canonical.
fn stage_params(cfg: &RunConfig, stage: &str) -> serde_json::Value {
    let windows: BTreeMap<String, String> = cfg
        .effective_windows()
        .expect("validated config")
        .iter()
        .map(|(ct, w)| (ct.key().to_string(), w.to_string()))
        .collect();
    let ingest = json!({
        "crime_schema": cfg.crime_schema,
        "license_schema": cfg.license_schema,
        "blockgroup_schema": cfg.blockgroup_schema,
        "windows": windows,
        "cbd": [cfg.cbd_x, cfg.cbd_y],
        "feet_per_unit": cfg.feet_per_unit,
    });
    let weights = json!({
        "blockgroup_schema": cfg.blockgroup_schema,
        "contiguity_tol": cfg.contiguity_tol,
    });
    let parcels = json!({
        "ingest": ingest,
        "parcel_schema": cfg.parcel_schema,
        "unit_threshold": cfg.unit_threshold,
        "cluster_min_units": cfg.cluster_min_units,
        "cluster_gap_ft": cfg.cluster_gap_ft,
        "radius_miles": cfg.radius_miles,
        "grid_step_ft": cfg.grid_step_ft,
        "unit_bin_width": cfg.unit_bin_width,
    });
    match stage {
        "ingest-check" => ingest,
        "weights" => weights,
        "select-parcels" => parcels,
        "moran" => json!({
            "ingest": ingest,
            "weights": weights,
            "permutations": cfg.permutations,
            "seed": cfg.seed,
        }),
        "hotspots" => json!({
            "ingest": ingest,
            "weights": weights,
            "parcels": parcels,
            "gstar_z": cfg.gstar_z,
        }),
        "correlate" => json!({
            "ingest": ingest,
            "parcels": parcels,
        }),
        "regress" => json!({
            "ingest": ingest,
            "weights": weights,
            "parcels": parcels,
            "drop_islands": cfg.drop_islands,
        }),
        "report" => json!({
            "ingest": ingest,
            "weights": weights,
            "parcels": parcels,
            "permutations": cfg.permutations,
            "seed": cfg.seed,
            "gstar_z": cfg.gstar_z,
            "drop_islands": cfg.drop_islands,
        }),
        other => panic!("unknown stage {other}"),
    }
}

/// Raw input files a stage's results depend on, transitively.
fn stage_sources<'a>(cfg: &'a RunConfig, stage: &str) -> Vec<(&'static str, &'a Path)> {
    let ingest: Vec<(&'static str, &'a Path)> = vec![
        ("crimes", cfg.crimes.as_path()),
        ("licenses", cfg.licenses.as_path()),
        ("blockgroups", cfg.blockgroups.as_path()),
    ];
    let weights: Vec<(&'static str, &'a Path)> = vec![("blockgroups", cfg.blockgroups.as_path())];
    let parcels: Vec<(&'static str, &'a Path)> = ingest
        .iter()
        .copied()
        .chain([("parcels", cfg.parcels.as_path()), ("boundary", cfg.boundary.as_path())])
        .collect();
    let merge = |lists: &[&[(&'static str, &'a Path)]]| -> Vec<(&'static str, &'a Path)> {
        let mut map: BTreeMap<&'static str, &'a Path> = BTreeMap::new();
        for list in lists {
            for &(k, v) in *list {
                map.insert(k, v);
            }
        }
        map.into_iter().collect()
    };
    match stage {
        "ingest-check" => ingest,
        "weights" => weights,
        "select-parcels" => parcels,
        "moran" => merge(&[&ingest, &weights]),
        "correlate" => merge(&[&ingest, &parcels]),
        "hotspots" | "regress" | "report" => merge(&[&ingest, &weights, &parcels]),
        other => panic!("unknown stage {other}"),
    }
}

pub fn expected_meta(cfg: &RunConfig, stage: &str) -> Result<StageMeta, CliError> {
    let mut source_hashes = BTreeMap::new();
    for (role, path) in stage_sources(cfg, stage) {
        source_hashes.insert(role.to_string(), sha256_file(path)?);
    }
    Ok(StageMeta {
        cache_version: CACHE_VERSION,
        source_hashes,
        params: param_digest(&stage_params(cfg, stage)),
    })
}

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Open (creating if needed) the workspace under the configured output
    /// directory.
    pub fn open(cfg: &RunConfig) -> Result<Workspace, CliError> {
        let root = cfg.workspace_dir();
        std::fs::create_dir_all(root.join("meta")).map_err(|e| {
            CliError::Config(format!("output directory {} not writable: {e}", cfg.out_dir.display()))
        })?;
        Ok(Workspace { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn meta_path(&self, stage: &str) -> PathBuf {
        self.root.join("meta").join(format!("{stage}.json"))
    }

    /// Record that `stage` just produced results from the current inputs.
    pub fn record_stage(&self, cfg: &RunConfig, stage: &str) -> Result<(), CliError> {
        let meta = expected_meta(cfg, stage)?;
        let text = serde_json::to_string_pretty(&meta).expect("meta serialize");
        std::fs::write(self.meta_path(stage), text)
            .map_err(|e| io_data(&format!("writing {stage} meta"), e))
    }

    /// Verify that `stage`'s cached results match the current inputs and
    /// parameters.
    pub fn check_stage(&self, cfg: &RunConfig, stage: &str) -> Result<(), CliError> {
        let path = self.meta_path(stage);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::Stale(format!("no cached results for {stage}; run `crimegrid {stage}` first"))
        })?;
        let recorded: StageMeta = serde_json::from_str(&text)
            .map_err(|e| CliError::Stale(format!("unreadable {stage} meta ({e}); re-run `crimegrid {stage}`")))?;
        let expected = expected_meta(cfg, stage)?;
        if recorded != expected {
            return Err(CliError::Stale(format!(
                "cached {stage} results no longer match the inputs or settings; re-run `crimegrid {stage}`"
            )));
        }
        Ok(())
    }

    /// Verify every stage `stage` reads from.
    pub fn check_deps(&self, cfg: &RunConfig, stage: &str) -> Result<(), CliError> {
        for dep in stage_deps(stage) {
            self.check_stage(cfg, dep)?;
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string(value)
            .map_err(|e| CliError::Data(format!("serializing {name}: {e}")))?;
        std::fs::write(self.path(name), text).map_err(|e| io_data(&format!("writing {name}"), e))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, produced_by: &str) -> Result<T, CliError> {
        let path = self.path(name);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            CliError::Stale(format!("missing cached {name}; run `crimegrid {produced_by}` first"))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("corrupt cached {name}: {e}")))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        std::fs::write(self.path(name), text).map_err(|e| io_data(&format!("writing {name}"), e))
    }

    pub fn read_text(&self, name: &str, produced_by: &str) -> Result<String, CliError> {
        std::fs::read_to_string(self.path(name)).map_err(|_| {
            CliError::Stale(format!("missing cached {name}; run `crimegrid {produced_by}` first"))
        })
    }
}
