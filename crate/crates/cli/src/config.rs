//! Run configuration: a JSON config file, command-line overrides, defaults,
//! and validation. Flags override file values; anything left unset falls to
//! the documented default.

use crate::error::{io_config, CliError};
use crimegrid::geo::{LinearScale, Point};
use crimegrid::ingest::{
    default_night_windows, BlockGroupSchema, CrimeCsvSchema, CrimeType, LicenseCsvSchema,
    TimeWindow,
};
use crimegrid::parcels::{ParcelSchema, SelectionRules};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Everything a run needs. All fields are optional in the JSON file and on
/// the command line; `resolve` applies defaults and validates.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub crimes: Option<PathBuf>,
    pub blockgroups: Option<PathBuf>,
    pub parcels: Option<PathBuf>,
    pub licenses: Option<PathBuf>,
    pub boundary: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub cbd_x: Option<f64>,
    pub cbd_y: Option<f64>,
    pub feet_per_unit: Option<f64>,
    /// Night-window overrides, e.g. {"robbery": "21:00-03:00"}.
    pub night_windows: Option<BTreeMap<String, String>>,
    pub unit_threshold: Option<u64>,
    pub cluster_min_units: Option<u64>,
    pub cluster_gap_ft: Option<f64>,
    pub radius_miles: Option<f64>,
    pub grid_step_ft: Option<f64>,
    pub unit_bin_width: Option<u64>,
    pub gstar_z: Option<f64>,
    pub permutations: Option<usize>,
    pub seed: Option<u64>,
    pub drop_islands: Option<bool>,
    pub contiguity_tol: Option<f64>,
    pub crime_schema: Option<CrimeCsvSchema>,
    pub license_schema: Option<LicenseCsvSchema>,
    pub blockgroup_schema: Option<BlockGroupSchema>,
    pub parcel_schema: Option<ParcelSchema>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<PartialConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| io_config(&format!("config file {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
    }

    /// Layer `over` on top of `self`: any field present in `over` wins.
    pub fn merge(mut self, over: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            crimes, blockgroups, parcels, licenses, boundary, out_dir, cbd_x, cbd_y,
            feet_per_unit, unit_threshold, cluster_min_units, cluster_gap_ft, radius_miles,
            grid_step_ft, unit_bin_width, gstar_z, permutations, seed, drop_islands,
            contiguity_tol, crime_schema, license_schema, blockgroup_schema, parcel_schema
        );
        // window overrides merge per key rather than wholesale
        if let Some(over_w) = over.night_windows {
            let merged = self.night_windows.get_or_insert_with(BTreeMap::new);
            merged.extend(over_w);
        }
        self
    }

    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let need = |name: &str, v: Option<PathBuf>| {
            v.ok_or_else(|| CliError::Config(format!("missing required input path: {name}")))
        };
        let cfg = RunConfig {
            crimes: need("crimes", self.crimes)?,
            blockgroups: need("blockgroups", self.blockgroups)?,
            parcels: need("parcels", self.parcels)?,
            licenses: need("licenses", self.licenses)?,
            boundary: need("boundary", self.boundary)?,
            out_dir: need("out_dir", self.out_dir)?,
            cbd_x: self.cbd_x.ok_or_else(|| CliError::Config("missing cbd_x".into()))?,
            cbd_y: self.cbd_y.ok_or_else(|| CliError::Config("missing cbd_y".into()))?,
            feet_per_unit: self.feet_per_unit.unwrap_or(1.0),
            night_windows: self.night_windows.unwrap_or_default(),
            unit_threshold: self.unit_threshold.unwrap_or(24),
            cluster_min_units: self.cluster_min_units.unwrap_or(10),
            cluster_gap_ft: self.cluster_gap_ft.unwrap_or(30.0),
            radius_miles: self.radius_miles.unwrap_or(0.25),
            grid_step_ft: self.grid_step_ft.unwrap_or(100.0),
            unit_bin_width: self.unit_bin_width.unwrap_or(10),
            gstar_z: self.gstar_z.unwrap_or(1.96),
            permutations: self.permutations.unwrap_or(999),
            seed: self.seed,
            drop_islands: self.drop_islands.unwrap_or(false),
            contiguity_tol: self.contiguity_tol.unwrap_or(1e-6),
            crime_schema: self.crime_schema.unwrap_or_default(),
            license_schema: self.license_schema.unwrap_or_default(),
            blockgroup_schema: self.blockgroup_schema.unwrap_or_default(),
            parcel_schema: self.parcel_schema.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub crimes: PathBuf,
    pub blockgroups: PathBuf,
    pub parcels: PathBuf,
    pub licenses: PathBuf,
    pub boundary: PathBuf,
    pub out_dir: PathBuf,
    pub cbd_x: f64,
    pub cbd_y: f64,
    pub feet_per_unit: f64,
    pub night_windows: BTreeMap<String, String>,
    pub unit_threshold: u64,
    pub cluster_min_units: u64,
    pub cluster_gap_ft: f64,
    pub radius_miles: f64,
    pub grid_step_ft: f64,
    pub unit_bin_width: u64,
    pub gstar_z: f64,
    pub permutations: usize,
    pub seed: Option<u64>,
    pub drop_islands: bool,
    pub contiguity_tol: f64,
    pub crime_schema: CrimeCsvSchema,
    pub license_schema: LicenseCsvSchema,
    pub blockgroup_schema: BlockGroupSchema,
    pub parcel_schema: ParcelSchema,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |m: String| Err(CliError::Config(m));
        if !(self.feet_per_unit.is_finite() && self.feet_per_unit > 0.0) {
            return err(format!("feet_per_unit {} must be positive", self.feet_per_unit));
        }
        if !(self.radius_miles > 0.0) {
            return err(format!("radius_miles {} must be positive", self.radius_miles));
        }
        if !(self.grid_step_ft > 0.0) {
            return err(format!("grid_step_ft {} must be positive", self.grid_step_ft));
        }
        if !(self.gstar_z > 0.0) {
            return err(format!("gstar_z {} must be positive", self.gstar_z));
        }
        if !(self.cluster_gap_ft > 0.0) {
            return err(format!("cluster_gap_ft {} must be positive", self.cluster_gap_ft));
        }
        if !(self.contiguity_tol > 0.0) {
            return err(format!("contiguity_tol {} must be positive", self.contiguity_tol));
        }
        if self.permutations > 0 && self.permutations < 99 {
            return err(format!(
                "permutations must be 0 (skip inference) or at least 99, got {}",
                self.permutations
            ));
        }
        if self.permutations > 0 && self.seed.is_none() {
            return err("seed is required whenever permutations > 0".into());
        }
        self.effective_windows()?;
        for path in [&self.crimes, &self.blockgroups, &self.parcels, &self.licenses, &self.boundary]
        {
            if !path.is_file() {
                return err(format!("input path not readable: {}", path.display()));
            }
        }
        Ok(())
    }

    pub fn cbd(&self) -> Point {
        Point::new(self.cbd_x, self.cbd_y)
    }

    pub fn scale(&self) -> LinearScale {
        LinearScale::new(self.feet_per_unit)
    }

    pub fn selection_rules(&self) -> SelectionRules {
        SelectionRules {
            unit_threshold: self.unit_threshold,
            cluster_min_units: self.cluster_min_units,
            cluster_gap_ft: self.cluster_gap_ft,
            ..Default::default()
        }
    }

    /// Default night windows with any configured overrides applied.
    pub fn effective_windows(&self) -> Result<BTreeMap<CrimeType, TimeWindow>, CliError> {
        let mut windows = default_night_windows();
        for (key, spec) in &self.night_windows {
            let ct = CrimeType::from_key(key).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown crime type {key:?} in night_windows (expected one of \
                     burglary/robbery/theft_of_mv/theft_from_mv)"
                ))
            })?;
            let w = TimeWindow::parse(spec)
                .map_err(|e| CliError::Config(format!("night window for {key}: {e}")))?;
            windows.insert(ct, w);
        }
        Ok(windows)
    }

    pub fn workspace_dir(&self) -> PathBuf {
        self.out_dir.join("workspace")
    }
}
