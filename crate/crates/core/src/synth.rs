//! Deterministic synthetic-city generator: a square block-group lattice with
//! drawn attributes, a spatially autocorrelated response produced by the
//! forward solve y = (I − ρW)⁻¹(Xβ + ε), and crime/license/parcel layers
//! materialized in the exact input formats the parsers consume.

use crate::geo::{LinearScale, Point, PolygonGeom};
use crate::ingest::{default_night_windows, BlockGroup, CrimeRecord, CrimeType};
use crate::parcels::Parcel;
use crate::slm::DesignMatrix;
use crate::weights::{ContiguityWeights, WeightsError};
use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

fn default_rows() -> usize {
    10
}
fn default_cols() -> usize {
    10
}
fn default_cell() -> f64 {
    1000.0
}
fn default_seed() -> u64 {
    42
}
fn default_rho() -> f64 {
    0.4
}
fn default_beta() -> Vec<f64> {
    vec![10.0, 1.5, -1.0]
}
fn default_noise_sd() -> f64 {
    1.0
}
fn default_crime_intensity() -> f64 {
    2.0
}
fn default_night_share() -> f64 {
    0.25
}
fn default_parcel_density() -> f64 {
    0.4
}
fn default_license_density() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default = "default_cols")]
    pub cols: usize,
    /// Block-group cell side length in feet.
    #[serde(default = "default_cell")]
    pub cell_size_ft: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// True spatial autoregressive coefficient.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Intercept followed by one coefficient per latent covariate.
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Expected crimes per block group per unit of response.
    #[serde(default = "default_crime_intensity")]
    pub crime_intensity: f64,
    /// Probability a crime falls in its type's night window.
    #[serde(default = "default_night_share")]
    pub night_share: f64,
    /// Probability a cell hosts a large multiunit parcel.
    #[serde(default = "default_parcel_density")]
    pub parcel_density: f64,
    /// Expected liquor licenses per cell.
    #[serde(default = "default_license_density")]
    pub license_density: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::InvalidConfig(m));
        if self.rows * self.cols < 9 {
            return err(format!("grid {}x{} has fewer than 9 cells", self.rows, self.cols));
        }
        if !(-0.9..0.99).contains(&self.rho) {
            return err(format!("rho {} outside (-0.9, 0.99)", self.rho));
        }
        if !(self.noise_sd > 0.0) {
            return err(format!("noise sd {} not positive", self.noise_sd));
        }
        if self.beta.is_empty() {
            return err("beta must include at least an intercept".into());
        }
        if !(0.0..=1.0).contains(&self.night_share) {
            return err(format!("night share {} outside [0, 1]", self.night_share));
        }
        if !(0.0..=1.0).contains(&self.parcel_density) {
            return err(format!("parcel density {} outside [0, 1]", self.parcel_density));
        }
        if !(self.cell_size_ft > 0.0) {
            return err(format!("cell size {} not positive", self.cell_size_ft));
        }
        if self.crime_intensity < 0.0 || self.license_density < 0.0 {
            return err("intensities must be nonnegative".into());
        }
        Ok(())
    }
}

/// Ground truth retained alongside the rendered city.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub rho: f64,
    pub beta: Vec<f64>,
    /// Latent covariate columns (no intercept), one inner vector per column.
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// Response from the forward solve, one value per block group.
    pub y: Vec<f64>,
    /// Noise vector used in the solve.
    pub eps: Vec<f64>,
    /// Row-standardized Queen weights over the lattice.
    pub weights: ContiguityWeights,
}

impl SynthTruth {
    /// Package the truth as a ready-to-fit design (intercept first).
    pub fn design(&self) -> DesignMatrix {
        let n = self.y.len();
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                std::iter::once(1.0).chain(self.covariates.iter().map(|c| c[i])).collect()
            })
            .collect();
        DesignMatrix {
            response: "rate".into(),
            y: self.y.clone(),
            x,
            col_names: std::iter::once("constant".to_string())
                .chain(self.covariate_names.iter().cloned())
                .collect(),
            unit_ids: (0..n).map(|i| format!("bg{i:04}")).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCity {
    pub blockgroups: Vec<BlockGroup>,
    pub parcels: Vec<Parcel>,
    pub crimes: Vec<CrimeRecord>,
    pub licenses: Vec<Point>,
    pub boundary: PolygonGeom,
    pub cbd: Point,
    pub scale: LinearScale,
    pub truth: SynthTruth,
}

fn stream(seed: u64, idx: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx);
    rng
}

fn clamp_pct(v: f64) -> f64 {
    v.clamp(0.0, 100.0)
}

/// Share of crimes per type; sums to 1.
const TYPE_WEIGHTS: [(CrimeType, f64); 4] = [
    (CrimeType::Burglary, 0.35),
    (CrimeType::Robbery, 0.15),
    (CrimeType::TheftOfMv, 0.20),
    (CrimeType::TheftFromMv, 0.30),
];

fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as u64
}

/// A time of day for a crime of type `ct`: inside the type's night window
/// with probability `night_share` (uniform there), otherwise from a daytime
/// bell centered at 14:00 truncated to the day side.
fn draw_time(
    rng: &mut ChaCha8Rng,
    window: &crate::ingest::TimeWindow,
    night_share: f64,
) -> NaiveTime {
    let in_window = |secs: u32| {
        window.contains(NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).unwrap())
    };
    let secs = if rng.gen_bool(night_share) {
        let start = window.start.signed_duration_since(NaiveTime::MIN).num_seconds() as u64;
        let len = (window.day_fraction() * 86_400.0).round() as u64;
        ((start + rng.gen_range(0..len)) % 86_400) as u32
    } else {
        let bell = Normal::new(14.0 * 3600.0, 3.0 * 3600.0).unwrap();
        loop {
            let s = bell.sample(rng);
            if (0.0..86_400.0).contains(&s) && !in_window(s as u32) {
                break s as u32;
            }
        }
    };
    NaiveTime::from_num_seconds_from_midnight_opt(secs, 0).unwrap()
}

/// Generate the full synthetic city. Deterministic per config; independent
/// RNG streams per layer so changing one layer's volume leaves the others'
/// draws untouched.
pub fn make_city(cfg: &SynthConfig) -> Result<SynthCity, SynthError> {
    cfg.validate()?;
    let (rows, cols) = (cfg.rows, cfg.cols);
    let n = rows * cols;
    let cell = cfg.cell_size_ft;
    let scale = LinearScale::default();

    // lattice geometry: row-major cells, origin at the southwest corner
    let cell_poly = |r: usize, c: usize| {
        PolygonGeom::rectangle(
            c as f64 * cell,
            r as f64 * cell,
            (c + 1) as f64 * cell,
            (r + 1) as f64 * cell,
        )
        .unwrap()
    };
    let boundary =
        PolygonGeom::rectangle(0.0, 0.0, cols as f64 * cell, rows as f64 * cell).unwrap();
    let cbd = Point::new(cols as f64 * cell / 2.0, rows as f64 * cell / 2.0);

    // attributes
    let mut rng_attr = stream(cfg.seed, 1);
    let cell_sq_miles = (cell / 5280.0) * (cell / 5280.0);
    let mut blockgroups = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            let geometry = cell_poly(r, c);
            let id = format!("bg{:04}", r * cols + c);
            let pop = rng_attr.gen_range(300..2000) as f64;
            let latent: f64 = rng_attr.sample(rand_distr::StandardNormal);
            let noise = |rng: &mut ChaCha8Rng, sd: f64| -> f64 {
                Normal::new(0.0, sd).unwrap().sample(rng)
            };
            let centroid = geometry.centroid();
            blockgroups.push(BlockGroup {
                id,
                pop,
                percrent: Some(clamp_pct(rng_attr.gen_range(10.0..90.0))),
                percwhite: Some(clamp_pct(rng_attr.gen_range(5.0..95.0))),
                percvac: Some(clamp_pct(rng_attr.gen_range(0.0..30.0))),
                popdens: Some(pop / cell_sq_miles),
                medy: Some(rng_attr.gen_range(20_000.0..80_000.0)),
                poverty: Some(clamp_pct(20.0 + 10.0 * latent + noise(&mut rng_attr, 2.0))),
                unemployment: Some(clamp_pct(8.0 + 4.0 * latent + noise(&mut rng_attr, 1.0))),
                no_diploma: Some(clamp_pct(18.0 + 8.0 * latent + noise(&mut rng_attr, 1.5))),
                snap: Some(clamp_pct(25.0 + 12.0 * latent + noise(&mut rng_attr, 2.5))),
                geometry,
                centroid,
            });
        }
    }

    // spatial weights over the lattice (Queen: edge and corner contact)
    let polys: Vec<PolygonGeom> = blockgroups.iter().map(|bg| bg.geometry.clone()).collect();
    let weights = ContiguityWeights::build_queen(&polys, 1e-6)?.row_standardized()?;

    // response by forward solve
    let mut rng_model = stream(cfg.seed, 2);
    let p = cfg.beta.len() - 1;
    let covariate_names: Vec<String> = (1..=p).map(|j| format!("z{j}")).collect();
    let covariates: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng_model.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect();
    let eps: Vec<f64> = {
        let noise = Normal::new(0.0, cfg.noise_sd).unwrap();
        (0..n).map(|_| noise.sample(&mut rng_model)).collect()
    };
    let xb_eps = DVector::from_fn(n, |i, _| {
        cfg.beta[0]
            + (0..p).map(|j| cfg.beta[j + 1] * covariates[j][i]).sum::<f64>()
            + eps[i]
    });
    let mut a = DMatrix::identity(n, n);
    for i in 0..n {
        for &j in weights.neighbors(i) {
            a[(i, j)] -= cfg.rho * weights.weight(i, j);
        }
    }
    let y = a
        .lu()
        .solve(&xb_eps)
        .expect("I - rho*W is nonsingular inside the rho domain")
        .iter()
        .copied()
        .collect::<Vec<f64>>();

    // parcels: one large multiunit candidate per selected cell plus a small
    // decoy parcel; decoys never qualify (units 4 < 10)
    let mut rng_parcel = stream(cfg.seed, 3);
    let mut parcels = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let (x0, y0) = (c as f64 * cell, r as f64 * cell);
            if rng_parcel.gen_bool(cfg.parcel_density) {
                let side = rng_parcel.gen_range(60.0..120.0_f64).min(cell * 0.4);
                let px = x0 + rng_parcel.gen_range(0.0..(cell - side));
                let py = y0 + rng_parcel.gen_range(0.0..(cell - side));
                let units = rng_parcel.gen_range(12..60);
                parcels.push(Parcel::new(
                    format!("mp{:04}", r * cols + c),
                    PolygonGeom::rectangle(px, py, px + side, py + side).unwrap(),
                    8830,
                    units,
                ));
            }
            if rng_parcel.gen_bool(cfg.parcel_density / 2.0) {
                let side = 40.0_f64.min(cell * 0.2);
                let px = x0 + rng_parcel.gen_range(0.0..(cell - side));
                let py = y0 + rng_parcel.gen_range(0.0..(cell - side));
                parcels.push(Parcel::new(
                    format!("sp{:04}", r * cols + c),
                    PolygonGeom::rectangle(px, py, px + side, py + side).unwrap(),
                    8830,
                    4,
                ));
            }
        }
    }

    // crimes: Poisson counts per cell and type proportional to the response,
    // locations uniform in the cell, times from the day/night mixture
    let mut rng_crime = stream(cfg.seed, 4);
    let windows = default_night_windows();
    let year_start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    let mut crimes = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let intensity = cfg.crime_intensity * y[i].max(0.0);
            for (ct, share) in TYPE_WEIGHTS {
                let count = poisson_draw(&mut rng_crime, intensity * share);
                for _ in 0..count {
                    let x = c as f64 * cell + rng_crime.gen_range(0.0..cell);
                    let yy = r as f64 * cell + rng_crime.gen_range(0.0..cell);
                    let date = year_start + chrono::Days::new(rng_crime.gen_range(0..365));
                    let time = draw_time(&mut rng_crime, &windows[&ct], cfg.night_share);
                    crimes.push(CrimeRecord {
                        crime_type: ct,
                        timestamp: NaiveDateTime::new(date, time),
                        location: Point::new(x, yy),
                    });
                }
            }
        }
    }

    // licenses: Poisson per cell, uniform placement
    let mut rng_lic = stream(cfg.seed, 5);
    let mut licenses = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            for _ in 0..poisson_draw(&mut rng_lic, cfg.license_density) {
                licenses.push(Point::new(
                    c as f64 * cell + rng_lic.gen_range(0.0..cell),
                    r as f64 * cell + rng_lic.gen_range(0.0..cell),
                ));
            }
        }
    }

    Ok(SynthCity {
        blockgroups,
        parcels,
        crimes,
        licenses,
        boundary,
        cbd,
        scale,
        truth: SynthTruth {
            rho: cfg.rho,
            beta: cfg.beta.clone(),
            covariates,
            covariate_names,
            y,
            eps,
            weights,
        },
    })
}

// ---------------------------------------------------------------------------
// Emission in the parsers' input formats
// ---------------------------------------------------------------------------

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
}

pub fn emit_crimes_csv(city: &SynthCity) -> String {
    let mut out = String::from("type,datetime,x,y\n");
    for rec in &city.crimes {
        out.push_str(&format!(
            "{},{},{},{}\n",
            rec.crime_type.key(),
            rec.timestamp.format("%Y-%m-%d %H:%M:%S"),
            rec.location.x,
            rec.location.y
        ));
    }
    out
}

pub fn emit_licenses_csv(city: &SynthCity) -> String {
    let mut out = String::from("x,y\n");
    for p in &city.licenses {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    out
}

fn feature(geometry: &PolygonGeom, props: serde_json::Map<String, serde_json::Value>) -> serde_json::Value {
    serde_json::json!({
        "type": "Feature",
        "properties": props,
        "geometry": serde_json::to_value(crate::geo::polygon_to_geojson(geometry)).unwrap(),
    })
}

fn collection(features: Vec<serde_json::Value>) -> String {
    let fc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&fc).unwrap()
}

pub fn emit_blockgroups_geojson(city: &SynthCity) -> String {
    let features = city
        .blockgroups
        .iter()
        .map(|bg| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), serde_json::Value::String(bg.id.clone()));
            props.insert("pop".into(), json_num(bg.pop));
            let mut opt = |k: &str, v: Option<f64>| {
                props.insert(k.into(), v.map(json_num).unwrap_or(serde_json::Value::Null));
            };
            opt("percrent", bg.percrent);
            opt("percwhite", bg.percwhite);
            opt("percvac", bg.percvac);
            opt("popdens", bg.popdens);
            opt("medy", bg.medy);
            opt("poverty", bg.poverty);
            opt("unemployment", bg.unemployment);
            opt("no_diploma", bg.no_diploma);
            opt("snap", bg.snap);
            feature(&bg.geometry, props)
        })
        .collect();
    collection(features)
}

pub fn emit_parcels_geojson(city: &SynthCity) -> String {
    let features = city
        .parcels
        .iter()
        .map(|p| {
            let mut props = serde_json::Map::new();
            props.insert("id".into(), serde_json::Value::String(p.id.clone()));
            props.insert("landuse_code".into(), serde_json::Value::from(p.landuse_code));
            props.insert("units".into(), serde_json::Value::from(p.units));
            feature(&p.geometry, props)
        })
        .collect();
    collection(features)
}

pub fn emit_boundary_geojson(city: &SynthCity) -> String {
    collection(vec![feature(&city.boundary, serde_json::Map::new())])
}
