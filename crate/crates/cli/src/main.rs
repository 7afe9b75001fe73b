//! Command-line entry point: full pipeline runs plus per-stage subcommands
//! over the cached workspace.

use clap::{Args, Parser, Subcommand};
use crimegrid_cli::config::{PartialConfig, RunConfig};
use crimegrid_cli::error::{io_config, CliError};
use crimegrid_cli::workspace::Workspace;
use crimegrid_cli::{render, run_pipeline, stages};
use crimegrid::ingest::CrimeType;
use crimegrid::synth;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "crimegrid",
    version,
    about = "Spatial analysis of day/night crime patterns: rates by block group, contiguity \
             weights, Moran's I, G* hot spots, correlations, and spatial lag regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and render the full artifact bundle
    Run(ConfigArgs),
    /// Parse and validate inputs; cache rates, covariates, and counts
    IngestCheck(ConfigArgs),
    /// Build Queen contiguity weights and report islands
    Weights(ConfigArgs),
    /// Apply the multiunit parcel selection rules and derived measures
    SelectParcels(ConfigArgs),
    /// Moran's I per crime type and window, with permutation inference
    Moran(MoranArgs),
    /// Getis-Ord G* hot/cold classification and hot-spot profiles
    Hotspots(ConfigArgs),
    /// Spearman correlations: full sample, night, and their difference
    Correlate(ConfigArgs),
    /// Maximum-likelihood spatial lag regressions
    Regress(ConfigArgs),
    /// Generate a deterministic synthetic city fixture
    Synth(SynthArgs),
    /// Render the artifact bundle from cached stage results
    Report(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Crime CSV (type, datetime, x, y)
    #[arg(long)]
    crimes: Option<PathBuf>,
    /// Block-group GeoJSON FeatureCollection
    #[arg(long)]
    blockgroups: Option<PathBuf>,
    /// Parcel file (.geojson/.json or .csv with embedded geometry)
    #[arg(long)]
    parcels: Option<PathBuf>,
    /// Liquor-license CSV (x, y)
    #[arg(long)]
    licenses: Option<PathBuf>,
    /// City boundary GeoJSON
    #[arg(long)]
    boundary: Option<PathBuf>,
    /// Output directory for artifacts and the cache workspace
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Central business district x coordinate
    #[arg(long)]
    cbd_x: Option<f64>,
    /// Central business district y coordinate
    #[arg(long)]
    cbd_y: Option<f64>,
    /// Feet per coordinate unit (1.0 for foot-based projections)
    #[arg(long)]
    feet_per_unit: Option<f64>,
    /// Night window override, e.g. robbery=21:00-03:00 (repeatable)
    #[arg(long = "night-window", value_name = "TYPE=HH:MM-HH:MM")]
    night_window: Vec<String>,
    /// Dwelling units at which a parcel qualifies on its own
    #[arg(long)]
    unit_threshold: Option<u64>,
    /// Units above which a parcel can join a cluster
    #[arg(long)]
    cluster_min_units: Option<u64>,
    /// Boundary gap (feet) under which parcels cluster
    #[arg(long)]
    cluster_gap_ft: Option<f64>,
    /// Radius in miles for parcel counts and coverage
    #[arg(long)]
    radius_miles: Option<f64>,
    /// Grid step in feet for the coverage estimate
    #[arg(long)]
    grid_step_ft: Option<f64>,
    /// Bin width for the parcel unit-count histogram
    #[arg(long)]
    unit_bin_width: Option<u64>,
    /// |z| threshold for hot/cold classification
    #[arg(long)]
    gstar_z: Option<f64>,
    /// Permutation count for Moran inference (0 skips inference)
    #[arg(long)]
    permutations: Option<usize>,
    /// RNG seed; required whenever permutations > 0
    #[arg(long)]
    seed: Option<u64>,
    /// Drop island units from regressions instead of failing
    #[arg(long)]
    drop_islands: bool,
    /// Snap tolerance for polygon contact
    #[arg(long)]
    contiguity_tol: Option<f64>,
}

impl ConfigArgs {
    fn night_windows(&self) -> Result<Option<BTreeMap<String, String>>, CliError> {
        if self.night_window.is_empty() {
            return Ok(None);
        }
        let mut map = BTreeMap::new();
        for spec in &self.night_window {
            let (key, window) = spec.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "night window {spec:?} must look like robbery=21:00-03:00"
                ))
            })?;
            map.insert(key.trim().to_string(), window.trim().to_string());
        }
        Ok(Some(map))
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => PartialConfig::from_file(path)?,
            None => PartialConfig::default(),
        };
        let over = PartialConfig {
            crimes: self.crimes.clone(),
            blockgroups: self.blockgroups.clone(),
            parcels: self.parcels.clone(),
            licenses: self.licenses.clone(),
            boundary: self.boundary.clone(),
            out_dir: self.out_dir.clone(),
            cbd_x: self.cbd_x,
            cbd_y: self.cbd_y,
            feet_per_unit: self.feet_per_unit,
            night_windows: self.night_windows()?,
            unit_threshold: self.unit_threshold,
            cluster_min_units: self.cluster_min_units,
            cluster_gap_ft: self.cluster_gap_ft,
            radius_miles: self.radius_miles,
            grid_step_ft: self.grid_step_ft,
            unit_bin_width: self.unit_bin_width,
            gstar_z: self.gstar_z,
            permutations: self.permutations,
            seed: self.seed,
            drop_islands: self.drop_islands.then_some(true),
            contiguity_tol: self.contiguity_tol,
            crime_schema: None,
            license_schema: None,
            blockgroup_schema: None,
            parcel_schema: None,
        };
        base.merge(over).resolve()
    }
}

#[derive(Args)]
struct MoranArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Restrict the printed CSV to one crime type (burglary, robbery,
    /// theft_of_mv, theft_from_mv)
    #[arg(long)]
    crime: Option<String>,
    /// Restrict the printed CSV to one window (all, day, night)
    #[arg(long)]
    window: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for the generated city files
    #[arg(long)]
    out_dir: PathBuf,
    /// Generator config JSON (rows, cols, seed, rho, beta, ...)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Grid rows override
    #[arg(long)]
    rows: Option<usize>,
    /// Grid columns override
    #[arg(long)]
    cols: Option<usize>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let outcome = run_pipeline(&cfg)?;
            println!("pipeline complete; artifacts in {}", outcome.out_dir.display());
            for (name, hash) in &outcome.artifacts {
                println!("  {name}  sha256:{}", &hash[..12]);
            }
            Ok(())
        }
        Command::IngestCheck(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let report = stages::run_ingest(&cfg, &ws)?;
            println!(
                "parsed {} crimes ({} rejected), {} licenses ({} rejected), {} block groups",
                report.crime_rows,
                report.crime_rows_rejected,
                report.license_rows,
                report.license_rows_rejected,
                report.blockgroup_count
            );
            for (ct, count) in &report.counts {
                println!(
                    "  {}: {} total, {} day, {} night{}",
                    ct.key(),
                    count.all,
                    count.day,
                    count.night,
                    count
                        .pct_night()
                        .map(|p| format!(" ({p:.2}% night)"))
                        .unwrap_or_default()
                );
            }
            println!(
                "unassigned: {} crimes, {} licenses; zero-population units: {}",
                report.unassigned_crimes, report.unassigned_licenses, report.zero_pop_units
            );
            print_warnings(&report.warnings);
            Ok(())
        }
        Command::Weights(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let meta = stages::run_weights(&cfg, &ws)?;
            println!(
                "{} units, {} islands, total binary weight {}",
                meta.n, meta.island_count, meta.s0_binary
            );
            if !meta.island_ids.is_empty() {
                println!("island units: {}", meta.island_ids.join(", "));
            }
            println!("sparse structure cached as weights.txt");
            Ok(())
        }
        Command::SelectParcels(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let cache = stages::run_select_parcels(&cfg, &ws)?;
            let direct = cache.records.iter().filter(|r| r.selected_by == "direct").count();
            let qualifying = cache.clusters.iter().filter(|c| c.qualifies).count();
            println!(
                "{} of {} parcels selected ({} direct, {} via {} qualifying clusters)",
                cache.records.len(),
                cache.total_parcels,
                direct,
                cache.records.len() - direct,
                qualifying
            );
            print_warnings(&cache.warnings);
            Ok(())
        }
        Command::Moran(args) => {
            let cfg = args.cfg.resolve()?;
            let crime = match &args.crime {
                Some(raw) => Some(
                    CrimeType::from_key(raw)
                        .or_else(|| CrimeType::parse_label(raw))
                        .ok_or_else(|| CliError::Config(format!("unknown crime type {raw:?}")))?
                        .key(),
                ),
                None => None,
            };
            if let Some(w) = &args.window {
                if !stages::WINDOWS.contains(&w.as_str()) {
                    return Err(CliError::Config(format!(
                        "unknown window {w:?} (expected all, day, or night)"
                    )));
                }
            }
            let ws = Workspace::open(&cfg)?;
            let cache = stages::run_moran(&cfg, &ws)?;
            print!("{}", render::moran_csv(&cache, crime, args.window.as_deref()));
            Ok(())
        }
        Command::Hotspots(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let cache = stages::run_hotspots(&cfg, &ws)?;
            for cell in &cache.cells {
                match &cell.error {
                    Some(e) => println!("{} {}: {e}", cell.crime_type, cell.window),
                    None => {
                        let hot = cell.class.iter().filter(|c| c.as_str() == "Hot").count();
                        let cold = cell.class.iter().filter(|c| c.as_str() == "Cold").count();
                        println!(
                            "{} {}: {hot} hot, {cold} cold of {} units",
                            cell.crime_type,
                            cell.window,
                            cell.class.len()
                        );
                    }
                }
            }
            Ok(())
        }
        Command::Correlate(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let cache = stages::run_correlate(&cfg, &ws)?;
            println!(
                "{} variables correlated over {} units (full, night, difference)",
                cache.tables.full.names.len(),
                cache.unit_count
            );
            Ok(())
        }
        Command::Regress(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let cache = stages::run_regress(&cfg, &ws)?;
            println!(
                "{} units kept ({} dropped missing, {} dropped islands)",
                cache.kept_units,
                cache.dropped_missing,
                cache.dropped_islands.len()
            );
            for cell in &cache.cells {
                match (&cell.fit, &cell.error) {
                    (Some(fit), _) => println!(
                        "{} {}: rho = {:.4}, pseudo R2 = {:.3}, loglik = {:.2}",
                        cell.crime_type, cell.window, fit.rho, fit.pseudo_r2, fit.loglik
                    ),
                    (None, Some(e)) => println!("{} {}: {e}", cell.crime_type, cell.window),
                    (None, None) => {}
                }
            }
            Ok(())
        }
        Command::Synth(args) => run_synth(args),
        Command::Report(args) => {
            let cfg = args.resolve()?;
            let ws = Workspace::open(&cfg)?;
            let outcome = render::run_report(&cfg, &ws)?;
            println!("artifacts rendered to {}", outcome.out_dir.display());
            for (name, hash) in &outcome.artifacts {
                println!("  {name}  sha256:{}", &hash[..12]);
            }
            Ok(())
        }
    }
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        println!("warning: {w}");
    }
}

fn run_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg: synth::SynthConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| io_config(&path.display().to_string(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("synth config {}: {e}", path.display())))?
        }
        None => synth::SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(rows) = args.rows {
        cfg.rows = rows;
    }
    if let Some(cols) = args.cols {
        cfg.cols = cols;
    }
    let city = synth::make_city(&cfg)?;

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| io_config(&dir.display().to_string(), e))?;
    let write = |name: &str, text: String| -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io_config(&path.display().to_string(), e))?;
        std::fs::canonicalize(&path).map_err(|e| io_config(&path.display().to_string(), e))
    };
    let crimes = write("crimes.csv", synth::emit_crimes_csv(&city))?;
    let licenses = write("licenses.csv", synth::emit_licenses_csv(&city))?;
    let blockgroups = write("blockgroups.geojson", synth::emit_blockgroups_geojson(&city))?;
    let parcels = write("parcels.geojson", synth::emit_parcels_geojson(&city))?;
    let boundary = write("boundary.geojson", synth::emit_boundary_geojson(&city))?;

    let truth = serde_json::json!({
        "rho": city.truth.rho,
        "beta": city.truth.beta,
        "covariate_names": city.truth.covariate_names,
        "n": city.truth.y.len(),
        "y": city.truth.y,
        "seed": cfg.seed,
    });
    write("truth.json", serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n")?;

    let run_config = PartialConfig {
        crimes: Some(crimes),
        blockgroups: Some(blockgroups),
        parcels: Some(parcels),
        licenses: Some(licenses),
        boundary: Some(boundary),
        out_dir: Some(dir.join("out")),
        cbd_x: Some(city.cbd.x),
        cbd_y: Some(city.cbd.y),
        feet_per_unit: Some(city.scale.feet_per_unit),
        permutations: Some(999),
        seed: Some(cfg.seed),
        ..Default::default()
    };
    write(
        "config.json",
        serde_json::to_string_pretty(&run_config).expect("config serializes") + "\n",
    )?;

    println!(
        "synthetic city written to {}: {} block groups, {} parcels, {} crimes, {} licenses",
        dir.display(),
        city.blockgroups.len(),
        city.parcels.len(),
        city.crimes.len(),
        city.licenses.len()
    );
    println!("run it with: crimegrid run --config {}", dir.join("config.json").display());
    Ok(())
}
