//! Batch orchestration for the spatial crime-analysis pipeline: staged
//! execution over a cached workspace, with CSV/GeoJSON artifact rendering.

pub mod config;
pub mod error;
pub mod render;
pub mod stages;
pub mod workspace;

use config::RunConfig;
use error::CliError;
use workspace::Workspace;

/// Execute every stage in order and render the artifact bundle. A stage
/// failure writes a partial manifest naming the completed stages before the
/// error propagates.
pub fn run_pipeline(cfg: &RunConfig) -> Result<render::ReportOutcome, CliError> {
    let ws = Workspace::open(cfg)?;
    let mut completed: Vec<&str> = Vec::new();
    macro_rules! stage {
        ($name:expr, $call:expr) => {
            match $call {
                Ok(v) => {
                    completed.push($name);
                    v
                }
                Err(e) => {
                    let _ = render::write_partial_manifest(cfg, &completed, &e.to_string());
                    return Err(e);
                }
            }
        };
    }
    stage!("ingest-check", stages::run_ingest(cfg, &ws));
    stage!("weights", stages::run_weights(cfg, &ws));
    stage!("select-parcels", stages::run_select_parcels(cfg, &ws));
    stage!("moran", stages::run_moran(cfg, &ws));
    stage!("hotspots", stages::run_hotspots(cfg, &ws));
    stage!("correlate", stages::run_correlate(cfg, &ws));
    stage!("regress", stages::run_regress(cfg, &ws));
    let outcome = stage!("report", render::run_report(cfg, &ws));
    Ok(outcome)
}
