//! Error taxonomy mapped onto process exit codes: 2 for configuration
//! problems, 3 for data problems (including stale caches), 4 for numerical
//! failures.

use crimegrid::esda::EsdaError;
use crimegrid::geo::GeometryError;
use crimegrid::ingest::IngestError;
use crimegrid::parcels::ParcelError;
use crimegrid::slm::SlmError;
use crimegrid::synth::SynthError;
use crimegrid::weights::WeightsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stale cache: {0}")]
    Stale(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Stale(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<ParcelError> for CliError {
    fn from(e: ParcelError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<WeightsError> for CliError {
    fn from(e: WeightsError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<EsdaError> for CliError {
    fn from(e: EsdaError) -> CliError {
        match e {
            EsdaError::TooFewPermutations(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SlmError> for CliError {
    fn from(e: SlmError) -> CliError {
        match e {
            SlmError::RankDeficient(_)
            | SlmError::RhoOutOfDomain { .. }
            | SlmError::NonConcaveProfile { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> CliError {
        CliError::Config(e.to_string())
    }
}

/// IO on an input the user named: configuration problem per the config
/// invariants (all paths readable, output directory writable).
pub fn io_config(context: &str, e: std::io::Error) -> CliError {
    CliError::Config(format!("{context}: {e}"))
}

/// IO on a file the tool itself manages (cache or artifacts).
pub fn io_data(context: &str, e: std::io::Error) -> CliError {
    CliError::Data(format!("{context}: {e}"))
}
