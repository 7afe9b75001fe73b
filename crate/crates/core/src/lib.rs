//! Spatial statistics for city crime data.
//!
//! The crate covers the full analysis chain: ingesting incident and block
//! group data ([`ingest`]), selecting multiunit parcels and computing
//! proximity measures ([`parcels`]), building Queen contiguity weights
//! ([`weights`]), exploratory statistics such as Moran's I, Getis-Ord G*,
//! Spearman correlations and a PCA deprivation index ([`esda`]), and maximum
//! likelihood spatial lag regression ([`slm`]). The [`synth`] module
//! generates synthetic city datasets with known parameters for end-to-end
//! checks. All randomized procedures take explicit seeds and are
//! deterministic across runs.

pub mod esda;
pub mod geo;
#[cfg(test)]
mod testutil;
pub mod ingest;
pub mod parcels;
pub mod slm;
pub mod synth;
pub mod weights;
