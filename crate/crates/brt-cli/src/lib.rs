//! Command-line surface for Bayesian rose tree clustering: dataset
//! ingestion and binarization, the clustering/optimization/oracle/
//! regression commands, and tree serialization (versioned JSON documents
//! and annotated Newick).

pub mod commands;
pub mod document;
pub mod error;
pub mod ingest;
pub mod newick;

pub use document::{build_document, dataset_fingerprint, HyperDoc, NodeDoc, TreeDocument};
pub use error::{CliError, CliResult};
pub use ingest::{ingest, write_csv, BinarizeRule, Dataset};
pub use newick::export_newick;
