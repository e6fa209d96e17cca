//! Forensic toolkit for electronic-voting transmission data.
//!
//! Reconstructs a full analysis pipeline over server-side accounting logs
//! and official tally files: ingestion and cross-checking of the evidence
//! sources, traffic-volume classification of machines and centers,
//! bytes-versus-votes regressions, distribution comparisons across machine
//! groups and electoral events, and a seeded synthetic generator that
//! produces ground-truth-labelled datasets to validate every stage.
//!
//! Modules follow the pipeline:
//!
//! - [`model`]: shared domain types and elementary electoral metrics
//! - [`ingest`]: accounting detail / tally CSV / registry parsers and the
//!   evidence cross-check
//! - [`classify`]: final-session selection, A/B/C classes, G1/G2
//!   subgroups, per-vote pattern detection, regional composition
//! - [`regression`]: ordinary least squares with standard errors
//! - [`stats`]: summaries, quantiles and the hypothesis-test battery
//! - [`simulate`]: scenario generator, file writers and calibration runs
//! - [`report`]: CSV/JSON/SVG artifact emission and run manifests
//! - [`cli`]: the `votewire` command-line surface
//!
//! The `examples/` directory holds one runnable program per capability;
//! start with `simulate_scenario` and `full_report`.

pub mod classify;
pub mod ingest;
pub mod model;
pub mod regression;
pub mod report;
pub mod simulate;
pub mod stats;

pub mod cli;
