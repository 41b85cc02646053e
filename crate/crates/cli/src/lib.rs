//! Batch front end for the unduloid verification pipeline: configuration,
//! stage orchestration with a content-hash cache, reports and figures.

pub mod cache;
pub mod config;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::RunConfig;
pub use pipeline::{Pipeline, Scope};
pub use report::VerificationReport;
