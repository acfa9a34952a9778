//! Configuration, file formats and the end-to-end analysis pipeline.

pub mod config;
pub mod load;
pub mod pipeline;
pub mod report;

pub use config::{AnalysisConfig, ColumnMap, SEED_ENV};
pub use load::{load_border, load_dataset, load_polygons, load_units, Dataset, UnitTable};
pub use pipeline::{analyze, resolve_theta, run_pipeline, run_pipeline_until, run_placebo, Stage};
pub use report::AnalysisReport;
