//! Scenario-driven command-line driver: parse scenario files, run the
//! smooth-model, limit, and Vinogradov pipelines, and emit trajectory
//! CSV files and comparison reports.

pub mod runner;
pub mod scenario;
