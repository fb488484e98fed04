//! Command line, file formats and experiment runner for `gbf-core`.
//!
//! `gbf falsify` runs seeded searches and writes a result CSV, a summary CSV,
//! the exact run configuration and one witness directory per run;
//! `gbf replay` re-simulates a witness and checks the recorded robustness;
//! `gbf monitor` evaluates a requirement on a trajectory file.

pub mod cli;
pub mod config;
pub mod io;
pub mod model;
pub mod replay;
pub mod run;
pub mod witness;

pub use config::RunConfig;
