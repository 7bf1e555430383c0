//! Configuration, orchestration and benchmarking behind the `morspai` binary.

pub mod bench;
pub mod config;
pub mod run;

pub use config::{Algorithm, RunConfig};
pub use run::{exit_code, run, ReducedModel, RunOutcome};
