//! Experiment tooling around the migratory-thread simulator core: matrix
//! file loading, permutation files, run orchestration, and report/CSV
//! emission.

pub mod cli;
pub mod mmio;
pub mod permfile;
pub mod report;
pub mod runner;
