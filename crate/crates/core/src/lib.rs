//! Core model of a cache-less migratory-thread machine executing distributed
//! sparse matrix-vector multiply (SpMV).
//!
//! The machine consists of `nodelets`, each pairing a single-issue core with a
//! slice of globally addressable memory. A thread that touches memory on
//! another nodelet migrates there instead of pulling the data across; writes
//! that need no reply can instead be shipped as remote updates that are
//! acknowledged asynchronously. This crate provides:
//!
//! - [`matrix`]: COO/CSR sparse types, canonicalization, and a serial SpMV
//!   reference.
//! - [`rmat`]: recursive-quadrant random matrix generation.
//! - [`reorder`]: row/column permutations (BFS, uniform random, external) and
//!   bandwidth measurement.
//! - [`partition`]: row/non-zero work distribution, per-nodelet CSR shards,
//!   vector layouts, and an analytic migration-count oracle.
//! - [`sim`]: the deterministic cycle-level machine simulator.
//! - [`metrics`]: summary statistics derived from simulation output.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature enables `std::error::Error` integration and float intrinsics.
//! Without `std`, enable the `libm` feature of this crate's dependency tree to
//! provide `sqrt`.

#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_docs)]

extern crate alloc;

pub mod matrix;
pub mod metrics;
pub mod partition;
pub mod reorder;
pub mod rmat;
pub mod sim;
