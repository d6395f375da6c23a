//! Recursive-quadrant (R-MAT) random matrix generation.
//!
//! Each edge is placed by descending `scale` levels of a 2^scale x 2^scale
//! grid, picking a quadrant per level with probabilities (a, b, c, d). The
//! generator is driven by a ChaCha8 stream cipher RNG, so a fixed seed yields
//! the same matrix on every platform. Duplicate edges are dropped rather than
//! re-drawn, so the resulting non-zero count may fall below the target; all
//! values are 1.0.

use crate::matrix::CooMatrix;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest supported scale; 2^scale must fit comfortably in usize.
pub const MAX_SCALE: u32 = 48;

/// Errors from R-MAT parameter validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RmatError {
    /// Scale outside the supported range.
    #[error("scale {scale} exceeds maximum {max}", max = MAX_SCALE)]
    ScaleTooLarge {
        /// Requested scale.
        scale: u32,
    },
    /// Quadrant probabilities must be non-negative and sum to at most 1.
    #[error("quadrant probabilities a={a}, b={b}, c={c} invalid (need >= 0, a+b+c <= 1)")]
    InvalidProbabilities {
        /// Upper-left quadrant probability.
        a: f64,
        /// Upper-right quadrant probability.
        b: f64,
        /// Lower-left quadrant probability.
        c: f64,
    },
}

/// R-MAT generation parameters. The lower-right probability is implicit:
/// `d = 1 - a - b - c`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RmatParams {
    /// Matrix dimension is `2^scale` on each side.
    pub scale: u32,
    /// Number of edge draws (distinct survivors may be fewer).
    pub target_nnz: usize,
    /// Upper-left quadrant probability.
    pub a: f64,
    /// Upper-right quadrant probability.
    pub b: f64,
    /// Lower-left quadrant probability.
    pub c: f64,
}

impl RmatParams {
    /// Checks probability and scale constraints.
    pub fn validate(&self) -> Result<(), RmatError> {
        if self.scale > MAX_SCALE {
            return Err(RmatError::ScaleTooLarge { scale: self.scale });
        }
        let ok = self.a >= 0.0
            && self.b >= 0.0
            && self.c >= 0.0
            && self.a + self.b + self.c <= 1.0 + 1e-12;
        if !ok {
            return Err(RmatError::InvalidProbabilities { a: self.a, b: self.b, c: self.c });
        }
        Ok(())
    }
}

/// Generates an R-MAT matrix; deterministic for a fixed (params, seed) pair.
///
/// Draws `target_nnz` edges, drops duplicates, and stores value 1.0 for each
/// surviving edge. Self-loops are kept. The entry list is sorted by
/// (row, column), so downstream canonicalization never reorders sums.
pub fn generate_rmat(params: &RmatParams, seed: u64) -> Result<CooMatrix, RmatError> {
    params.validate()?;
    let dim = 1usize << params.scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(params.target_nnz);

    for _ in 0..params.target_nnz {
        let mut row = 0usize;
        let mut col = 0usize;
        for _ in 0..params.scale {
            let draw: f64 = rng.random();
            let (row_bit, col_bit) = if draw < params.a {
                (0, 0)
            } else if draw < params.a + params.b {
                (0, 1)
            } else if draw < params.a + params.b + params.c {
                (1, 0)
            } else {
                (1, 1)
            };
            row = (row << 1) | row_bit;
            col = (col << 1) | col_bit;
        }
        edges.push((row, col));
    }

    edges.sort_unstable();
    edges.dedup();

    let entries = edges.into_iter().map(|(r, c)| (r, c, 1.0f64)).collect();
    Ok(CooMatrix::with_entries(dim, dim, entries).expect("quadrant descent stays in bounds"))
}
