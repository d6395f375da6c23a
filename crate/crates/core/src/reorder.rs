//! Row/column reorderings for square matrices.
//!
//! A [`Permutation`] maps old indices to new ones. Orderings come from three
//! sources: breadth-first traversal of the symmetrized pattern ([`bfs_order`]),
//! a uniform random shuffle ([`random_order`]), or an external file (parsed by
//! a host crate into [`Permutation::from_new_indices`]). [`apply_permutation`]
//! conjugates a matrix (rows and columns together) and [`permute_vector`]
//! applies the matching vector reordering, so `P(Ax)` and `(PAP^T)(Px)` agree
//! up to floating-point reassociation within rows.

use crate::matrix::{coo_to_csr, CooMatrix, CsrMatrix};
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Errors from permutation construction and application.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReorderError {
    /// The operation requires a square matrix.
    #[error("operation requires a square matrix, got {num_rows} x {num_cols}")]
    NotSquare {
        /// Row count.
        num_rows: usize,
        /// Column count.
        num_cols: usize,
    },
    /// Permutation length does not match the operand.
    #[error("permutation covers {permutation_len} indices, operand has {operand_len}")]
    LengthMismatch {
        /// Permutation domain size.
        permutation_len: usize,
        /// Operand dimension.
        operand_len: usize,
    },
    /// A mapped index falls outside the domain.
    #[error("mapped index {value} at position {position} outside 0..{len}")]
    TargetOutOfRange {
        /// Position in the mapping array.
        position: usize,
        /// Offending value.
        value: usize,
        /// Domain size.
        len: usize,
    },
    /// Two positions map to the same new index.
    #[error("new index {value} appears more than once (second time at position {position})")]
    DuplicateTarget {
        /// Position of the second occurrence.
        position: usize,
        /// Repeated value.
        value: usize,
    },
    /// BFS start vertex out of range.
    #[error("start vertex {start} outside 0..{len}")]
    StartOutOfRange {
        /// Requested start.
        start: usize,
        /// Vertex count.
        len: usize,
    },
}

/// A bijection on `0..len`, stored as `new_index_of[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    new_index_of: Vec<usize>,
}

impl Permutation {
    /// The identity permutation on `0..len`.
    pub fn identity(len: usize) -> Self {
        Permutation { new_index_of: (0..len).collect() }
    }

    /// Builds a permutation from a `new_index_of` array, validating that it
    /// is a bijection on `0..len`.
    pub fn from_new_indices(new_index_of: Vec<usize>) -> Result<Self, ReorderError> {
        let len = new_index_of.len();
        let mut seen = vec![false; len];
        for (position, &value) in new_index_of.iter().enumerate() {
            if value >= len {
                return Err(ReorderError::TargetOutOfRange { position, value, len });
            }
            if seen[value] {
                return Err(ReorderError::DuplicateTarget { position, value });
            }
            seen[value] = true;
        }
        Ok(Permutation { new_index_of })
    }

    /// Domain size.
    pub fn len(&self) -> usize {
        self.new_index_of.len()
    }

    /// True for the empty permutation.
    pub fn is_empty(&self) -> bool {
        self.new_index_of.is_empty()
    }

    /// New position of `old`.
    pub fn new_index_of(&self, old: usize) -> usize {
        self.new_index_of[old]
    }

    /// The full mapping, indexed by old position.
    pub fn as_slice(&self) -> &[usize] {
        &self.new_index_of
    }

    /// The inverse bijection (`old_index_of[new] = old`).
    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0usize; self.new_index_of.len()];
        for (old, &new) in self.new_index_of.iter().enumerate() {
            inv[new] = old;
        }
        Permutation { new_index_of: inv }
    }
}

/// Breadth-first ordering of the symmetrized pattern of `a`, starting at
/// `start`.
///
/// Vertices are numbered in discovery order. Neighbors are explored in
/// ascending old index (the adjacency used is that of `A + A^T`, self-loops
/// ignored), and when a component is exhausted the walk restarts at the
/// smallest unvisited vertex, so disconnected matrices still yield a total
/// ordering. A matrix with no off-diagonal entries yields the identity.
pub fn bfs_order(a: &CsrMatrix, start: usize) -> Result<Permutation, ReorderError> {
    if !a.is_square() {
        return Err(ReorderError::NotSquare { num_rows: a.num_rows(), num_cols: a.num_cols() });
    }
    let n = a.num_rows();
    if n == 0 {
        return Ok(Permutation::identity(0));
    }
    if start >= n {
        return Err(ReorderError::StartOutOfRange { start, len: n });
    }

    // Symmetrized adjacency, neighbor lists sorted ascending.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for row in 0..n {
        for &col in a.row(row).0 {
            if row != col {
                adjacency[row].push(col);
                adjacency[col].push(row);
            }
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }

    let mut new_index_of = vec![usize::MAX; n];
    let mut next_index = 0usize;
    let mut queue: VecDeque<usize> = VecDeque::new();
    let mut restart_cursor = 0usize;

    let visit = |v: usize, next_index: &mut usize, queue: &mut VecDeque<usize>,
                 order: &mut Vec<usize>| {
        order[v] = *next_index;
        *next_index += 1;
        queue.push_back(v);
    };

    visit(start, &mut next_index, &mut queue, &mut new_index_of);
    while next_index < n {
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if new_index_of[w] == usize::MAX {
                    visit(w, &mut next_index, &mut queue, &mut new_index_of);
                }
            }
        }
        // Component exhausted: restart at the smallest unvisited vertex.
        while restart_cursor < n && new_index_of[restart_cursor] != usize::MAX {
            restart_cursor += 1;
        }
        if restart_cursor < n {
            visit(restart_cursor, &mut next_index, &mut queue, &mut new_index_of);
        }
    }

    Ok(Permutation { new_index_of })
}

/// Uniform random permutation of `0..len` via a Fisher-Yates shuffle.
///
/// The shuffle walks the array back to front, swapping each position with a
/// uniformly drawn earlier one; the draws come from a ChaCha8 stream seeded
/// with `seed`, so a fixed seed gives a fixed permutation on every platform.
pub fn random_order(len: usize, seed: u64) -> Permutation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mapping: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.random_range(0..=i);
        mapping.swap(i, j);
    }
    Permutation { new_index_of: mapping }
}

/// Conjugates a square matrix: entry (i, j) moves to (p(i), p(j)).
///
/// Values are untouched and the non-zero count is preserved; the result is
/// re-canonicalized, so column order within rows follows the new indices.
pub fn apply_permutation(a: &CsrMatrix, p: &Permutation) -> Result<CsrMatrix, ReorderError> {
    if !a.is_square() {
        return Err(ReorderError::NotSquare { num_rows: a.num_rows(), num_cols: a.num_cols() });
    }
    if p.len() != a.num_rows() {
        return Err(ReorderError::LengthMismatch {
            permutation_len: p.len(),
            operand_len: a.num_rows(),
        });
    }
    let n = a.num_rows();
    let mut coo = CooMatrix::new(n, n);
    for row in 0..n {
        let (cols, vals) = a.row(row);
        for (&col, &value) in cols.iter().zip(vals) {
            coo.push(p.new_index_of(row), p.new_index_of(col), value)
                .expect("bijection stays in bounds");
        }
    }
    Ok(coo_to_csr(&coo))
}

/// Applies a permutation to a vector: `out[p(i)] = x[i]`.
pub fn permute_vector(x: &[f64], p: &Permutation) -> Result<Vec<f64>, ReorderError> {
    if p.len() != x.len() {
        return Err(ReorderError::LengthMismatch {
            permutation_len: p.len(),
            operand_len: x.len(),
        });
    }
    let mut out = vec![0.0f64; x.len()];
    for (old, &value) in x.iter().enumerate() {
        out[p.new_index_of(old)] = value;
    }
    Ok(out)
}

/// Maximum `|i - j|` over stored entries of a square matrix; 0 when empty.
pub fn matrix_bandwidth(a: &CsrMatrix) -> Result<usize, ReorderError> {
    if !a.is_square() {
        return Err(ReorderError::NotSquare { num_rows: a.num_rows(), num_cols: a.num_cols() });
    }
    let mut bandwidth = 0usize;
    for row in 0..a.num_rows() {
        for &col in a.row(row).0 {
            bandwidth = bandwidth.max(col.abs_diff(row));
        }
    }
    Ok(bandwidth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::spmv_reference;
    use proptest::prelude::*;

    /// Path graph 0-1-2-...-(n-1) as a symmetric CSR with unit weights.
    fn path_csr(n: usize) -> CsrMatrix {
        let mut coo = CooMatrix::new(n, n);
        for v in 0..n.saturating_sub(1) {
            coo.push(v, v + 1, 1.0).unwrap();
            coo.push(v + 1, v, 1.0).unwrap();
        }
        coo_to_csr(&coo)
    }

    fn shuffled(a: &CsrMatrix, seed: u64) -> (CsrMatrix, Permutation) {
        let p = random_order(a.num_rows(), seed);
        (apply_permutation(a, &p).unwrap(), p)
    }

    #[test]
    fn permutation_validation_catches_non_bijections() {
        assert!(matches!(
            Permutation::from_new_indices(vec![0, 3, 1]),
            Err(ReorderError::TargetOutOfRange { position: 1, value: 3, len: 3 })
        ));
        assert!(matches!(
            Permutation::from_new_indices(vec![0, 1, 1]),
            Err(ReorderError::DuplicateTarget { position: 2, value: 1 })
        ));
        let p = Permutation::from_new_indices(vec![2, 0, 1]).unwrap();
        assert_eq!(p.inverse().as_slice(), &[1, 2, 0]);
    }

    #[test]
    fn bfs_on_star_visits_center_then_leaves_ascending() {
        // Star centered at 3: edges 3-0, 3-1, 3-2. Start at the center.
        let mut coo = CooMatrix::new(4, 4);
        for leaf in 0..3 {
            coo.push(3, leaf, 1.0).unwrap();
            coo.push(leaf, 3, 1.0).unwrap();
        }
        let p = bfs_order(&coo_to_csr(&coo), 3).unwrap();
        // Discovery order 3, 0, 1, 2.
        assert_eq!(p.as_slice(), &[1, 2, 3, 0]);
    }

    #[test]
    fn bfs_from_path_endpoint_gives_bandwidth_one() {
        let path = path_csr(64);
        let (scrambled, scramble) = shuffled(&path, 11);
        assert!(matrix_bandwidth(&scrambled).unwrap() > 1);
        // The old endpoint 0 sits at a known scrambled position.
        let endpoint = scramble.new_index_of(0);
        let p = bfs_order(&scrambled, endpoint).unwrap();
        let reordered = apply_permutation(&scrambled, &p).unwrap();
        assert_eq!(matrix_bandwidth(&reordered).unwrap(), 1);
    }

    #[test]
    fn bfs_without_off_diagonal_entries_is_identity() {
        let mut coo = CooMatrix::new(5, 5);
        for i in 0..5 {
            coo.push(i, i, 2.0).unwrap();
        }
        let p = bfs_order(&coo_to_csr(&coo), 0).unwrap();
        assert_eq!(p.as_slice(), Permutation::identity(5).as_slice());
    }

    #[test]
    fn bfs_restarts_at_smallest_unvisited_component() {
        // Two components: {0, 4} joined and {1, 2, 3} a path 2-1, 1-3... use
        // edges 0-4, 2-1, 1-3; start in the small component at 4.
        let mut coo = CooMatrix::new(5, 5);
        for (u, v) in [(0, 4), (2, 1), (1, 3)] {
            coo.push(u, v, 1.0).unwrap();
            coo.push(v, u, 1.0).unwrap();
        }
        let p = bfs_order(&coo_to_csr(&coo), 4).unwrap();
        // Order: 4, 0, then restart at 1 (smallest unvisited), then 2, 3.
        assert_eq!(p.as_slice(), &[1, 2, 3, 4, 0]);
    }

    #[test]
    fn bfs_rejects_bad_start_and_rectangular_input() {
        let path = path_csr(4);
        assert!(matches!(
            bfs_order(&path, 4),
            Err(ReorderError::StartOutOfRange { start: 4, len: 4 })
        ));
        let rect = coo_to_csr(&CooMatrix::new(2, 3));
        assert!(matches!(bfs_order(&rect, 0), Err(ReorderError::NotSquare { .. })));
    }

    #[test]
    fn random_order_is_seed_deterministic() {
        let a = random_order(50, 7);
        let b = random_order(50, 7);
        assert_eq!(a, b);
        assert_ne!(a, random_order(50, 8));
        // Result is a valid bijection.
        assert!(Permutation::from_new_indices(a.as_slice().to_vec()).is_ok());
    }

    #[test]
    fn random_order_position_means_look_uniform() {
        // Mean new index of a fixed position over many seeds should sit near
        // (n-1)/2; a uniform draw has sigma^2 = (n^2 - 1)/12, so the mean of
        // `trials` draws stays within 3 sigma except with ~0.3% probability.
        // Seeds are fixed, so the test itself is deterministic.
        let n = 100usize;
        let trials = 2000u64;
        let expected = (n as f64 - 1.0) / 2.0;
        let sigma_mean = ((n as f64 * n as f64 - 1.0) / 12.0 / trials as f64).sqrt();
        for position in [0usize, n / 2, n - 1] {
            let mut sum = 0.0f64;
            for seed in 0..trials {
                sum += random_order(n, seed).new_index_of(position) as f64;
            }
            let mean = sum / trials as f64;
            assert!(
                (mean - expected).abs() <= 3.0 * sigma_mean,
                "position {position}: mean {mean} vs expected {expected}"
            );
        }
    }

    #[test]
    fn bandwidth_measures_band_and_handles_empty() {
        let path = path_csr(8);
        assert_eq!(matrix_bandwidth(&path).unwrap(), 1);
        let empty = coo_to_csr(&CooMatrix::new(6, 6));
        assert_eq!(matrix_bandwidth(&empty).unwrap(), 0);
    }

    #[test]
    fn apply_permutation_checks_dimensions() {
        let path = path_csr(5);
        let wrong = Permutation::identity(4);
        assert!(matches!(
            apply_permutation(&path, &wrong),
            Err(ReorderError::LengthMismatch { permutation_len: 4, operand_len: 5 })
        ));
    }

    proptest! {
        // Conjugation preserves nnz and commutes with SpMV up to reassociation.
        #[test]
        fn permuted_spmv_commutes(
            entries in proptest::collection::vec((0usize..24, 0usize..24, 0.1f64..2.0), 1..150),
            seed in 0u64..500,
        ) {
            let n = 24usize;
            let coo = CooMatrix::with_entries(n, n, entries).unwrap();
            let a = coo_to_csr(&coo);
            let p = random_order(n, seed);
            let pa = apply_permutation(&a, &p).unwrap();
            prop_assert_eq!(pa.nnz(), a.nnz());

            let x: alloc::vec::Vec<f64> = (0..n).map(|i| 0.3 + (i % 9) as f64 * 0.17).collect();
            let direct = permute_vector(&spmv_reference(&a, &x).unwrap(), &p).unwrap();
            let conjugated =
                spmv_reference(&pa, &permute_vector(&x, &p).unwrap()).unwrap();
            for (lhs, rhs) in direct.iter().zip(&conjugated) {
                let scale = lhs.abs().max(rhs.abs()).max(1e-300);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale,
                    "mismatch {} vs {}", lhs, rhs);
            }
        }

        // Double inversion is the identity.
        #[test]
        fn inverse_of_inverse_is_identity(len in 0usize..80, seed in 0u64..100) {
            let p = random_order(len, seed);
            prop_assert_eq!(p.inverse().inverse(), p);
        }
    }
}
