//! Sparse matrix types and canonicalization.
//!
//! [`CooMatrix`] is the assembly format: an unordered entry list that tolerates
//! duplicates. [`CsrMatrix`] is the canonical compute format: rows sorted, each
//! row's columns strictly ascending, duplicates already combined.
//! [`coo_to_csr`] moves between them (duplicates are summed, matching the
//! usual sparse-assembly convention), [`expand_symmetric`] materializes the
//! full entry set of a matrix stored as one triangle, and [`spmv_reference`]
//! is the serial b = A*x oracle everything else is checked against.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

/// Errors from matrix construction and kernels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatrixError {
    /// An entry's coordinates fall outside the declared dimensions.
    #[error("entry at ({row}, {col}) outside {num_rows} x {num_cols} matrix")]
    EntryOutOfBounds {
        /// Offending row index.
        row: usize,
        /// Offending column index.
        col: usize,
        /// Declared row count.
        num_rows: usize,
        /// Declared column count.
        num_cols: usize,
    },
    /// `row_ptr` must have exactly `num_rows + 1` entries.
    #[error("row_ptr length {len} does not match {num_rows} rows + 1")]
    RowPtrLength {
        /// Actual `row_ptr` length.
        len: usize,
        /// Declared row count.
        num_rows: usize,
    },
    /// `row_ptr` must start at 0, end at nnz, and never decrease.
    #[error("row_ptr not monotone at index {index}: {prev} then {next}")]
    RowPtrNotMonotone {
        /// Position of the violation.
        index: usize,
        /// Value before the violation.
        prev: usize,
        /// Offending value.
        next: usize,
    },
    /// `row_ptr` bounds must match the entry array lengths.
    #[error("row_ptr covers {covered} entries but arrays hold {stored}")]
    RowPtrCoverage {
        /// Entry count according to `row_ptr`.
        covered: usize,
        /// Length of `col_index` / `values`.
        stored: usize,
    },
    /// `col_index` and `values` must have equal length.
    #[error("col_index holds {col_index_len} entries, values holds {values_len}")]
    ArrayLengthMismatch {
        /// `col_index` length.
        col_index_len: usize,
        /// `values` length.
        values_len: usize,
    },
    /// A stored column index is out of range.
    #[error("column index {col} at position {index} exceeds {num_cols} columns")]
    ColIndexOutOfBounds {
        /// Flat position in `col_index`.
        index: usize,
        /// Offending column.
        col: usize,
        /// Declared column count.
        num_cols: usize,
    },
    /// Columns within a row must be strictly ascending (canonical form).
    #[error("row {row} columns not strictly ascending at position {index}")]
    ColumnsNotAscending {
        /// Row containing the violation.
        row: usize,
        /// Flat position in `col_index`.
        index: usize,
    },
    /// Operand shapes do not line up.
    #[error("operand length {found} does not match expected {expected}")]
    ShapeMismatch {
        /// Required length.
        expected: usize,
        /// Provided length.
        found: usize,
    },
    /// Symmetric storage requires a square matrix.
    #[error("symmetric matrix must be square, got {num_rows} x {num_cols}")]
    NonSquareSymmetric {
        /// Declared row count.
        num_rows: usize,
        /// Declared column count.
        num_cols: usize,
    },
    /// Both (i, j) and (j, i) were stored with different values.
    #[error("symmetric conflict at ({row}, {col}): mirrored values differ")]
    SymmetricValueConflict {
        /// Row of the conflicting pair (row < col side reported).
        row: usize,
        /// Column of the conflicting pair.
        col: usize,
    },
}

/// Coordinate-format sparse matrix: an entry list with declared dimensions.
///
/// Entries are unordered and may contain duplicates; [`coo_to_csr`] sums them.
/// Every entry is bounds-checked on insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    num_rows: usize,
    num_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    /// Creates an empty matrix of the given dimensions.
    pub fn new(num_rows: usize, num_cols: usize) -> Self {
        CooMatrix { num_rows, num_cols, entries: Vec::new() }
    }

    /// Creates a matrix from an entry list, validating bounds.
    pub fn with_entries(
        num_rows: usize,
        num_cols: usize,
        entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self, MatrixError> {
        for &(row, col, _) in &entries {
            if row >= num_rows || col >= num_cols {
                return Err(MatrixError::EntryOutOfBounds { row, col, num_rows, num_cols });
            }
        }
        Ok(CooMatrix { num_rows, num_cols, entries })
    }

    /// Appends one entry, validating bounds.
    pub fn push(&mut self, row: usize, col: usize, value: f64) -> Result<(), MatrixError> {
        if row >= self.num_rows || col >= self.num_cols {
            return Err(MatrixError::EntryOutOfBounds {
                row,
                col,
                num_rows: self.num_rows,
                num_cols: self.num_cols,
            });
        }
        self.entries.push((row, col, value));
        Ok(())
    }

    /// Row count.
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    /// Column count.
    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Stored entry count (duplicates included).
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Stored entries as (row, col, value) triples.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// Compressed sparse row matrix in canonical form.
///
/// Invariants, enforced at construction: `row_ptr` has `num_rows + 1`
/// monotonically non-decreasing entries starting at 0 and ending at nnz;
/// `col_index` and `values` run parallel; within each row the columns are
/// strictly ascending (no duplicates).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    num_rows: usize,
    num_cols: usize,
    row_ptr: Vec<usize>,
    col_index: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from raw arrays, validating every invariant.
    pub fn new(
        num_rows: usize,
        num_cols: usize,
        row_ptr: Vec<usize>,
        col_index: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, MatrixError> {
        if row_ptr.len() != num_rows + 1 {
            return Err(MatrixError::RowPtrLength { len: row_ptr.len(), num_rows });
        }
        if col_index.len() != values.len() {
            return Err(MatrixError::ArrayLengthMismatch {
                col_index_len: col_index.len(),
                values_len: values.len(),
            });
        }
        if row_ptr[0] != 0 {
            return Err(MatrixError::RowPtrNotMonotone { index: 0, prev: 0, next: row_ptr[0] });
        }
        for i in 1..row_ptr.len() {
            if row_ptr[i] < row_ptr[i - 1] {
                return Err(MatrixError::RowPtrNotMonotone {
                    index: i,
                    prev: row_ptr[i - 1],
                    next: row_ptr[i],
                });
            }
        }
        if row_ptr[num_rows] != col_index.len() {
            return Err(MatrixError::RowPtrCoverage {
                covered: row_ptr[num_rows],
                stored: col_index.len(),
            });
        }
        for row in 0..num_rows {
            for idx in row_ptr[row]..row_ptr[row + 1] {
                let col = col_index[idx];
                if col >= num_cols {
                    return Err(MatrixError::ColIndexOutOfBounds { index: idx, col, num_cols });
                }
                if idx > row_ptr[row] && col_index[idx - 1] >= col {
                    return Err(MatrixError::ColumnsNotAscending { row, index: idx });
                }
            }
        }
        Ok(CsrMatrix { num_rows, num_cols, row_ptr, col_index, values })
    }

    /// Row count.
    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    /// Column count.
    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    /// Stored non-zero count.
    pub fn nnz(&self) -> usize {
        self.col_index.len()
    }

    /// True when the matrix is square.
    pub fn is_square(&self) -> bool {
        self.num_rows == self.num_cols
    }

    /// Row start offsets, length `num_rows + 1`.
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Column indices, ascending within each row.
    pub fn col_index(&self) -> &[usize] {
        &self.col_index
    }

    /// Non-zero values, parallel to [`CsrMatrix::col_index`].
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One row's columns and values.
    pub fn row(&self, row: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        (&self.col_index[span.clone()], &self.values[span])
    }

    /// Number of stored entries in one row.
    pub fn row_nnz(&self, row: usize) -> usize {
        self.row_ptr[row + 1] - self.row_ptr[row]
    }

    /// Entries as (row, col, value) triples in canonical order.
    pub fn to_coo(&self) -> CooMatrix {
        let mut entries = Vec::with_capacity(self.nnz());
        for row in 0..self.num_rows {
            for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                entries.push((row, self.col_index[idx], self.values[idx]));
            }
        }
        CooMatrix { num_rows: self.num_rows, num_cols: self.num_cols, entries }
    }
}

/// Canonicalizes a COO matrix into CSR form.
///
/// Entries are sorted by (row, column); duplicates are summed in their input
/// order, so the result is deterministic for a fixed entry list. An empty
/// matrix yields `row_ptr = [0; num_rows + 1]`.
pub fn coo_to_csr(coo: &CooMatrix) -> CsrMatrix {
    let mut entries = coo.entries.clone();
    // Stable sort keeps duplicate entries in input order, fixing the f64
    // summation order.
    entries.sort_by_key(|&(row, col, _)| (row, col));

    let mut row_ptr = vec![0usize; coo.num_rows + 1];
    let mut col_index = Vec::with_capacity(entries.len());
    let mut values: Vec<f64> = Vec::with_capacity(entries.len());
    let mut rows_done = 0usize;

    for &(row, col, value) in &entries {
        if !col_index.is_empty()
            && rows_done == row
            && *col_index.last().unwrap() == col
            && row_ptr[row] < col_index.len()
        {
            // Duplicate of the previous canonical entry: combine.
            *values.last_mut().unwrap() += value;
            continue;
        }
        while rows_done < row {
            rows_done += 1;
            row_ptr[rows_done] = col_index.len();
        }
        col_index.push(col);
        values.push(value);
    }
    while rows_done < coo.num_rows {
        rows_done += 1;
        row_ptr[rows_done] = col_index.len();
    }

    CsrMatrix {
        num_rows: coo.num_rows,
        num_cols: coo.num_cols,
        row_ptr,
        col_index,
        values,
    }
}

/// Expands a matrix declared symmetric into its full entry set.
///
/// For `declared_symmetric == false` this is a plain copy. Otherwise the
/// matrix must be square, and each unordered off-diagonal pair {i, j} is
/// handled as a group:
///
/// * Entries on one side only — the usual storage convention — are each
///   mirrored, including repeats at the same coordinates (repeats are legal
///   coordinate-list input and sum later, so both sides must repeat alike).
/// * Entries on both sides are treated as a restated pair: the two sides
///   must carry bit-identical value multisets, the lower-triangle copies are
///   mirrored, and the redundant upper-triangle copies are dropped. Any
///   imbalance is a [`MatrixError::SymmetricValueConflict`] naming the pair.
///
/// Diagonal entries pass through untouched. Expanding an already-expanded
/// matrix is a no-op up to entry order, and re-running the result through
/// [`coo_to_csr`] reproduces the same matrix bit for bit.
pub fn expand_symmetric(
    coo: &CooMatrix,
    declared_symmetric: bool,
) -> Result<CooMatrix, MatrixError> {
    if !declared_symmetric {
        return Ok(coo.clone());
    }
    if coo.num_rows != coo.num_cols {
        return Err(MatrixError::NonSquareSymmetric {
            num_rows: coo.num_rows,
            num_cols: coo.num_cols,
        });
    }
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(coo.entries.len() * 2);
    let mut off: Vec<(usize, usize, f64)> = Vec::new();
    for &(row, col, value) in &coo.entries {
        if row == col {
            entries.push((row, col, value));
        } else {
            off.push((row, col, value));
        }
    }
    // The stable sort groups entries by unordered pair while keeping
    // same-coordinate repeats in input order, which fixes their later f64
    // summation order.
    off.sort_by_key(|&(row, col, _)| (row.min(col), row.max(col)));

    let mut start = 0;
    while start < off.len() {
        let (lo, hi) = {
            let (row, col, _) = off[start];
            (row.min(col), row.max(col))
        };
        let mut end = start;
        while end < off.len() {
            let (row, col, _) = off[end];
            if (row.min(col), row.max(col)) != (lo, hi) {
                break;
            }
            end += 1;
        }
        let group = &off[start..end];
        let lower: Vec<f64> = group.iter().filter(|e| e.0 == hi).map(|e| e.2).collect();
        let upper: Vec<f64> = group.iter().filter(|e| e.0 == lo).map(|e| e.2).collect();
        if lower.is_empty() || upper.is_empty() {
            for &(row, col, value) in group {
                entries.push((row, col, value));
                entries.push((col, row, value));
            }
        } else {
            let mut lower_bits: Vec<u64> = lower.iter().map(|v| v.to_bits()).collect();
            let mut upper_bits: Vec<u64> = upper.iter().map(|v| v.to_bits()).collect();
            lower_bits.sort_unstable();
            upper_bits.sort_unstable();
            if lower_bits != upper_bits {
                return Err(MatrixError::SymmetricValueConflict { row: lo, col: hi });
            }
            for &value in &lower {
                entries.push((hi, lo, value));
                entries.push((lo, hi, value));
            }
        }
        start = end;
    }
    Ok(CooMatrix { num_rows: coo.num_rows, num_cols: coo.num_cols, entries })
}

/// Serial SpMV reference: `b = A * x`.
///
/// Each `b[i]` accumulates its row's products in ascending column order with a
/// single f64 accumulator; the simulator reproduces this order exactly, so the
/// two results can be compared bit for bit. Empty rows produce `0.0`.
///
/// # Errors
///
/// [`MatrixError::ShapeMismatch`] when `x.len() != a.num_cols()`.
pub fn spmv_reference(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>, MatrixError> {
    if x.len() != a.num_cols {
        return Err(MatrixError::ShapeMismatch { expected: a.num_cols, found: x.len() });
    }
    let mut b = vec![0.0f64; a.num_rows];
    for (row, out) in b.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for idx in a.row_ptr[row]..a.row_ptr[row + 1] {
            acc += a.values[idx] * x[a.col_index[idx]];
        }
        *out = acc;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_csr() -> CsrMatrix {
        // [[1, 0, 2], [0, 0, 0], [0, 3, 4]]
        CsrMatrix::new(3, 3, vec![0, 2, 2, 4], vec![0, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn coo_rejects_out_of_bounds_entry() {
        let err = CooMatrix::with_entries(2, 2, vec![(2, 0, 1.0)]).unwrap_err();
        assert_eq!(
            err,
            MatrixError::EntryOutOfBounds { row: 2, col: 0, num_rows: 2, num_cols: 2 }
        );
    }

    #[test]
    fn coo_to_csr_sorts_and_sums_duplicates() {
        let coo = CooMatrix::with_entries(
            3,
            3,
            vec![(2, 2, 4.0), (0, 2, 0.5), (2, 1, 3.0), (0, 0, 1.0), (0, 2, 1.5)],
        )
        .unwrap();
        let csr = coo_to_csr(&coo);
        assert_eq!(csr, small_csr());
    }

    #[test]
    fn coo_to_csr_handles_empty_and_trailing_rows() {
        let coo = CooMatrix::with_entries(4, 2, vec![(1, 1, 5.0)]).unwrap();
        let csr = coo_to_csr(&coo);
        assert_eq!(csr.row_ptr(), &[0, 0, 1, 1, 1]);
        assert_eq!(csr.nnz(), 1);

        let empty = coo_to_csr(&CooMatrix::new(3, 3));
        assert_eq!(empty.row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(empty.nnz(), 0);
    }

    #[test]
    fn csr_validation_rejects_malformed_arrays() {
        assert!(matches!(
            CsrMatrix::new(2, 2, vec![0, 1], vec![0], vec![1.0]),
            Err(MatrixError::RowPtrLength { len: 2, num_rows: 2 })
        ));
        assert!(matches!(
            CsrMatrix::new(2, 2, vec![0, 2, 1], vec![0, 1], vec![1.0, 1.0]),
            Err(MatrixError::RowPtrNotMonotone { index: 2, prev: 2, next: 1 })
        ));
        assert!(matches!(
            CsrMatrix::new(1, 2, vec![0, 2], vec![0, 5], vec![1.0, 1.0]),
            Err(MatrixError::ColIndexOutOfBounds { col: 5, .. })
        ));
        assert!(matches!(
            CsrMatrix::new(1, 3, vec![0, 2], vec![1, 1], vec![1.0, 1.0]),
            Err(MatrixError::ColumnsNotAscending { row: 0, index: 1 })
        ));
        assert!(matches!(
            CsrMatrix::new(1, 2, vec![0, 1], vec![0, 1], vec![1.0, 1.0]),
            Err(MatrixError::RowPtrCoverage { covered: 1, stored: 2 })
        ));
    }

    #[test]
    fn expand_symmetric_mirrors_off_diagonal_once() {
        // Lower triangle of [[2, 5, 0], [5, 3, 0], [0, 0, 7]].
        let coo =
            CooMatrix::with_entries(3, 3, vec![(0, 0, 2.0), (1, 0, 5.0), (1, 1, 3.0), (2, 2, 7.0)])
                .unwrap();
        let full = expand_symmetric(&coo, true).unwrap();
        // Post-expansion count: diagonal entries once, off-diagonal twice.
        assert_eq!(full.nnz(), 5);
        let csr = coo_to_csr(&full);
        assert_eq!(csr.row(0).0, &[0, 1]);
        assert_eq!(csr.row(0).1, &[2.0, 5.0]);
        assert_eq!(csr.row(1).0, &[0, 1]);
        assert_eq!(csr.row(1).1, &[5.0, 3.0]);
    }

    #[test]
    fn expand_symmetric_rejects_conflicting_mirror() {
        let coo = CooMatrix::with_entries(2, 2, vec![(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
        assert_eq!(
            expand_symmetric(&coo, true).unwrap_err(),
            MatrixError::SymmetricValueConflict { row: 0, col: 1 }
        );
        // Equal mirrored values collapse instead of erroring.
        let ok = CooMatrix::with_entries(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(expand_symmetric(&ok, true).unwrap().nnz(), 2);
    }

    #[test]
    fn expand_symmetric_rejects_non_square() {
        let coo = CooMatrix::new(2, 3);
        assert_eq!(
            expand_symmetric(&coo, true).unwrap_err(),
            MatrixError::NonSquareSymmetric { num_rows: 2, num_cols: 3 }
        );
    }

    #[test]
    fn spmv_reference_matches_hand_computation() {
        let a = small_csr();
        let b = spmv_reference(&a, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b, vec![7.0, 0.0, 18.0]);
    }

    #[test]
    fn spmv_reference_zero_fills_empty_rows_and_checks_shape() {
        let a = coo_to_csr(&CooMatrix::new(2, 4));
        assert_eq!(spmv_reference(&a, &[1.0; 4]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(
            spmv_reference(&a, &[1.0; 3]),
            Err(MatrixError::ShapeMismatch { expected: 4, found: 3 })
        ));
    }

    proptest! {
        // CSR -> COO -> CSR is the identity on canonical matrices.
        #[test]
        fn csr_coo_round_trip(entries in proptest::collection::vec(
            (0usize..40, 0usize..30, -10.0f64..10.0), 0..200))
        {
            let coo = CooMatrix::with_entries(40, 30, entries).unwrap();
            let csr = coo_to_csr(&coo);
            let back = coo_to_csr(&csr.to_coo());
            prop_assert_eq!(&csr, &back);
            // row_ptr is monotone and covers all entries.
            prop_assert_eq!(csr.row_ptr()[0], 0);
            prop_assert_eq!(*csr.row_ptr().last().unwrap(), csr.nnz());
        }

        // Expansion is idempotent on an already-full symmetric matrix.
        #[test]
        fn symmetric_expansion_idempotent(entries in proptest::collection::vec(
            (0usize..12, 0usize..12, 1.0f64..4.0), 0..40))
        {
            // Keep one triangle only to satisfy the storage convention.
            let tri: alloc::vec::Vec<_> =
                entries.into_iter().map(|(i, j, v)| if i >= j { (i, j, v) } else { (j, i, v) }).collect();
            let coo = CooMatrix::with_entries(12, 12, tri).unwrap();
            let once = expand_symmetric(&coo, true).unwrap();
            let twice = expand_symmetric(&once, true).unwrap();
            prop_assert_eq!(coo_to_csr(&once), coo_to_csr(&twice));
        }
    }
}
