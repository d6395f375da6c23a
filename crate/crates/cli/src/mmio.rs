//! Matrix Market coordinate-format ingestion.
//!
//! Supports the coordinate body with `real`, `integer`, and `pattern` fields
//! and `general` or `symmetric` symmetry, 1-based on disk and 0-based in
//! memory. Dense (`array`) bodies, `complex` values, and `skew-symmetric` /
//! `hermitian` symmetry are rejected up front. Every parse error names the
//! 1-based line it came from.

use std::fs;
use std::path::Path;

use migsim_core::matrix::{coo_to_csr, expand_symmetric, CooMatrix, CsrMatrix, MatrixError};
use thiserror::Error;

/// Why a Matrix Market stream failed to parse or validate.
#[derive(Debug, Error)]
pub enum MmioError {
    /// The file has no content at all.
    #[error("line 1: empty input, expected a '%%MatrixMarket' banner")]
    EmptyInput,
    /// The first line is not the expected banner.
    #[error("line {line}: malformed header {found:?}, expected \
             '%%MatrixMarket matrix coordinate <field> <symmetry>'")]
    MalformedHeader {
        /// 1-based line number.
        line: usize,
        /// The offending line.
        found: String,
    },
    /// The banner names an object or format this reader does not handle.
    #[error("line {line}: unsupported format {found:?}, only 'matrix coordinate' bodies are read")]
    UnsupportedFormat {
        /// 1-based line number.
        line: usize,
        /// The offending token.
        found: String,
    },
    /// The banner names a value field this reader does not handle.
    #[error("line {line}: unsupported field {found:?}, expected real, integer, or pattern")]
    UnsupportedField {
        /// 1-based line number.
        line: usize,
        /// The offending token.
        found: String,
    },
    /// The banner names a symmetry class this reader does not handle.
    #[error("line {line}: unsupported symmetry {found:?}, expected general or symmetric")]
    UnsupportedSymmetry {
        /// 1-based line number.
        line: usize,
        /// The offending token.
        found: String,
    },
    /// No size line followed the header and comments.
    #[error("line {line}: input ended before the size line")]
    MissingSizeLine {
        /// 1-based line number just past the end.
        line: usize,
    },
    /// The size line did not hold exactly three non-negative integers.
    #[error("line {line}: malformed size line {found:?}, expected 'rows cols nnz'")]
    MalformedSizeLine {
        /// 1-based line number.
        line: usize,
        /// The offending line.
        found: String,
    },
    /// An entry line had the wrong shape or a malformed number.
    #[error("line {line}: malformed entry {found:?}, expected {expected}")]
    MalformedEntry {
        /// 1-based line number.
        line: usize,
        /// The offending line.
        found: String,
        /// Shape the field type demands.
        expected: &'static str,
    },
    /// An entry's 1-based coordinates fall outside the declared shape.
    #[error("line {line}: entry ({row}, {col}) outside declared {num_rows} x {num_cols} bounds \
             (indices are 1-based)")]
    IndexOutOfBounds {
        /// 1-based line number.
        line: usize,
        /// Row index as written (1-based).
        row: usize,
        /// Column index as written (1-based).
        col: usize,
        /// Declared row count.
        num_rows: usize,
        /// Declared column count.
        num_cols: usize,
    },
    /// Fewer entries than the size line declared.
    #[error("line {line}: input ended after {found} of {expected} declared entries")]
    Truncated {
        /// 1-based line number just past the end.
        line: usize,
        /// Entries declared by the size line.
        expected: usize,
        /// Entries actually present.
        found: usize,
    },
    /// More data lines than the size line declared.
    #[error("line {line}: data past the {expected} declared entries")]
    TrailingData {
        /// 1-based line number.
        line: usize,
        /// Entries declared by the size line.
        expected: usize,
    },
    /// A declared-symmetric body violated symmetry or entry invariants.
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    /// The file could not be read.
    #[error("reading {path}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
}

/// A parsed coordinate body plus what the banner declared about it.
#[derive(Debug, Clone)]
pub struct ParsedMatrixMarket {
    /// Entries exactly as stored in the file (0-based).
    pub coo: CooMatrix,
    /// Whether the banner declared `symmetric`.
    pub symmetric: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ValueField {
    Real,
    Integer,
    Pattern,
}

fn parse_banner(line_no: usize, line: &str) -> Result<(ValueField, bool), MmioError> {
    let rest = line.strip_prefix("%%").ok_or_else(|| MmioError::MalformedHeader {
        line: line_no,
        found: line.to_string(),
    })?;
    let tokens: Vec<String> = rest.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "matrixmarket" {
        return Err(MmioError::MalformedHeader { line: line_no, found: line.to_string() });
    }
    if tokens[1] != "matrix" {
        return Err(MmioError::UnsupportedFormat { line: line_no, found: tokens[1].clone() });
    }
    if tokens[2] != "coordinate" {
        return Err(MmioError::UnsupportedFormat { line: line_no, found: tokens[2].clone() });
    }
    let field = match tokens[3].as_str() {
        "real" => ValueField::Real,
        "integer" => ValueField::Integer,
        "pattern" => ValueField::Pattern,
        other => {
            return Err(MmioError::UnsupportedField { line: line_no, found: other.to_string() })
        }
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => {
            return Err(MmioError::UnsupportedSymmetry { line: line_no, found: other.to_string() })
        }
    };
    Ok((field, symmetric))
}

fn is_skippable(line: &str) -> bool {
    let trimmed = line.trim_start();
    trimmed.is_empty() || trimmed.starts_with('%')
}

/// Advances to the next line that is neither blank nor a comment, tracking
/// the number of the last line consumed so end-of-input errors can point
/// just past it.
fn next_content<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    last_line: &mut usize,
) -> Option<(usize, &'a str)> {
    for (no, line) in lines {
        *last_line = no;
        if !is_skippable(line) {
            return Some((no, line));
        }
    }
    None
}

fn parse_size_line(line_no: usize, line: &str) -> Result<(usize, usize, usize), MmioError> {
    let malformed =
        || MmioError::MalformedSizeLine { line: line_no, found: line.trim().to_string() };
    let mut numbers = line.split_whitespace().map(|t| t.parse::<usize>());
    let rows = numbers.next().ok_or_else(malformed)?.map_err(|_| malformed())?;
    let cols = numbers.next().ok_or_else(malformed)?.map_err(|_| malformed())?;
    let nnz = numbers.next().ok_or_else(malformed)?.map_err(|_| malformed())?;
    if numbers.next().is_some() {
        return Err(malformed());
    }
    Ok((rows, cols, nnz))
}

/// Parses a Matrix Market coordinate body into an entry list.
///
/// Pattern bodies materialize value `1.0` per entry; integer bodies parse
/// their values as floating point. Comment lines starting with `%` and blank
/// lines are skipped anywhere. The declared entry count is enforced exactly,
/// in both directions.
///
/// # Errors
///
/// A [`MmioError`] naming the offending 1-based line.
pub fn parse_matrix_market(text: &str) -> Result<ParsedMatrixMarket, MmioError> {
    let mut lines = text.lines().enumerate().map(|(i, line)| (i + 1, line));
    let mut line_count = 0;

    // The banner itself starts with '%', so it must be taken raw, before
    // comment skipping applies.
    let mut first = None;
    for (no, line) in lines.by_ref() {
        line_count = no;
        if !line.trim().is_empty() {
            first = Some((no, line));
            break;
        }
    }
    let (banner_no, banner) = first.ok_or(MmioError::EmptyInput)?;
    let (field, symmetric) = parse_banner(banner_no, banner)?;

    let (size_no, size_line) = next_content(&mut lines, &mut line_count)
        .ok_or(MmioError::MissingSizeLine { line: line_count + 1 })?;
    let (num_rows, num_cols, nnz) = parse_size_line(size_no, size_line)?;

    let expected_shape = match field {
        ValueField::Pattern => "'row col'",
        ValueField::Real | ValueField::Integer => "'row col value'",
    };
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz);
    while entries.len() < nnz {
        let Some((no, line)) = next_content(&mut lines, &mut line_count) else {
            return Err(MmioError::Truncated {
                line: line_count + 1,
                expected: nnz,
                found: entries.len(),
            });
        };
        let malformed = || MmioError::MalformedEntry {
            line: no,
            found: line.trim().to_string(),
            expected: expected_shape,
        };
        let mut tokens = line.split_whitespace();
        let row: usize = tokens.next().ok_or_else(malformed)?.parse().map_err(|_| malformed())?;
        let col: usize = tokens.next().ok_or_else(malformed)?.parse().map_err(|_| malformed())?;
        let value = match field {
            ValueField::Pattern => 1.0,
            ValueField::Real | ValueField::Integer => {
                let token = tokens.next().ok_or_else(malformed)?;
                let value: f64 = token.parse().map_err(|_| malformed())?;
                value
            }
        };
        if tokens.next().is_some() {
            return Err(malformed());
        }
        if row == 0 || row > num_rows || col == 0 || col > num_cols {
            return Err(MmioError::IndexOutOfBounds { line: no, row, col, num_rows, num_cols });
        }
        entries.push((row - 1, col - 1, value));
    }
    if let Some((no, _)) = next_content(&mut lines, &mut line_count) {
        return Err(MmioError::TrailingData { line: no, expected: nnz });
    }

    let coo = CooMatrix::with_entries(num_rows, num_cols, entries)?;
    Ok(ParsedMatrixMarket { coo, symmetric })
}

/// Reads and parses a Matrix Market file.
///
/// # Errors
///
/// [`MmioError::Io`] for filesystem failures, otherwise as
/// [`parse_matrix_market`].
pub fn read_matrix_market(path: &Path) -> Result<ParsedMatrixMarket, MmioError> {
    let text = fs::read_to_string(path)
        .map_err(|source| MmioError::Io { path: path.display().to_string(), source })?;
    parse_matrix_market(&text)
}

/// Reads a Matrix Market file straight into canonical CSR: parse, apply the
/// declared symmetry, then sort and sum duplicates.
///
/// # Errors
///
/// As [`read_matrix_market`], plus matrix integrity errors from the
/// symmetric expansion.
pub fn read_matrix_market_csr(path: &Path) -> Result<CsrMatrix, MmioError> {
    let parsed = read_matrix_market(path)?;
    let full = expand_symmetric(&parsed.coo, parsed.symmetric)?;
    Ok(coo_to_csr(&full))
}
