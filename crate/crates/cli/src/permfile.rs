//! Permutation files: one integer per line, 0-based, line k giving the new
//! index of old index k. External ordering tools (graph partitioners, custom
//! scripts) hand their results to the simulator through this format.
//!
//! The writer emits a leading comment line `# new_index_of old->new,
//! 0-based`; the reader skips `#` comments and blank lines, so files
//! round-trip. Validation errors name the offending physical line.

use std::fs;
use std::io::Write;
use std::path::Path;

use migsim_core::reorder::Permutation;
use thiserror::Error;

/// Why a permutation file failed to load.
#[derive(Debug, Error)]
pub enum PermFileError {
    /// The file holds a different number of indices than the matrix needs.
    #[error("expected {expected} permutation entries, found {found}")]
    WrongLineCount {
        /// Entries the caller required.
        expected: usize,
        /// Entries actually present.
        found: usize,
    },
    /// A data line is not a single non-negative integer.
    #[error("line {line}: malformed permutation entry {found:?}, expected one integer")]
    MalformedLine {
        /// 1-based line number.
        line: usize,
        /// The offending line.
        found: String,
    },
    /// An index falls outside `[0, size)`.
    #[error("line {line}: index {value} out of range for a permutation of {size}")]
    OutOfRange {
        /// 1-based line number.
        line: usize,
        /// The offending index.
        value: usize,
        /// Permutation size.
        size: usize,
    },
    /// An index appears twice, so the mapping is not a bijection.
    #[error("line {line}: repeated index {value}")]
    Duplicate {
        /// 1-based line number of the second occurrence.
        line: usize,
        /// The repeated index.
        value: usize,
    },
    /// The file could not be read or written.
    #[error("{path}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        #[source]
        source: std::io::Error,
    },
}

/// Parses permutation text: line k (after dropping `#` comments and blanks)
/// is the new index of old index k.
///
/// # Errors
///
/// [`PermFileError::WrongLineCount`] when the entry count is not
/// `expected_size`; [`PermFileError::MalformedLine`],
/// [`PermFileError::OutOfRange`], or [`PermFileError::Duplicate`] naming the
/// offending physical line otherwise.
pub fn load_permutation(text: &str, expected_size: usize) -> Result<Permutation, PermFileError> {
    let data_lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, line)| (i + 1, line.trim()))
        .filter(|(_, line)| !line.is_empty() && !line.starts_with('#'))
        .collect();
    if data_lines.len() != expected_size {
        return Err(PermFileError::WrongLineCount {
            expected: expected_size,
            found: data_lines.len(),
        });
    }
    let mut new_index_of = Vec::with_capacity(expected_size);
    let mut seen = vec![false; expected_size];
    for (no, line) in data_lines {
        let value: usize = line
            .parse()
            .map_err(|_| PermFileError::MalformedLine { line: no, found: line.to_string() })?;
        if value >= expected_size {
            return Err(PermFileError::OutOfRange { line: no, value, size: expected_size });
        }
        if seen[value] {
            return Err(PermFileError::Duplicate { line: no, value });
        }
        seen[value] = true;
        new_index_of.push(value);
    }
    Ok(Permutation::from_new_indices(new_index_of)
        .expect("bijection enforced during line validation"))
}

/// Writes a permutation in the file format [`load_permutation`] reads,
/// starting with the explanatory comment line.
///
/// # Errors
///
/// Propagates the underlying IO error.
pub fn write_permutation(out: &mut dyn Write, p: &Permutation) -> std::io::Result<()> {
    writeln!(out, "# new_index_of old->new, 0-based")?;
    for old in 0..p.len() {
        writeln!(out, "{}", p.new_index_of(old))?;
    }
    Ok(())
}

/// Loads a permutation file from disk.
///
/// # Errors
///
/// [`PermFileError::Io`] for filesystem failures, otherwise as
/// [`load_permutation`].
pub fn read_permutation_file(path: &Path, expected_size: usize) -> Result<Permutation, PermFileError> {
    let text = fs::read_to_string(path)
        .map_err(|source| PermFileError::Io { path: path.display().to_string(), source })?;
    load_permutation(&text, expected_size)
}

/// Writes a permutation file to disk.
///
/// # Errors
///
/// [`PermFileError::Io`] carrying the path.
pub fn write_permutation_file(path: &Path, p: &Permutation) -> Result<(), PermFileError> {
    let mut buffer = Vec::new();
    write_permutation(&mut buffer, p).expect("writing to a Vec cannot fail");
    fs::write(path, buffer)
        .map_err(|source| PermFileError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_swap_loads() {
        let p = load_permutation("1\n0\n", 2).unwrap();
        assert_eq!(p.as_slice(), &[1, 0]);
    }

    #[test]
    fn repeated_entry_names_second_line() {
        let err = load_permutation("0\n0\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::Duplicate { line: 2, value: 0 }));
    }

    #[test]
    fn wrong_length_is_reported_both_ways() {
        let err = load_permutation("0\n1\n2\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::WrongLineCount { expected: 2, found: 3 }));
        let err = load_permutation("0\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::WrongLineCount { expected: 2, found: 1 }));
    }

    #[test]
    fn out_of_range_and_malformed_name_lines() {
        let err = load_permutation("0\n5\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::OutOfRange { line: 2, value: 5, size: 2 }));
        let err = load_permutation("0\nx\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::MalformedLine { line: 2, .. }));
        let err = load_permutation("0 1\n1\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn comments_shift_reported_line_numbers() {
        let err = load_permutation("# header\n0\n0\n", 2).unwrap_err();
        assert!(matches!(err, PermFileError::Duplicate { line: 3, value: 0 }));
    }

    #[test]
    fn writer_emits_header_and_round_trips() {
        let p = Permutation::from_new_indices(vec![2, 0, 1]).unwrap();
        let mut text = Vec::new();
        write_permutation(&mut text, &p).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.starts_with("# new_index_of old->new, 0-based\n"));
        let back = load_permutation(&text, 3).unwrap();
        assert_eq!(back.as_slice(), p.as_slice());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("order.perm");
        let p = Permutation::from_new_indices(vec![3, 1, 0, 2]).unwrap();
        write_permutation_file(&path, &p).unwrap();
        let back = read_permutation_file(&path, 4).unwrap();
        assert_eq!(back.as_slice(), p.as_slice());
    }
}
