//! Matrix Market coordinate files (`real`, `general` or `symmetric`).
//!
//! Indices are 1-based on disk. Duplicate entries are summed. Symmetric files
//! hold the lower triangle and are expanded on read. Values are written in
//! shortest round-trip form, so write-then-read reproduces a matrix exactly.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub fn read_matrix_market(path: &Path) -> Result<SparseMatrix> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_market(file, path)
}

/// Parse from any reader; `path` only labels errors.
pub fn parse_matrix_market(reader: impl Read, path: &Path) -> Result<SparseMatrix> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(reader).lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((no, Ok(text))) => Ok(Some((no, text))),
            Some((_, Err(source))) => Err(Error::Io {
                path: path.to_path_buf(),
                source,
            }),
        }
    };

    let (no, header) = next_line()?.ok_or_else(|| err(1, "empty file".into()))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(err(no, format!("expected '%%MatrixMarket matrix coordinate real general|symmetric', got '{header}'")));
    }
    if tokens[3] != "real" {
        return Err(err(no, format!("unsupported field '{}', only 'real' is accepted", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(no, format!("unsupported symmetry '{other}'"))),
    };

    let data_line = |next: &mut dyn FnMut() -> Result<Option<(usize, String)>>| -> Result<Option<(usize, String)>> {
        while let Some((no, text)) = next()? {
            let t = text.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some((no, t.to_string())));
            }
        }
        Ok(None)
    };

    let (no, size) = data_line(&mut next_line)?.ok_or_else(|| err(no, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(no, format!("bad size line '{size}': {e}")))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(no, format!("size line needs 'rows cols entries', got '{size}'")));
    };
    if symmetric && nrows != ncols {
        return Err(err(no, format!("symmetric matrix must be square, got {nrows}×{ncols}")));
    }

    let mut trips = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut last_no = no;
    for k in 0..nnz {
        let (no, text) = data_line(&mut next_line)?
            .ok_or_else(|| err(last_no + 1, format!("file ends after {k} of {nnz} entries")))?;
        last_no = no;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(err(no, format!("expected 'row col value', got '{text}'")));
        }
        let idx = |s: &str, bound: usize, what: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|e| err(no, format!("bad {what} index '{s}': {e}")))?;
            if v == 0 || v > bound {
                return Err(err(no, format!("{what} index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        let i = idx(fields[0], nrows, "row")?;
        let j = idx(fields[1], ncols, "column")?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|e| err(no, format!("bad value '{}': {e}", fields[2])))?;
        if symmetric {
            if j > i {
                return Err(err(no, format!("symmetric file has upper-triangle entry ({}, {})", i + 1, j + 1)));
            }
            if i != j {
                trips.push((j, i, v));
            }
        }
        trips.push((i, j, v));
    }
    if let Some((no, text)) = data_line(&mut next_line)? {
        return Err(err(no, format!("unexpected data after {nnz} entries: '{text}'")));
    }
    SparseMatrix::from_triplets(nrows, ncols, trips)
}

pub fn matrix_market_string(a: &SparseMatrix) -> String {
    let mut s = String::with_capacity(32 * (a.nnz() + 2));
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), a.nnz());
    for (i, j, v) in a.triplets() {
        let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
    }
    s
}

pub fn write_matrix_market(path: &Path, a: &SparseMatrix) -> Result<()> {
    std::fs::write(path, matrix_market_string(a)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Dense blocks are written in coordinate form with exact zeros omitted.
pub fn write_dense_matrix_market(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    write_matrix_market(path, &SparseMatrix::from_dense(a, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SparseMatrix> {
        parse_matrix_market(text.as_bytes(), Path::new("mem.mtx"))
    }

    #[test]
    fn one_by_one() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 5.0\n").unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_element(1, 1, 5.0));
    }

    #[test]
    fn symmetric_expansion() {
        let a = parse("%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 1\n2 1 7\n2 2 3\n").unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 7.0, 7.0, 3.0]));
    }

    #[test]
    fn duplicates_sum() {
        let a = parse("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 2\n1 1 3\n").unwrap();
        assert_eq!(a.get(0, 0), 5.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("%%MatrixMarket matrix array real general\n", 1),
            ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", 3),
            ("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n\n1 2 x\n", 5),
            ("%%MatrixMarket matrix coordinate real general\n2 2\n", 2),
            ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", 3),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn truncated_file() {
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn round_trip_is_exact() {
        let a = SparseMatrix::from_triplets(
            3,
            4,
            [(0, 0, 0.1), (2, 3, -1.0 / 3.0), (1, 2, 1e-300), (2, 0, 6.02214076e23)],
        )
        .unwrap();
        let back = parse(&matrix_market_string(&a)).unwrap();
        assert_eq!(a, back);
    }
}
