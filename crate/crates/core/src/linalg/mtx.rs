//! Matrix Market coordinate I/O (`real general`, 1-based indices).

use std::io::{BufRead, Write};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

pub const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn write_matrix_market<W: Write>(a: &SparseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for (i, j, v) in a.triplets() {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(input: R) -> Result<SparseMatrix> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty matrix market input".into()))??;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported header: {header}")));
    }
    if tokens[3] != "real" || tokens[4] != "general" {
        return Err(Error::Parse(format!("only 'real general' is supported, got {} {}", tokens[3], tokens[4])));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(Error::Parse(format!("bad size line: {line}")));
                }
                let parse = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
                size = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
                triplets.reserve(size.unwrap().2);
            }
            Some((nrows, ncols, _)) => {
                if fields.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {line}")));
                }
                let i: usize = fields[0].parse().map_err(|e| Error::Parse(format!("{line}: {e}")))?;
                let j: usize = fields[1].parse().map_err(|e| Error::Parse(format!("{line}: {e}")))?;
                let v: f64 = fields[2].parse().map_err(|e| Error::Parse(format!("{line}: {e}")))?;
                if i == 0 || j == 0 || i > nrows || j > ncols {
                    return Err(Error::Parse(format!("entry ({i}, {j}) out of range")));
                }
                triplets.push((i - 1, j - 1, v));
            }
        }
    }
    let (nrows, ncols, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    if triplets.len() != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {}", triplets.len())));
    }
    SparseMatrix::from_triplets(nrows, ncols, &triplets)
}
