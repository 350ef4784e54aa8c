//! Matrix Market and raw binary vector I/O.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
}

/// Writes `a` in coordinate real format. With `Symmetric` only the lower
/// triangle is stored; the matrix must actually be symmetric.
pub fn write_matrix_market<W: Write>(a: &CsrMatrix, sym: MmSymmetry, mut out: W) -> Result<()> {
    if sym == MmSymmetry::Symmetric && !a.is_symmetric() {
        return Err(Error::Parse("matrix is not symmetric".into()));
    }
    let entries: Vec<(usize, usize, f64)> = (0..a.n_rows())
        .flat_map(|i| a.row(i).map(move |(j, v)| (i, j, v)))
        .filter(|&(i, j, _)| sym == MmSymmetry::General || j <= i)
        .collect();
    let kind = match sym {
        MmSymmetry::General => "general",
        MmSymmetry::Symmetric => "symmetric",
    };
    writeln!(out, "%%MatrixMarket matrix coordinate real {kind}")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), entries.len())?;
    for (i, j, v) in entries {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_matrix_market<R: Read>(input: R) -> Result<CsrMatrix> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad header: {header}")));
    }
    if fields[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported format {}", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field {}", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut data = lines.filter(|l| match l {
        Ok(l) => !l.trim().is_empty() && !l.starts_with('%'),
        Err(_) => true,
    });
    let size = data
        .next()
        .ok_or_else(|| Error::Parse("missing size line".into()))??;
    let dims = parse_usizes(&size)?;
    let [n_rows, n_cols, nnz] = dims[..] else {
        return Err(Error::Parse(format!("bad size line: {size}")));
    };
    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    for _ in 0..nnz {
        let line = data
            .next()
            .ok_or_else(|| Error::Parse("fewer entries than declared".into()))??;
        let mut it = line.split_whitespace();
        let (Some(r), Some(c), Some(v)) = (it.next(), it.next(), it.next()) else {
            return Err(Error::Parse(format!("bad entry: {line}")));
        };
        let r: usize = r.parse().map_err(|_| Error::Parse(format!("bad row: {line}")))?;
        let c: usize = c.parse().map_err(|_| Error::Parse(format!("bad column: {line}")))?;
        let v: f64 = v.parse().map_err(|_| Error::Parse(format!("bad value: {line}")))?;
        if r == 0 || c == 0 {
            return Err(Error::Parse(format!("indices are 1-based: {line}")));
        }
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
    }
    CsrMatrix::from_triplets(n_rows, n_cols, &triplets)
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad integer {t}"))))
        .collect()
}

/// Little-endian u64 length followed by little-endian f64 values.
pub fn write_vector_binary<W: Write>(values: &[f64], mut out: W) -> Result<()> {
    out.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_vector_binary<R: Read>(mut input: R) -> Result<Vec<f64>> {
    let mut word = [0u8; 8];
    input.read_exact(&mut word)?;
    let n = u64::from_le_bytes(word) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        input.read_exact(&mut word)?;
        out.push(f64::from_le_bytes(word));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_round_trip() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (2, 2, 0.5)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&a, MmSymmetry::Symmetric, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().ends_with(" 4"));
        assert_eq!(read_matrix_market(&buf[..]).unwrap(), a);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_matrix_market(&b"hello"[..]).is_err());
        assert!(read_matrix_market(&b"%%MatrixMarket matrix array real general\n1 1\n1\n"[..]).is_err());
        let short = b"%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(read_matrix_market(&short[..]).is_err());
    }

    #[test]
    fn binary_vector_round_trip() {
        let v = vec![1.5, -0.0, f64::MAX, 1e-300];
        let mut buf = Vec::new();
        write_vector_binary(&v, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 * v.len());
        let back = read_vector_binary(&buf[..]).unwrap();
        assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
