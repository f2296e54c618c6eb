//! Matrix Market coordinate/array text import and export, used for
//! debugging dumps and the dense-oracle cross checks.

use super::CsrMatrix;
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub fn write_matrix_market(path: &Path, m: &CsrMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(f, "{} {} {}", m.n_rows, m.n_cols, m.nnz())?;
    for r in 0..m.n_rows {
        let (cols, vals) = m.row(r);
        for (c, v) in cols.iter().zip(vals) {
            writeln!(f, "{} {} {:.17e}", r + 1, *c as usize + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty matrix market file"))??;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(Error::invalid(format!("unsupported header: {header}")));
    }
    let symmetric = header.contains("symmetric");
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        if dims.is_none() {
            if parts.len() != 3 {
                return Err(Error::invalid("malformed size line"));
            }
            dims = Some((
                parse(parts[0])?,
                parse(parts[1])?,
                parse(parts[2])?,
            ));
            continue;
        }
        if parts.len() != 3 {
            return Err(Error::invalid(format!("malformed entry: {t}")));
        }
        let r: usize = parse(parts[0])?;
        let c: usize = parse(parts[1])?;
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| Error::invalid(format!("bad value: {}", parts[2])))?;
        triplets.push((r - 1, c - 1, v));
        if symmetric && r != c {
            triplets.push((c - 1, r - 1, v));
        }
    }
    let (nr, nc, _) = dims.ok_or_else(|| Error::invalid("missing size line"))?;
    Ok(CsrMatrix::from_triplets(nr, nc, &triplets))
}

pub fn write_vector_market(path: &Path, v: &[f64]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "%%MatrixMarket matrix array real general")?;
    writeln!(f, "{} 1", v.len())?;
    for x in v {
        writeln!(f, "{x:.17e}")?;
    }
    Ok(())
}

pub fn read_vector_market(path: &Path) -> Result<Vec<f64>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty vector file"))??;
    if !header.starts_with("%%MatrixMarket matrix array real") {
        return Err(Error::invalid(format!("unsupported header: {header}")));
    }
    let mut n: Option<usize> = None;
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        if n.is_none() {
            let parts: Vec<&str> = t.split_whitespace().collect();
            n = Some(parse(parts[0])?);
            continue;
        }
        out.push(
            t.parse()
                .map_err(|_| Error::invalid(format!("bad value: {t}")))?,
        );
    }
    Ok(out)
}

fn parse(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::invalid(format!("bad integer: {s}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_roundtrip() {
        let a = CsrMatrix::from_triplets(
            3,
            4,
            &[(0, 0, 1.5), (1, 3, -2.25), (2, 1, 1e-17), (2, 2, 3.0)],
        );
        let dir = std::env::temp_dir().join("kfp_mm_test");
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.mtx");
        write_matrix_market(&p, &a).unwrap();
        let b = read_matrix_market(&p).unwrap();
        assert_eq!(a, b);

        let v = vec![1.0, -2.5, 3.75];
        let pv = dir.join("v.mtx");
        write_vector_market(&pv, &v).unwrap();
        assert_eq!(read_vector_market(&pv).unwrap(), v);
    }
}
