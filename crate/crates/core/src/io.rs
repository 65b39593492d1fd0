//! Plain-text and binary dumps: CSV tables prefixed by `# key=value` lines,
//! and a little-endian binary matrix format.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `# key=value` lines written before a CSV table.
pub type Preamble = Vec<(String, String)>;

/// Identifies where a dumped matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatrixHeader {
    pub p: u64,
    pub n: u64,
    pub s1: u64,
    pub s2: u64,
    pub seed: u64,
}

impl MatrixHeader {
    pub fn preamble(&self) -> Preamble {
        [("p", self.p), ("n", self.n), ("s1", self.s1), ("s2", self.s2), ("seed", self.seed)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

const MAGIC: &[u8; 8] = b"HCMAT\x00\x00\x01";

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn write_preamble<W: Write>(w: &mut W, preamble: &[(String, String)]) -> Result<()> {
    for (k, v) in preamble {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Writes `header` then `rows` as a CSV table. Floats use the shortest
/// representation that round-trips.
pub fn write_table<W: Write>(
    mut w: W,
    preamble: &[(String, String)],
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    write_preamble(&mut w, preamble)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Row-major CSV dump without a column header.
pub fn write_matrix_csv<W: Write>(mut w: W, m: &DMatrix<f64>, preamble: &[(String, String)]) -> Result<()> {
    write_preamble(&mut w, preamble)?;
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in m.row_iter() {
        out.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a numeric CSV matrix; `#` lines and blank lines are skipped.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let mut data = Vec::new();
    let mut cols = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(Error::Parse(format!("row {} has {} fields, expected {c}", line + 1, rec.len())))
            }
            _ => {}
        }
        for f in rec.iter() {
            data.push(f.parse::<f64>().map_err(|e| Error::Parse(format!("row {}: {f:?}: {e}", line + 1)))?);
        }
    }
    let cols = cols.ok_or(Error::EmptySample)?;
    Ok(DMatrix::from_row_slice(data.len() / cols, cols, &data))
}

/// Binary dump: magic, then `rows, cols, p, n, s1, s2, seed` as u64 and the
/// entries row-major as f64, all little-endian.
pub fn write_matrix_binary<W: Write>(mut w: W, m: &DMatrix<f64>, header: &MatrixHeader) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [m.nrows() as u64, m.ncols() as u64, header.p, header.n, header.s1, header.s2, header.seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    for row in m.row_iter() {
        for v in row.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<(DMatrix<f64>, MatrixHeader)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not a binary matrix dump".into()));
    }
    let mut word = [0u8; 8];
    let mut fields = [0u64; 7];
    for f in fields.iter_mut() {
        r.read_exact(&mut word)?;
        *f = u64::from_le_bytes(word);
    }
    let [rows, cols, p, n, s1, s2, seed] = fields;
    let mut data = Vec::with_capacity((rows * cols) as usize);
    for _ in 0..rows * cols {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Ok((DMatrix::from_row_slice(rows as usize, cols as usize, &data), MatrixHeader { p, n, s1, s2, seed }))
}

/// `(index, eigenvalue)` with 1-based indices.
pub fn write_spectrum_csv<W: Write>(w: W, values: &[f64], preamble: &[(String, String)]) -> Result<()> {
    write_table(
        w,
        preamble,
        &["index", "eigenvalue"],
        values.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )
}

/// Single-column CSV.
pub fn write_column_csv<W: Write>(w: W, name: &str, values: &[f64], preamble: &[(String, String)]) -> Result<()> {
    write_table(w, preamble, &[name], values.iter().map(|v| vec![v.to_string()]))
}

/// `# key=value` lines at the top of a text dump.
pub fn read_preamble<R: BufRead>(r: R) -> Result<Preamble> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix("# ") else { break };
        if let Some((k, v)) = rest.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-300, std::f64::consts::PI, 0.0, -7.125e12])
    }

    #[test]
    fn csv_round_trip() {
        let header = MatrixHeader { p: 2, n: 3, s1: 0, s2: 1, seed: 42 };
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &sample(), &header.preamble()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# p=2\n# n=3\n# s1=0\n# s2=1\n# seed=42\n"));
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), sample());
        let pre = read_preamble(buf.as_slice()).unwrap();
        assert_eq!(pre[4], ("seed".to_string(), "42".to_string()));
    }

    #[test]
    fn binary_round_trip() {
        let header = MatrixHeader { p: 2, n: 3, s1: 1, s2: 2, seed: u64::MAX };
        let mut buf = Vec::new();
        write_matrix_binary(&mut buf, &sample(), &header).unwrap();
        assert_eq!(buf.len(), 8 + 7 * 8 + 6 * 8);
        let (m, h) = read_matrix_binary(buf.as_slice()).unwrap();
        assert_eq!(m, sample());
        assert_eq!(h, header);
        assert!(read_matrix_binary(&b"garbage!"[..]).is_err());
    }

    #[test]
    fn csv_reader_errors() {
        assert!(matches!(read_matrix_csv("1,2\n3\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_matrix_csv("1,x\n".as_bytes()), Err(Error::Parse(_))));
        assert!(matches!(read_matrix_csv("# only\n".as_bytes()), Err(Error::EmptySample)));
        assert_eq!(
            read_matrix_csv(" 1 , 2\n\n3,4\n".as_bytes()).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
        );
    }

    #[test]
    fn spectrum_and_column() {
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &[3.0, 0.5], &[("seed".into(), "1".into())]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# seed=1\nindex,eigenvalue\n1,3\n2,0.5\n");
        let mut buf = Vec::new();
        write_column_csv(&mut buf, "x", &[0.25], &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x\n0.25\n");
    }
}
