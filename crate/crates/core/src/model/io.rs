//! Measurement CSV (`n,m,t_ms`) and length-pair TSV (`n\tm_real`) formats.

use std::io::{Read, Write};

use thiserror::Error;

use super::{LatencySample, LengthPair};

/// A malformed file. `line` is the 1-based line in the input, header included.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {reason}")]
pub struct FormatError {
    pub line: u64,
    pub reason: String,
}

impl FormatError {
    fn new(line: u64, reason: impl Into<String>) -> Self {
        Self {
            line,
            reason: reason.into(),
        }
    }
}

fn reader<R: Read>(input: R, delimiter: u8) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), FormatError> {
    let header = rdr
        .headers()
        .map_err(|e| FormatError::new(1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(FormatError::new(
            1,
            format!("expected header {:?}, found {:?}", expected, got),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    line: u64,
) -> Result<T, FormatError> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| FormatError::new(line, format!("missing field '{name}'")))?;
    raw.parse()
        .map_err(|_| FormatError::new(line, format!("cannot parse {name} from {raw:?}")))
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord), FormatError>> + '_ {
    rdr.records().map(move |r| {
        let rec = r.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            FormatError::new(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(FormatError::new(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        Ok((line, rec))
    })
}

pub fn read_samples<R: Read>(input: R) -> Result<Vec<LatencySample>, FormatError> {
    let mut rdr = reader(input, b',');
    check_header(&mut rdr, &["n", "m", "t_ms"])?;
    let mut out = Vec::new();
    for item in records(&mut rdr, 3) {
        let (line, rec) = item?;
        let n: u32 = field(&rec, 0, "n", line)?;
        let m: u32 = field(&rec, 1, "m", line)?;
        let t: f64 = field(&rec, 2, "t_ms", line)?;
        if n < 1 || m < 1 {
            return Err(FormatError::new(line, "n and m must be >= 1"));
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(FormatError::new(line, format!("t_ms must be > 0, got {t}")));
        }
        out.push(LatencySample { n, m, t });
    }
    Ok(out)
}

pub fn write_samples<W: Write>(out: W, samples: &[LatencySample]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["n", "m", "t_ms"])?;
    for s in samples {
        w.write_record([s.n.to_string(), s.m.to_string(), s.t.to_string()])?;
    }
    w.flush()
}

pub fn read_pairs<R: Read>(input: R) -> Result<Vec<LengthPair>, FormatError> {
    let mut rdr = reader(input, b'\t');
    check_header(&mut rdr, &["n", "m_real"])?;
    let mut out = Vec::new();
    for item in records(&mut rdr, 2) {
        let (line, rec) = item?;
        let n: u32 = field(&rec, 0, "n", line)?;
        let m_real: u32 = field(&rec, 1, "m_real", line)?;
        out.push(LengthPair { n, m_real });
    }
    Ok(out)
}

pub fn write_pairs<W: Write>(out: W, pairs: &[LengthPair]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["n", "m_real"])?;
    for p in pairs {
        w.write_record([p.n.to_string(), p.m_real.to_string()])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_roundtrip_and_bytes() {
        let s = vec![
            LatencySample {
                n: 3,
                m: 4,
                t: 12.5,
            },
            LatencySample {
                n: 10,
                m: 9,
                t: 0.1 + 0.2,
            },
        ];
        let mut buf = Vec::new();
        write_samples(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,m,t_ms\n3,4,12.5\n"));
        assert!(!text.contains('\r'));
        assert_eq!(read_samples(&buf[..]).unwrap(), s);
    }

    #[test]
    fn samples_reject_bad_rows() {
        let err = read_samples("n,m,t_ms\n1,2,3\n1,2,0\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.reason.contains("t_ms must be > 0"));
        let err = read_samples("n,m,t\n1,2,3\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 1);
        let err = read_samples("n,m,t_ms\n1,x,3\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(read_samples("n,m,t_ms\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let p = vec![
            LengthPair { n: 10, m_real: 12 },
            LengthPair { n: 20, m_real: 18 },
        ];
        let mut buf = Vec::new();
        write_pairs(&mut buf, &p).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "n\tm_real\n10\t12\n20\t18\n"
        );
        assert_eq!(read_pairs(&buf[..]).unwrap(), p);
    }

    #[test]
    fn pairs_malformed_row() {
        let err = read_pairs("n\tm_real\n3\t4\nabc\t5\n".as_bytes()).unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.reason.contains("\"abc\""));
    }
}
