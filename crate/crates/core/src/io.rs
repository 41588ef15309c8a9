//! File formats.
//!
//! * Embeddings: `OTSB` magic, then little-endian `u32` version (1), `u32` n,
//!   `u32` d, then `n * d` little-endian `f32` values in row-major order.
//!   Rows get ids `0..n`.
//! * Labels: CSV with header `id,observed` or `id,observed,truth`.
//! * Subset: CSV with header `id,pseudo_label,kept`, one row per training
//!   sample, `kept` in `{0, 1}`.
//!
//! All CSV output is UTF-8 with LF line endings.

use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};

use crate::datamodel::{EmbeddingSet, LabelTable};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"OTSB";
pub const VERSION: u32 = 1;

pub fn write_embeddings<W: Write>(mut w: W, e: &EmbeddingSet) -> Result<()> {
    let (n, d) = (e.len(), e.dim());
    let n32 = u32::try_from(n).map_err(|_| Error::Format("too many rows for the binary format".into()))?;
    let d32 = u32::try_from(d).map_err(|_| Error::Format("too many columns for the binary format".into()))?;
    let mut buf = Vec::with_capacity(16 + 4 * n * d);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&n32.to_le_bytes());
    buf.extend_from_slice(&d32.to_le_bytes());
    for v in e.features().iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingSet> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("embedding file is shorter than its header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic bytes; expected OTSB".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported embedding format version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 4 * n * d {
        return Err(Error::Format(format!(
            "expected {} bytes of features for {n}x{d}, found {}",
            4 * n * d,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let features = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingSet::from_features(features)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn write_labels<W: Write>(w: W, ids: &[u64], labels: &LabelTable) -> Result<()> {
    if ids.len() != labels.len() {
        return Err(Error::LengthMismatch(ids.len(), labels.len()));
    }
    let mut out = csv_writer(w);
    match labels.truth() {
        Some(truth) => {
            out.write_record(["id", "observed", "truth"])?;
            for ((id, o), t) in ids.iter().zip(labels.observed()).zip(truth) {
                out.write_record([id.to_string(), o.to_string(), t.to_string()])?;
            }
        }
        None => {
            out.write_record(["id", "observed"])?;
            for (id, o) in ids.iter().zip(labels.observed()) {
                out.write_record([id.to_string(), o.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a label file. `num_classes` defaults to one more than the largest
/// label seen.
pub fn read_labels<R: Read>(r: R, num_classes: Option<usize>) -> Result<(Vec<u64>, LabelTable)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let has_truth = match headers.iter().collect::<Vec<_>>().as_slice() {
        ["id", "observed"] => false,
        ["id", "observed", "truth"] => true,
        other => {
            return Err(Error::Format(format!(
                "label header must be id,observed[,truth], found {}",
                other.join(",")
            )))
        }
    };
    let mut ids = Vec::new();
    let mut observed = Vec::new();
    let mut truth = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k)
                .ok_or_else(|| Error::Format(format!("label row {} is missing a field", line + 2)))
        };
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::Format(format!("label row {}: `{s}` is not a class index", line + 2)))
        };
        ids.push(
            field(0)?
                .parse()
                .map_err(|_| Error::Format(format!("label row {}: bad id", line + 2)))?,
        );
        observed.push(parse(field(1)?)?);
        if has_truth {
            truth.push(parse(field(2)?)?);
        }
    }
    let k = num_classes.unwrap_or_else(|| observed.iter().chain(&truth).max().map_or(1, |m| m + 1));
    let table = LabelTable::new(observed, has_truth.then_some(truth), k)?;
    Ok((ids, table))
}

/// One row of a subset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetRow {
    pub id: u64,
    pub pseudo_label: usize,
    pub kept: bool,
}

pub fn write_subset<W: Write>(w: W, ids: &[u64], pseudo: &[usize], kept: &[bool]) -> Result<()> {
    if ids.len() != pseudo.len() || ids.len() != kept.len() {
        return Err(Error::LengthMismatch(ids.len(), pseudo.len().min(kept.len())));
    }
    let mut out = csv_writer(w);
    out.write_record(["id", "pseudo_label", "kept"])?;
    for ((id, p), k) in ids.iter().zip(pseudo).zip(kept) {
        out.write_record([id.to_string(), p.to_string(), u8::from(*k).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_subset<R: Read>(r: R) -> Result<Vec<SubsetRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "pseudo_label", "kept"] {
        return Err(Error::Format("subset header must be id,pseudo_label,kept".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Format(format!("subset row {} is malformed", line + 2));
        if rec.len() != 3 {
            return Err(bad());
        }
        let kept = match &rec[2] {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        rows.push(SubsetRow {
            id: rec[0].parse().map_err(|_| bad())?,
            pseudo_label: rec[1].parse().map_err(|_| bad())?,
            kept,
        });
    }
    Ok(rows)
}

/// Headerless numeric CSV, one matrix row per line.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if cols.is_some_and(|c| c != rec.len()) {
            return Err(Error::Format(format!("matrix row {} has {} fields", rows + 1, rec.len())));
        }
        cols = Some(rec.len());
        for f in rec.iter() {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("`{f}` is not a number")))?,
            );
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::EmptyInput("matrix file has no rows"))?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_matrix_csv<W: Write>(w: W, m: ArrayView2<'_, f64>) -> Result<()> {
    let mut out = csv_writer(w);
    for row in m.rows() {
        out.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    out.flush()?;
    Ok(())
}
