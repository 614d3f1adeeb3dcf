//! Portable operator and table formats: a JSON header describing the grids
//! and kind, plus a CSV payload holding the dense matrix row by row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ops::{OpKind, OpMatrix, StackedOp};
use crate::scalar::Real;

pub const OPERATOR_FORMAT: &str = "trunctx-operator";
pub const OPERATOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorHeader {
    pub format: String,
    pub version: u32,
    pub kind: OpKind,
    pub source: GridSpec,
    pub target: GridSpec,
    pub rows: usize,
    pub cols: usize,
    /// CSV payload file name, relative to the header.
    pub payload: String,
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`; returns the header path.
pub fn write_operator<T: Real>(op: &OpMatrix<T>, dir: &Path, stem: &str) -> Result<PathBuf> {
    let payload = format!("{stem}.csv");
    let header = OperatorHeader {
        format: OPERATOR_FORMAT.into(),
        version: OPERATOR_FORMAT_VERSION,
        kind: op.kind().clone(),
        source: op.source().spec(),
        target: op.target().spec(),
        rows: op.entries().nrows(),
        cols: op.entries().ncols(),
        payload: payload.clone(),
    };
    let mut w = csv::Writer::from_path(dir.join(&payload))?;
    w.write_record((0..header.cols).map(|k| format!("c{k}")))?;
    let m = op.entries();
    for r in 0..header.rows {
        w.write_record((0..header.cols).map(|c| format!("{}", m[(r, c)])))?;
    }
    w.flush()?;
    let path = dir.join(format!("{stem}.json"));
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, &header)?;
    f.write_all(b"\n")?;
    Ok(path)
}

pub fn read_operator<T: Real>(header_path: &Path) -> Result<OpMatrix<T>> {
    let header: OperatorHeader =
        serde_json::from_reader(BufReader::new(File::open(header_path)?))?;
    if header.format != OPERATOR_FORMAT || header.version != OPERATOR_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported operator format {} v{}",
            header.format, header.version
        )));
    }
    let source = Arc::new(header.source.build::<T>()?);
    let target = Arc::new(header.target.build::<T>()?);
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let mut r = csv::Reader::from_path(dir.join(&header.payload))?;
    let mut data = Vec::with_capacity(header.rows * header.cols);
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != header.cols {
            return Err(Error::Format(format!(
                "row {rows} has {} fields, expected {}",
                rec.len(),
                header.cols
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("bad number {field:?}: {e}")))?;
            data.push(T::lit(v));
        }
        rows += 1;
    }
    if rows != header.rows {
        return Err(Error::Format(format!(
            "payload has {rows} rows, header says {}",
            header.rows
        )));
    }
    let m = DMatrix::from_row_slice(header.rows, header.cols, &data);
    OpMatrix::new(m, source, target, header.kind)
}

/// Writes every component as `<stem>_<j>.{json,csv}`.
pub fn write_stacked<T: Real>(op: &StackedOp<T>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    op.components()
        .iter()
        .enumerate()
        .map(|(j, c)| write_operator(c, dir, &format!("{stem}_{j}")))
        .collect()
}
