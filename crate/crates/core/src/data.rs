//! Two-domain datasets and their CSV representation.
//!
//! File layout: header `domain,xc_0,..,y,xe_0,..`; one row per observation,
//! `domain` is `0` (labelled source) or `1` (target). Unlabelled target rows
//! leave `y` empty.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numeric::fmt_g17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledRow {
    pub x_c: Vec<f64>,
    pub y: f64,
    pub x_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabelledRow {
    pub x_c: Vec<f64>,
    pub x_e: Vec<f64>,
}

impl LabelledRow {
    pub fn new(x_c: Vec<f64>, y: f64, x_e: Vec<f64>) -> Self {
        Self { x_c, y, x_e }
    }

    pub fn features(&self) -> UnlabelledRow {
        UnlabelledRow { x_c: self.x_c.clone(), x_e: self.x_e.clone() }
    }
}

/// Labelled source sample plus unlabelled target sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub source: Vec<LabelledRow>,
    pub target: Vec<UnlabelledRow>,
    pub task: Task,
}

impl DomainDataset {
    /// Builds a dataset, checking that it is non-empty and dimensionally consistent.
    pub fn new(source: Vec<LabelledRow>, target: Vec<UnlabelledRow>, task: Task) -> Result<Self> {
        let ds = Self { source, target, task };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    /// `(dim x_C, dim x_E)` taken from the first source row.
    pub fn dims(&self) -> (usize, usize) {
        self.source
            .first()
            .map(|r| (r.x_c.len(), r.x_e.len()))
            .unwrap_or((0, 0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::EmptySample("source sample must contain at least one row"));
        }
        let (dc, de) = self.dims();
        let rows = self
            .source
            .iter()
            .map(|r| (&r.x_c, &r.x_e))
            .chain(self.target.iter().map(|r| (&r.x_c, &r.x_e)));
        for (xc, xe) in rows {
            if xc.len() != dc {
                return Err(Error::DimensionMismatch { expected: dc, got: xc.len() });
            }
            if xe.len() != de {
                return Err(Error::DimensionMismatch { expected: de, got: xe.len() });
            }
        }
        if self.task == Task::Classification {
            if let Some(r) = self.source.iter().find(|r| r.y != 0.0 && r.y != 1.0) {
                return Err(Error::Data(format!("classification label must be 0 or 1, got {}", r.y)));
            }
        }
        Ok(())
    }

    /// Same source sample with a different target sample.
    pub fn with_target(&self, target: Vec<UnlabelledRow>) -> Self {
        Self { source: self.source.clone(), target, task: self.task }
    }
}

fn header(dc: usize, de: usize) -> String {
    let mut cols = vec!["domain".to_string()];
    cols.extend((0..dc).map(|i| format!("xc_{i}")));
    cols.push("y".into());
    cols.extend((0..de).map(|i| format!("xe_{i}")));
    cols.join(",")
}

fn write_row<W: Write>(w: &mut W, domain: u8, x_c: &[f64], y: Option<f64>, x_e: &[f64]) -> Result<()> {
    let mut line = String::with_capacity(32 * (x_c.len() + x_e.len() + 2));
    line.push_str(if domain == 0 { "0" } else { "1" });
    for v in x_c {
        line.push(',');
        line.push_str(&fmt_g17(*v));
    }
    line.push(',');
    if let Some(y) = y {
        line.push_str(&fmt_g17(y));
    }
    for v in x_e {
        line.push(',');
        line.push_str(&fmt_g17(*v));
    }
    line.push('\n');
    w.write_all(line.as_bytes())?;
    Ok(())
}

/// Writes source rows (domain 0) followed by unlabelled target rows (domain 1).
pub fn write_dataset<W: Write>(w: &mut W, ds: &DomainDataset) -> Result<()> {
    let (dc, de) = ds.dims();
    writeln!(w, "{}", header(dc, de))?;
    for r in &ds.source {
        write_row(w, 0, &r.x_c, Some(r.y), &r.x_e)?;
    }
    for r in &ds.target {
        write_row(w, 1, &r.x_c, None, &r.x_e)?;
    }
    Ok(())
}

/// Writes labelled rows, all tagged with `domain`.
pub fn write_labelled<W: Write>(w: &mut W, domain: u8, rows: &[LabelledRow]) -> Result<()> {
    let (dc, de) = rows.first().map(|r| (r.x_c.len(), r.x_e.len())).unwrap_or((0, 0));
    writeln!(w, "{}", header(dc, de))?;
    for r in rows {
        write_row(w, domain, &r.x_c, Some(r.y), &r.x_e)?;
    }
    Ok(())
}

/// One parsed row of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub domain: u8,
    pub x_c: Vec<f64>,
    pub y: Option<f64>,
    pub x_e: Vec<f64>,
}

/// Parses any file in the dataset layout.
pub fn read_rows<R: BufRead>(r: R) -> Result<Vec<CsvRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let headers = reader.headers()?.clone();
    let mut xc_idx = Vec::new();
    let mut xe_idx = Vec::new();
    let mut y_idx = None;
    let mut d_idx = None;
    for (i, h) in headers.iter().enumerate() {
        match h.trim() {
            "domain" => d_idx = Some(i),
            "y" => y_idx = Some(i),
            s if s.starts_with("xc_") => xc_idx.push(i),
            s if s.starts_with("xe_") => xe_idx.push(i),
            other => return Err(Error::Data(format!("unexpected column `{other}`"))),
        }
    }
    let d_idx = d_idx.ok_or_else(|| Error::Data("missing `domain` column".into()))?;
    let y_idx = y_idx.ok_or_else(|| Error::Data("missing `y` column".into()))?;

    let parse = |s: &str, line: usize| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Parse { line, msg: format!("non-numeric cell `{s}`") })
    };

    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let domain = match rec.get(d_idx).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(Error::Parse { line, msg: format!("domain must be 0 or 1, got {other:?}") })
            }
        };
        let y_cell = rec.get(y_idx).unwrap_or("").trim();
        let y = if y_cell.is_empty() { None } else { Some(parse(y_cell, line)?) };
        let x_c = xc_idx.iter().map(|&i| parse(&rec[i], line)).collect::<Result<Vec<_>>>()?;
        let x_e = xe_idx.iter().map(|&i| parse(&rec[i], line)).collect::<Result<Vec<_>>>()?;
        rows.push(CsvRow { domain, x_c, y, x_e });
    }
    Ok(rows)
}

/// Reads a training file. Source rows must carry a label; labels on target
/// rows are discarded.
pub fn read_dataset<R: BufRead>(r: R, task: Task) -> Result<DomainDataset> {
    let mut source = Vec::new();
    let mut target = Vec::new();
    for (k, row) in read_rows(r)?.into_iter().enumerate() {
        if row.domain == 0 {
            let y = row.y.ok_or(Error::Parse { line: k + 2, msg: "source row without label".into() })?;
            source.push(LabelledRow::new(row.x_c, y, row.x_e));
        } else {
            target.push(UnlabelledRow { x_c: row.x_c, x_e: row.x_e });
        }
    }
    DomainDataset::new(source, target, task)
}

/// Reads a file where every row must be labelled (e.g. a test set).
pub fn read_labelled<R: BufRead>(r: R) -> Result<Vec<LabelledRow>> {
    read_rows(r)?
        .into_iter()
        .enumerate()
        .map(|(k, row)| {
            let y = row.y.ok_or(Error::Parse { line: k + 2, msg: "row without label".into() })?;
            Ok(LabelledRow::new(row.x_c, y, row.x_e))
        })
        .collect()
}
