use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::IndividualRecord;
use crate::error::{Error, Result};

fn ingest(row: usize, reason: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        reason: reason.into(),
    }
}

/// Parse records from CSV with header `individual_id,time,obs_1,…,obs_d`.
/// Rows of one individual may be interleaved with others but must have
/// increasing times. Row numbers in errors count the header as row 1.
pub fn parse_records<R: Read>(reader: R) -> Result<Vec<IndividualRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| ingest(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("individual_id").ok_or_else(|| ingest(1, "missing column individual_id"))?;
    let time_col = col("time").ok_or_else(|| ingest(1, "missing column time"))?;
    let mut obs_cols = Vec::new();
    while let Some(c) = col(&format!("obs_{}", obs_cols.len() + 1)) {
        obs_cols.push(c);
    }
    if obs_cols.is_empty() {
        return Err(ingest(1, "missing column obs_1"));
    }
    let d = obs_cols.len();

    let mut order: Vec<String> = Vec::new();
    let mut acc: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ingest(row, e.to_string()))?;
        let field = |c: usize, name: &str| {
            rec.get(c)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| ingest(row, format!("missing value for {name}")))
        };
        let num = |c: usize, name: &str| -> Result<f64> {
            let s = field(c, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| ingest(row, format!("{name} is not a number: {s:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ingest(row, format!("{name} is not finite")))
            }
        };
        let id = field(id_col, "individual_id")?.to_string();
        let t = num(time_col, "time")?;
        let entry = acc.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Vec::new(), Vec::new())
        });
        if entry.0.last().is_some_and(|&prev| t <= prev) {
            return Err(ingest(
                row,
                format!("time {t} does not increase for individual {id}"),
            ));
        }
        entry.0.push(t);
        for (r, &c) in obs_cols.iter().enumerate() {
            entry.1.push(num(c, &format!("obs_{}", r + 1))?);
        }
    }
    if order.is_empty() {
        return Err(ingest(2, "no data rows"));
    }
    order
        .into_iter()
        .map(|id| {
            let (times, obs) = acc.remove(&id).unwrap();
            IndividualRecord::new(id, times, d, obs)
        })
        .collect()
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<IndividualRecord>> {
    parse_records(File::open(path)?)
}

/// Write records with 17 significant digits, so reading back is exact.
pub fn format_records<W: Write>(records: &[IndividualRecord], writer: W) -> Result<()> {
    let d = records.first().map_or(1, |r| r.obs_dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["individual_id".to_string(), "time".to_string()];
    header.extend((1..=d).map(|r| format!("obs_{r}")));
    w.write_record(&header).map_err(csv_io)?;
    for rec in records {
        for (j, t) in rec.times.iter().enumerate() {
            let mut row = vec![rec.id.clone(), format!("{t:.16e}")];
            row.extend(
                rec.obs[j * rec.obs_dim..(j + 1) * rec.obs_dim]
                    .iter()
                    .map(|v| format!("{v:.16e}")),
            );
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(path: impl AsRef<Path>, records: &[IndividualRecord]) -> Result<()> {
    format_records(records, File::create(path)?)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
