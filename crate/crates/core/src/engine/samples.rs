use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::ChainState;
use crate::error::{input, Error, Result};
use crate::models::{PopulationParams, ThetaLayout};

/// Column names: `round, sweep`, then `c_<id>_<k>` per individual, `kappa_<k>`, `xi_<k>`, `mu_<k>`, `tau_<k>`.
pub fn sample_columns(ids: &[String], layout: ThetaLayout) -> Vec<String> {
    let mut cols = vec!["round".to_string(), "sweep".to_string()];
    for id in ids {
        cols.extend((1..=layout.q).map(|k| format!("c_{id}_{k}")));
    }
    cols.extend((1..=layout.p).map(|k| format!("kappa_{k}")));
    cols.extend((1..=layout.s).map(|k| format!("xi_{k}")));
    cols.extend((1..=layout.q).map(|k| format!("mu_{k}")));
    cols.extend((1..=layout.q).map(|k| format!("tau_{k}")));
    cols
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Write one row per state with 17 significant digits.
pub fn format_samples<W: Write>(
    states: &[ChainState],
    ids: &[String],
    layout: ThetaLayout,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(sample_columns(ids, layout))
        .map_err(csv_err)?;
    for st in states {
        if st.c_all.len() != ids.len() {
            return input("state and id list disagree on the number of individuals");
        }
        let mut row = vec![st.round.to_string(), st.sweep.to_string()];
        let values = st
            .c_all
            .iter()
            .flatten()
            .chain(&st.kappa)
            .chain(&st.xi)
            .chain(&st.eta.mu)
            .chain(&st.eta.tau);
        row.extend(values.map(|v| format!("{v:.16e}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples(
    path: impl AsRef<Path>,
    states: &[ChainState],
    ids: &[String],
    layout: ThetaLayout,
) -> Result<()> {
    format_samples(states, ids, layout, File::create(path)?)
}

/// Posterior samples read back as a named numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SampleTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Parameter columns, i.e. everything except `round` and `sweep`.
    pub fn parameter_names(&self) -> Vec<&str> {
        self.columns
            .iter()
            .map(String::as_str)
            .filter(|c| *c != "round" && *c != "sweep")
            .collect()
    }

    /// Individual ids in column order, recovered from the `c_<id>_1` headers.
    pub fn individual_ids(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter_map(|c| c.strip_prefix("c_")?.strip_suffix("_1").map(String::from))
            .collect()
    }

    /// Rebuild chain states from a table written by [`format_samples`] with this layout.
    pub fn to_states(&self, layout: ThetaLayout) -> Result<(Vec<String>, Vec<ChainState>)> {
        let ids = self.individual_ids();
        if self.columns != sample_columns(&ids, layout) {
            return input(format!(
                "sample columns do not match a layout with q={}, p={}, s={}",
                layout.q, layout.p, layout.s
            ));
        }
        let (m, q) = (ids.len(), layout.q);
        let states = self
            .rows
            .iter()
            .map(|r| {
                let mut at = 2;
                let mut take = |n: usize| {
                    let v = r[at..at + n].to_vec();
                    at += n;
                    v
                };
                let c_all = (0..m).map(|_| take(q)).collect();
                let kappa = take(layout.p);
                let xi = take(layout.s);
                let eta = PopulationParams::new(take(q), take(q))?;
                Ok(ChainState {
                    c_all,
                    kappa,
                    xi,
                    eta,
                    sweep: r[1] as usize,
                    round: r[0] as usize,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ids, states))
    }
}

pub fn parse_samples<R: Read>(reader: R) -> Result<SampleTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Ingestion {
            row: 1,
            reason: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    if columns.is_empty() {
        return Err(Error::Ingestion {
            row: 1,
            reason: "empty header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Ingestion {
            row,
            reason: e.to_string(),
        })?;
        let vals = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Ingestion {
                    row,
                    reason: format!("not a number: {s:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    Ok(SampleTable { columns, rows })
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleTable> {
    parse_samples(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let layout = ThetaLayout { q: 2, p: 1, s: 1 };
        let ids = vec!["a".to_string(), "b".to_string()];
        let st = ChainState {
            c_all: vec![vec![0.1, 0.2], vec![0.3, 1.0 / 3.0]],
            kappa: vec![-1.5],
            xi: vec![2.0],
            eta: PopulationParams {
                mu: vec![0.0, 1.0],
                tau: vec![3.0, 4.0],
            },
            sweep: 7,
            round: 3,
        };
        let mut buf = Vec::new();
        format_samples(&[st.clone(), st], &ids, layout, &mut buf).unwrap();
        let t = parse_samples(buf.as_slice()).unwrap();
        assert_eq!(t.columns.len(), 2 + 4 + 1 + 1 + 2 + 2);
        assert_eq!(t.columns[2], "c_a_1");
        assert_eq!(t.column("c_b_2").unwrap(), vec![1.0 / 3.0; 2]);
        assert_eq!(t.column("sweep").unwrap(), vec![7.0; 2]);
        assert_eq!(t.parameter_names().len(), 10);
        let (back_ids, states) = t.to_states(layout).unwrap();
        assert_eq!(back_ids, ids);
        assert_eq!(states[1].c_all[1][1], 1.0 / 3.0);
        assert_eq!((states[0].sweep, states[0].round), (7, 3));
        assert!(t.to_states(ThetaLayout { q: 2, p: 0, s: 2 }).is_err());
    }
}
