//! CSV export of per-sample signals.
//!
//! * `detection`: time, |e_D|, Th_D, fault mask
//! * `evidence`: time, raw masses (F_1..F_nx, NF), Rel
//! * `combined:<rule>`: time, combined masses for one rule
//! * `fault-evidence`: time, the faulty channel's combined mass for every rule

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::fusion::RuleId;

use super::{DiagnosisReport, ScenarioRun};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeriesId {
    Detection,
    Evidence,
    Combined(RuleId),
    FaultEvidence,
}

impl FromStr for SeriesId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "detection" | "fig2" => Ok(SeriesId::Detection),
            "evidence" | "fig3" => Ok(SeriesId::Evidence),
            "combined" | "fig4" => Ok(SeriesId::Combined(RuleId::ReliabilityBased)),
            "fault-evidence" | "fig5" => Ok(SeriesId::FaultEvidence),
            other => match other.strip_prefix("combined:") {
                Some(rule) if !rule.is_empty() => Ok(SeriesId::Combined(rule.parse()?)),
                _ => Err(Error::UnknownSeries(other.to_owned())),
            },
        }
    }
}

impl std::fmt::Display for SeriesId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SeriesId::Detection => f.write_str("detection"),
            SeriesId::Evidence => f.write_str("evidence"),
            SeriesId::Combined(rule) => write!(f, "combined:{rule}"),
            SeriesId::FaultEvidence => f.write_str("fault-evidence"),
        }
    }
}

/// Column-named numeric table; the first column is time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

fn mass_columns(x_channels: &[String], prefix: &str) -> Vec<String> {
    x_channels
        .iter()
        .map(|c| format!("{prefix}m_{c}"))
        .chain(std::iter::once(format!("{prefix}m_NF")))
        .collect()
}

/// Build one table from an executed scenario.
pub fn build_series(report: &DiagnosisReport, run: &ScenarioRun, which: &SeriesId) -> Result<SeriesTable> {
    let dt = report.design.dt;
    let x = &report.design.x_channels;
    let m = run.evidence.len();
    let time = |k: usize| k as f64 * dt;
    let mut columns = vec!["time".to_owned()];
    let mut rows = Vec::with_capacity(m);
    match which {
        SeriesId::Detection => {
            columns.extend(["abs_e_d", "th_d", "fault"].map(str::to_owned));
            let th = report.design.th_d;
            for k in 0..m {
                let active = run.report.fault.is_some_and(|f| f.amplitude != 0.0 && f.is_active(k));
                rows.push(vec![time(k), run.evidence.e_d[k].abs(), th, f64::from(u8::from(active))]);
            }
        }
        SeriesId::Evidence => {
            columns.extend(mass_columns(x, ""));
            columns.push("rel".to_owned());
            for k in 0..m {
                let mut row = vec![time(k)];
                row.extend_from_slice(run.evidence.bbm[k].as_slice());
                row.push(run.evidence.rel[k]);
                rows.push(row);
            }
        }
        SeriesId::Combined(rule) => {
            let rr = run
                .rule_run(rule)
                .ok_or_else(|| Error::UnknownSeries(which.to_string()))?;
            columns.extend(mass_columns(x, ""));
            for k in 0..m {
                let mut row = vec![time(k)];
                row.extend_from_slice(rr.combined[k].as_slice());
                rows.push(row);
            }
        }
        SeriesId::FaultEvidence => {
            let (idx, name) = match run.report.fault {
                Some(f) => (f.channel, x[f.channel].clone()),
                None => (x.len(), "NF".to_owned()),
            };
            columns.extend(run.runs.iter().map(|r| format!("{}_m_{name}", r.rule)));
            for k in 0..m {
                let mut row = vec![time(k)];
                row.extend(run.runs.iter().map(|r| r.combined[k][idx]));
                rows.push(row);
            }
        }
    }
    Ok(SeriesTable { columns, rows })
}

pub fn write_series(table: &SeriesTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_series(path: impl AsRef<Path>) -> Result<SeriesTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let columns = rdr.headers()?.iter().map(str::to_owned).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .zip(&columns)
            .map(|(cell, col)| {
                cell.parse::<f64>().map_err(|_| Error::NonNumeric {
                    row: r + 1,
                    column: col.clone(),
                    value: cell.to_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(SeriesTable { columns, rows })
}

/// Write series `which` of scenario `label` to `path`.
pub fn emit_series(report: &DiagnosisReport, label: &str, which: &SeriesId, path: impl AsRef<Path>) -> Result<SeriesTable> {
    let run = report
        .scenario(label)
        .ok_or_else(|| Error::UnknownSeries(format!("{which} for scenario {label:?}")))?;
    let table = build_series(report, run, which)?;
    write_series(&table, path)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_series_ids() {
        assert_eq!("fig2".parse::<SeriesId>().unwrap(), SeriesId::Detection);
        assert_eq!(
            "combined:DS".parse::<SeriesId>().unwrap(),
            SeriesId::Combined(RuleId::ClassicDs)
        );
        assert!(matches!("fig9".parse::<SeriesId>(), Err(Error::UnknownSeries(_))));
        assert!("combined:".parse::<SeriesId>().is_err());
    }
}
