//! Growth-bound report derived from a run's stats CSV.

use thiserror::Error;

use crate::engine::STATS_HEADER;

pub const REPORT_HEADER: &str = "step,delta_atoms,bound,bound_violated";

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("stats header mismatch: expected `{STATS_HEADER}`")]
    Header,
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("stats file has no total rows")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRow {
    pub step: usize,
    pub delta_atoms: i64,
    pub bound: u128,
}

impl BoundRow {
    pub fn violated(&self) -> bool {
        self.delta_atoms > 0 && self.delta_atoms as u128 > self.bound
    }
}

/// The `*` rows of a stats CSV, one per fixpoint application.
pub fn bound_rows(stats_csv: &str) -> Result<Vec<BoundRow>, ReportError> {
    let mut r = csv::ReaderBuilder::new().from_reader(stats_csv.as_bytes());
    let header = r.headers().map_err(|_| ReportError::Header)?;
    if header.iter().collect::<Vec<_>>().join(",") != STATS_HEADER {
        return Err(ReportError::Header);
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ReportError::Row { line, message: e.to_string() })?;
        if rec.get(1) != Some("*") {
            continue;
        }
        let bad = |what: &str| ReportError::Row { line, message: format!("bad {what}") };
        rows.push(BoundRow {
            step: rec[0].parse().map_err(|_| bad("step"))?,
            delta_atoms: rec[3].parse().map_err(|_| bad("delta_total"))?,
            bound: rec[4].parse().map_err(|_| bad("bound"))?,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    Ok(rows)
}

pub fn bound_report(stats_csv: &str) -> Result<String, ReportError> {
    let mut s = format!("{REPORT_HEADER}\n");
    for r in bound_rows(stats_csv)? {
        s.push_str(&format!("{},{},{},{}\n", r.step, r.delta_atoms, r.bound, r.violated()));
    }
    Ok(s)
}
