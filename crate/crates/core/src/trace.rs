//! Rule traces: one row per annotation change, with the rule that caused it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Interval;
use crate::model::{sym, Subject, Sym};
use crate::parse::parse_interval;

/// Rule column value for fact applications.
pub const FACT_SOURCE: &str = "--";

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub t: u32,
    /// Fixpoint application within `t`; 0 for facts.
    pub fp_step: usize,
    pub subject: Subject,
    pub predicate: Sym,
    pub old: Interval,
    pub new: Interval,
    pub source: String,
    /// `X=a,Y=b`, only with atom tracing on.
    pub grounding: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("unknown trace format `{0}` (expected tsv, csv or jsonl)")]
    UnknownFormat(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Tsv,
    Csv,
    JsonLines,
}

impl FromStr for Format {
    type Err = TraceError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(Format::Tsv),
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" | "jsonlines" => Ok(Format::JsonLines),
            _ => Err(TraceError::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Tsv => "tsv",
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        })
    }
}

pub const COLUMNS: [&str; 7] = [
    "t",
    "Γ",
    "Constant Symbols",
    "Predicate",
    "Old Annotation",
    "New Annotation",
    "Rule fired",
];
const GROUNDING_COLUMN: &str = "Grounding";

#[derive(Serialize, Deserialize)]
struct JsonRow {
    t: u32,
    #[serde(rename = "γ")]
    gamma: usize,
    constant_symbols: String,
    predicate: String,
    old_annotation: String,
    new_annotation: String,
    rule_fired: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grounding: Option<String>,
}

fn parse_subject(s: &str) -> Subject {
    match s.strip_prefix('(').and_then(|r| r.strip_suffix(')')).and_then(|r| r.split_once(',')) {
        Some((a, b)) => Subject::edge(a, b),
        None => Subject::node(s),
    }
}

impl TraceEntry {
    fn cells(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.fp_step.to_string(),
            self.subject.to_string(),
            self.predicate.to_string(),
            self.old.to_string(),
            self.new.to_string(),
            self.source.clone(),
        ]
    }

    fn from_cells(cells: &[&str], line: usize) -> Result<TraceEntry, TraceError> {
        let bad = |message: String| TraceError::Malformed { line, message };
        if cells.len() != 7 && cells.len() != 8 {
            return Err(bad(format!("expected 7 or 8 columns, got {}", cells.len())));
        }
        let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad(format!("bad integer `{s}`")));
        let iv = |s: &str| parse_interval(s).map_err(|e| bad(e.message));
        Ok(TraceEntry {
            t: num(cells[0])? as u32,
            fp_step: num(cells[1])? as usize,
            subject: parse_subject(cells[2]),
            predicate: sym(cells[3]),
            old: iv(cells[4])?,
            new: iv(cells[5])?,
            source: cells[6].to_string(),
            grounding: cells.get(7).filter(|g| !g.is_empty()).map(|g| g.to_string()),
        })
    }
}

/// Serialize `entries`. A grounding column is added when any entry has one.
pub fn export(entries: &[TraceEntry], format: Format) -> String {
    let with_grounding = entries.iter().any(|e| e.grounding.is_some());
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if with_grounding {
        header.push(GROUNDING_COLUMN);
    }
    let rows = entries.iter().map(|e| {
        let mut c = e.cells();
        if with_grounding {
            c.push(e.grounding.clone().unwrap_or_default());
        }
        c
    });
    match format {
        Format::Tsv => {
            let mut s = header.join("\t");
            s.push('\n');
            for r in rows {
                s.push_str(&r.join("\t"));
                s.push('\n');
            }
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header).expect("in-memory write");
            for r in rows {
                w.write_record(&r).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
        }
        Format::JsonLines => {
            let mut s = String::new();
            for e in entries {
                s.push_str(&serde_json::to_string(&JsonRow::from(e)).expect("plain struct"));
                s.push('\n');
            }
            s
        }
    }
}

/// One entry as a JSON object with the JSON-lines keys.
pub fn to_json(e: &TraceEntry) -> serde_json::Value {
    serde_json::to_value(JsonRow::from(e)).expect("plain struct")
}

impl From<&TraceEntry> for JsonRow {
    fn from(e: &TraceEntry) -> JsonRow {
        JsonRow {
            t: e.t,
            gamma: e.fp_step,
            constant_symbols: e.subject.to_string(),
            predicate: e.predicate.to_string(),
            old_annotation: e.old.to_string(),
            new_annotation: e.new.to_string(),
            rule_fired: e.source.clone(),
            grounding: e.grounding.clone(),
        }
    }
}

pub fn parse(text: &str, format: Format) -> Result<Vec<TraceEntry>, TraceError> {
    match format {
        Format::Tsv => text
            .lines()
            .enumerate()
            .skip(1)
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| TraceEntry::from_cells(&l.split('\t').collect::<Vec<_>>(), i + 1))
            .collect(),
        Format::Csv => {
            let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
            let mut out = Vec::new();
            for (i, rec) in r.records().enumerate() {
                let rec = rec.map_err(|e| TraceError::Malformed { line: i + 2, message: e.to_string() })?;
                let cells: Vec<&str> = rec.iter().collect();
                out.push(TraceEntry::from_cells(&cells, i + 2)?);
            }
            Ok(out)
        }
        Format::JsonLines => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let row: JsonRow = serde_json::from_str(l).map_err(|e| TraceError::Malformed { line: i + 1, message: e.to_string() })?;
                let cells = [
                    row.t.to_string(),
                    row.gamma.to_string(),
                    row.constant_symbols,
                    row.predicate,
                    row.old_annotation,
                    row.new_annotation,
                    row.rule_fired,
                    row.grounding.unwrap_or_default(),
                ];
                let refs: Vec<&str> = cells.iter().map(String::as_str).collect();
                TraceEntry::from_cells(&refs, i + 1)
            })
            .collect(),
    }
}
