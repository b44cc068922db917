//! Report rows and their CSV and Markdown renderings.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Converged(usize),
    /// Stopped at `maxit` without meeting the tolerance.
    MaxIt(usize),
    Failed(String),
}

impl Outcome {
    pub fn iterations(&self) -> Option<usize> {
        match self {
            Outcome::Converged(k) => Some(*k),
            _ => None,
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self, Outcome::Converged(_))
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Converged(k) => write!(f, "{k}"),
            Outcome::MaxIt(m) => write!(f, ">{m}"),
            Outcome::Failed(_) => f.write_str("fail"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dof: usize,
    pub n: usize,
    pub method: String,
    /// `1L` for one-level, otherwise the selection label.
    pub coarse: String,
    pub coarse_dim: usize,
    pub outcome: Outcome,
    pub relative_error: f64,
    pub residual: f64,
    pub setup_time: f64,
    pub solve_time: f64,
    pub seed: u64,
    pub config: String,
}

impl ReportRow {
    /// Column heading in the wide table, e.g. `NDTNS-MRAS 1L`.
    pub fn column(&self) -> String {
        format!("{} {}", self.method, self.coarse)
    }
}

const HEADER: [&str; 13] = [
    "dof",
    "n",
    "method",
    "coarse",
    "coarse_dim",
    "iterations",
    "relative_error",
    "residual",
    "setup_time",
    "solve_time",
    "seed",
    "note",
    "config",
];

/// Long format, one line per row. Floats use Rust's shortest round-trip form.
pub fn to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(HEADER).map_err(io)?;
    for r in rows {
        let note = match &r.outcome {
            Outcome::Failed(msg) => msg.clone(),
            _ => String::new(),
        };
        w.write_record([
            r.dof.to_string(),
            r.n.to_string(),
            r.method.clone(),
            r.coarse.clone(),
            r.coarse_dim.to_string(),
            r.outcome.to_string(),
            r.relative_error.to_string(),
            r.residual.to_string(),
            r.setup_time.to_string(),
            r.solve_time.to_string(),
            r.seed.to_string(),
            note,
            r.config.clone(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv: {e}")))
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).ok_or_else(|| Error::Config(format!("csv row misses column {}", HEADER[i])))?;
    s.parse().map_err(|_| Error::Config(format!("csv column {}: cannot parse `{s}`", HEADER[i])))
}

pub fn from_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let headers = rd.headers().map_err(|e| Error::Config(format!("csv: {e}")))?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Config("unexpected csv header".into()));
    }
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Config(format!("csv: {e}")))?;
            let iters = rec.get(5).unwrap_or_default();
            let outcome = if let Some(m) = iters.strip_prefix('>') {
                Outcome::MaxIt(m.parse().map_err(|_| Error::Config(format!("bad iteration label `{iters}`")))?)
            } else if iters == "fail" {
                Outcome::Failed(rec.get(11).unwrap_or_default().to_string())
            } else {
                Outcome::Converged(field(&rec, 5)?)
            };
            Ok(ReportRow {
                dof: field(&rec, 0)?,
                n: field(&rec, 1)?,
                method: field(&rec, 2)?,
                coarse: field(&rec, 3)?,
                coarse_dim: field(&rec, 4)?,
                outcome,
                relative_error: field(&rec, 6)?,
                residual: field(&rec, 7)?,
                setup_time: field(&rec, 8)?,
                solve_time: field(&rec, 9)?,
                seed: field(&rec, 10)?,
                config: field(&rec, 12)?,
            })
        })
        .collect()
}

/// Wide table: one line per `(DOF, N)` in first-seen order and one column
/// per method/coarse pair, holding iteration labels.
pub fn to_markdown(rows: &[ReportRow]) -> String {
    let mut columns: Vec<String> = Vec::new();
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !columns.contains(&r.column()) {
            columns.push(r.column());
        }
        if !keys.contains(&(r.dof, r.n)) {
            keys.push((r.dof, r.n));
        }
    }
    let mut s = String::from("| DOF | N |");
    for c in &columns {
        s.push_str(&format!(" {c} |"));
    }
    s.push_str("\n|---:|---:|");
    s.push_str(&"---:|".repeat(columns.len()));
    s.push('\n');
    for (dof, n) in keys {
        s.push_str(&format!("| {dof} | {n} |"));
        for c in &columns {
            let cell = rows.iter().find(|r| r.dof == dof && r.n == n && &r.column() == c).map(|r| r.outcome.to_string());
            s.push_str(&format!(" {} |", cell.unwrap_or_default()));
        }
        s.push('\n');
    }
    s
}
