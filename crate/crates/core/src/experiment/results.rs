//! `results.csv` rows.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 9] = [
    "barrier",
    "goal_scenario",
    "subject",
    "metric",
    "mean",
    "std",
    "n",
    "seed",
    "failures",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ofpr,
    DeltaCk,
    GapClosure,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ofpr => "OFPR",
            Metric::DeltaCk => "DeltaCK",
            Metric::GapClosure => "GapClosure",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OFPR" => Ok(Metric::Ofpr),
            "DeltaCK" => Ok(Metric::DeltaCk),
            "GapClosure" => Ok(Metric::GapClosure),
            _ => Err(Error::Parse(format!("unknown metric {s:?}"))),
        }
    }
}

/// One (cell, subject, metric) aggregate. `subject` is a baseline name or a
/// transfer pair id such as `SS-SE>DS-DE`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub barrier: String,
    pub goal_scenario: String,
    pub subject: String,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub seed: u64,
    pub failures: usize,
}

pub fn write_results<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.barrier.clone(),
            r.goal_scenario.clone(),
            r.subject.clone(),
            r.metric.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.std),
            r.n.to_string(),
            r.seed.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<results csv>", e))?;
    Ok(())
}

pub fn results_to_string(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_results(&mut buf, rows).expect("in-memory write");
    String::from_utf8(buf).expect("ascii csv")
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(reader);
    if rd.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(Error::Parse("results.csv header does not match the expected schema".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let float = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| Error::Parse(format!("bad integer {s:?}")));
        rows.push(ResultRow {
            barrier: rec[0].to_string(),
            goal_scenario: rec[1].to_string(),
            subject: rec[2].to_string(),
            metric: rec[3].parse()?,
            mean: float(&rec[4])?,
            std: float(&rec[5])?,
            n: int(&rec[6])? as usize,
            seed: int(&rec[7])?,
            failures: int(&rec[8])? as usize,
        });
    }
    Ok(rows)
}
