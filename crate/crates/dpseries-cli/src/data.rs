//! Bundled input data: reference tables, Tadić candidates, reference
//! verdicts and proof scripts. Each can be replaced through the config.

use std::fs;
use std::path::Path;

use dpseries::branch::Script;
use dpseries::charlat::{parse_q, q_serde, DpsPoint, Q};
use dpseries::classify::{CandidateSpec, Verdict};
use dpseries::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const TABLES_JSON: &str = include_str!("../data/tables.json");
pub const CANDIDATES_JSON: &str = include_str!("../data/candidates.json");
pub const REFERENCES_JSON: &str = include_str!("../data/references.json");
pub const BUNDLED_SCRIPTS: [(&str, &str); 4] = [
    ("E7p50O1", include_str!("../data/scripts/E7p50O1.json")),
    (
        "E7-5-0-2-multiseed",
        include_str!("../data/scripts/E7-5-0-2-multiseed.json"),
    ),
    (
        "iwahori-P2",
        include_str!("../data/scripts/iwahori-P2.json"),
    ),
    (
        "iwahori-P4",
        include_str!("../data/scripts/iwahori-P4.json"),
    ),
];

/// Table mark of a cell: `red*` regular reducible, `red` reducible, `irr`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mark {
    #[serde(rename = "red*")]
    RedStar,
    #[serde(rename = "red")]
    Red,
    #[serde(rename = "irr")]
    Irr,
    /// No verdict.
    #[serde(rename = "?")]
    Unknown,
}

impl Mark {
    pub fn of(v: Verdict) -> Mark {
        match v {
            Verdict::ReducibleRegular => Mark::RedStar,
            Verdict::Reducible => Mark::Red,
            Verdict::Irreducible => Mark::Irr,
            Verdict::Inconclusive => Mark::Unknown,
        }
    }

    /// Cell text in markdown tables.
    pub fn cell(self) -> &'static str {
        match self {
            Mark::RedStar => "red.*",
            Mark::Red => "red.",
            Mark::Irr => "irr.",
            Mark::Unknown => "?",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCell {
    #[serde(with = "q_serde")]
    pub s: Q,
    pub mark: Mark,
}

/// One row of a reference table: the special points of `(i, k)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub i: usize,
    pub k: u32,
    pub cells: Vec<TableCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceTables {
    pub datum: String,
    pub rows: Vec<TableRow>,
}

impl ReferenceTables {
    pub fn bundled() -> Self {
        serde_json::from_str(TABLES_JSON).expect("bundled tables parse")
    }

    pub fn row(&self, i: usize, k: u32) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.i == i && r.k == k)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CandidateEntry {
    i: usize,
    s: String,
    k: u32,
    candidate: String,
}

#[derive(Debug, Clone, Deserialize)]
struct CandidateFile {
    datum: String,
    candidates: Vec<CandidateEntry>,
}

/// A point with the degenerate principal series used against it in Tadić's
/// test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub point: DpsPoint,
    pub spec: CandidateSpec,
}

/// Parses a candidate table and returns its datum label and entries.
pub fn parse_candidates(text: &str) -> Result<(String, Vec<Candidate>)> {
    let file: CandidateFile = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("bad candidate table: {e}")))?;
    let mut out = Vec::with_capacity(file.candidates.len());
    for e in file.candidates {
        out.push(Candidate {
            point: DpsPoint::new(e.i, parse_q(&e.s)?, e.k),
            spec: e.candidate.parse()?,
        });
    }
    Ok((file.datum, out))
}

/// A verdict the engine does not compute, with its citation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceVerdict {
    pub i: usize,
    #[serde(with = "q_serde")]
    pub s: Q,
    pub k: u32,
    pub verdict: Verdict,
    pub citation: String,
}

impl ReferenceVerdict {
    pub fn point(&self) -> DpsPoint {
        DpsPoint::new(self.i, self.s, self.k)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ReferenceFile {
    datum: String,
    references: Vec<ReferenceVerdict>,
}

pub fn parse_references(text: &str) -> Result<(String, Vec<ReferenceVerdict>)> {
    let file: ReferenceFile = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("bad reference verdicts: {e}")))?;
    Ok((file.datum, file.references))
}

pub fn parse_script(text: &str, origin: &str) -> Result<Script> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("bad proof script {origin}: {e}")))
}

/// Reads a config-supplied file, or returns the bundled text.
pub fn read_or(path: Option<&Path>, bundled: &str) -> Result<String> {
    match path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display()))),
        None => Ok(bundled.to_string()),
    }
}
