//! Output formats for classification results.

use std::collections::BTreeSet;

use dpseries::charlat::Q;
use dpseries::classify::PointVerdict;

use crate::data::{Mark, TableCell, TableRow};

/// Sorted by `(i, k, s)`.
pub fn sorted(mut v: Vec<PointVerdict>) -> Vec<PointVerdict> {
    v.sort_by(|a, b| (a.i, a.k, a.s).cmp(&(b.i, b.k, b.s)));
    v
}

pub fn render_json(v: &[PointVerdict]) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("verdicts serialize");
    s.push('\n');
    s
}

pub fn render_csv(v: &[PointVerdict]) -> String {
    let mut s = String::from(PointVerdict::CSV_HEADER);
    s.push('\n');
    for row in v {
        s.push_str(&row.csv_row());
        s.push('\n');
    }
    s
}

/// Groups verdicts into table rows, one per `(i, k)`.
pub fn to_rows(v: &[PointVerdict]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::new();
    for p in sorted(v.to_vec()) {
        let cell = TableCell {
            s: p.s,
            mark: Mark::of(p.verdict),
        };
        match rows.last_mut() {
            Some(r) if r.i == p.i && r.k == p.k => r.cells.push(cell),
            _ => rows.push(TableRow {
                i: p.i,
                k: p.k,
                cells: vec![cell],
            }),
        }
    }
    rows
}

fn fmt_s(s: &Q) -> String {
    if *s.denom() == 1 {
        format!("{}", s.numer())
    } else {
        format!("{}/{}", s.numer(), s.denom())
    }
}

/// One table per parabolic: a column per `s` occurring for any character
/// order, a row per order, and `-` where the point is not special.
pub fn render_markdown(rows: &[TableRow]) -> String {
    let parabolics: BTreeSet<usize> = rows.iter().map(|r| r.i).collect();
    let mut out = String::new();
    for i in parabolics {
        let mut mine: Vec<&TableRow> = rows.iter().filter(|r| r.i == i).collect();
        mine.sort_by_key(|r| r.k);
        let cols: BTreeSet<Q> = mine
            .iter()
            .flat_map(|r| r.cells.iter().map(|c| c.s))
            .collect();
        out.push_str(&format!("### P{i}\n\n| ord(χ) \\ s |"));
        for s in &cols {
            out.push_str(&format!(" {} |", fmt_s(s)));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(cols.len()));
        out.push('\n');
        for r in mine {
            out.push_str(&format!("| {} |", r.k));
            for s in &cols {
                let cell = r
                    .cells
                    .iter()
                    .find(|c| c.s == *s)
                    .map(|c| c.mark.cell())
                    .unwrap_or("-");
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
