//! Codimension bookkeeping per stratum.
//!
//! Each row pairs the codimension `c` of a covector family in `g*` (unit
//! sphere included) with the dimension `d` of the set of curves one covector
//! produces; `dim Abn <= dim G - c + d`, so the row bounds the codimension
//! of its abnormal set by `c - d`.

use serde::Serialize;

use crate::error::{Error, Result};

use super::system::{CaseKind, CaseTag};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CodimRow {
    pub lambda: usize,
    /// Drift set, or `None` for a row covering the whole stratum.
    pub xi: Option<usize>,
    pub constraints: usize,
    pub reachable_dim: usize,
    pub bound: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StratumCodim {
    pub lambda: usize,
    /// Minimum over the rows of the stratum.
    pub computed: usize,
    /// Stored reference value; `None` when no value is stated.
    pub fixture: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CodimTable {
    pub case: String,
    pub rows: Vec<CodimRow>,
    pub strata: Vec<StratumCodim>,
    pub overall: usize,
    pub overall_fixture: Option<usize>,
}

impl CodimTable {
    pub fn to_text(&self) -> String {
        let mut s = format!("case {}\n", self.case);
        s.push_str("lambda  xi    c  d  bound\n");
        for r in &self.rows {
            let xi = r.xi.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            s.push_str(&format!("{:>6}  {:>3}  {:>2} {:>2} {:>6}\n", r.lambda, xi, r.constraints, r.reachable_dim, r.bound));
        }
        s.push_str("stratum  computed  reference\n");
        for st in &self.strata {
            let f = st.fixture.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
            s.push_str(&format!("{:>7}  {:>8}  {:>9}\n", st.lambda, st.computed, f));
        }
        s.push_str(&format!("overall {}\n", self.overall));
        s
    }
}

type Row = (usize, Option<usize>, usize, usize);

fn r2s3_rows() -> Vec<Row> {
    vec![(1, None, 4, 1)]
}

fn r2s4_rows() -> Vec<Row> {
    vec![
        (1, Some(1), 4, 1),
        (1, Some(2), 4, 1),
        (1, Some(3), 4, 1),
        (2, Some(4), 4, 0),
        (2, Some(5), 4, 1),
        (2, Some(6), 4, 1),
        (3, Some(7), 4, 1),
        (3, Some(8), 4, 1),
        (3, Some(9), 5, 1),
        (4, None, 4, 1),
    ]
}

fn r3s3_rows() -> Vec<Row> {
    vec![
        (1, Some(1), 4, 1),
        (1, Some(2), 4, 2),
        (1, Some(3), 4, 2),
        (2, Some(1), 4, 1),
        (2, Some(2), 4, 2),
        (2, Some(3), 4, 2),
        (3, Some(4), 4, 1),
        (3, Some(5), 4, 2),
        (3, Some(6), 4, 2),
        (4, None, 4, 2),
        (5, Some(7), 4, 1),
        (5, Some(8), 4, 1),
        (5, Some(9), 4, 2),
        (5, Some(10), 4, 2),
        (6, Some(11), 4, 1),
        (6, Some(12), 4, 1),
        (6, Some(13), 4, 1),
        (6, Some(14), 5, 1),
        (7, Some(15), 4, 1),
        (7, Some(16), 4, 1),
        (7, Some(17), 4, 1),
        (7, Some(18), 5, 1),
        (8, Some(19), 4, 1),
        (8, Some(20), 4, 1),
        (8, Some(21), 4, 1),
        (8, Some(22), 6, 5),
        // exp(g1) has dimension 3 in a group of dimension at least 5
        (9, None, 5, 3),
    ]
}

fn r3s3_free_rows() -> Vec<Row> {
    vec![
        (1, Some(1), 4, 1),
        (1, Some(2), 5, 2),
        (1, Some(3), 6, 2),
        (2, Some(1), 5, 1),
        (2, Some(2), 6, 2),
        (2, Some(3), 7, 2),
        (3, Some(4), 4, 1),
        (3, Some(5), 6, 2),
        (3, Some(6), 5, 2),
        (4, None, 6, 2),
        (5, Some(7), 5, 1),
        (5, Some(8), 6, 1),
        (5, Some(9), 7, 4),
        (5, Some(10), 7, 4),
        (6, Some(11), 5, 1),
        (6, Some(12), 6, 1),
        (6, Some(13), 6, 1),
        (6, Some(14), 7, 1),
        (7, Some(15), 6, 1),
        (7, Some(16), 7, 1),
        (7, Some(17), 7, 1),
        (7, Some(18), 9, 1),
        (8, Some(19), 8, 1),
        (8, Some(20), 8, 1),
        (8, Some(21), 8, 1),
        (8, Some(22), 9, 5),
        // exp(g1) in the 14-dimensional free group
        (9, None, 14, 3),
    ]
}

/// Stored reference values per stratum and overall.
pub fn fixture(case: CaseTag) -> (Vec<Option<usize>>, Option<usize>) {
    match (case.kind, case.free) {
        (CaseKind::R2S3, _) => (vec![Some(3)], Some(3)),
        (CaseKind::R2S4, _) => (vec![Some(3); 4], Some(3)),
        (CaseKind::R3S3, false) => (vec![2, 2, 2, 2, 2, 3, 3, 1, 2].into_iter().map(Some).collect(), Some(1)),
        (CaseKind::R3S3, true) => (
            vec![Some(3), Some(4), Some(3), Some(4), Some(3), Some(4), Some(5), None, Some(11)],
            Some(3),
        ),
    }
}

/// Bookkeeping table for `case`, checked against the stored reference.
pub fn codim_report(case: CaseTag) -> Result<CodimTable> {
    let table = compute(case);
    let mut bad = Vec::new();
    for s in &table.strata {
        if let Some(f) = s.fixture {
            if f != s.computed {
                bad.push(format!("stratum {}: computed {} reference {}", s.lambda, s.computed, f));
            }
        }
    }
    if let Some(f) = table.overall_fixture {
        if f != table.overall {
            bad.push(format!("overall: computed {} reference {}", table.overall, f));
        }
    }
    if !bad.is_empty() {
        return Err(Error::FixtureMismatch(bad.join("; ")));
    }
    Ok(table)
}

/// The table without the reference check.
pub fn compute(case: CaseTag) -> CodimTable {
    let raw = match (case.kind, case.free) {
        (CaseKind::R2S3, _) => r2s3_rows(),
        (CaseKind::R2S4, _) => r2s4_rows(),
        (CaseKind::R3S3, false) => r3s3_rows(),
        (CaseKind::R3S3, true) => r3s3_free_rows(),
    };
    let rows: Vec<CodimRow> = raw
        .into_iter()
        .map(|(lambda, xi, c, d)| CodimRow { lambda, xi, constraints: c, reachable_dim: d, bound: c - d })
        .collect();
    let (fix, overall_fixture) = fixture(case);
    let strata: Vec<StratumCodim> = (1..=fix.len())
        .map(|l| StratumCodim {
            lambda: l,
            computed: rows.iter().filter(|r| r.lambda == l).map(|r| r.bound).min().unwrap_or(0),
            fixture: fix[l - 1],
        })
        .collect();
    let overall = strata.iter().map(|s| s.computed).min().unwrap_or(0);
    CodimTable { case: case.name().to_string(), rows, strata, overall, overall_fixture }
}
