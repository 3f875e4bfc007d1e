//! `report`: validate a results table and summarise it.

use std::path::Path;

use anyhow::{bail, Context, Result};
use normbargain_core::evaluation::{MatchRecord, PairType, RESULTS_HEADER};

/// Read a results table, checking the header verbatim and every row.
pub fn read_results(path: &Path) -> Result<Vec<MatchRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = reader.records();
    let header = rows.next().context("results file is empty")??;
    if header.iter().ne(RESULTS_HEADER) {
        bail!(
            "results header does not match the schema\n  expected: {}\n  found:    {}",
            RESULTS_HEADER.join("\t"),
            header.iter().collect::<Vec<_>>().join("\t")
        );
    }
    let mut out = Vec::new();
    for (n, row) in rows.enumerate() {
        let line = n + 2;
        let row = row.with_context(|| format!("line {line}"))?;
        out.push(parse_row(&row).with_context(|| format!("{} line {line}", path.display()))?);
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord) -> Result<MatchRecord> {
    if row.len() != RESULTS_HEADER.len() {
        bail!("expected {} fields, found {}", RESULTS_HEADER.len(), row.len());
    }
    let text = |i: usize| row[i].to_string();
    let int = |i: usize| row[i].parse::<u64>().with_context(|| format!("{}: {:?} is not a seed", RESULTS_HEADER[i], &row[i]));
    let float = |i: usize| -> Result<f64> {
        let v: f64 = row[i].parse().with_context(|| format!("{}: {:?} is not a number", RESULTS_HEADER[i], &row[i]))?;
        if !v.is_finite() {
            bail!("{}: value is not finite", RESULTS_HEADER[i]);
        }
        Ok(v)
    };
    let pair_type = PairType::from_label(&row[4]).with_context(|| format!("unknown pair_type {:?}", &row[4]))?;
    let r = MatchRecord {
        env: text(0),
        algo: text(1),
        welfare_p1: text(2),
        welfare_p2: text(3),
        pair_type,
        seed_a: int(5)?,
        seed_b: int(6)?,
        v1: float(7)?,
        v2: float(8)?,
        normalized_score: float(9)?,
        convention_p1: text(10),
        convention_p2: text(11),
    };
    if r.pair_type == PairType::SelfPlay && r.seed_a != r.seed_b {
        bail!("self-play record pairs different seeds {} and {}", r.seed_a, r.seed_b);
    }
    Ok(r)
}
