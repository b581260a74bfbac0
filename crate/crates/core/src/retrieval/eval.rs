use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Bm25Params, Index, RetrievalError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallExample {
    pub query: String,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    /// Mean per-example recall; 0 when nothing was evaluated.
    pub recall: f64,
    pub evaluated: usize,
    /// Examples with an empty gold set.
    pub skipped: usize,
}

/// Mean of `|gold ∩ top-k| / |gold|` over examples with a non-empty gold set.
pub fn recall_at_k(index: &Index, examples: &[RecallExample], k: usize) -> RecallReport {
    let mut total = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for ex in examples {
        if ex.gold.is_empty() {
            skipped += 1;
            continue;
        }
        let hits = index.search(&ex.query, k);
        let found = hits.ids().filter(|id| ex.gold.contains(*id)).count();
        total += found as f64 / ex.gold.len() as f64;
        evaluated += 1;
    }
    RecallReport {
        recall: if evaluated == 0 {
            0.0
        } else {
            total / evaluated as f64
        },
        evaluated,
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k1: f64,
    pub b: f64,
    pub recall_at_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub best: Bm25Params,
    pub best_recall: f64,
    pub k: usize,
    /// One row per grid cell, `k1` outer and `b` inner, in grid order.
    pub rows: Vec<SweepRow>,
    pub skipped: usize,
}

impl SweepReport {
    pub fn write_csv(&self, out: impl Write) -> Result<(), RetrievalError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Exhaustive grid search for the parameters maximising Recall@k. Ties go to
/// the lexicographically smaller `(k1, b)`.
pub fn sweep<F>(
    build: F,
    examples: &[RecallExample],
    k1_grid: &[f64],
    b_grid: &[f64],
    k: usize,
) -> Result<SweepReport, RetrievalError>
where
    F: Fn(Bm25Params) -> Result<Index, RetrievalError> + Sync,
{
    if k1_grid.is_empty() || b_grid.is_empty() {
        return Err(RetrievalError::InvalidGrid(
            String::new(),
            "sweep grids must be non-empty".into(),
        ));
    }
    let cells: Vec<Bm25Params> = k1_grid
        .iter()
        .flat_map(|&k1| b_grid.iter().map(move |&b| Bm25Params { k1, b }))
        .collect();
    let results: Vec<(Bm25Params, RecallReport)> = cells
        .par_iter()
        .map(|&params| {
            let index = build(params)?;
            Ok((params, recall_at_k(&index, examples, k)))
        })
        .collect::<Result<_, RetrievalError>>()?;

    let mut best = results[0];
    for &(params, report) in &results[1..] {
        let better = report.recall > best.1.recall
            || (report.recall == best.1.recall
                && (params.k1, params.b).partial_cmp(&(best.0.k1, best.0.b))
                    == Some(std::cmp::Ordering::Less));
        if better {
            best = (params, report);
        }
    }
    Ok(SweepReport {
        best: best.0,
        best_recall: best.1.recall,
        k,
        rows: results
            .iter()
            .map(|(p, r)| SweepRow {
                k1: p.k1,
                b: p.b,
                recall_at_k: r.recall,
            })
            .collect(),
        skipped: best.1.skipped,
    })
}

/// Parses `start:end:step` (inclusive), a comma list, or a single value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, RetrievalError> {
    let bad = |why: &str| RetrievalError::InvalidGrid(spec.to_string(), why.to_string());
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts[..] {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if step.is_nan() || step <= 0.0 || end < start {
                return Err(bad("need start <= end and step > 0"));
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            Ok((0..=n)
                .map(|i| round_grid(start + i as f64 * step))
                .collect())
        }
        [_] => spec.split(',').map(num).collect(),
        _ => Err(bad("expected start:end:step")),
    }
}

// Strip float noise like 0.30000000000000004 from generated grid points.
fn round_grid(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}
