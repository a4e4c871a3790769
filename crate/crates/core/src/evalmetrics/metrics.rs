//! ACC, NMI and ARI between a predicted and a reference labeling.
//!
//! NMI is normalized by the arithmetic mean of the two entropies. ACC pads
//! the contingency table to square before the optimal one-to-one matching,
//! so the two labelings may use different numbers of clusters.

use std::collections::BTreeMap;

use ndarray::Array2;

use super::hungarian::hungarian;
use crate::error::{Error, Result};

/// Co-occurrence counts of predicted (rows) against true (columns) labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ContingencyTable {
    pub counts: Array2<u64>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub n: u64,
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    // Re-number in sorted label order so the table layout is canonical.
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Contract(format!(
                "label length mismatch: predicted={}, truth={}",
                pred.len(),
                truth.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Contract("labelings are empty".into()));
        }
        let (p, kp) = dense_ids(pred);
        let (t, kt) = dense_ids(truth);
        let mut counts = Array2::zeros((kp, kt));
        for (&a, &b) in p.iter().zip(&t) {
            counts[[a, b]] += 1;
        }
        let row_totals = counts.rows().into_iter().map(|r| r.sum()).collect();
        let col_totals = counts.columns().into_iter().map(|c| c.sum()).collect();
        Ok(Self {
            counts,
            row_totals,
            col_totals,
            n: pred.len() as u64,
        })
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let (kp, kt) = table.counts.dim();
    let size = kp.max(kt);
    let mut cost = Array2::zeros((size, size));
    for ((r, c), &count) in table.counts.indexed_iter() {
        cost[[r, c]] = -(count as f64);
    }
    let (_, total) = hungarian(&cost)?;
    Ok(-total / table.n as f64)
}

fn entropy(totals: &[u64], n: f64) -> f64 {
    totals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let n = table.n as f64;
    let mut mi = 0.0;
    for ((r, c), &count) in table.counts.indexed_iter() {
        if count == 0 {
            continue;
        }
        let pij = count as f64 / n;
        let pi = table.row_totals[r] as f64 / n;
        let pj = table.col_totals[c] as f64 / n;
        mi += pij * (pij / (pi * pj)).ln();
    }
    let denom = 0.5 * (entropy(&table.row_totals, n) + entropy(&table.col_totals, n));
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. When the chance-corrected denominator vanishes (e.g.
/// both labelings put everything in one cluster) the agreement is perfect by
/// convention and the result is `1.0`.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = ContingencyTable::new(pred, truth)?;
    let index: f64 = table.counts.iter().map(|&c| pairs(c)).sum();
    let rows: f64 = table.row_totals.iter().map(|&c| pairs(c)).sum();
    let cols: f64 = table.col_totals.iter().map(|&c| pairs(c)).sum();
    let total = pairs(table.n);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max_index = 0.5 * (rows + cols);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// All three scores at once.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClusteringScores {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

pub fn score(pred: &[usize], truth: &[usize]) -> Result<ClusteringScores> {
    Ok(ClusteringScores {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        ari: ari(pred, truth)?,
    })
}
