//! Shifted positive pointwise mutual information from co-occurrence counts.

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// Symmetric pair counts with their normalising totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceCounts {
    n: usize,
    /// Upper-triangle entries `(i, j, count)` with `i ≤ j`, nonzero counts only.
    entries: Vec<(usize, usize, u64)>,
    total: u64,
    marginals: Vec<u64>,
}

impl CooccurrenceCounts {
    /// Counts given as `(i, j, count)` in either orientation; repeated pairs
    /// are summed. Missing marginals default to row sums of the symmetric
    /// count matrix and a missing total to the sum over unordered pairs
    /// (each pair, including self pairs, counted once).
    pub fn new(
        n: usize,
        counts: impl IntoIterator<Item = (usize, usize, u64)>,
        marginals: Option<Vec<u64>>,
        total: Option<u64>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, u64)> = Vec::new();
        for (i, j, c) in counts {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("count index ({i}, {j}) out of range for n = {n}")));
            }
            if c > 0 {
                entries.push((i.min(j), i.max(j), c));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, u64)> = Vec::with_capacity(entries.len());
        for (i, j, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += c,
                _ => merged.push((i, j, c)),
            }
        }

        let marginals = match marginals {
            Some(m) if m.len() != n => {
                return Err(Error::invalid(format!("{} marginals for n = {n}", m.len())));
            }
            Some(m) => m,
            None => {
                let mut m = vec![0u64; n];
                for &(i, j, c) in &merged {
                    m[i] += c;
                    if i != j {
                        m[j] += c;
                    }
                }
                m
            }
        };
        let total = total.unwrap_or_else(|| merged.iter().map(|e| e.2).sum());
        if total == 0 {
            return Err(Error::invalid("total co-occurrence count must be positive"));
        }
        for &(i, j, _) in &merged {
            if marginals[i] == 0 || marginals[j] == 0 {
                return Err(Error::Inconsistent(format!(
                    "pair ({i}, {j}) has a nonzero count but a zero marginal"
                )));
            }
        }
        Ok(Self {
            n,
            entries: merged,
            total,
            marginals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, u64)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn marginals(&self) -> &[u64] {
        &self.marginals
    }
}

/// `max(log(P(x,y) / (P(x)P(y))) − shift, 0)`, zero where the count is zero.
pub fn build_sppmi(counts: &CooccurrenceCounts, shift: f64) -> Result<SymMatrix> {
    if !(shift >= 0.0) || !shift.is_finite() {
        return Err(Error::invalid(format!("shift must be >= 0, got {shift}")));
    }
    let total = counts.total as f64;
    let m = &counts.marginals;
    let mut out = nalgebra::DMatrix::zeros(counts.n, counts.n);
    for &(i, j, c) in &counts.entries {
        // P(x,y)/(P(x)P(y)) = c·total/(m_x·m_y)
        let pmi = (c as f64 * total / (m[i] as f64 * m[j] as f64)).ln();
        let v = (pmi - shift).max(0.0);
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(SymMatrix::symmetrize(out))
}
