//! Benchmark results: one row per (method, setting, K, lambda_signal, seed).

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use mslbm_core::baselines::Method;

use crate::error::{CliError, CliResult};
use crate::io::csv_error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub setting: u8,
    pub k: usize,
    pub lambda_signal: f64,
    pub seed: u64,
    pub mce: Option<f64>,
    pub l2_omega: Option<f64>,
    pub l0_theta: Option<f64>,
    pub eig_dist: Option<f64>,
    pub runtime_seconds: Option<f64>,
}

impl ResultRow {
    /// A row with every metric absent.
    pub fn empty(method: Method, setting: u8, k: usize, lambda_signal: f64, seed: u64) -> Self {
        Self {
            method,
            setting,
            k,
            lambda_signal,
            seed,
            mce: None,
            l2_omega: None,
            l0_theta: None,
            eig_dist: None,
            runtime_seconds: None,
        }
    }

    fn metrics(&self) -> [Option<f64>; 5] {
        [self.mce, self.l2_omega, self.l0_theta, self.eig_dist, self.runtime_seconds]
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        (self.method, self.setting, self.k)
            .cmp(&(other.method, other.setting, other.k))
            .then(self.lambda_signal.total_cmp(&other.lambda_signal))
            .then(self.seed.cmp(&other.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    rows: Vec<ResultRow>,
}

impl ResultsTable {
    /// Sorts by key; duplicate keys and non-finite metrics are rejected.
    pub fn new(mut rows: Vec<ResultRow>) -> CliResult<Self> {
        rows.sort_by(ResultRow::cmp_key);
        for pair in rows.windows(2) {
            if pair[0].cmp_key(&pair[1]) == Ordering::Equal {
                let r = &pair[1];
                return Err(CliError::Config(format!(
                    "duplicate result key ({}, {}, {}, {}, {})",
                    r.method.name(),
                    r.setting,
                    r.k,
                    r.lambda_signal,
                    r.seed
                )));
            }
        }
        if let Some(r) = rows.iter().find(|r| r.metrics().iter().flatten().any(|v| !v.is_finite())) {
            return Err(CliError::Config(format!("non-finite metric for method {} seed {}", r.method.name(), r.seed)));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn write_csv(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> CliResult<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let rows = r
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Self::new(rows)
    }

    /// Mean of each metric over seeds, per (method, setting, K, lambda_signal).
    /// Absent values are skipped; a mean over no values is absent.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        let mut sums = [(0.0, 0usize); 5];
        let flush = |out: &mut Vec<AggregateRow>, first: &ResultRow, seeds: usize, sums: &mut [(f64, usize); 5]| {
            let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
            out.push(AggregateRow {
                method: first.method,
                setting: first.setting,
                k: first.k,
                lambda_signal: first.lambda_signal,
                seeds,
                mce: mean(sums[0]),
                l2_omega: mean(sums[1]),
                l0_theta: mean(sums[2]),
                eig_dist: mean(sums[3]),
                runtime_seconds: mean(sums[4]),
            });
            *sums = [(0.0, 0); 5];
        };
        let mut start = 0;
        for (i, row) in self.rows.iter().enumerate() {
            let first = &self.rows[start];
            let same = (row.method, row.setting, row.k) == (first.method, first.setting, first.k)
                && row.lambda_signal.total_cmp(&first.lambda_signal) == Ordering::Equal;
            if !same {
                flush(&mut out, first, i - start, &mut sums);
                start = i;
            }
            for (acc, v) in sums.iter_mut().zip(row.metrics()) {
                if let Some(v) = v {
                    acc.0 += v;
                    acc.1 += 1;
                }
            }
        }
        if start < self.rows.len() {
            flush(&mut out, &self.rows[start], self.rows.len() - start, &mut sums);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub setting: u8,
    pub k: usize,
    pub lambda_signal: f64,
    /// Number of rows in the group.
    pub seeds: usize,
    pub mce: Option<f64>,
    pub l2_omega: Option<f64>,
    pub l0_theta: Option<f64>,
    pub eig_dist: Option<f64>,
    pub runtime_seconds: Option<f64>,
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
