//! Simulation benchmark: every method on every (setting, K, lambda_signal,
//! seed) cell.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use mslbm_core::baselines::{mase_embed, sam_embed, single_view_from_asalm, Method};
use mslbm_core::clustering::{kmeans, kmedian};
use mslbm_core::init::{asalm_decompose, AsalmConfig, AsalmResult};
use mslbm_core::linalg::{projector_distance, top_eigen, LowRankFactor, SymMatrix};
use mslbm_core::metrics::{align_to_truth, l0_loss, mce_matching, rel_l2};
use mslbm_core::model::{gen_instance, GroundTruth, Membership, MultiViewData, Setting, SimConfig};
use mslbm_core::pipeline::{run_mslbm_from, PipelineOptions};
use mslbm_core::rng::derive_seed;

use crate::config::{BenchmarkSection, EstimatorSection};
use crate::error::{CliError, CliResult};
use crate::results::{ResultRow, ResultsTable};

/// Support threshold for the ℓ₀ loss of the deviation estimates.
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub setting: Setting,
    pub k: usize,
    pub lambda_signal: f64,
    pub seed: u64,
}

impl BenchmarkSection {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.settings.is_empty() || self.k_grid.is_empty() || self.lambda_grid.is_empty() || self.seeds.is_empty() {
            return bad("benchmark grids and seed list must be nonempty".into());
        }
        if self.methods.is_empty() {
            return bad("benchmark needs at least one method".into());
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            return bad("duplicate method in benchmark method list".into());
        }
        for cell in self.cells()? {
            self.sim_config(&cell).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.r > self.n {
            return bad(format!("r = {} exceeds n = {}", self.r, self.n));
        }
        Ok(())
    }

    /// The grid in (setting, K, lambda_signal, seed) order.
    pub fn cells(&self) -> CliResult<Vec<Cell>> {
        let mut out = Vec::new();
        for &s in &self.settings {
            let setting = Setting::try_from(s).map_err(|e| CliError::Config(e.to_string()))?;
            for &k in &self.k_grid {
                for &lambda_signal in &self.lambda_grid {
                    for &seed in &self.seeds {
                        out.push(Cell {
                            setting,
                            k,
                            lambda_signal,
                            seed,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn sim_config(&self, cell: &Cell) -> SimConfig {
        let mut cfg = SimConfig::defaults(cell.setting, cell.k, cell.seed);
        cfg.n = self.n;
        cfg.m = self.m;
        cfg.r = self.r;
        cfg.lambda_signal = cell.lambda_signal;
        cfg.omega_seed = self.omega_seed;
        if let Some(sigma) = &self.sigma {
            cfg.sigma = sigma.clone();
        }
        cfg
    }
}

fn pipeline_options(est: &EstimatorSection, r: usize, k: usize, seed: u64) -> PipelineOptions {
    PipelineOptions {
        r,
        k,
        mode: est.mode,
        lambda_scale: est.lambda_scale,
        iter_max: est.iter_max,
        tol: est.tol,
        restarts: est.restarts,
        omega_threshold: est.omega_threshold,
        seed,
    }
}

/// Runs the whole grid in parallel; rows come back sorted by key.
pub fn run_benchmark(section: &BenchmarkSection) -> CliResult<ResultsTable> {
    section.validate()?;
    let cells = section.cells()?;
    info!("benchmark: {} cells x {} methods", cells.len(), section.methods.len());
    let rows: Vec<ResultRow> = cells.par_iter().flat_map_iter(|cell| evaluate_cell(section, cell)).collect();
    ResultsTable::new(rows)
}

struct Scored {
    mce: f64,
    l2_omega: Option<f64>,
    l0_theta: Option<f64>,
    eig_dist: f64,
}

struct CellContext<'a> {
    data: &'a MultiViewData,
    truth: &'a GroundTruth,
    span: LowRankFactor,
    r: usize,
    k: usize,
    kmeans_seed: u64,
}

impl CellContext<'_> {
    fn dist_to_truth(&self, basis: LowRankFactor) -> mslbm_core::Result<f64> {
        projector_distance(&basis, &self.span)
    }

    fn top_basis(&self, c: &SymMatrix) -> mslbm_core::Result<LowRankFactor> {
        LowRankFactor::new(top_eigen(c, self.r)?.1)
    }

    fn mce(&self, labels: &Membership) -> mslbm_core::Result<f64> {
        Ok(mce_matching(labels, &self.truth.membership)?.mce)
    }

    fn l0(&self, thetas: impl Iterator<Item = nalgebra::DMatrix<f64>>) -> mslbm_core::Result<f64> {
        let denom = (self.k * self.k) as f64;
        let mut total = 0.0;
        for (est, truth) in thetas.zip(&self.truth.theta) {
            total += l0_loss(&est, &truth.to_dense(), denom, SUPPORT_TOL)?;
        }
        Ok(total / self.truth.theta.len() as f64)
    }
}

/// One row per configured method; a method that fails gets a row of absent
/// metrics and the remaining methods still run.
pub fn evaluate_cell(section: &BenchmarkSection, cell: &Cell) -> Vec<ResultRow> {
    let empty = |method: Method| ResultRow::empty(method, cell.setting.into(), cell.k, cell.lambda_signal, cell.seed);
    let sim = section.sim_config(cell);
    let prepared = gen_instance(&sim).and_then(|(data, truth)| {
        let span = LowRankFactor::new(top_eigen(&truth.consensus(), section.r)?.1)?;
        Ok((data, truth, span))
    });
    let (data, truth, span) = match prepared {
        Ok(p) => p,
        Err(e) => {
            warn!("cell {cell:?}: instance generation failed: {e}");
            return section.methods.iter().map(|&m| empty(m)).collect();
        }
    };
    let ctx = CellContext {
        data: &data,
        truth: &truth,
        span,
        r: section.r,
        k: cell.k,
        kmeans_seed: derive_seed(cell.seed, "benchmark_kmeans", cell.k as u64),
    };

    // ASALM is shared by the estimator and the single-view pipeline.
    let needs_asalm = section.methods.iter().any(|m| matches!(m, Method::Mslbm | Method::SingleView));
    let start = Instant::now();
    let asalm: Option<mslbm_core::Result<Vec<AsalmResult>>> = needs_asalm.then(|| {
        data.views()
            .iter()
            .map(|w| asalm_decompose(w, &AsalmConfig::heuristic(w)))
            .collect()
    });
    let asalm_secs = start.elapsed().as_secs_f64();

    section
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let scored = match (&asalm, method) {
                (Some(Err(e)), Method::Mslbm | Method::SingleView) => Err(e.clone()),
                (Some(Ok(a)), Method::Mslbm) => score_mslbm(&ctx, section, a),
                (Some(Ok(a)), Method::SingleView) => score_single_view(&ctx, section, a),
                _ => score_embedding(&ctx, section, method),
            };
            let mut secs = start.elapsed().as_secs_f64();
            if matches!(method, Method::Mslbm | Method::SingleView) {
                secs += asalm_secs;
            }
            match scored {
                Ok(s) => ResultRow {
                    mce: Some(s.mce),
                    l2_omega: s.l2_omega,
                    l0_theta: s.l0_theta,
                    eig_dist: Some(s.eig_dist),
                    runtime_seconds: section.record_timing.then_some(secs),
                    ..empty(method)
                },
                Err(e) => {
                    warn!("cell {cell:?}, method {}: {e}", method.name());
                    empty(method)
                }
            }
        })
        .collect()
}

fn score_mslbm(ctx: &CellContext, section: &BenchmarkSection, asalm: &[AsalmResult]) -> mslbm_core::Result<Scored> {
    let opts = pipeline_options(&section.estimator, ctx.r, ctx.k, ctx.kmeans_seed);
    let out = run_mslbm_from(ctx.data, &opts, asalm.to_vec())?;
    let matching = mce_matching(&out.clusters.labels, &ctx.truth.membership)?;
    let l2 = rel_l2(&align_to_truth(out.omega.matrix(), &matching)?, ctx.truth.omega.matrix())?;
    let l0 = ctx.l0(out.estimate.theta.iter().map(|t| t.to_dense()))?;
    let eig = ctx.dist_to_truth(ctx.top_basis(&out.estimate.consensus())?)?;
    Ok(Scored {
        mce: matching.mce,
        l2_omega: Some(l2),
        l0_theta: Some(l0),
        eig_dist: eig,
    })
}

/// Metrics of the one-view pipeline, averaged over views.
fn score_single_view(ctx: &CellContext, section: &BenchmarkSection, asalm: &[AsalmResult]) -> mslbm_core::Result<Scored> {
    let m = asalm.len() as f64;
    let (mut mce, mut l2, mut eig) = (0.0, 0.0, 0.0);
    let mut thetas = Vec::with_capacity(asalm.len());
    for a in asalm {
        let sv = single_view_from_asalm(a, ctx.r, ctx.k, section.estimator.restarts, ctx.kmeans_seed)?;
        let matching = mce_matching(&sv.labels, &ctx.truth.membership)?;
        mce += matching.mce / m;
        l2 += rel_l2(&align_to_truth(sv.omega.matrix(), &matching)?, ctx.truth.omega.matrix())? / m;
        eig += ctx.dist_to_truth(ctx.top_basis(&sv.consensus)?)? / m;
        thetas.push(sv.theta.to_dense());
    }
    Ok(Scored {
        mce,
        l2_omega: Some(l2),
        l0_theta: Some(ctx.l0(thetas.into_iter())?),
        eig_dist: eig,
    })
}

fn score_embedding(ctx: &CellContext, section: &BenchmarkSection, method: Method) -> mslbm_core::Result<Scored> {
    let restarts = section.estimator.restarts;
    let (emb, labels) = match method {
        Method::SamMean => {
            let e = sam_embed(ctx.data, ctx.r)?;
            let l = kmeans(e.u.rows(), ctx.k, restarts, ctx.kmeans_seed)?.labels;
            (e, l)
        }
        Method::SamMedian => {
            let e = sam_embed(ctx.data, ctx.r)?;
            let l = kmedian(e.row_normalized().u.rows(), ctx.k, restarts, ctx.kmeans_seed)?.labels;
            (e, l)
        }
        Method::Mase | Method::MaseScaled => {
            let e = mase_embed(ctx.data, ctx.r, method == Method::MaseScaled)?;
            let l = kmeans(e.u.rows(), ctx.k, restarts, ctx.kmeans_seed)?.labels;
            (e, l)
        }
        Method::Mslbm | Method::SingleView => unreachable!("handled with the shared decomposition"),
    };
    Ok(Scored {
        mce: ctx.mce(&labels)?,
        l2_omega: None,
        l0_theta: None,
        eig_dist: ctx.dist_to_truth(emb.u)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn small() -> BenchmarkSection {
        RunConfig::parse(r#"{"benchmark": {"n": 40, "r": 2, "k_grid": [4], "seeds": [3], "estimator": {"iter_max": 5}}}"#)
            .unwrap()
            .benchmark
            .unwrap()
    }

    #[test]
    fn one_cell_gives_one_row_per_method() {
        let section = small();
        let table = run_benchmark(&section).unwrap();
        assert_eq!(table.rows().len(), 6);
        for row in table.rows() {
            assert!(row.mce.is_some() && row.eig_dist.is_some(), "{row:?}");
            assert_eq!(row.runtime_seconds, None);
            let estimates_omega = matches!(row.method, Method::Mslbm | Method::SingleView);
            assert_eq!(row.l2_omega.is_some(), estimates_omega);
            assert_eq!(row.l0_theta.is_some(), estimates_omega);
        }
        let mut two = small();
        two.methods = vec![Method::Mase, Method::SamMean];
        assert_eq!(run_benchmark(&two).unwrap().rows().len(), 2);
    }

    #[test]
    fn failing_method_is_recorded_as_absent() {
        let mut section = small();
        section.methods = vec![Method::SamMean];
        let cell = Cell {
            setting: Setting::Heterogeneous,
            // more groups than vertices
            k: 50,
            lambda_signal: 1.5,
            seed: 0,
        };
        let rows = evaluate_cell(&section, &cell);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mce, None);
    }

    #[test]
    fn invalid_grids_are_config_errors() {
        let mut section = small();
        section.settings = vec![3];
        assert_eq!(run_benchmark(&section).unwrap_err().exit_code(), 2);
        let mut section = small();
        section.methods = vec![Method::Mase, Method::Mase];
        assert!(run_benchmark(&section).is_err());
        let mut section = small();
        section.m = 4;
        assert!(run_benchmark(&section).is_err());
    }
}
