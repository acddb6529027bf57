//! End-to-end estimation: warm start, alternating minimisation, clustering
//! of the unit rows and block means of the consensus estimate.

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, omega_hat, KMeansResult, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig, FitMode, ModelEstimate};
use crate::init::{asalm_decompose, warm_start_from, AsalmConfig, AsalmResult, WarmStart};
use crate::model::{GroupWeights, MultiViewData};

fn default_lambda_scale() -> f64 {
    2.0
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}
fn default_iter_max() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineOptions {
    pub r: usize,
    pub k: usize,
    #[serde(default)]
    pub mode: FitMode,
    /// Multiplier on the tuned sparsity penalties.
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default = "default_iter_max")]
    pub iter_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Entries of `Ĉ` below this are dropped from the block means.
    #[serde(default)]
    pub omega_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineOptions {
    pub fn new(r: usize, k: usize) -> Self {
        Self {
            r,
            k,
            mode: FitMode::Exact,
            lambda_scale: default_lambda_scale(),
            iter_max: default_iter_max(),
            tol: default_tol(),
            restarts: default_restarts(),
            omega_threshold: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.r == 0 {
            return Err(Error::invalid("r and k must be positive"));
        }
        if !(self.lambda_scale >= 0.0 && self.lambda_scale.is_finite()) {
            return Err(Error::invalid("lambda_scale must be >= 0"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub warm: WarmStart,
    pub fit_config: FitConfig,
    pub estimate: ModelEstimate,
    pub clusters: KMeansResult,
    pub omega: GroupWeights,
}

/// Runs the estimator with per-view ASALM configurations (heuristic ones
/// when `asalm` is `None`).
pub fn run_mslbm(views: &MultiViewData, opts: &PipelineOptions, asalm: Option<&[AsalmConfig]>) -> Result<PipelineOutput> {
    let cfgs: Vec<AsalmConfig> = match asalm {
        Some(c) if c.len() != views.m() => {
            return Err(Error::invalid("one ASALM configuration per view is required"));
        }
        Some(c) => c.to_vec(),
        None => views.views().iter().map(AsalmConfig::heuristic).collect(),
    };
    let decomposed = views
        .views()
        .iter()
        .zip(&cfgs)
        .map(|(w, c)| asalm_decompose(w, c))
        .collect::<Result<Vec<_>>>()?;
    run_mslbm_from(views, opts, decomposed)
}

/// As [`run_mslbm`], from decompositions computed elsewhere.
pub fn run_mslbm_from(views: &MultiViewData, opts: &PipelineOptions, asalm: Vec<AsalmResult>) -> Result<PipelineOutput> {
    opts.validate()?;
    let warm = warm_start_from(views, opts.r, asalm)?;
    let mut cfg = FitConfig::new(opts.r, views.m());
    cfg.alpha = warm.alpha.clone();
    cfg.lambda = warm.lambda.iter().map(|l| l * opts.lambda_scale).collect();
    cfg.mode = opts.mode;
    cfg.iter_max = opts.iter_max;
    cfg.tol = opts.tol;
    let estimate = fit(views, &cfg, &warm.estimate)?;
    let clusters = kmeans(estimate.u.rows(), opts.k, opts.restarts, opts.seed)?;
    let omega = omega_hat(&clusters.labels, &estimate.consensus(), opts.omega_threshold)?;
    Ok(PipelineOutput {
        warm,
        fit_config: cfg,
        estimate,
        clusters,
        omega,
    })
}
