//! JSON run configuration. One file may hold a section per command; unknown
//! keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mslbm_core::baselines::Method;
use mslbm_core::clustering::DEFAULT_RESTARTS;
use mslbm_core::fit::FitMode;
use mslbm_core::init::AsalmConfig;
use mslbm_core::model::SimConfig;

use crate::error::{CliError, CliResult};
use crate::io::MatrixFormat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory; `--out` takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkSection>,
    #[serde(default)]
    pub select_k: Option<SelectKSection>,
    #[serde(default)]
    pub sppmi: Option<SppmiSection>,
    #[serde(default)]
    pub eval: Option<EvalSection>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn section<'a, T>(&self, section: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        section
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("config has no \"{name}\" section")))
    }
}

fn default_view_format() -> MatrixFormat {
    MatrixFormat::DenseBinary
}
fn default_lambda_scale() -> f64 {
    2.0
}
fn default_iter_max() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-6
}
fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}
fn default_rank_gap() -> f64 {
    0.1
}
fn default_m() -> usize {
    3
}
fn default_settings() -> Vec<u8> {
    vec![1]
}
fn default_lambda_grid() -> Vec<f64> {
    vec![1.5]
}
fn default_methods() -> Vec<Method> {
    vec![
        Method::Mslbm,
        Method::SamMean,
        Method::SamMedian,
        Method::Mase,
        Method::MaseScaled,
        Method::SingleView,
    ]
}
fn default_fpr_targets() -> Vec<f64> {
    vec![0.01, 0.05, 0.1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub instance: SimConfig,
    #[serde(default = "default_view_format")]
    pub view_format: MatrixFormat,
}

/// Estimator settings shared by `fit` and `benchmark`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
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
    #[serde(default)]
    pub omega_threshold: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            mode: FitMode::Exact,
            lambda_scale: default_lambda_scale(),
            iter_max: default_iter_max(),
            tol: default_tol(),
            restarts: default_restarts(),
            omega_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// A directory written by `simulate` (its manifest lists the views).
    #[serde(default)]
    pub input: Option<PathBuf>,
    /// Explicit view files; the format follows the extension.
    #[serde(default)]
    pub views: Option<Vec<PathBuf>>,
    pub k: usize,
    /// Rank; estimated from the ASALM low-rank parts when absent.
    #[serde(default)]
    pub r: Option<usize>,
    /// Relative eigengap used when the rank is estimated.
    #[serde(default = "default_rank_gap")]
    pub rank_gap: f64,
    /// One configuration for all views, or one per view. Heuristic when absent.
    #[serde(default)]
    pub asalm: Option<Vec<AsalmConfig>>,
    /// `(i, j, target)` probe pairs for grid tuning of `(μ, τ)`.
    #[serde(default)]
    pub probes: Option<PathBuf>,
    #[serde(default)]
    pub mu_tau_grid: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub seed: u64,
    /// Ground-truth labels; the report then includes the MCE.
    #[serde(default)]
    pub truth_labels: Option<PathBuf>,
    /// Adds wall-clock times to the report (which then differs between runs).
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default = "default_settings")]
    pub settings: Vec<u8>,
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    pub r: usize,
    pub k_grid: Vec<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Per-view noise levels; the setting's defaults when absent.
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    /// Holds Ω fixed across seeds.
    #[serde(default)]
    pub omega_seed: Option<u64>,
    #[serde(default)]
    pub estimator: EstimatorSection,
    /// Fills `runtime_seconds` (which then differs between runs).
    #[serde(default)]
    pub record_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectKSection {
    /// Embedding rows, e.g. `U.csv` written by `fit`.
    pub embedding: PathBuf,
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub positive_pairs: Option<PathBuf>,
    #[serde(default)]
    pub negative_pairs: Option<PathBuf>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SppmiSection {
    /// Matrix Market counts (integer or real field, integral values).
    pub counts: PathBuf,
    /// One-column marginals CSV; row sums of the counts when absent.
    #[serde(default)]
    pub marginals: Option<PathBuf>,
    #[serde(default)]
    pub total: Option<u64>,
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "default_view_format")]
    pub output_format: MatrixFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Consensus estimate `Ĉ` in any matrix format.
    #[serde(default)]
    pub consensus: Option<PathBuf>,
    /// Embedding rows; pairs are scored by cosine similarity.
    #[serde(default)]
    pub embedding: Option<PathBuf>,
    /// `i,j,value` human similarity annotations.
    #[serde(default)]
    pub annotations: Option<PathBuf>,
    /// `i,j,label` related (1) and unrelated (0) pairs.
    #[serde(default)]
    pub relations: Option<PathBuf>,
    #[serde(default = "default_fpr_targets")]
    pub fpr_targets: Vec<f64>,
}
