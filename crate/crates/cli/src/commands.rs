//! The six subcommands. Each reads its config section, computes and writes
//! its artifacts into the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mslbm_core::clustering::{select_k_pairs, select_k_unsupervised, KSelectionReport};
use mslbm_core::fit::FitMode;
use mslbm_core::init::{aggregate_rank, asalm_decompose, estimate_rank, tune_mu_tau, AsalmConfig};
use mslbm_core::linalg::{normalize_rows, SymMatrix};
use mslbm_core::metrics::{auc_tpr, mce, spearman, PairScoreSet};
use mslbm_core::model::{gen_instance, Membership, MultiViewData, SimConfig};
use mslbm_core::pipeline::{run_mslbm_from, PipelineOptions};
use mslbm_core::sppmi::{build_sppmi, CooccurrenceCounts};

use crate::bench::run_benchmark;
use crate::config::{EvalSection, FitSection, RunConfig, SelectKSection, SimulateSection, SppmiSection};
use crate::error::{CliError, CliResult, Stage};
use crate::io::{self, MatrixFormat, MmField, MmSymmetry};
use crate::results::write_aggregate_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Benchmark,
    SelectK,
    Sppmi,
    Eval,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mode: Option<FitMode>,
}

pub fn run(command: Command, cfg: &RunConfig, ov: &Overrides) -> CliResult<()> {
    let out = ov
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory (set out_dir or pass --out)".into()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    match command {
        Command::Simulate => simulate(cfg.section(&cfg.simulate, "simulate")?, &out, ov),
        Command::Fit => fit(cfg.section(&cfg.fit, "fit")?, &out, ov),
        Command::Benchmark => {
            let mut section = cfg.section(&cfg.benchmark, "benchmark")?.clone();
            if let Some(seed) = ov.seed {
                section.seeds = vec![seed];
            }
            if let Some(mode) = ov.mode {
                section.estimator.mode = mode;
            }
            let table = run_benchmark(&section)?;
            table.write_csv(&out.join("results.csv"))?;
            write_aggregate_csv(&out.join("aggregate.csv"), &table.aggregate())
        }
        Command::SelectK => select_k(cfg.section(&cfg.select_k, "select_k")?, &out, ov),
        Command::Sppmi => sppmi(cfg.section(&cfg.sppmi, "sppmi")?, &out),
        Command::Eval => eval(cfg.section(&cfg.eval, "eval")?, &out),
    }
}

/// Written by `simulate`; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub instance: SimConfig,
    pub views: Vec<PathBuf>,
    pub truth: TruthFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFiles {
    pub labels: PathBuf,
    pub omega: PathBuf,
    /// `n × m`, one column per view.
    pub h: PathBuf,
    pub theta: Vec<PathBuf>,
    pub sigma: PathBuf,
}

pub const MANIFEST: &str = "manifest.json";

fn simulate(section: &SimulateSection, out: &Path, ov: &Overrides) -> CliResult<()> {
    let mut instance = section.instance.clone();
    if let Some(seed) = ov.seed {
        instance.seed = seed;
    }
    instance.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (data, truth) = gen_instance(&instance).stage("simulate")?;
    let ext = section.view_format.extension();

    let views: Vec<PathBuf> = (1..=data.m()).map(|s| PathBuf::from(format!("W_{s}.{ext}"))).collect();
    for (w, name) in data.views().iter().zip(&views) {
        io::write_matrix(&out.join(name), w, section.view_format)?;
    }
    let files = TruthFiles {
        labels: "truth_labels.csv".into(),
        omega: "truth_omega.csv".into(),
        h: "truth_h.csv".into(),
        theta: (1..=data.m()).map(|s| PathBuf::from(format!("truth_theta_{s}.mtx"))).collect(),
        sigma: "truth_sigma.csv".into(),
    };
    io::write_labels(&out.join(&files.labels), truth.membership.labels())?;
    io::write_dense_csv(&out.join(&files.omega), truth.omega.matrix())?;
    let h = DMatrix::from_fn(data.n(), data.m(), |i, s| truth.h[s].values()[i]);
    io::write_dense_csv(&out.join(&files.h), &h)?;
    for (theta, name) in truth.theta.iter().zip(&files.theta) {
        io::write_matrix_market(&out.join(name), data.n(), theta.entries())?;
    }
    io::write_column(&out.join(&files.sigma), &truth.sigma)?;
    let manifest = Manifest {
        seed: instance.seed,
        instance,
        views,
        truth: files,
    };
    io::write_json(&out.join(MANIFEST), &manifest)?;
    info!("simulate: wrote {} views to {}", data.m(), out.display());
    Ok(())
}

fn view_paths(section: &FitSection) -> CliResult<Vec<PathBuf>> {
    match (&section.input, &section.views) {
        (Some(dir), None) => {
            let manifest: Manifest = io::read_json(&dir.join(MANIFEST))?;
            Ok(manifest.views.iter().map(|v| dir.join(v)).collect())
        }
        (None, Some(views)) if !views.is_empty() => Ok(views.clone()),
        _ => Err(CliError::Config("fit needs exactly one of \"input\" or a nonempty \"views\"".into())),
    }
}

pub fn load_views(paths: &[PathBuf]) -> CliResult<MultiViewData> {
    let views = paths.iter().map(|p| io::read_matrix_auto(p)).collect::<CliResult<Vec<_>>>()?;
    MultiViewData::new(views).map_err(|e| CliError::Config(format!("views: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub k: usize,
    pub mode: FitMode,
    pub seed: u64,
    pub asalm: Vec<AsalmConfig>,
    pub asalm_iterations: Vec<usize>,
    pub h_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub kappa_trace: Vec<f64>,
    pub kmeans_objective: f64,
    pub cluster_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<StageTimes>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTimes {
    pub init: f64,
    pub fit_and_cluster: f64,
    pub total: f64,
}

fn asalm_configs(section: &FitSection, data: &MultiViewData) -> CliResult<Vec<AsalmConfig>> {
    let m = data.m();
    let mut cfgs = match &section.asalm {
        None => data.views().iter().map(AsalmConfig::heuristic).collect(),
        Some(c) if c.len() == 1 => vec![c[0]; m],
        Some(c) if c.len() == m => c.clone(),
        Some(c) => {
            return Err(CliError::Config(format!("{} ASALM configurations for {m} views", c.len())));
        }
    };
    for c in &cfgs {
        c.validate().map_err(|e| CliError::Config(format!("asalm: {e}")))?;
    }
    match (&section.probes, &section.mu_tau_grid) {
        (Some(probes), Some(grid)) => {
            let probes = io::read_valued_pairs(probes)?;
            for (w, c) in data.views().iter().zip(cfgs.iter_mut()) {
                let (mu, tau) = tune_mu_tau(w, &probes, grid, c).stage("tune_mu_tau")?;
                c.mu = mu;
                c.tau = tau;
            }
        }
        (None, None) => {}
        _ => return Err(CliError::Config("probes and mu_tau_grid must be given together".into())),
    }
    Ok(cfgs)
}

fn fit(section: &FitSection, out: &Path, ov: &Overrides) -> CliResult<()> {
    let t0 = Instant::now();
    let data = load_views(&view_paths(section)?)?;
    let truth = section
        .truth_labels
        .as_ref()
        .map(|p| {
            let labels = io::read_labels(p)?;
            Membership::from_labels(labels).map_err(|e| CliError::Config(format!("truth labels: {e}")))
        })
        .transpose()?;
    if let Some(t) = &truth {
        if t.n() != data.n() {
            return Err(CliError::Config(format!("{} truth labels for n = {}", t.n(), data.n())));
        }
    }

    let cfgs = asalm_configs(section, &data)?;
    let decomposed = data
        .views()
        .iter()
        .zip(&cfgs)
        .map(|(w, c)| asalm_decompose(w, c))
        .collect::<mslbm_core::Result<Vec<_>>>()
        .stage("asalm")?;
    let r = match section.r {
        Some(r) => r,
        None => {
            let ranks = decomposed
                .iter()
                .map(|a| estimate_rank(&a.l, section.rank_gap))
                .collect::<mslbm_core::Result<Vec<_>>>()
                .stage("estimate_rank")?;
            let r = aggregate_rank(&ranks);
            info!("fit: per-view ranks {ranks:?}, using r = {r}");
            if r == 0 {
                return Err(CliError::Core {
                    stage: "estimate_rank",
                    source: mslbm_core::Error::RankDeficient {
                        lambda_1: 0.0,
                        lambda_r: 0.0,
                    },
                });
            }
            r
        }
    };
    let t_init = t0.elapsed().as_secs_f64();

    let est = &section.estimator;
    let seed = ov.seed.unwrap_or(section.seed);
    let opts = PipelineOptions {
        r,
        k: section.k,
        mode: ov.mode.unwrap_or(est.mode),
        lambda_scale: est.lambda_scale,
        iter_max: est.iter_max,
        tol: est.tol,
        restarts: est.restarts,
        omega_threshold: est.omega_threshold,
        seed,
    };
    opts.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let iterations_asalm = decomposed.iter().map(|a| a.iterations).collect();
    let result = run_mslbm_from(&data, &opts, decomposed).stage("fit")?;
    let labels = &result.clusters.labels;
    let mce_value = truth.as_ref().map(|t| mce(labels, t)).transpose().stage("mce")?;

    let e = &result.estimate;
    io::write_dense_csv(&out.join("U.csv"), e.u.rows())?;
    let h = DMatrix::from_fn(data.n(), data.m(), |i, s| e.h[s].values()[i]);
    io::write_dense_csv(&out.join("H.csv"), &h)?;
    for (s, theta) in e.theta.iter().enumerate() {
        io::write_matrix_market(&out.join(format!("theta_{}.mtx", s + 1)), data.n(), theta.entries())?;
    }
    io::write_matrix(&out.join("consensus.bin"), &e.consensus(), MatrixFormat::DenseBinary)?;
    io::write_labels(&out.join("labels.csv"), labels.labels())?;
    io::write_dense_csv(&out.join("omega.csv"), result.omega.matrix())?;

    let total = t0.elapsed().as_secs_f64();
    let report = FitReport {
        n: data.n(),
        m: data.m(),
        r,
        k: section.k,
        mode: opts.mode,
        seed,
        asalm: cfgs,
        asalm_iterations: iterations_asalm,
        h_hat: result.warm.h_hat.clone(),
        sigma_hat: result.warm.sigma_hat.clone(),
        alpha: result.fit_config.alpha.clone(),
        lambda: result.fit_config.lambda.clone(),
        iterations: e.iterations,
        converged: e.converged,
        objective_trace: e.objective_trace.clone(),
        kappa_trace: e.kappa_trace.clone(),
        kmeans_objective: result.clusters.objective,
        cluster_sizes: labels.sizes(),
        mce: mce_value,
        wall_seconds: section.record_timing.then(|| StageTimes {
            init: t_init,
            fit_and_cluster: total - t_init,
            total,
        }),
    };
    io::write_json(&out.join("report.json"), &report)?;
    info!("fit: {} iterations, converged = {}", e.iterations, e.converged);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectKOutput {
    pub best_k: usize,
    /// `pairs` (sensitivity + specificity on labeled pairs) or `silhouette`.
    pub criterion: &'static str,
    pub report: KSelectionReport,
}

fn select_k(section: &SelectKSection, out: &Path, ov: &Overrides) -> CliResult<()> {
    let u = io::read_dense_csv(&section.embedding)?;
    let seed = ov.seed.unwrap_or(section.seed);
    let output = match (&section.positive_pairs, &section.negative_pairs) {
        (Some(p), Some(n)) => {
            let (pos, neg) = (io::read_pairs(p)?, io::read_pairs(n)?);
            check_ids(u.nrows(), pos.iter().chain(&neg).copied()).stage("select_k")?;
            let (best_k, report) =
                select_k_pairs(&u, &section.k_grid, &pos, &neg, section.restarts, seed).stage("select_k")?;
            SelectKOutput {
                best_k,
                criterion: "pairs",
                report,
            }
        }
        (None, None) => {
            let report = select_k_unsupervised(&u, &section.k_grid, section.restarts, seed).stage("select_k")?;
            // highest silhouette, smallest K on ties
            let best_k = report
                .candidates
                .iter()
                .filter_map(|c| c.silhouette.map(|s| (c.k, s)))
                .fold(None, |best: Option<(usize, f64)>, (k, s)| match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((k, s)),
                })
                .map(|(k, _)| k)
                .ok_or_else(|| CliError::Config("no K in the grid has a defined silhouette".into()))?;
            SelectKOutput {
                best_k,
                criterion: "silhouette",
                report,
            }
        }
        _ => return Err(CliError::Config("positive_pairs and negative_pairs must be given together".into())),
    };
    io::write_json(&out.join("select_k.json"), &output)?;
    info!("select-k: K = {}", output.best_k);
    Ok(())
}

fn sppmi(section: &SppmiSection, out: &Path) -> CliResult<()> {
    let path = &section.counts;
    let mm = io::read_matrix_market(path)?;
    if mm.nrows != mm.ncols || mm.symmetry != MmSymmetry::Symmetric {
        return Err(CliError::parse(path, "line 1", "counts must be a square symmetric coordinate matrix"));
    }
    let mut counts = Vec::with_capacity(mm.entries.len());
    for &(i, j, v) in &mm.entries {
        if v < 0.0 || v.fract() != 0.0 || (mm.field == MmField::Real && v > u64::MAX as f64) {
            return Err(CliError::parse(path, "data", format!("count at ({}, {}) is not a nonnegative integer", i + 1, j + 1)));
        }
        counts.push((i, j, v as u64));
    }
    let marginals = match &section.marginals {
        Some(p) => {
            let col = io::read_column(p)?;
            if let Some(bad) = col.iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
                return Err(CliError::parse(p, "data", format!("marginal {bad} is not a nonnegative integer")));
            }
            Some(col.iter().map(|&v| v as u64).collect())
        }
        None => None,
    };
    let counts = CooccurrenceCounts::new(mm.nrows, counts, marginals, section.total).stage("sppmi")?;
    let s = build_sppmi(&counts, section.shift).stage("sppmi")?;
    let name = format!("sppmi.{}", section.output_format.extension());
    io::write_matrix(&out.join(&name), &s, section.output_format)?;
    info!("sppmi: wrote {name}");
    Ok(())
}

/// Invalid-parameter error listing every vertex id that is out of range.
fn check_ids(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> mslbm_core::Result<()> {
    let mut bad: Vec<usize> = pairs.flat_map(|(i, j)| [i, j]).filter(|&v| v >= n).collect();
    if bad.is_empty() {
        return Ok(());
    }
    bad.sort_unstable();
    bad.dedup();
    Err(mslbm_core::Error::InvalidParameter(format!("vertex ids not found (n = {n}): {bad:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<AnnotationScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relations: Option<RelationScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationScore {
    pub pairs: usize,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationScore {
    pub positive: usize,
    pub negative: usize,
    pub auc: f64,
    pub fpr_targets: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Pair scores: entries of `Ĉ`, or cosine similarity of embedding rows.
enum Scorer {
    Matrix(SymMatrix),
    Rows(DMatrix<f64>),
}

impl Scorer {
    fn n(&self) -> usize {
        match self {
            Scorer::Matrix(c) => c.dim(),
            Scorer::Rows(u) => u.nrows(),
        }
    }

    fn score(&self, i: usize, j: usize) -> f64 {
        match self {
            Scorer::Matrix(c) => c[(i, j)],
            Scorer::Rows(u) => u.row(i).dot(&u.row(j)),
        }
    }
}

pub fn evaluate(section: &EvalSection) -> CliResult<EvalReport> {
    let scorer = match (&section.consensus, &section.embedding) {
        (Some(c), None) => Scorer::Matrix(io::read_matrix_auto(c)?),
        (None, Some(e)) => Scorer::Rows(normalize_rows(&io::read_dense_csv(e)?).0),
        _ => return Err(CliError::Config("eval needs exactly one of \"consensus\" or \"embedding\"".into())),
    };
    if section.annotations.is_none() && section.relations.is_none() {
        return Err(CliError::Config("eval needs \"annotations\", \"relations\" or both".into()));
    }
    let n = scorer.n();
    let annotations = section.annotations.as_ref().map(|p| io::read_valued_pairs(p)).transpose()?;
    let relations = section.relations.as_ref().map(|p| io::read_labeled_pairs(p)).transpose()?;
    let ids = annotations
        .iter()
        .flatten()
        .map(|&(i, j, _)| (i, j))
        .chain(relations.iter().flatten().map(|&(i, j, _)| (i, j)));
    check_ids(n, ids).stage("eval")?;

    let annotations = annotations
        .map(|a| {
            let scores: Vec<f64> = a.iter().map(|&(i, j, _)| scorer.score(i, j)).collect();
            let values: Vec<f64> = a.iter().map(|p| p.2).collect();
            Ok::<_, CliError>(AnnotationScore {
                pairs: a.len(),
                spearman: spearman(&scores, &values).stage("spearman")?,
            })
        })
        .transpose()?;
    let relations = relations
        .map(|rel| {
            let scores = rel.iter().map(|&(i, j, _)| scorer.score(i, j)).collect();
            let positive = rel.iter().filter(|p| p.2).count();
            let negative = rel.len() - positive;
            let set = PairScoreSet::new(rel, scores).stage("auc")?;
            let (auc, tpr) = auc_tpr(&set, &section.fpr_targets).stage("auc")?;
            Ok::<_, CliError>(RelationScore {
                positive,
                negative,
                auc,
                fpr_targets: section.fpr_targets.clone(),
                tpr,
            })
        })
        .transpose()?;
    Ok(EvalReport {
        annotations,
        relations,
    })
}

fn eval(section: &EvalSection, out: &Path) -> CliResult<()> {
    let report = evaluate(section)?;
    io::write_json(&out.join("eval.json"), &report)
}
