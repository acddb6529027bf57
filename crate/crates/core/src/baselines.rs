//! Comparison methods: spectral embedding of the summed views (SAM),
//! multiple adjacency spectral embedding (MASE, plain and scaled) and the
//! one-view-at-a-time ASALM pipeline.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, omega_hat};
use crate::error::{Error, Result};
use crate::fit::rec;
use crate::init::{asalm_decompose, AsalmConfig, AsalmResult};
use crate::linalg::{normalize_rows, sym_eigen, top_eigen, LowRankFactor, SymMatrix};
use crate::model::{GroupWeights, Membership, MultiViewData, SparseDeviation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mslbm,
    SamMean,
    SamMedian,
    Mase,
    MaseScaled,
    SingleView,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mslbm => "mslbm",
            Method::SamMean => "sam_mean",
            Method::SamMedian => "sam_median",
            Method::Mase => "mase",
            Method::MaseScaled => "mase_scaled",
            Method::SingleView => "single_view",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Method::Mslbm,
            Method::SamMean,
            Method::SamMedian,
            Method::Mase,
            Method::MaseScaled,
            Method::SingleView,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct BaselineEmbedding {
    pub method: Method,
    pub u: LowRankFactor,
    /// Whether the rows have been scaled to unit length.
    pub normalized: bool,
}

impl BaselineEmbedding {
    /// A copy with unit rows.
    pub fn row_normalized(&self) -> BaselineEmbedding {
        let (rows, _) = normalize_rows(self.u.rows());
        BaselineEmbedding {
            method: self.method,
            u: LowRankFactor::new(rows).expect("unit rows are finite"),
            normalized: true,
        }
    }
}

fn check_rank(r: usize, n: usize) -> Result<()> {
    if r == 0 || r > n {
        return Err(Error::invalid(format!("rank r = {r} out of range for n = {n}")));
    }
    Ok(())
}

/// Top-`r` eigenvectors of `Σ_s W_s`.
pub fn sam_embed(views: &MultiViewData, r: usize) -> Result<BaselineEmbedding> {
    let n = views.n();
    check_rank(r, n)?;
    let mut sum = DMatrix::<f64>::zeros(n, n);
    for w in views.views() {
        sum += w.matrix();
    }
    let (_, vectors) = top_eigen(&SymMatrix::symmetrize(sum), r)?;
    Ok(BaselineEmbedding {
        method: Method::SamMean,
        u: LowRankFactor::new(vectors)?,
        normalized: false,
    })
}

/// Per-view top-`r` eigenvectors (optionally scaled by `|D_s|^{1/2}`),
/// concatenated column-wise; the top-`r` left singular vectors of the stack.
pub fn mase_embed(views: &MultiViewData, r: usize, scaled: bool) -> Result<BaselineEmbedding> {
    let n = views.n();
    check_rank(r, n)?;
    let m = views.m();
    let mut stack = DMatrix::<f64>::zeros(n, m * r);
    for (s, w) in views.views().iter().enumerate() {
        let (values, vectors) = top_magnitude_eigen(w, r)?;
        for c in 0..r {
            let factor = if scaled { values[c].abs().sqrt() } else { 1.0 };
            stack.set_column(s * r + c, &(vectors.column(c) * factor));
        }
    }
    // left singular vectors of the stack = eigenvectors of stack·stackᵀ
    let (_, vectors) = top_eigen(&SymMatrix::symmetrize(&stack * stack.transpose()), r)?;
    Ok(BaselineEmbedding {
        method: if scaled { Method::MaseScaled } else { Method::Mase },
        u: LowRankFactor::new(vectors)?,
        normalized: false,
    })
}

/// The `r` eigenpairs of largest magnitude, in decreasing magnitude.
fn top_magnitude_eigen(w: &SymMatrix, r: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = sym_eigen(w)?;
    let mut order: Vec<usize> = (0..w.dim()).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()));
    order.truncate(r);
    let values = order.iter().map(|&k| eig.values[k]).collect();
    let vectors = DMatrix::from_fn(w.dim(), r, |i, c| eig.vectors[(i, order[c])]);
    Ok((values, vectors))
}

/// Estimates produced from one view alone.
#[derive(Debug, Clone)]
pub struct SingleViewResult {
    pub labels: Membership,
    pub omega: GroupWeights,
    pub theta: SparseDeviation,
    pub consensus: SymMatrix,
}

/// ASALM on one view, `rec` of its low-rank part, k-means on the unit rows
/// and block means of the resulting correlation estimate.
pub fn single_view_pipeline(
    w: &SymMatrix,
    r: usize,
    k: usize,
    asalm_cfg: &AsalmConfig,
    restarts: usize,
    seed: u64,
) -> Result<SingleViewResult> {
    let asalm = asalm_decompose(w, asalm_cfg)?;
    single_view_from_asalm(&asalm, r, k, restarts, seed)
}

/// As [`single_view_pipeline`], from an existing decomposition.
pub fn single_view_from_asalm(
    asalm: &AsalmResult,
    r: usize,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<SingleViewResult> {
    let out = rec(&asalm.l, r)?;
    let fit = kmeans(out.u.rows(), k, restarts, seed)?;
    let omega = omega_hat(&fit.labels, &out.c, 0.0)?;
    Ok(SingleViewResult {
        labels: fit.labels,
        omega,
        theta: asalm.theta.clone(),
        consensus: out.c,
    })
}
