//! Evaluation quantities: mis-clustering error, relative ℓ₂ and support
//! losses, Spearman correlation and ROC summaries of pair scores.

use nalgebra::DMatrix;
use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};
use crate::model::Membership;

/// Mis-clustering error and the optimal matching.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub mce: f64,
    /// `assignment[k̂]` is the true cluster matched to estimated cluster `k̂`
    /// (an index `≥ K` means "matched to nothing").
    pub assignment: Vec<usize>,
}

/// Fraction of vertices misassigned under the best one-to-one relabelling
/// of the estimated clusters.
pub fn mce(labels_hat: &Membership, labels_true: &Membership) -> Result<f64> {
    Ok(mce_matching(labels_hat, labels_true)?.mce)
}

pub fn mce_matching(labels_hat: &Membership, labels_true: &Membership) -> Result<Matching> {
    let n = labels_hat.n();
    if labels_true.n() != n {
        return Err(Error::invalid(format!(
            "label vectors have lengths {n} and {}",
            labels_true.n()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("empty label vectors"));
    }
    let size = labels_hat.k().max(labels_true.k());
    let mut counts = Matrix::new(size, size, 0i64);
    for (&a, &b) in labels_hat.labels().iter().zip(labels_true.labels()) {
        counts[(a, b)] += 1;
    }
    let (matched, assignment) = kuhn_munkres(&counts);
    let mut assignment = assignment;
    assignment.truncate(labels_hat.k());
    Ok(Matching {
        mce: (n as i64 - matched) as f64 / n as f64,
        assignment,
    })
}

/// Reorders `omega_hat` into the true cluster order given by a matching.
pub fn align_to_truth(omega_hat: &DMatrix<f64>, matching: &Matching) -> Result<DMatrix<f64>> {
    let k = omega_hat.nrows();
    if matching.assignment.len() != k || matching.assignment.iter().any(|&t| t >= k) {
        return Err(Error::invalid("matching does not pair the clusters one to one"));
    }
    let mut out = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            out[(matching.assignment[a], matching.assignment[b])] = omega_hat[(a, b)];
        }
    }
    Ok(out)
}

/// `‖Ŝ − S‖_F² / ‖S‖_F²`.
pub fn rel_l2(s_hat: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if s_hat.shape() != s.shape() {
        return Err(Error::invalid("rel_l2: shape mismatch"));
    }
    let denom = s.norm_squared();
    if denom == 0.0 {
        return Err(Error::invalid("rel_l2: reference matrix is zero"));
    }
    Ok((s_hat - s).norm_squared() / denom)
}

/// Number of entries where exactly one of `|Ŝ|`, `|S|` exceeds `support_tol`,
/// divided by `denom`.
pub fn l0_loss(s_hat: &DMatrix<f64>, s: &DMatrix<f64>, denom: f64, support_tol: f64) -> Result<f64> {
    if s_hat.shape() != s.shape() {
        return Err(Error::invalid("l0_loss: shape mismatch"));
    }
    if !(denom > 0.0) {
        return Err(Error::invalid("l0_loss: denominator must be positive"));
    }
    let diff = s_hat
        .iter()
        .zip(s.iter())
        .filter(|(a, b)| (a.abs() > support_tol) != (b.abs() > support_tol))
        .count();
    Ok(diff as f64 / denom)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("spearman needs two vectors of equal length >= 2"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::invalid("spearman: NaN input"));
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("ranks have zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Scored vertex pairs with known relation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScoreSet {
    pub pairs: Vec<(usize, usize, bool)>,
    pub scores: Vec<f64>,
}

impl PairScoreSet {
    pub fn new(pairs: Vec<(usize, usize, bool)>, scores: Vec<f64>) -> Result<Self> {
        if pairs.len() != scores.len() {
            return Err(Error::invalid("pairs and scores differ in length"));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::invalid("NaN pair score"));
        }
        Ok(Self { pairs, scores })
    }

    /// Reads each pair's score from a symmetric score matrix.
    pub fn from_matrix(pairs: Vec<(usize, usize, bool)>, m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if pairs.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(Error::invalid("pair index out of range"));
        }
        let scores = pairs.iter().map(|&(i, j, _)| m[(i, j)]).collect();
        Self::new(pairs, scores)
    }
}

/// AUC (rank statistic, ties count one half) and the TPR at each target FPR.
///
/// The TPR for a target is read at the most permissive score threshold whose
/// false positive rate does not exceed the target.
pub fn auc_tpr(set: &PairScoreSet, fpr_targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let pos: Vec<f64> = set.pairs.iter().zip(&set.scores).filter(|(p, _)| p.2).map(|(_, &s)| s).collect();
    let neg: Vec<f64> = set.pairs.iter().zip(&set.scores).filter(|(p, _)| !p.2).map(|(_, &s)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("auc needs at least one positive and one negative pair"));
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);

    // Mann-Whitney U via average ranks of the pooled scores
    let pooled: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum: f64 = ranks[..pos.len()].iter().sum();
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    let mut thresholds = pooled.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let tpr = fpr_targets
        .iter()
        .map(|&target| {
            let mut best = 0.0;
            for &t in &thresholds {
                let fpr = neg.iter().filter(|&&s| s >= t).count() as f64 / nn;
                if fpr > target {
                    break;
                }
                best = pos.iter().filter(|&&s| s >= t).count() as f64 / np;
            }
            best
        })
        .collect();
    Ok((auc, tpr))
}
