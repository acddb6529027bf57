//! Membership recovery from embedding rows, block-mean estimation of the
//! group weights and selection of the number of groups.

use log::debug;
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{GroupWeights, Membership};
use crate::rng::{derive_seed, substream, StreamRng};

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_LLOYD_ITER: usize = 300;
const SILHOUETTE_LIMIT: usize = 5000;
const SILHOUETTE_SAMPLE: usize = 2000;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Membership,
    /// `K × r`.
    pub centroids: DMatrix<f64>,
    /// Squared Euclidean distortion for k-means, ℓ1 distortion for k-median.
    pub objective: f64,
    pub restarts_used: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flavor {
    Mean,
    Median,
}

impl Flavor {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Flavor::Mean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Flavor::Median => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

fn rows_of(u: &DMatrix<f64>) -> Vec<Vec<f64>> {
    u.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// k-means++ seeding: first centre uniform, then proportional to the
/// distance to the nearest chosen centre.
fn seed_centres(points: &[Vec<f64>], k: usize, flavor: Flavor, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centres = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| flavor.distance(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centres.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(flavor.distance(p, &centres[centres.len() - 1]));
        }
    }
    centres
}

fn nearest_centre(p: &[f64], centres: &[Vec<f64>], flavor: Flavor) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centres.iter().enumerate() {
        let d = flavor.distance(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_centres(points: &[Vec<f64>], labels: &[usize], k: usize, flavor: Flavor) -> Vec<Option<Vec<f64>>> {
    let r = points[0].len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
        .iter()
        .map(|idx| {
            if idx.is_empty() {
                return None;
            }
            Some(
                (0..r)
                    .map(|d| match flavor {
                        Flavor::Mean => idx.iter().map(|&i| points[i][d]).sum::<f64>() / idx.len() as f64,
                        Flavor::Median => {
                            let mut v: Vec<f64> = idx.iter().map(|&i| points[i][d]).collect();
                            crate::init::median(&mut v)
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Moves the point farthest from its centre, among clusters with at least
/// two members, into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centres: &mut [Vec<f64>], flavor: Flavor) {
    let k = centres.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None::<(usize, f64)>;
        for (i, p) in points.iter().enumerate() {
            if sizes[labels[i]] < 2 {
                continue;
            }
            let d = flavor.distance(p, &centres[labels[i]]);
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        let Some((i, _)) = far else {
            return;
        };
        labels[i] = empty;
        centres[empty] = points[i].clone();
    }
}

fn lloyd(points: &[Vec<f64>], k: usize, flavor: Flavor, rng: &mut StreamRng) -> (Vec<usize>, Vec<Vec<f64>>, f64) {
    let mut centres = seed_centres(points, k, flavor, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest_centre(p, &centres, flavor).0).collect();
    for _ in 0..MAX_LLOYD_ITER {
        repair_empty(points, &mut labels, &mut centres, flavor);
        for (c, updated) in update_centres(points, &labels, k, flavor).into_iter().enumerate() {
            if let Some(v) = updated {
                centres[c] = v;
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest_centre(p, &centres, flavor).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    repair_empty(points, &mut labels, &mut centres, flavor);
    for (c, updated) in update_centres(points, &labels, k, flavor).into_iter().enumerate() {
        if let Some(v) = updated {
            centres[c] = v;
        }
    }
    let objective = points.iter().zip(&labels).map(|(p, &l)| flavor.distance(p, &centres[l])).sum();
    (labels, centres, objective)
}

fn cluster(u: &DMatrix<f64>, k: usize, restarts: usize, seed: u64, flavor: Flavor) -> Result<KMeansResult> {
    let n = u.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("K = {k} out of range for n = {n}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("restarts must be >= 1"));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite embedding entry"));
    }
    let points = rows_of(u);
    let label = match flavor {
        Flavor::Mean => "kmeans",
        Flavor::Median => "kmedian",
    };
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64)> = None;
    for restart in 0..restarts {
        let mut rng = substream(seed, label, restart as u64);
        let run = lloyd(&points, k, flavor, &mut rng);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (labels, centres, objective) = best.expect("at least one restart");
    let r = u.ncols();
    Ok(KMeansResult {
        labels: Membership::new(labels, k)?,
        centroids: DMatrix::from_fn(k, r, |c, d| centres[c][d]),
        objective,
        restarts_used: restarts,
    })
}

/// Best-of-restarts Lloyd iterations with k-means++ seeding on the rows of
/// `u`. Restart `i` draws from stream `i` of `seed`, so a larger restart
/// count only adds candidates.
pub fn kmeans(u: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    cluster(u, k, restarts, seed, Flavor::Mean)
}

/// As [`kmeans`] with coordinate-wise median centres, assigning points by
/// ℓ1 distance.
pub fn kmedian(u: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    cluster(u, k, restarts, seed, Flavor::Median)
}

/// Block means of `c_hat` over the estimated groups; entries with magnitude
/// below `threshold` are set to zero.
pub fn omega_hat(labels: &Membership, c_hat: &SymMatrix, threshold: f64) -> Result<GroupWeights> {
    let n = labels.n();
    if c_hat.dim() != n {
        return Err(Error::invalid("omega_hat: dimension mismatch"));
    }
    if !labels.all_nonempty() {
        return Err(Error::invalid("omega_hat: empty cluster"));
    }
    let k = labels.k();
    let sizes = labels.sizes();
    let l = labels.labels();
    let mut sums = DMatrix::<f64>::zeros(k, k);
    for j in 0..n {
        for i in 0..n {
            sums[(l[i], l[j])] += c_hat[(i, j)];
        }
    }
    let omega = DMatrix::from_fn(k, k, |a, b| {
        let v = sums[(a, b)] / (sizes[a] * sizes[b]) as f64;
        if v.abs() < threshold {
            0.0
        } else {
            v
        }
    });
    GroupWeights::new(SymMatrix::symmetrize(omega).into_inner())
}

/// Mean silhouette coefficient; `None` when fewer than two clusters are
/// occupied. Points alone in their cluster score zero.
pub fn silhouette(u: &DMatrix<f64>, labels: &Membership, seed: u64) -> Option<f64> {
    let n = u.nrows();
    let k = labels.k();
    if labels.sizes().iter().filter(|&&s| s > 0).count() < 2 {
        return None;
    }
    let points = rows_of(u);
    let l = labels.labels();
    let subset: Vec<usize> = if n > SILHOUETTE_LIMIT {
        let mut rng = substream(seed, "silhouette", 0);
        let mut idx = sample(&mut rng, n, SILHOUETTE_SAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut sizes = vec![0usize; k];
    for &i in &subset {
        sizes[l[i]] += 1;
    }
    let dist = |a: usize, b: usize| Flavor::Mean.distance(&points[a], &points[b]).sqrt();
    let mut total = 0.0;
    for &i in &subset {
        if sizes[l[i]] < 2 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for &j in &subset {
            if j != i {
                sums[l[j]] += dist(i, j);
            }
        }
        let a = sums[l[i]] / (sizes[l[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != l[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Some(total / subset.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub wss: f64,
    pub silhouette: Option<f64>,
    pub composite: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    /// Sorted by `k`.
    pub candidates: Vec<KCandidate>,
}

fn sorted_grid(grid: &[usize]) -> Result<Vec<usize>> {
    if grid.is_empty() {
        return Err(Error::invalid("empty K grid"));
    }
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    Ok(g)
}

/// WSS and silhouette per candidate `K`; no choice is made.
pub fn select_k_unsupervised(u: &DMatrix<f64>, grid: &[usize], restarts: usize, seed: u64) -> Result<KSelectionReport> {
    let candidates = sorted_grid(grid)?
        .into_iter()
        .map(|k| {
            let fit = kmeans(u, k, restarts, derive_seed(seed, "select_k", k as u64))?;
            Ok(KCandidate {
                k,
                wss: fit.objective,
                silhouette: silhouette(u, &fit.labels, seed),
                composite: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KSelectionReport { candidates })
}

/// Sensitivity (positive pairs co-clustered) plus specificity (negative
/// pairs separated).
pub fn pair_composite(labels: &Membership, positive: &[(usize, usize)], negative: &[(usize, usize)]) -> f64 {
    let l = labels.labels();
    let sens = positive.iter().filter(|&&(i, j)| l[i] == l[j]).count() as f64 / positive.len() as f64;
    let spec = negative.iter().filter(|&&(i, j)| l[i] != l[j]).count() as f64 / negative.len() as f64;
    sens + spec
}

/// Picks the `K` maximising the pair composite score, smallest `K` on ties.
pub fn select_k_pairs(
    u: &DMatrix<f64>,
    grid: &[usize],
    positive: &[(usize, usize)],
    negative: &[(usize, usize)],
    restarts: usize,
    seed: u64,
) -> Result<(usize, KSelectionReport)> {
    if positive.is_empty() || negative.is_empty() {
        return Err(Error::invalid("select_k_pairs needs positive and negative pairs"));
    }
    let n = u.nrows();
    if positive.iter().chain(negative).any(|&(i, j)| i >= n || j >= n) {
        return Err(Error::invalid("pair index out of range"));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut candidates = Vec::new();
    for k in sorted_grid(grid)? {
        let fit = kmeans(u, k, restarts, derive_seed(seed, "select_k", k as u64))?;
        let score = pair_composite(&fit.labels, positive, negative);
        debug!("K = {k}: composite {score:.4}");
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k, score));
        }
        candidates.push(KCandidate {
            k,
            wss: fit.objective,
            silhouette: None,
            composite: Some(score),
        });
    }
    Ok((best.expect("nonempty grid").0, KSelectionReport { candidates }))
}
