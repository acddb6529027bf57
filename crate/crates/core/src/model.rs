//! Model types, synthetic instance generators and oracle diagnostics of the
//! low-rank block structure.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, LowRankFactor, SymMatrix};
use crate::rng::{substream, StreamRng};

/// Hard assignment of `n` nodes to `k` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    k: usize,
}

impl Membership {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("membership needs k >= 1"));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::invalid(format!("label {l} of node {i} is out of range for k = {k}")));
        }
        Ok(Self { labels, k })
    }

    /// Infers `k` as one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(1, |&m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn all_nonempty(&self) -> bool {
        self.sizes().iter().all(|&s| s > 0)
    }
}

/// Symmetric `K × K` group-level weights Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    omega: DMatrix<f64>,
}

impl GroupWeights {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        let sym = SymMatrix::new(omega)?;
        Ok(Self {
            omega: sym.into_inner(),
        })
    }

    pub fn k(&self) -> usize {
        self.omega.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }
}

/// Positive per-node heterogeneity, the diagonal of `H_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityDiag(Vec<f64>);

impl HeterogeneityDiag {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = h.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!("heterogeneity entry {i} = {v} is not positive")));
        }
        Ok(Self(h))
    }

    /// Constructs without the positivity check; used for solver iterates.
    pub(crate) fn unchecked(h: Vec<f64>) -> Self {
        Self(h)
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sparse symmetric deviation stored as upper-triangle coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDeviation {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseDeviation {
    /// Entries may be given in either triangle; they are stored with `i <= j`
    /// and sorted. Duplicates and zero values are rejected.
    pub fn new(n: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut entries: Vec<_> = entries
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::invalid(format!("duplicate coordinate ({}, {})", w[0].0, w[0].1)));
            }
        }
        for &(i, j, v) in &entries {
            if j >= n {
                return Err(Error::invalid(format!("coordinate ({i}, {j}) out of range for n = {n}")));
            }
            if v == 0.0 || !v.is_finite() {
                return Err(Error::invalid(format!("entry ({i}, {j}) = {v} must be nonzero and finite")));
            }
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    /// Nonzero upper-triangle entries of a symmetric matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i..n {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Number of stored upper-triangle coordinates.
    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }
}

/// The observed views `W_1 … W_m` over one vertex set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewData {
    views: Vec<SymMatrix>,
}

impl MultiViewData {
    pub fn new(views: Vec<SymMatrix>) -> Result<Self> {
        let Some(first) = views.first() else {
            return Err(Error::invalid("need at least one view"));
        };
        let n = first.dim();
        if let Some((s, v)) = views.iter().enumerate().find(|(_, v)| v.dim() != n) {
            return Err(Error::invalid(format!("view {s} is {0}x{0}, expected {n}x{n}", v.dim())));
        }
        Ok(Self { views })
    }

    pub fn n(&self) -> usize {
        self.views[0].dim()
    }

    pub fn m(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[SymMatrix] {
        &self.views
    }

    pub fn view(&self, s: usize) -> &SymMatrix {
        &self.views[s]
    }
}

/// Parameters that generated a synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub membership: Membership,
    pub omega: GroupWeights,
    pub h: Vec<HeterogeneityDiag>,
    pub theta: Vec<SparseDeviation>,
    pub sigma: Vec<f64>,
}

impl GroundTruth {
    pub fn consensus(&self) -> SymMatrix {
        assemble_c(&self.membership, &self.omega).expect("ground truth is consistent")
    }
}

/// Simulation setting: heterogeneous views with sparse deviations (1) or
/// homogeneous scaled views without deviations (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Setting {
    Heterogeneous,
    Homogeneous,
}

impl TryFrom<u8> for Setting {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Setting::Heterogeneous),
            2 => Ok(Setting::Homogeneous),
            other => Err(format!("setting must be 1 or 2, got {other}")),
        }
    }
}

impl From<Setting> for u8 {
    fn from(s: Setting) -> u8 {
        match s {
            Setting::Heterogeneous => 1,
            Setting::Homogeneous => 2,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Configuration of a synthetic multi-view instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub r: usize,
    pub setting: Setting,
    /// Probability that an entry of the `K × r` loading matrix is nonzero.
    pub pi0: f64,
    /// Density of the sparse deviations (setting 1).
    pub pi: f64,
    /// Standard deviation of the nonzero deviation entries.
    pub tau: f64,
    pub lambda_signal: f64,
    /// Per-view noise standard deviation, length `m`.
    pub sigma: Vec<f64>,
    /// Probability that a noise entry is drawn from `N(0, σ_s²)` rather than 0.
    pub noise_mass: f64,
    pub seed: u64,
    /// Seed for Ω; defaults to `seed`. Fixing it keeps Ω identical across
    /// repetitions that vary `seed`.
    #[serde(default)]
    pub omega_seed: Option<u64>,
    /// Whether the noise diagonal is drawn (true) or left at zero.
    #[serde(default = "default_true")]
    pub noise_on_diagonal: bool,
    /// Whether deviations may also sit on the diagonal.
    #[serde(default)]
    pub theta_on_diagonal: bool,
}

impl SimConfig {
    /// The simulation defaults: `m = 3`, `n = 500`, `r = 25`, `π₀ = 0.2`,
    /// `π = 0.05`, `τ = 5`, `σ_s = 0.1` (setting 1) or `(0.3, 0.2, 0.1)`
    /// (setting 2).
    pub fn defaults(setting: Setting, k: usize, seed: u64) -> Self {
        let (lambda_signal, sigma) = match setting {
            Setting::Heterogeneous => (1.5, vec![0.1; 3]),
            Setting::Homogeneous => (1.0, vec![0.3, 0.2, 0.1]),
        };
        Self {
            n: 500,
            m: 3,
            k,
            r: 25,
            setting,
            pi0: 0.2,
            pi: 0.05,
            tau: 5.0,
            lambda_signal,
            sigma,
            noise_mass: 0.5,
            seed,
            omega_seed: None,
            noise_on_diagonal: true,
            theta_on_diagonal: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 || self.m == 0 || self.k == 0 || self.r == 0 {
            return fail("n, m, k and r must be positive".into());
        }
        if !(self.r <= self.k && self.k <= self.n) {
            return fail(format!("need r <= k <= n, got r = {}, k = {}, n = {}", self.r, self.k, self.n));
        }
        if !(self.pi0 > 0.0 && self.pi0 <= 1.0) {
            return fail(format!("pi0 must lie in (0, 1], got {}", self.pi0));
        }
        if !(0.0..1.0).contains(&self.pi) {
            return fail(format!("pi must lie in [0, 1), got {}", self.pi));
        }
        if !(self.noise_mass >= 0.0 && self.noise_mass <= 1.0) {
            return fail(format!("noise_mass must lie in [0, 1], got {}", self.noise_mass));
        }
        if !(self.tau >= 0.0 && self.lambda_signal > 0.0) {
            return fail("tau must be >= 0 and lambda_signal > 0".into());
        }
        if self.sigma.len() != self.m {
            return fail(format!("sigma has {} entries for m = {}", self.sigma.len(), self.m));
        }
        if self.sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return fail("sigma entries must be finite and >= 0".into());
        }
        Ok(())
    }
}

/// Random sparse-loading group weights `Ω = AAᵀ` with unit-norm rows of `A`.
///
/// Entries of the `k × r` loading matrix are 0 with probability `1 − pi0` and
/// `Uniform(0, 1)` otherwise; all-zero rows are redrawn.
pub fn gen_omega(k: usize, r: usize, pi0: f64, rng: &mut StreamRng) -> Result<GroupWeights> {
    if r == 0 || r > k {
        return Err(Error::invalid(format!("need 1 <= r <= k, got r = {r}, k = {k}")));
    }
    if !(pi0 > 0.0 && pi0 <= 1.0) {
        return Err(Error::invalid(format!("pi0 must lie in (0, 1], got {pi0}")));
    }
    let mut a = DMatrix::zeros(k, r);
    for i in 0..k {
        loop {
            for j in 0..r {
                a[(i, j)] = if rng.random::<f64>() < pi0 {
                    rng.random::<f64>()
                } else {
                    0.0
                };
            }
            let norm = a.row(i).norm();
            if norm > 0.0 {
                a.row_mut(i).scale_mut(1.0 / norm);
                break;
            }
        }
    }
    let omega = SymMatrix::symmetrize(&a * a.transpose());
    let mut omega = omega.into_inner();
    for i in 0..k {
        omega[(i, i)] = 1.0;
    }
    GroupWeights::new(omega)
}

/// Balanced labels: round-robin then shuffled.
pub fn balanced_membership(n: usize, k: usize, rng: &mut StreamRng) -> Result<Membership> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(rng);
    Membership::new(labels, k)
}

/// Consensus matrix `C = ZΩZᵀ`, i.e. `C(i, j) = Ω(z_i, z_j)`.
pub fn assemble_c(z: &Membership, omega: &GroupWeights) -> Result<SymMatrix> {
    if z.k() != omega.k() {
        return Err(Error::invalid(format!(
            "membership has k = {} but omega is {}x{}",
            z.k(),
            omega.k(),
            omega.k()
        )));
    }
    let l = z.labels();
    let w = omega.matrix();
    Ok(SymMatrix::from_upper_fn(l.len(), |i, j| w[(l[i], l[j])]))
}

/// Draws a synthetic instance and its ground truth.
pub fn gen_instance(cfg: &SimConfig) -> Result<(MultiViewData, GroundTruth)> {
    cfg.validate()?;
    let omega_seed = cfg.omega_seed.unwrap_or(cfg.seed);
    let omega = gen_omega(cfg.k, cfg.r, cfg.pi0, &mut substream(omega_seed, "omega", 0))?;
    let membership = balanced_membership(cfg.n, cfg.k, &mut substream(cfg.seed, "membership", 0))?;
    let c = assemble_c(&membership, &omega)?;
    let n = cfg.n;

    let mut views = Vec::with_capacity(cfg.m);
    let mut hs = Vec::with_capacity(cfg.m);
    let mut thetas = Vec::with_capacity(cfg.m);
    for s in 0..cfg.m {
        let view_index = s as u64 + 1;
        let scale = cfg.lambda_signal * (view_index as f64).sqrt();
        let h = match cfg.setting {
            Setting::Heterogeneous => {
                let mut rng = substream(cfg.seed, "heterogeneity", view_index);
                // Uniform on (0, d_s]
                (0..n).map(|_| scale * (1.0 - rng.random::<f64>())).collect()
            }
            Setting::Homogeneous => vec![scale; n],
        };
        let h = HeterogeneityDiag::new(h)?;

        let theta = match cfg.setting {
            Setting::Heterogeneous => {
                let mut rng = substream(cfg.seed, "theta", view_index);
                let mut entries = Vec::new();
                for i in 0..n {
                    let start = if cfg.theta_on_diagonal { i } else { i + 1 };
                    for j in start..n {
                        let hit = rng.random::<f64>() < cfg.pi;
                        let z: f64 = rng.sample(StandardNormal);
                        if hit && z != 0.0 && cfg.tau > 0.0 {
                            entries.push((i, j, cfg.tau * z));
                        }
                    }
                }
                SparseDeviation::new(n, entries)?
            }
            Setting::Homogeneous => SparseDeviation::zeros(n),
        };

        let sigma = cfg.sigma[s];
        let mut rng = substream(cfg.seed, "noise", view_index);
        let mut w = c.congruence_diag(h.values()).into_inner();
        for i in 0..n {
            let start = if cfg.noise_on_diagonal { i } else { i + 1 };
            for j in start..n {
                let hit = rng.random::<f64>() < cfg.noise_mass;
                let z: f64 = rng.sample(StandardNormal);
                if hit {
                    let e = sigma * z;
                    w[(i, j)] += e;
                    if i != j {
                        w[(j, i)] += e;
                    }
                }
            }
        }
        for &(i, j, v) in theta.entries() {
            w[(i, j)] += v;
            if i != j {
                w[(j, i)] += v;
            }
        }
        views.push(SymMatrix::new(w)?);
        hs.push(h);
        thetas.push(theta);
    }

    let truth = GroundTruth {
        membership,
        omega,
        h: hs,
        theta: thetas,
        sigma: cfg.sigma.clone(),
    };
    Ok((MultiViewData::new(views)?, truth))
}

/// Eigenstructure of `H(ZΩZᵀ)H` expressed through the group-level matrix.
#[derive(Debug, Clone)]
pub struct LbmOracle {
    /// `h̃_k = (Σ_{j ∈ V_k} h_j²)^{1/2}`.
    pub n_h: DVector<f64>,
    /// Leading `r` eigenvalues of `N_H Ω N_H`.
    pub d: DVector<f64>,
    /// Matching `K × r` eigenvectors.
    pub l: DMatrix<f64>,
    /// `Ū = H Z N_H⁻¹ L`.
    pub ubar: LowRankFactor,
}

impl LbmOracle {
    /// `Ū D Ūᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = self.ubar.rows();
        u * DMatrix::from_diagonal(&self.d) * u.transpose()
    }
}

pub fn lbm_oracle(
    z: &Membership,
    omega: &GroupWeights,
    h: &HeterogeneityDiag,
    r: usize,
) -> Result<LbmOracle> {
    if h.len() != z.n() || omega.k() != z.k() {
        return Err(Error::invalid("lbm_oracle: inconsistent dimensions"));
    }
    if r == 0 || r > z.k() {
        return Err(Error::invalid(format!("rank {r} out of range for k = {}", z.k())));
    }
    let mut sq = vec![0.0; z.k()];
    for (&l, &hj) in z.labels().iter().zip(h.values()) {
        sq[l] += hj * hj;
    }
    if let Some(k) = sq.iter().position(|&v| v == 0.0) {
        return Err(Error::invalid(format!("group {k} has zero aggregate heterogeneity")));
    }
    let n_h = DVector::from_iterator(z.k(), sq.iter().map(|v| v.sqrt()));
    let nh_omega_nh = SymMatrix::symmetrize(DMatrix::from_fn(z.k(), z.k(), |a, b| {
        n_h[a] * omega.matrix()[(a, b)] * n_h[b]
    }));
    let (d, l) = sym_eigen(&nh_omega_nh)?.top(r);
    let ubar = DMatrix::from_fn(z.n(), r, |j, c| {
        let g = z.labels()[j];
        h.values()[j] / n_h[g] * l[(g, c)]
    });
    Ok(LbmOracle {
        n_h,
        d,
        l,
        ubar: LowRankFactor::new(ubar)?,
    })
}

/// `(δ_Ω, δ_{H,Ω})`: the smallest distance between distinct rows of Ω, and
/// the smallest distance between rows `h_j Ω(z_j, :)` of nodes in different
/// groups.
pub fn separation_deltas(z: &Membership, omega: &GroupWeights, h: &HeterogeneityDiag) -> Result<(f64, f64)> {
    let k = omega.k();
    if k < 2 {
        return Err(Error::invalid("separation needs at least two groups"));
    }
    if z.k() != k || h.len() != z.n() {
        return Err(Error::invalid("separation_deltas: inconsistent dimensions"));
    }
    let w = omega.matrix();
    let mut delta_omega = f64::INFINITY;
    for a in 0..k {
        for b in (a + 1)..k {
            delta_omega = delta_omega.min((w.row(a) - w.row(b)).norm());
        }
    }
    let labels = z.labels();
    let hv = h.values();
    let mut delta_h = f64::INFINITY;
    for j1 in 0..z.n() {
        for j2 in (j1 + 1)..z.n() {
            let (g1, g2) = (labels[j1], labels[j2]);
            if g1 == g2 {
                continue;
            }
            let d: f64 = (0..k)
                .map(|c| {
                    let diff = hv[j1] * w[(g1, c)] - hv[j2] * w[(g2, c)];
                    diff * diff
                })
                .sum();
            delta_h = delta_h.min(d.sqrt());
        }
    }
    Ok((delta_omega, delta_h))
}

/// Incoherence `μ = (n/r) max_j ‖e_jᵀ U_r‖²` of the top-`r` eigenvectors of
/// a PSD matrix, and its condition number `κ = λ₁/λ_r`.
pub fn incoherence_check(l: &SymMatrix, r: usize) -> Result<(f64, f64)> {
    let n = l.dim();
    if r == 0 || r > n {
        return Err(Error::invalid(format!("rank {r} out of range for n = {n}")));
    }
    let eig = sym_eigen(l)?;
    let lambda_1 = eig.values[0];
    let lambda_min = eig.values[n - 1];
    if lambda_min < -1e-10 * lambda_1.abs().max(1.0) {
        return Err(Error::invalid(format!("matrix is not PSD (lambda_min = {lambda_min:e})")));
    }
    let lambda_r = eig.values[r - 1];
    if lambda_r <= 1e-12 * lambda_1 {
        return Err(Error::RankDeficient { lambda_1, lambda_r });
    }
    let top = eig.vectors.columns(0, r);
    let max_row = top.row_iter().map(|row| row.norm_squared()).fold(0.0f64, f64::max);
    Ok((max_row * n as f64 / r as f64, lambda_1 / lambda_r))
}
