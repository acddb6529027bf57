//! Warm start: a convex low-rank plus sparse split of each view by the
//! extended ASALM, followed by data-driven choices of rank, noise level and
//! view weights.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{rec, ModelEstimate};
use crate::linalg::{shrink, sv_threshold_sym, sym_eigen, SymMatrix};
use crate::model::{HeterogeneityDiag, MultiViewData, SparseDeviation};

/// Floor substituted for a zero noise estimate.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn default_beta() -> f64 {
    1.0
}
fn default_iter_max() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsalmConfig {
    /// Nuclear-norm weight.
    pub mu: f64,
    /// ℓ1 weight.
    pub tau: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_iter_max")]
    pub iter_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl AsalmConfig {
    pub fn new(mu: f64, tau: f64) -> Self {
        Self {
            mu,
            tau,
            beta: default_beta(),
            iter_max: default_iter_max(),
            tol: default_tol(),
        }
    }

    /// `μ = √n·σ̂₀`, `τ = σ̂₀·√(2 log n)` with `σ̂₀` the robust scale of the
    /// off-diagonal entries of `w`.
    pub fn heuristic(w: &SymMatrix) -> Self {
        let n = w.dim() as f64;
        let s0 = robust_scale(w).max(SIGMA_FLOOR);
        Self::new(n.sqrt() * s0, s0 * (2.0 * n.max(2.0).ln()).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.mu) || !positive(self.tau) || !positive(self.beta) || !positive(self.tol) {
            return Err(Error::invalid(format!("ASALM parameters must be positive: {self:?}")));
        }
        if self.iter_max == 0 {
            return Err(Error::invalid("ASALM iter_max must be >= 1"));
        }
        Ok(())
    }
}

/// `1.4826 · median |x − median x|` over the strict upper triangle.
pub fn robust_scale(w: &SymMatrix) -> f64 {
    let n = w.dim();
    let mut off: Vec<f64> = (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).map(|(i, j)| w[(i, j)]).collect();
    if off.is_empty() {
        return 0.0;
    }
    let med = median(&mut off);
    let mut dev: Vec<f64> = off.iter().map(|x| (x - med).abs()).collect();
    1.4826 * median(&mut dev)
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Iterate of the splitting method: low-rank `L`, sparse `Θ`, dense noise `E`
/// and multiplier `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsalmState {
    pub l: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub dual: DMatrix<f64>,
}

impl AsalmState {
    pub fn zeros(n: usize) -> Self {
        let z = DMatrix::zeros(n, n);
        Self {
            l: z.clone(),
            theta: z.clone(),
            e: z.clone(),
            dual: z,
        }
    }

    /// `‖L + Θ + E − W‖_F`.
    pub fn primal_residual(&self, w: &SymMatrix) -> f64 {
        (&self.l + &self.theta + &self.e - w.matrix()).norm()
    }
}

/// One sweep of the four block updates, in order E, Θ, L, Λ.
pub fn asalm_step(w: &SymMatrix, state: &AsalmState, cfg: &AsalmConfig) -> Result<AsalmState> {
    let beta = cfg.beta;
    let shifted = w.matrix() + &state.dual / beta;
    let e = (&shifted - &state.l - &state.theta) * (beta / (1.0 + beta));
    let theta = (&shifted - &e - &state.l).map(|x| shrink(x, cfg.tau / beta));
    let l = sv_threshold_sym(&SymMatrix::symmetrize(&shifted - &e - &theta), cfg.mu / beta)?.into_inner();
    let dual = &state.dual - (&l + &theta + &e - w.matrix()) * beta;
    Ok(AsalmState { l, theta, e, dual })
}

#[derive(Debug, Clone)]
pub struct AsalmResult {
    pub l: SymMatrix,
    pub theta: SparseDeviation,
    pub e: SymMatrix,
    pub dual: SymMatrix,
    pub iterations: usize,
    /// `‖L + Θ + E − W‖_F` of the returned state.
    pub primal_residual: f64,
    /// Relative primal residual after each iteration.
    pub residual_trace: Vec<f64>,
}

/// Low-rank plus sparse plus dense-noise decomposition of one view, started
/// from zero and stopped when `‖L+Θ+E−W‖_F / max(1, ‖W‖_F) ≤ tol`.
pub fn asalm_decompose(w: &SymMatrix, cfg: &AsalmConfig) -> Result<AsalmResult> {
    cfg.validate()?;
    let scale = w.norm().max(1.0);
    let mut state = AsalmState::zeros(w.dim());
    let mut trace = Vec::new();
    for k in 1..=cfg.iter_max {
        state = asalm_step(w, &state, cfg).map_err(|e| e.at_iteration(k))?;
        let res = state.primal_residual(w);
        if !res.is_finite() || state.dual.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { what: "asalm", iteration: k });
        }
        trace.push(res / scale);
        if res / scale <= cfg.tol {
            break;
        }
    }
    let primal_residual = state.primal_residual(w);
    Ok(AsalmResult {
        l: SymMatrix::symmetrize(state.l),
        theta: SparseDeviation::from_dense(&state.theta),
        e: SymMatrix::symmetrize(state.e),
        dual: SymMatrix::symmetrize(state.dual),
        iterations: trace.len(),
        primal_residual,
        residual_trace: trace,
    })
}

/// Number of PSD-clamped eigenvalues above `rel_gap · λ₁`.
pub fn estimate_rank(l: &SymMatrix, rel_gap: f64) -> Result<usize> {
    if !(rel_gap > 0.0 && rel_gap < 1.0) {
        return Err(Error::invalid(format!("rel_gap must lie in (0, 1), got {rel_gap}")));
    }
    let values = sym_eigen(l)?.values;
    let top = values[0].max(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(values.iter().filter(|&&v| v.max(0.0) > rel_gap * top).count())
}

/// `√(‖W − L − Θ‖_F² / n²)`.
pub fn estimate_sigma(w: &SymMatrix, l: &SymMatrix, theta: &SparseDeviation) -> Result<f64> {
    let n = w.dim();
    if l.dim() != n || theta.n() != n {
        return Err(Error::invalid("estimate_sigma: dimension mismatch"));
    }
    let r = w.matrix() - l.matrix() - theta.to_dense();
    Ok((r.norm_squared() / (n * n) as f64).sqrt())
}

/// View weights `α_s ∝ ĥ_s⁻⁴ σ̂_s⁻²` (summing to one) and penalties
/// `λ_s = α_s σ̂_s √(log n)`.
pub fn tune_weights(h_hat: &[f64], sigma_hat: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if h_hat.is_empty() || h_hat.len() != sigma_hat.len() {
        return Err(Error::invalid("tune_weights needs matching, nonempty inputs"));
    }
    if h_hat.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::invalid("heterogeneity scales must be positive"));
    }
    if sigma_hat.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
        return Err(Error::invalid("noise scales must be nonnegative"));
    }
    let sigma: Vec<f64> = sigma_hat
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            if v < SIGMA_FLOOR {
                warn!("view {s}: noise estimate {v:e} floored at {SIGMA_FLOOR:e}");
                SIGMA_FLOOR
            } else {
                v
            }
        })
        .collect();
    // ratios against the first view keep the normalisation finite when the
    // raw weights under- or overflow
    let log_raw: Vec<f64> = h_hat.iter().zip(&sigma).map(|(h, s)| -4.0 * h.ln() - 2.0 * s.ln()).collect();
    let top = log_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = log_raw.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    let alpha: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let root_log_n = (n as f64).ln().max(0.0).sqrt();
    let lambda = alpha.iter().zip(&sigma).map(|(a, s)| a * s * root_log_n).collect();
    Ok((alpha, lambda))
}

/// Probe entry `(i, j)` with a target value on the correlation scale.
pub type Probe = (usize, usize, f64);

/// `L_ij / √(L_ii L_jj)`, zero where a diagonal entry is not positive.
fn correlation_entry(l: &SymMatrix, i: usize, j: usize) -> f64 {
    let d = l[(i, i)] * l[(j, j)];
    if d > 0.0 {
        l[(i, j)] / d.sqrt()
    } else {
        0.0
    }
}

/// Mean squared error of the correlation-scale entries of `l` at the probes.
pub fn probe_mse(l: &SymMatrix, probes: &[Probe]) -> f64 {
    probes.iter().map(|&(i, j, t)| (correlation_entry(l, i, j) - t).powi(2)).sum::<f64>() / probes.len() as f64
}

/// Grid search over `(μ, τ)`; keeps the first point with the smallest probe
/// error. Grid points whose decomposition diverges are skipped.
pub fn tune_mu_tau(w: &SymMatrix, probes: &[Probe], grid: &[(f64, f64)], base: &AsalmConfig) -> Result<(f64, f64)> {
    if grid.is_empty() || probes.is_empty() {
        return Err(Error::invalid("tune_mu_tau needs a nonempty grid and probe set"));
    }
    let n = w.dim();
    if probes.iter().any(|&(i, j, _)| i >= n || j >= n) {
        return Err(Error::invalid("probe index out of range"));
    }
    let mut best: Option<((f64, f64), f64)> = None;
    for &(mu, tau) in grid {
        let cfg = AsalmConfig { mu, tau, ..*base };
        let score = match asalm_decompose(w, &cfg) {
            Ok(res) => probe_mse(&res.l, probes),
            Err(e) if e.is_numerical() => {
                warn!("grid point (mu = {mu}, tau = {tau}) failed: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| score < b) {
            best = Some(((mu, tau), score));
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::TuningFailure("every (mu, tau) grid point diverged".into()))
}

/// Per-view rank estimates aggregated by their median (lower median for an
/// even count).
pub fn aggregate_rank(ranks: &[usize]) -> usize {
    let mut v = ranks.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Mean of `√L_ii`: the diagonal of `L = HCH` is `h_i²` because `C` has a
/// unit diagonal.
pub fn heterogeneity_scale(l: &SymMatrix) -> f64 {
    let n = l.dim();
    (0..n).map(|i| l[(i, i)].max(0.0).sqrt()).sum::<f64>() / n as f64
}

/// Everything produced by the warm start.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub asalm: Vec<AsalmResult>,
    /// [`heterogeneity_scale`] of each `L̂_s`.
    pub h_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub estimate: ModelEstimate,
}

/// Decomposes each view with its own configuration and assembles the
/// starting point of the alternating minimisation: `H⁰_s` from `rec(L̂_s)`,
/// `U⁰` from `rec(Σ α_s C_s)` and `Θ⁰_s = Θ̂_s`.
pub fn warm_start(views: &MultiViewData, r: usize, cfgs: &[AsalmConfig]) -> Result<WarmStart> {
    if cfgs.len() != views.m() {
        return Err(Error::invalid("one ASALM configuration per view is required"));
    }
    let asalm = views
        .views()
        .iter()
        .zip(cfgs)
        .map(|(w, cfg)| asalm_decompose(w, cfg))
        .collect::<Result<Vec<_>>>()?;
    warm_start_from(views, r, asalm)
}

/// As [`warm_start`], from decompositions computed elsewhere.
pub fn warm_start_from(views: &MultiViewData, r: usize, asalm: Vec<AsalmResult>) -> Result<WarmStart> {
    let n = views.n();
    let recs = asalm.iter().map(|a| rec(&a.l, r)).collect::<Result<Vec<_>>>()?;
    let h_hat: Vec<f64> = asalm.iter().map(|a| heterogeneity_scale(&a.l)).collect();
    let sigma_hat = views
        .views()
        .iter()
        .zip(&asalm)
        .map(|(w, a)| estimate_sigma(w, &a.l, &a.theta))
        .collect::<Result<Vec<_>>>()?;
    let (alpha, lambda) = tune_weights(&h_hat, &sigma_hat, n)?;

    let mut avg = DMatrix::<f64>::zeros(n, n);
    for (o, &a) in recs.iter().zip(&alpha) {
        avg += o.c.matrix() * a;
    }
    let u0 = rec(&SymMatrix::symmetrize(avg), r)?.u;
    let h0: Vec<HeterogeneityDiag> = recs.into_iter().map(|o| o.h).collect();
    let theta0 = asalm.iter().map(|a| a.theta.clone()).collect();
    Ok(WarmStart {
        estimate: ModelEstimate::initial(u0, h0, theta0),
        asalm,
        h_hat,
        sigma_hat,
        alpha,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_instance, Setting, SimConfig};

    fn small(setting: Setting, seed: u64, sigma: f64) -> (MultiViewData, crate::model::GroundTruth) {
        let mut cfg = SimConfig { n: 60, k: 6, r: 2, ..SimConfig::defaults(setting, 6, seed) };
        cfg.sigma = vec![sigma; cfg.m];
        gen_instance(&cfg).unwrap()
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let w = SymMatrix::zeros(5);
        let res = asalm_decompose(&w, &AsalmConfig::new(1.0, 0.1)).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.l.matrix(), &DMatrix::zeros(5, 5));
        assert_eq!(res.theta.nnz_upper(), 0);
        assert_eq!(res.e.matrix(), &DMatrix::zeros(5, 5));
    }

    #[test]
    fn step_reproduces_each_block_update() {
        let (data, _) = small(Setting::Heterogeneous, 1, 0.1);
        let w = data.view(0);
        let cfg = AsalmConfig::heuristic(w);
        let mut state = AsalmState::zeros(w.dim());
        for _ in 0..3 {
            let next = asalm_step(w, &state, &cfg).unwrap();
            let b = cfg.beta;
            let shifted = w.matrix() + &state.dual / b;
            let e = (&shifted - &state.l - &state.theta) * (b / (1.0 + b));
            assert_eq!(e, next.e);
            let theta = (&shifted - &next.e - &state.l).map(|x| shrink(x, cfg.tau / b));
            assert_eq!(theta, next.theta);
            let l = sv_threshold_sym(&SymMatrix::symmetrize(&shifted - &next.e - &next.theta), cfg.mu / b).unwrap();
            assert_eq!(l.matrix(), &next.l);
            let dual = &state.dual - (&next.l + &next.theta + &next.e - w.matrix()) * b;
            assert_eq!(dual, next.dual);
            state = next;
        }
    }

    #[test]
    fn residual_contract_holds() {
        let (data, _) = small(Setting::Heterogeneous, 2, 0.1);
        let w = data.view(1);
        let cfg = AsalmConfig::heuristic(w);
        let res = asalm_decompose(w, &cfg).unwrap();
        let direct = (res.l.matrix() + res.theta.to_dense() + res.e.matrix() - w.matrix()).norm();
        assert!((direct - res.primal_residual).abs() <= 1e-9 * (1.0 + direct));
        let last = *res.residual_trace.last().unwrap();
        assert!(last <= cfg.tol || res.iterations == cfg.iter_max);
        let tail = &res.residual_trace[res.residual_trace.len().saturating_sub(10)..];
        for p in tail.windows(2) {
            assert!(p[1] <= p[0] * (1.0 + 1e-9), "tail residual rose: {p:?}");
        }
    }

    #[test]
    fn recovers_noiseless_low_rank_plus_sparse() {
        let mut cfg = SimConfig { n: 80, k: 4, r: 2, ..SimConfig::defaults(Setting::Heterogeneous, 4, 9) };
        cfg.sigma = vec![0.0; cfg.m];
        cfg.pi = 0.02;
        let (data, truth) = gen_instance(&cfg).unwrap();
        let c = truth.consensus();
        let l_star = c.congruence_diag(truth.h[0].values());
        let w = data.view(0);
        // small μ, τ: exact decomposition is feasible without noise
        let acfg = AsalmConfig {
            iter_max: 2000,
            tol: 1e-9,
            ..AsalmConfig::new(0.05, 0.05 / (80f64).sqrt())
        };
        let res = asalm_decompose(w, &acfg).unwrap();
        let err = (res.l.matrix() - l_star.matrix()).norm() / l_star.norm();
        assert!(err <= 1e-2, "relative L error {err}");
        let found = res.theta.to_dense();
        for &(i, j, v) in truth.theta[0].entries() {
            if v.abs() > 1.0 {
                assert!(found[(i, j)] != 0.0, "missed deviation at ({i}, {j})");
            }
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(estimate_rank(&SymMatrix::from_diagonal(&[10.0, 9.0, 0.01]), 0.05).unwrap(), 2);
        assert_eq!(estimate_rank(&SymMatrix::identity(6), 0.5).unwrap(), 6);
        assert_eq!(estimate_rank(&SymMatrix::zeros(4), 0.05).unwrap(), 0);
        let (_, truth) = small(Setting::Heterogeneous, 3, 0.0);
        let l = truth.consensus().congruence_diag(truth.h[2].values());
        assert_eq!(estimate_rank(&l, 0.05).unwrap(), 2);
        assert_eq!(estimate_rank(&l.scale(37.5), 0.05).unwrap(), 2);
        assert!(estimate_rank(&l, 1.0).is_err());
    }

    #[test]
    fn sigma_examples() {
        let (data, truth) = small(Setting::Heterogeneous, 4, 0.0);
        let c = truth.consensus();
        let l = c.congruence_diag(truth.h[0].values());
        assert!(estimate_sigma(data.view(0), &l, &truth.theta[0]).unwrap() < 1e-12);

        let e = SymMatrix::from_upper_fn(60, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.01);
        let w = SymMatrix::symmetrize(data.view(0).matrix() + e.matrix());
        let expected = (e.norm_squared() / 3600.0).sqrt();
        assert!((estimate_sigma(&w, &l, &truth.theta[0]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn sigma_estimate_tracks_noise_level() {
        // Monte-Carlo over seeds with the true L and Θ: the residual is the
        // noise itself, whose entries have variance σ²·noise_mass
        let mut ratios = Vec::new();
        for seed in 0..20 {
            let cfg = SimConfig { n: 100, k: 5, r: 3, ..SimConfig::defaults(Setting::Heterogeneous, 5, seed) };
            let (data, truth) = gen_instance(&cfg).unwrap();
            let l = truth.consensus().congruence_diag(truth.h[0].values());
            let s = estimate_sigma(data.view(0), &l, &truth.theta[0]).unwrap();
            ratios.push(s / (0.1 * 0.5f64.sqrt()));
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean ratio {mean}");
    }

    #[test]
    fn weight_examples() {
        let (a, _) = tune_weights(&[1.0, 1.0], &[1.0, 1.0], 10).unwrap();
        assert_eq!(a, vec![0.5, 0.5]);
        let (a, l) = tune_weights(&[1.0, 1.0], &[1.0, 2.0], 10).unwrap();
        assert!((a[0] - 0.8).abs() < 1e-15 && (a[1] - 0.2).abs() < 1e-15);
        assert!((l[1] - 0.2 * 2.0 * 10f64.ln().sqrt()).abs() < 1e-15);

        let (a, _) = tune_weights(&[1.0, 2.0], &[0.0, 1.0], 10).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[0] > 0.999);
    }

    #[test]
    fn weights_match_formula_on_generated_views() {
        let (data, _) = small(Setting::Heterogeneous, 5, 0.1);
        let cfgs: Vec<_> = data.views().iter().map(AsalmConfig::heuristic).collect();
        let ws = warm_start(&data, 2, &cfgs).unwrap();
        let raw: Vec<f64> = ws.h_hat.iter().zip(&ws.sigma_hat).map(|(h, s)| 1.0 / (h.powi(4) * s * s)).collect();
        let total: f64 = raw.iter().sum();
        for s in 0..3 {
            let alpha = raw[s] / total;
            assert!((ws.alpha[s] - alpha).abs() < 1e-12);
            let lambda = alpha * ws.sigma_hat[s] * (60f64).ln().sqrt();
            assert!((ws.lambda[s] - lambda).abs() < 1e-12);
        }
        assert!(ws.estimate.u.max_row_norm_defect() < 1e-12);
        assert_eq!(ws.estimate.theta.len(), 3);
    }

    #[test]
    fn mu_tau_grid_search() {
        let (data, truth) = small(Setting::Heterogeneous, 6, 0.1);
        let w = data.view(0);
        let c = truth.consensus();
        let probes: Vec<Probe> = (0..50).map(|k| (k % 60, (k * 13 + 1) % 60, 0.0)).map(|(i, j, _)| (i, j, c[(i, j)])).collect();
        let base = AsalmConfig::heuristic(w);
        assert_eq!(tune_mu_tau(w, &probes, &[(2.0, 0.3)], &base).unwrap(), (2.0, 0.3));

        // a nuclear weight far above the spectrum forces L = 0
        let huge = 1e3 * w.norm();
        let grid = [(huge, base.tau), (base.mu, base.tau)];
        assert_eq!(tune_mu_tau(w, &probes, &grid, &base).unwrap(), (base.mu, base.tau));

        let scores: Vec<f64> = grid
            .iter()
            .map(|&(mu, tau)| probe_mse(&asalm_decompose(w, &AsalmConfig { mu, tau, ..base }).unwrap().l, &probes))
            .collect();
        assert!(scores[1] < scores[0]);
        assert!(tune_mu_tau(w, &[], &grid, &base).is_err());
    }

    #[test]
    fn rank_aggregation_is_lower_median() {
        assert_eq!(aggregate_rank(&[5, 3, 9]), 5);
        assert_eq!(aggregate_rank(&[4, 8]), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn weights_sum_to_one_and_ignore_common_scale(
                h in proptest::collection::vec(0.1f64..5.0, 1..6),
                s in proptest::collection::vec(0.01f64..3.0, 6),
                c in 0.01f64..100.0,
            ) {
                let s = &s[..h.len()];
                let (a, l) = tune_weights(&h, s, 50).unwrap();
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
                let (a2, l2) = tune_weights(&h, &scaled, 50).unwrap();
                for i in 0..h.len() {
                    prop_assert!((a[i] - a2[i]).abs() < 1e-12);
                    prop_assert!((l2[i] - c * l[i]).abs() <= 1e-9 * (1.0 + l2[i].abs()));
                }
            }

            #[test]
            fn rank_is_scale_invariant(d in proptest::collection::vec(0.0f64..10.0, 1..8), c in 0.001f64..1000.0) {
                let a = SymMatrix::from_diagonal(&d);
                prop_assert_eq!(estimate_rank(&a, 0.05).unwrap(), estimate_rank(&a.scale(c), 0.05).unwrap());
            }
        }
    }
}
