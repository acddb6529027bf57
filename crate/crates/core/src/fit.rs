//! Alternating minimisation of
//!
//! ```text
//! L(U, H•, Θ•) = ½ Σ_s α_s ‖W_s − Θ_s − H_s U Uᵀ H_s‖_F² + Σ_s λ_s ‖Θ_s‖_ℓ1
//! ```
//!
//! over unit-row factors `U`, positive diagonals `H_s` and sparse `Θ_s`.
//! Two drivers are provided: the exact scheme, whose U-step solves the
//! weighted low-rank problem, and the inexact scheme, which averages per-view
//! correlation estimates instead.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normalize_rows, shrink, sym_eigen, wlra_with, LowRankFactor, SymMatrix, WlraOptions};
use crate::model::{HeterogeneityDiag, MultiViewData, SparseDeviation};

/// Floor applied to heterogeneity entries of rows that vanish in [`rec`].
pub const ZERO_ROW_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    #[default]
    Exact,
    Inexact,
}

fn default_kappa1() -> f64 {
    100.0
}
fn default_iter_max() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-6
}
fn default_wlra_max_iter() -> usize {
    500
}
fn default_wlra_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub r: usize,
    /// View weights; positive and summing to one.
    pub alpha: Vec<f64>,
    /// Sparsity penalties; nonnegative.
    pub lambda: Vec<f64>,
    /// Condition-number cap; violations are reported, not projected.
    #[serde(default = "default_kappa1")]
    pub kappa1: f64,
    #[serde(default = "default_iter_max")]
    pub iter_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub mode: FitMode,
    #[serde(default = "default_iter_max")]
    pub reh_iter_max: usize,
    #[serde(default = "default_tol")]
    pub reh_tol: f64,
    #[serde(default = "default_wlra_max_iter")]
    pub wlra_max_iter: usize,
    #[serde(default = "default_wlra_tol")]
    pub wlra_tol: f64,
}

impl FitConfig {
    /// Equal weights, no sparsity penalty and default budgets.
    pub fn new(r: usize, m: usize) -> Self {
        Self {
            r,
            alpha: vec![1.0 / m as f64; m],
            lambda: vec![0.0; m],
            kappa1: default_kappa1(),
            iter_max: default_iter_max(),
            tol: default_tol(),
            mode: FitMode::Exact,
            reh_iter_max: default_iter_max(),
            reh_tol: default_tol(),
            wlra_max_iter: default_wlra_max_iter(),
            wlra_tol: default_wlra_tol(),
        }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.r == 0 || self.r > n {
            return Err(Error::invalid(format!("rank r = {} out of range for n = {n}", self.r)));
        }
        if self.alpha.len() != m || self.lambda.len() != m {
            return Err(Error::invalid(format!(
                "alpha/lambda have {}/{} entries for m = {m} views",
                self.alpha.len(),
                self.lambda.len()
            )));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid("alpha entries must be positive"));
        }
        let total: f64 = self.alpha.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("alpha must sum to 1, sums to {total}")));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("lambda entries must be >= 0"));
        }
        if !(self.kappa1 > 1.0) {
            return Err(Error::invalid("kappa1 must exceed 1"));
        }
        if self.iter_max == 0 || !(self.tol > 0.0) || !(self.reh_tol > 0.0) {
            return Err(Error::invalid("iteration budgets and tolerances must be positive"));
        }
        Ok(())
    }

    fn wlra_options(&self) -> WlraOptions {
        WlraOptions {
            max_iter: self.wlra_max_iter,
            rel_tol: self.wlra_tol,
            ..WlraOptions::default()
        }
    }
}

/// Output of the estimator: `Ĉ = UUᵀ` plus per-view parameters.
#[derive(Debug, Clone)]
pub struct ModelEstimate {
    pub u: LowRankFactor,
    pub h: Vec<HeterogeneityDiag>,
    pub theta: Vec<SparseDeviation>,
    /// Objective at the initial point followed by its value after each
    /// outer iteration.
    pub objective_trace: Vec<f64>,
    /// `κ(U)` after each outer iteration.
    pub kappa_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ModelEstimate {
    /// A starting point; traces are empty.
    pub fn initial(u: LowRankFactor, h: Vec<HeterogeneityDiag>, theta: Vec<SparseDeviation>) -> Self {
        Self {
            u,
            h,
            theta,
            objective_trace: Vec::new(),
            kappa_trace: Vec::new(),
            iterations: 0,
            converged: false,
        }
    }

    pub fn consensus(&self) -> SymMatrix {
        self.u.gram()
    }
}

/// Result of the truncated PSD correlation extraction.
#[derive(Debug, Clone)]
pub struct RecOutput {
    /// `ŨŨᵀ`, unit diagonal.
    pub c: SymMatrix,
    /// Row norms of `VΣ^{1/2}`.
    pub h: HeterogeneityDiag,
    /// Row-normalised factor `Ũ`.
    pub u: LowRankFactor,
}

/// Best rank-`r` PSD approximation `VΣVᵀ` of `w` (negative eigenvalues
/// clamped), split into heterogeneity (row norms of `VΣ^{1/2}`) and a
/// unit-row correlation factor.
pub fn rec(w: &SymMatrix, r: usize) -> Result<RecOutput> {
    let n = w.dim();
    if r == 0 || r > n {
        return Err(Error::invalid(format!("rec rank {r} out of range for n = {n}")));
    }
    let (values, vectors) = sym_eigen(w)?.top(r);
    let mut u = vectors;
    for (c, &lambda) in values.iter().enumerate() {
        u.column_mut(c).scale_mut(lambda.max(0.0).sqrt());
    }
    let (unit, norms) = normalize_rows(&u);
    let h = norms.into_iter().map(|v| if v < ZERO_ROW_FLOOR { ZERO_ROW_FLOOR } else { v }).collect();
    let u = LowRankFactor::new(unit)?;
    Ok(RecOutput {
        c: u.gram(),
        h: HeterogeneityDiag::unchecked(h),
        u,
    })
}

/// Heterogeneity refit by decoupled coordinate updates with an increasing
/// proximal weight `λ = 1, 2, …`; returns the mean of the two iterates.
pub fn reh(
    w_tilde: &SymMatrix,
    c_tilde: &SymMatrix,
    h0: &HeterogeneityDiag,
    iter_max: usize,
    tol: f64,
) -> Result<HeterogeneityDiag> {
    let n = w_tilde.dim();
    if c_tilde.dim() != n || h0.len() != n {
        return Err(Error::invalid("reh: inconsistent dimensions"));
    }
    let wc = w_tilde.component_mul(c_tilde.matrix());
    let cc = c_tilde.component_mul(c_tilde.matrix());
    let mut h1 = nalgebra::DVector::from_column_slice(h0.values());
    let mut h2 = h1.clone();
    let mut lambda = 1.0;

    let update = |from: &nalgebra::DVector<f64>, lambda: f64| {
        let num = &wc * from + from * lambda;
        let den = &cc * from.component_mul(from);
        nalgebra::DVector::from_fn(n, |j, _| num[j] / (den[j] + lambda))
    };

    for t in 0..iter_max {
        h1 = update(&h2, lambda);
        h2 = update(&h1, lambda);
        if h1.iter().chain(h2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { what: "reh", iteration: t + 1 });
        }
        if (&h1 - &h2).norm() <= tol {
            break;
        }
        lambda += 1.0;
    }
    Ok(HeterogeneityDiag::unchecked(((h1 + h2) * 0.5).as_slice().to_vec()))
}

/// `W − H C H`.
fn residual(w: &SymMatrix, h: &HeterogeneityDiag, c: &SymMatrix) -> DMatrix<f64> {
    w.matrix() - c.congruence_diag(h.values()).matrix()
}

/// Soft-thresholded residual `S_τ(W − HCH)`.
pub fn retheta(w: &SymMatrix, h: &HeterogeneityDiag, c: &SymMatrix, tau: f64) -> Result<SparseDeviation> {
    Ok(SparseDeviation::from_dense(&retheta_dense(w, h, c, tau)?))
}

fn retheta_dense(w: &SymMatrix, h: &HeterogeneityDiag, c: &SymMatrix, tau: f64) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::invalid(format!("threshold must be >= 0, got {tau}")));
    }
    Ok(residual(w, h, c).map(|x| shrink(x, tau)))
}

/// Weights `X` and targets `Y` of the weighted low-rank U-subproblem:
/// `X∘X = Σ α_s (h_s h_sᵀ)∘(h_s h_sᵀ)` and `X∘Y = Σ α_s (h_s h_sᵀ)∘(W_s − Θ_s)`,
/// with `Y = 0` wherever `X = 0`.
pub fn wlra_weights(
    views: &MultiViewData,
    thetas: &[DMatrix<f64>],
    hs: &[HeterogeneityDiag],
    alpha: &[f64],
) -> (SymMatrix, SymMatrix) {
    let n = views.n();
    let mut xx = DMatrix::<f64>::zeros(n, n);
    let mut xy = DMatrix::<f64>::zeros(n, n);
    for s in 0..views.m() {
        let h = hs[s].values();
        let target = views.view(s).matrix() - &thetas[s];
        for j in 0..n {
            for i in 0..n {
                let hh = h[i] * h[j];
                xx[(i, j)] += alpha[s] * hh * hh;
                xy[(i, j)] += alpha[s] * hh * target[(i, j)];
            }
        }
    }
    let x = xx.map(f64::sqrt);
    let y = DMatrix::from_fn(n, n, |i, j| if x[(i, j)] > 0.0 { xy[(i, j)] / x[(i, j)] } else { 0.0 });
    (SymMatrix::symmetrize(x), SymMatrix::symmetrize(y))
}

/// Exact U-step: weighted low-rank approximation warm-started at `u_prev`.
pub fn update_u_exact(
    views: &MultiViewData,
    thetas: &[SparseDeviation],
    hs: &[HeterogeneityDiag],
    cfg: &FitConfig,
    u_prev: &LowRankFactor,
) -> Result<LowRankFactor> {
    let dense: Vec<_> = thetas.iter().map(SparseDeviation::to_dense).collect();
    let (x, y) = wlra_weights(views, &dense, hs, &cfg.alpha);
    Ok(wlra_with(&x, &y, cfg.r, u_prev, &cfg.wlra_options())?.factor)
}

/// Output of the inexact U-step.
#[derive(Debug, Clone)]
pub struct InexactUpdate {
    pub c: SymMatrix,
    pub u: LowRankFactor,
    /// `rec(W_s − Θ_s, r).c` for each view.
    pub per_view_c: Vec<SymMatrix>,
    /// The weighted average before the final truncation.
    pub averaged: SymMatrix,
}

/// Inexact U-step: per-view correlation estimates averaged with weights
/// `α_s / Σα`, then truncated back to rank `r`.
pub fn update_u_inexact(views: &MultiViewData, thetas: &[SparseDeviation], cfg: &FitConfig) -> Result<InexactUpdate> {
    let dense: Vec<_> = thetas.iter().map(SparseDeviation::to_dense).collect();
    let per_view_c = per_view_rec(views, &dense, cfg.r)?;
    inexact_from_per_view(per_view_c, &cfg.alpha, cfg.r)
}

fn per_view_rec(views: &MultiViewData, thetas: &[DMatrix<f64>], r: usize) -> Result<Vec<SymMatrix>> {
    views
        .views()
        .iter()
        .zip(thetas)
        .map(|(w, theta)| Ok(rec(&SymMatrix::symmetrize(w.matrix() - theta), r)?.c))
        .collect()
}

fn inexact_from_per_view(per_view_c: Vec<SymMatrix>, alpha: &[f64], r: usize) -> Result<InexactUpdate> {
    let total: f64 = alpha.iter().sum();
    let n = per_view_c[0].dim();
    let mut avg = DMatrix::<f64>::zeros(n, n);
    for (c, &a) in per_view_c.iter().zip(alpha) {
        avg += c.matrix() * (a / total);
    }
    let averaged = SymMatrix::symmetrize(avg);
    let out = rec(&averaged, r)?;
    Ok(InexactUpdate {
        c: out.c,
        u: out.u,
        per_view_c,
        averaged,
    })
}

/// The penalised objective for a given consensus matrix.
pub fn objective(
    views: &MultiViewData,
    c: &SymMatrix,
    hs: &[HeterogeneityDiag],
    thetas: &[SparseDeviation],
    alpha: &[f64],
    lambda: &[f64],
) -> f64 {
    let dense: Vec<_> = thetas.iter().map(SparseDeviation::to_dense).collect();
    objective_dense(views, c, hs, &dense, alpha, lambda)
}

fn view_loss(w: &SymMatrix, c: &SymMatrix, h: &HeterogeneityDiag, theta: &DMatrix<f64>) -> f64 {
    (residual(w, h, c) - theta).norm_squared()
}

fn objective_dense(
    views: &MultiViewData,
    c: &SymMatrix,
    hs: &[HeterogeneityDiag],
    thetas: &[DMatrix<f64>],
    alpha: &[f64],
    lambda: &[f64],
) -> f64 {
    (0..views.m())
        .map(|s| {
            let fit = 0.5 * alpha[s] * view_loss(views.view(s), c, &hs[s], &thetas[s]);
            let l1: f64 = thetas[s].iter().map(|v| v.abs()).sum();
            fit + lambda[s] * l1
        })
        .sum()
}

/// `κ(U) = σ₁(U)/σ_r(U)`.
pub fn condition_number(u: &LowRankFactor) -> f64 {
    let gram = SymMatrix::symmetrize(u.rows().transpose() * u.rows());
    match sym_eigen(&gram) {
        Ok(eig) => {
            let top = eig.values[0].max(0.0);
            let bottom = eig.values[eig.values.len() - 1].max(0.0);
            if bottom > 0.0 {
                (top / bottom).sqrt()
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::NAN,
    }
}

/// Runs the alternating minimisation from `init`.
pub fn fit(views: &MultiViewData, cfg: &FitConfig, init: &ModelEstimate) -> Result<ModelEstimate> {
    let (n, m) = (views.n(), views.m());
    cfg.validate(m, n)?;
    if init.u.n() != n || init.u.r() != cfg.r || init.h.len() != m || init.theta.len() != m {
        return Err(Error::invalid("initial estimate does not match the data and rank"));
    }
    if init.h.iter().any(|h| h.len() != n) || init.theta.iter().any(|t| t.n() != n) {
        return Err(Error::invalid("initial heterogeneity/deviation dimensions do not match n"));
    }
    match cfg.mode {
        FitMode::Exact => fit_exact(views, cfg, init),
        FitMode::Inexact => fit_inexact(views, cfg, init),
    }
}

struct State {
    u: LowRankFactor,
    c: SymMatrix,
    hs: Vec<HeterogeneityDiag>,
    thetas: Vec<DMatrix<f64>>,
}

impl State {
    fn from_init(init: &ModelEstimate) -> Self {
        let (unit, _) = normalize_rows(init.u.rows());
        let u = LowRankFactor::new(unit).expect("normalised rows are finite");
        Self {
            c: u.gram(),
            u,
            hs: init.h.clone(),
            thetas: init.theta.iter().map(SparseDeviation::to_dense).collect(),
        }
    }

    fn objective(&self, views: &MultiViewData, cfg: &FitConfig) -> f64 {
        objective_dense(views, &self.c, &self.hs, &self.thetas, &cfg.alpha, &cfg.lambda)
    }

    fn finish(self, trace: Vec<f64>, kappa: Vec<f64>, iterations: usize, converged: bool) -> ModelEstimate {
        ModelEstimate {
            u: self.u,
            h: self.hs,
            theta: self.thetas.iter().map(SparseDeviation::from_dense).collect(),
            objective_trace: trace,
            kappa_trace: kappa,
            iterations,
            converged,
        }
    }
}

fn c_change_small(new: &SymMatrix, old: &SymMatrix, tol: f64) -> bool {
    (new.matrix() - old.matrix()).norm() <= tol * old.norm().max(1.0)
}

fn monitor_kappa(u: &LowRankFactor, kappa1: f64, iteration: usize) -> f64 {
    let kappa = condition_number(u);
    if kappa * kappa > kappa1 {
        warn!("iteration {iteration}: kappa(U)^2 = {:.3e} exceeds kappa1 = {kappa1:.3e}", kappa * kappa);
    }
    kappa
}

/// Heterogeneity step for one view. The refit is kept only if it does not
/// increase that view's loss, which keeps the exact objective monotone.
fn refit_h(
    w_minus_theta: &SymMatrix,
    c: &SymMatrix,
    h_prev: &HeterogeneityDiag,
    cfg: &FitConfig,
    guard: bool,
) -> Result<HeterogeneityDiag> {
    let h_new = reh(w_minus_theta, c, h_prev, cfg.reh_iter_max, cfg.reh_tol)?;
    if guard {
        let zero = DMatrix::zeros(c.dim(), c.dim());
        let before = view_loss(w_minus_theta, c, h_prev, &zero);
        let after = view_loss(w_minus_theta, c, &h_new, &zero);
        if after > before {
            return Ok(h_prev.clone());
        }
    }
    Ok(h_new)
}

fn fit_exact(views: &MultiViewData, cfg: &FitConfig, init: &ModelEstimate) -> Result<ModelEstimate> {
    let mut state = State::from_init(init);
    let mut trace = vec![state.objective(views, cfg)];
    let mut kappa = Vec::new();
    let wlra_opts = cfg.wlra_options();

    for t in 1..=cfg.iter_max {
        let (x, y) = wlra_weights(views, &state.thetas, &state.hs, &cfg.alpha);
        let u = wlra_with(&x, &y, cfg.r, &state.u, &wlra_opts)
            .map_err(|e| e.at_iteration(t))?
            .factor;
        let c = u.gram();

        let mut hs = Vec::with_capacity(views.m());
        for s in 0..views.m() {
            let target = SymMatrix::symmetrize(views.view(s).matrix() - &state.thetas[s]);
            hs.push(refit_h(&target, &c, &state.hs[s], cfg, true).map_err(|e| e.at_iteration(t))?);
        }
        let mut thetas = Vec::with_capacity(views.m());
        for s in 0..views.m() {
            let tau = cfg.lambda[s] / cfg.alpha[s];
            thetas.push(retheta_dense(views.view(s), &hs[s], &c, tau)?);
        }

        let done = c_change_small(&c, &state.c, cfg.tol);
        state = State { u, c, hs, thetas };
        trace.push(state.objective(views, cfg));
        kappa.push(monitor_kappa(&state.u, cfg.kappa1, t));
        if !trace.last().unwrap().is_finite() {
            return Err(Error::Divergence { what: "fit", iteration: t });
        }
        if done {
            return Ok(state.finish(trace, kappa, t, true));
        }
    }
    Ok(state.finish(trace, kappa, cfg.iter_max, false))
}

fn fit_inexact(views: &MultiViewData, cfg: &FitConfig, init: &ModelEstimate) -> Result<ModelEstimate> {
    let mut state = State::from_init(init);
    let mut trace = vec![state.objective(views, cfg)];
    let mut kappa = Vec::new();
    let mut per_view_c = per_view_rec(views, &state.thetas, cfg.r)?;

    for t in 1..=cfg.iter_max {
        let update = inexact_from_per_view(per_view_c, &cfg.alpha, cfg.r).map_err(|e| e.at_iteration(t))?;
        let done = c_change_small(&update.c, &state.c, cfg.tol);
        state.u = update.u;
        state.c = update.c;
        kappa.push(monitor_kappa(&state.u, cfg.kappa1, t));
        if done {
            trace.push(state.objective(views, cfg));
            return Ok(state.finish(trace, kappa, t, true));
        }

        for s in 0..views.m() {
            let target = SymMatrix::symmetrize(views.view(s).matrix() - &state.thetas[s]);
            state.hs[s] = refit_h(&target, &state.c, &state.hs[s], cfg, false).map_err(|e| e.at_iteration(t))?;
        }
        for s in 0..views.m() {
            let tau = cfg.lambda[s] / cfg.alpha[s];
            state.thetas[s] = retheta_dense(views.view(s), &state.hs[s], &state.c, tau)?;
        }
        per_view_c = per_view_rec(views, &state.thetas, cfg.r).map_err(|e| e.at_iteration(t))?;
        trace.push(state.objective(views, cfg));
        if !trace.last().unwrap().is_finite() {
            return Err(Error::Divergence { what: "fit", iteration: t });
        }
    }
    Ok(state.finish(trace, kappa, cfg.iter_max, false))
}
