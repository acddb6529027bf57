//! Dense symmetric linear algebra shared by every solver.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. [`SymMatrix`] guarantees exact
//! symmetry and finiteness, [`LowRankFactor`] holds an `n × r` factor.
//! Eigendecompositions are returned in a fixed order and sign convention so
//! that everything built on top of them is reproducible.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_RTOL: f64 = 1e-12;
const EIGEN_MAX_SWEEPS_PER_DIM: usize = 200;

/// A finite, exactly symmetric square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates `m` and stores its exact symmetric part.
    ///
    /// Asymmetry above `1e-12` relative to the largest entry is rejected.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some((i, j)) = first_non_finite(&m) {
            return Err(Error::invalid(format!("non-finite entry at ({i}, {j})")));
        }
        let scale = m.amax().max(1.0);
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                let gap = (m[(i, j)] - m[(j, i)]).abs();
                if gap > SYMMETRY_RTOL * scale {
                    return Err(Error::invalid(format!(
                        "matrix not symmetric at ({i}, {j}): gap {gap:e}"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by `(m + mᵀ) / 2` without any tolerance check.
    ///
    /// Intended for results of arithmetic that is symmetric in exact
    /// arithmetic but may carry rounding asymmetry.
    pub fn symmetrize(mut m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                if m[(i, j)].to_bits() == m[(j, i)].to_bits() {
                    continue;
                }
                let v = 0.5 * m[(i, j)] + 0.5 * m[(j, i)];
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    /// Builds a matrix from its upper triangle (`i <= j`), mirrored.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `H · self · H` for a diagonal `H` given by its entries.
    pub fn congruence_diag(&self, h: &[f64]) -> SymMatrix {
        let n = self.dim();
        assert_eq!(h.len(), n);
        let mut out = self.0.clone();
        for j in 0..n {
            for i in 0..n {
                out[(i, j)] *= h[i] * h[j];
            }
        }
        SymMatrix(out)
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix(&self.0 * c)
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// Eigenvalues sorted descending with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    /// The leading `r` pairs.
    pub fn top(&self, r: usize) -> (DVector<f64>, DMatrix<f64>) {
        let r = r.min(self.values.len());
        (
            self.values.rows(0, r).into_owned(),
            self.vectors.columns(0, r).into_owned(),
        )
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = &self.vectors * DMatrix::from_diagonal(&self.values);
        scaled * self.vectors.transpose()
    }
}

/// Full symmetric eigendecomposition.
///
/// Eigenvalues come back in descending order, ties kept in the order the
/// solver produced them. Each eigenvector is signed so that its
/// largest-magnitude entry is positive; entries within `1e-10` relative of the
/// maximum count as tied and the lowest index wins.
pub fn sym_eigen(a: &SymMatrix) -> Result<EigenPairs> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenPairs {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(
        a.matrix().clone(),
        f64::EPSILON,
        EIGEN_MAX_SWEEPS_PER_DIM * n,
    )
    .ok_or(Error::SolverFailure {
        what: "symmetric eigensolver",
        residual: f64::INFINITY,
    })?;

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps solver order for exact ties
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));

    let mut values = DVector::zeros(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        if sign_flip_needed(col.as_slice()) {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenPairs { values, vectors })
}

fn sign_flip_needed(v: &[f64]) -> bool {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return false;
    }
    let pivot = v
        .iter()
        .find(|x| x.abs() >= max * (1.0 - 1e-10))
        .copied()
        .unwrap_or(0.0);
    pivot < 0.0
}

/// Top-`r` eigenpairs of a symmetric matrix.
pub fn top_eigen(a: &SymMatrix, r: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if r > a.dim() {
        return Err(Error::invalid(format!(
            "requested {r} eigenpairs of a {}x{} matrix",
            a.dim(),
            a.dim()
        )));
    }
    Ok(sym_eigen(a)?.top(r))
}

#[inline]
pub fn shrink(x: f64, a: f64) -> f64 {
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Entrywise soft-thresholding `sign(M_ij) · max(|M_ij| − a, 0)`.
pub fn soft_threshold(m: &DMatrix<f64>, a: f64) -> Result<DMatrix<f64>> {
    check_threshold(a)?;
    Ok(m.map(|x| shrink(x, a)))
}

/// Singular-value thresholding `U S_a(Σ) Vᵀ` of a general matrix.
pub fn sv_threshold(m: &DMatrix<f64>, a: f64) -> Result<DMatrix<f64>> {
    check_threshold(a)?;
    let svd = m
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SolverFailure {
            what: "svd",
            residual: f64::INFINITY,
        })?;
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let s = shrink(s, a);
        if s > 0.0 {
            out += s * u.column(k) * v_t.row(k);
        }
    }
    Ok(out)
}

/// Singular-value thresholding specialised to symmetric input.
///
/// For `M = VΛVᵀ` the singular values are `|λ_i|`, so the result is
/// `Σ sign(λ_i) max(|λ_i| − a, 0) v_i v_iᵀ`.
pub fn sv_threshold_sym(m: &SymMatrix, a: f64) -> Result<SymMatrix> {
    check_threshold(a)?;
    let eig = sym_eigen(m)?;
    let keep: Vec<usize> = (0..m.dim())
        .filter(|&k| eig.values[k].abs() > a)
        .collect();
    let n = m.dim();
    let mut basis = DMatrix::zeros(n, keep.len());
    let mut scaled = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let col = eig.vectors.column(k);
        basis.set_column(c, &col);
        scaled.set_column(c, &(col * shrink(eig.values[k], a)));
    }
    Ok(SymMatrix::symmetrize(scaled * basis.transpose()))
}

fn check_threshold(a: f64) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!("threshold must be >= 0, got {a}")));
    }
    Ok(())
}

/// An `n × r` real factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor(DMatrix<f64>);

impl LowRankFactor {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.ncols() > rows.nrows() {
            return Err(Error::invalid(format!(
                "factor has r = {} > n = {}",
                rows.ncols(),
                rows.nrows()
            )));
        }
        if let Some((i, j)) = first_non_finite(&rows) {
            return Err(Error::invalid(format!("non-finite factor entry at ({i}, {j})")));
        }
        Ok(LowRankFactor(rows))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn r(&self) -> usize {
        self.0.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// `U Uᵀ`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::symmetrize(&self.0 * self.0.transpose())
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.0.row_iter().map(|row| row.norm()).collect()
    }

    /// Largest deviation of `UᵀU` from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.0.transpose() * &self.0;
        (g - DMatrix::<f64>::identity(self.r(), self.r())).amax()
    }

    pub fn max_row_norm_defect(&self) -> f64 {
        self.row_norms()
            .iter()
            .fold(0.0f64, |m, &x| m.max((x - 1.0).abs()))
    }
}

/// Row normalisation used throughout: rows of norm below `1e-12` are replaced
/// by the first canonical direction. Returns the normalised rows and the
/// original norms.
pub fn normalize_rows(u: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let mut out = u.clone();
    let mut norms = Vec::with_capacity(u.nrows());
    for i in 0..u.nrows() {
        let norm = u.row(i).norm();
        norms.push(norm);
        if norm < 1e-12 {
            out.row_mut(i).fill(0.0);
            if u.ncols() > 0 {
                out[(i, 0)] = 1.0;
            }
        } else {
            out.row_mut(i).scale_mut(1.0 / norm);
        }
    }
    (out, norms)
}

/// Spectral norm `‖V1V1ᵀ − V2V2ᵀ‖` between the spans of two orthonormal
/// factors, computed as `max(‖(I − P1)V2‖, ‖(I − P2)V1‖)`.
pub fn projector_distance(v1: &LowRankFactor, v2: &LowRankFactor) -> Result<f64> {
    if v1.n() != v2.n() {
        return Err(Error::invalid(format!(
            "factors live in different dimensions ({} vs {})",
            v1.n(),
            v2.n()
        )));
    }
    for (name, v) in [("V1", v1), ("V2", v2)] {
        let defect = v.orthonormality_defect();
        if defect > 1e-8 {
            return Err(Error::invalid(format!(
                "{name} is not orthonormal (defect {defect:e})"
            )));
        }
    }
    let a = v1.rows();
    let b = v2.rows();
    let residual_b = b - a * (a.transpose() * b);
    let residual_a = a - b * (b.transpose() * a);
    Ok(spectral_norm(&residual_b)?.max(spectral_norm(&residual_a)?))
}

/// Largest singular value via the small Gram matrix `MᵀM`.
fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Ok(0.0);
    }
    let gram = SymMatrix::symmetrize(m.transpose() * m);
    let eig = sym_eigen(&gram)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

/// Tuning of the projected-gradient weighted low-rank solver.
#[derive(Debug, Clone, Copy)]
pub struct WlraOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for WlraOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-8,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WlraSolution {
    pub factor: LowRankFactor,
    /// Objective before the first step followed by the value after each step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl WlraSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// `‖(UUᵀ) ∘ X − Y‖_F²`.
pub fn wlra_objective(x: &DMatrix<f64>, y: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    let g = u * u.transpose();
    g.component_mul(x)
        .iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Weighted low-rank approximation over factors with unit-norm rows:
/// minimises `‖(UUᵀ) ∘ X − Y‖_F²` starting from `u0`.
pub fn wlra(x: &SymMatrix, y: &SymMatrix, r: usize, u0: &LowRankFactor) -> Result<WlraSolution> {
    wlra_with(x, y, r, u0, &WlraOptions::default())
}

/// Projected gradient descent with backtracking. Each step moves along the
/// negative gradient, renormalises every row, and is accepted only under the
/// sufficient-decrease condition `f(U⁺) ≤ f(U) − c ⟨∇f, U − U⁺⟩` together
/// with `f(U⁺) ≤ f(U)`, so the trace is monotone.
pub fn wlra_with(
    x: &SymMatrix,
    y: &SymMatrix,
    r: usize,
    u0: &LowRankFactor,
    opts: &WlraOptions,
) -> Result<WlraSolution> {
    let n = x.dim();
    if y.dim() != n || u0.n() != n || u0.r() != r {
        return Err(Error::invalid(format!(
            "wlra shapes disagree: X {n}x{n}, Y {0}x{0}, U0 {1}x{2}, r = {r}",
            y.dim(),
            u0.n(),
            u0.r()
        )));
    }
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("wlra weights X must be nonnegative"));
    }
    let x = x.matrix();
    let y = y.matrix();

    let (mut u, _) = normalize_rows(u0.rows());
    let (mut f, mut grad) = objective_and_gradient(x, y, &u);
    let mut trace = vec![f];
    let y_scale = y.norm_squared().max(1.0);

    let grad_norm = grad.norm();
    let mut step = if grad_norm > 0.0 {
        0.1 * u.norm() / grad_norm
    } else {
        0.0
    };
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if f <= 1e-28 * y_scale || step == 0.0 {
            break;
        }
        if let Some((du, dg)) = prev.take() {
            let sy = du.dot(&dg);
            if sy > 0.0 {
                step = du.norm_squared() / sy;
            } else {
                step *= 2.0;
            }
        }

        let mut accepted = None;
        let mut t = step;
        for _ in 0..opts.max_backtracks {
            let (cand, _) = normalize_rows(&(&u - t * &grad));
            let f_cand = wlra_objective(x, y, &cand);
            if !f_cand.is_finite() {
                return Err(Error::Divergence {
                    what: "wlra",
                    iteration: iterations,
                });
            }
            let decrease = grad.dot(&(&u - &cand));
            if f_cand <= f - opts.armijo * decrease && f_cand <= f {
                accepted = Some((cand, t));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, t)) = accepted else {
            // no descent left along the projected gradient
            break;
        };
        step = t;
        let (f_new, grad_new) = objective_and_gradient(x, y, &cand);
        iterations += 1;
        trace.push(f_new);
        prev = Some((&cand - &u, &grad_new - &grad));
        let change = (f - f_new).abs();
        u = cand;
        grad = grad_new;
        let converged = change <= opts.rel_tol * f.max(f64::MIN_POSITIVE);
        f = f_new;
        if converged {
            break;
        }
    }

    Ok(WlraSolution {
        factor: LowRankFactor::new(u)?,
        objective_trace: trace,
        iterations,
    })
}

fn objective_and_gradient(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    u: &DMatrix<f64>,
) -> (f64, DMatrix<f64>) {
    let g = u * u.transpose();
    let mut residual = g.component_mul(x);
    residual -= y;
    let f = residual.norm_squared();
    // d/dU Σ (x_ij (UUᵀ)_ij − y_ij)² = 4 (X ∘ R) U for symmetric X, Y
    residual.component_mul_assign(x);
    (f, 4.0 * residual * u)
}
