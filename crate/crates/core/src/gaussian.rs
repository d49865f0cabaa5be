//! Gaussian signal models and conditional statistics.
//!
//! A [`GaussianModel`] holds the mean and covariance of the length-`K`
//! target vector. Observing a subset of its entries yields a
//! [`ConditionalState`]: the posterior mean and covariance of the entries
//! that are still unknown. Two routes compute it:
//!
//! * [`condition`] solves the observed block in one batch through a
//!   Cholesky factorization, and
//! * [`ConditionalState::rank_one_condition`] folds in one observation at a
//!   time with a Schur-complement update, `O(L^2)` per observation.
//!
//! Node indices are zero-based throughout the crate.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Conditional variances at or below this are treated as already determined.
pub const VARIANCE_EPS: f64 = 1e-10;

/// Relative diagonal jitter used when the observed block fails to factor.
pub const JITTER_SCALE: f64 = 1e-10;

/// Mean vector and covariance matrix of the target signal.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianModel {
    /// Validates shape, symmetry (1e-12 relative) and positive
    /// semidefiniteness (smallest eigenvalue >= -1e-10 * trace / K).
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        if cov.nrows() != k || cov.ncols() != k {
            return Err(Error::Dimension(format!(
                "mean has length {k} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if k == 0 {
            return Err(Error::InvalidModel("empty model".into()));
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        for i in 0..k {
            for j in (i + 1)..k {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidModel(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let trace = cov.trace();
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -1e-10 * trace / k as f64 {
            return Err(Error::InvalidModel(format!(
                "covariance has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Same covariance, mean multiplied by `factor`.
    pub fn with_scaled_mean(&self, factor: f64) -> Self {
        Self {
            mean: &self.mean * factor,
            cov: self.cov.clone(),
        }
    }

    /// Draws one realization `x ~ N(mean, cov)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.dim();
        let white = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.sqrt_factor() * white
    }

    /// A matrix `L` with `L L^T = cov`: Cholesky when it factors (with jitter
    /// if needed), otherwise the symmetric eigen square root.
    pub fn sqrt_factor(&self) -> DMatrix<f64> {
        if let Some(chol) = factor_with_jitter(&self.cov) {
            return chol.l();
        }
        let eig = SymmetricEigen::new(self.cov.clone());
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
    }
}

fn factor_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Some(chol);
    }
    let mean_var = m.trace() / m.nrows().max(1) as f64;
    if !(mean_var > 0.0) {
        return None;
    }
    let jitter = JITTER_SCALE * mean_var;
    let mut jittered = m.clone();
    for i in 0..m.nrows() {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered)
}

/// Posterior statistics of the unknown entries given observed entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    known_idx: Vec<usize>,
    known_vals: Vec<f64>,
    /// Unknown global indices in ascending order; position = local index.
    unknown_idx: Vec<usize>,
    cond_mean: DVector<f64>,
    cond_cov: DMatrix<f64>,
}

impl ConditionalState {
    /// The prior: nothing observed.
    pub fn prior(model: &GaussianModel) -> Self {
        Self {
            known_idx: Vec::new(),
            known_vals: Vec::new(),
            unknown_idx: (0..model.dim()).collect(),
            cond_mean: model.mean.clone(),
            cond_cov: model.cov.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.known_idx.len() + self.unknown_idx.len()
    }

    /// Observed node indices in the order they were observed.
    pub fn known_idx(&self) -> &[usize] {
        &self.known_idx
    }

    pub fn known_vals(&self) -> &[f64] {
        &self.known_vals
    }

    /// Unknown node indices, ascending.
    pub fn unknown_idx(&self) -> &[usize] {
        &self.unknown_idx
    }

    pub fn cond_mean(&self) -> &DVector<f64> {
        &self.cond_mean
    }

    pub fn cond_cov(&self) -> &DMatrix<f64> {
        &self.cond_cov
    }

    /// Total conditional variance of the unknown entries.
    pub fn total_variance(&self) -> f64 {
        self.cond_cov.trace()
    }

    /// Position of a global node index among the unknowns.
    pub fn local_index(&self, node: usize) -> Option<usize> {
        self.unknown_idx.binary_search(&node).ok()
    }

    /// Conditional mean of one unknown node.
    pub fn predicted(&self, node: usize) -> Option<f64> {
        self.local_index(node).map(|l| self.cond_mean[l])
    }

    /// Conditions on the unknown at `local_idx` taking `value`.
    pub fn rank_one_condition(&self, local_idx: usize, value: f64) -> Result<Self> {
        let mut next = self.clone();
        next.observe_local(local_idx, value)?;
        Ok(next)
    }

    /// In-place [`Self::rank_one_condition`] addressed by global node index.
    pub fn observe(&mut self, node: usize, value: f64) -> Result<()> {
        let local = self.local_index(node).ok_or_else(|| Error::InvalidIndex {
            index: node,
            reason: "node is not among the unknowns".into(),
        })?;
        self.observe_local(local, value)
    }

    fn observe_local(&mut self, l: usize, value: f64) -> Result<()> {
        let len = self.unknown_idx.len();
        if l >= len {
            return Err(Error::InvalidIndex {
                index: l,
                reason: format!("local index out of range for {len} unknowns"),
            });
        }
        let nu = self.cond_cov[(l, l)];
        if nu <= VARIANCE_EPS {
            return Err(Error::DegenerateVariance {
                index: self.unknown_idx[l],
                variance: nu,
            });
        }
        let r = self.cond_cov.column(l).clone_owned();
        let gain = (value - self.cond_mean[l]) / nu;
        let mean = &self.cond_mean + &r * gain;
        self.cond_mean = drop_entry(&mean, l);
        self.cond_cov = schur_drop(&self.cond_cov, l);
        self.push_known(l, value);
        Ok(())
    }

    /// Moves a node with (near) zero conditional variance into the known
    /// set without a Schur update; the remaining statistics are unchanged.
    pub fn mark_determined(&mut self, node: usize, value: f64) -> Result<()> {
        let l = self.local_index(node).ok_or_else(|| Error::InvalidIndex {
            index: node,
            reason: "node is not among the unknowns".into(),
        })?;
        self.cond_mean = drop_entry(&self.cond_mean, l);
        self.cond_cov = drop_row_col(&self.cond_cov, l);
        self.push_known(l, value);
        Ok(())
    }

    fn push_known(&mut self, l: usize, value: f64) {
        let node = self.unknown_idx.remove(l);
        self.known_idx.push(node);
        self.known_vals.push(value);
    }
}

fn drop_entry(v: &DVector<f64>, l: usize) -> DVector<f64> {
    DVector::from_fn(v.len() - 1, |i, _| v[if i < l { i } else { i + 1 }])
}

fn drop_row_col(m: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let n = m.nrows() - 1;
    let src = |i: usize| if i < l { i } else { i + 1 };
    DMatrix::from_fn(n, n, |i, j| m[(src(i), src(j))])
}

/// Covariance of the other entries after conditioning on entry `l`:
/// `cov_{-l} - r r^T / nu` with `r` the off-diagonal part of column `l`.
///
/// Depends on the covariance only, so it also serves hypothetical
/// (value-free) conditioning during node selection.
pub fn schur_drop(cov: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let nu = cov[(l, l)];
    if nu <= VARIANCE_EPS {
        return drop_row_col(cov, l);
    }
    let n = cov.nrows() - 1;
    let src = |i: usize| if i < l { i } else { i + 1 };
    let r: Vec<f64> = (0..n).map(|i| cov[(src(i), l)]).collect();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let sj = src(j);
        let rj = r[j] / nu;
        for i in j..n {
            let v = cov[(src(i), sj)] - r[i] * rj;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Batch conditioning of `model` on `x[idx] = vals`.
///
/// Solves the observed block with a Cholesky factorization, retrying once
/// with diagonal jitter `1e-10 * trace / |idx|` when it fails. The
/// returned unknowns are in ascending index order.
pub fn condition(model: &GaussianModel, idx: &[usize], vals: &[f64]) -> Result<ConditionalState> {
    let k = model.dim();
    if idx.len() != vals.len() {
        return Err(Error::Dimension(format!(
            "{} indices but {} values",
            idx.len(),
            vals.len()
        )));
    }
    let mut seen = vec![false; k];
    for &i in idx {
        if i >= k {
            return Err(Error::InvalidIndex {
                index: i,
                reason: format!("model has {k} nodes"),
            });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidIndex {
                index: i,
                reason: "duplicate index".into(),
            });
        }
    }
    if idx.is_empty() {
        return Ok(ConditionalState::prior(model));
    }
    let unknown: Vec<usize> = (0..k).filter(|&i| !seen[i]).collect();
    let (mean, cov) = (&model.mean, &model.cov);

    let r_z = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
    let chol = factor_with_jitter(&r_z).ok_or_else(|| Error::Singular {
        index: first_singular(&r_z, idx),
    })?;

    let r_zu = DMatrix::from_fn(idx.len(), unknown.len(), |a, b| cov[(idx[a], unknown[b])]);
    let innov = DVector::from_fn(idx.len(), |a, _| vals[a] - mean[idx[a]]);
    // gain = R_z^{-1} R_{z,u}
    let gain = chol.solve(&r_zu);
    let mut cond_mean = DVector::from_fn(unknown.len(), |b, _| mean[unknown[b]]);
    cond_mean += gain.tr_mul(&innov);
    let mut cond_cov = DMatrix::from_fn(unknown.len(), unknown.len(), |a, b| {
        cov[(unknown[a], unknown[b])]
    });
    cond_cov -= r_zu.tr_mul(&gain);
    let cond_cov = (&cond_cov + cond_cov.transpose()) * 0.5;

    Ok(ConditionalState {
        known_idx: idx.to_vec(),
        known_vals: vals.to_vec(),
        unknown_idx: unknown,
        cond_mean,
        cond_cov,
    })
}

fn first_singular(r_z: &DMatrix<f64>, idx: &[usize]) -> usize {
    for n in 1..=idx.len() {
        let lead = r_z.view((0, 0), (n, n)).clone_owned();
        if factor_with_jitter(&lead).is_none() {
            return idx[n - 1];
        }
    }
    idx[idx.len() - 1]
}

/// First-order autoregressive model: `mean_k = cos(pi k / 5)`,
/// `cov[k, k'] = rho^|k - k'|` (zero-based `k`).
pub fn build_ar1_model(k: usize, rho: f64) -> Result<GaussianModel> {
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Config(format!("rho must lie in (-1, 1), got {rho}")));
    }
    let mean = DVector::from_fn(k, |i, _| (PI * i as f64 / 5.0).cos());
    let cov = DMatrix::from_fn(k, k, |i, j| rho.powi(i.abs_diff(j) as i32));
    GaussianModel::new(mean, cov)
}

/// Orthonormal DCT-II matrix, laid out like MATLAB's `dctmtx(k)`:
/// `D[n, j] = c_n cos(pi (2j + 1) n / (2k))` with `c_0 = sqrt(1/k)` and
/// `c_n = sqrt(2/k)` otherwise.
pub fn dct_matrix(k: usize) -> DMatrix<f64> {
    let kf = k as f64;
    DMatrix::from_fn(k, k, |n, j| {
        let c = if n == 0 {
            (1.0 / kf).sqrt()
        } else {
            (2.0 / kf).sqrt()
        };
        c * (PI * (2 * j + 1) as f64 * n as f64 / (2.0 * kf)).cos()
    })
}

/// Number of models in the candidate family.
pub const FAMILY_SIZE: usize = 5;

/// The five candidate models used for model selection.
///
/// Model 0 is the AR(1) model with `rho = 0.95`. Models 1..=4 have means
/// `sin`, `-cos`, `-sin` and zero of `pi k / 5` and covariances
/// `c (sum_j psi_j psi_j^T + noise I)` over `j` DCT columns; model `m`
/// (zero-based) uses columns `m - 1 .. m - 1 + j` (zero-based), which
/// is columns `m .. m + j - 1` in one-based terms. `c = K / (j + noise K)`
/// makes every trace equal `K`.
pub fn build_model_family(k: usize, j: usize, noise: f64) -> Result<Vec<GaussianModel>> {
    if j == 0 {
        return Err(Error::Config("J must be at least 1".into()));
    }
    if k < j + FAMILY_SIZE - 1 {
        return Err(Error::Config(format!(
            "K = {k} is too small for J = {j} (need K >= J + {})",
            FAMILY_SIZE - 1
        )));
    }
    if !(noise > 0.0) {
        return Err(Error::Config(format!(
            "noise floor must be positive, got {noise}"
        )));
    }
    let psi = dct_matrix(k);
    let scale = k as f64 / (j as f64 + noise * k as f64);
    let angle = |i: usize| PI * i as f64 / 5.0;
    let mean_fns: [fn(f64) -> f64; 4] = [|a| a.sin(), |a| -a.cos(), |a| -a.sin(), |_| 0.0];

    let mut family = Vec::with_capacity(FAMILY_SIZE);
    family.push(build_ar1_model(k, 0.95)?);
    for (m, mean_fn) in (1..FAMILY_SIZE).zip(mean_fns) {
        let cols = psi.columns(m - 1, j);
        let mut cov = cols * cols.transpose();
        for i in 0..k {
            cov[(i, i)] += noise;
        }
        cov *= scale;
        let cov = (&cov + cov.transpose()) * 0.5;
        let mean = DVector::from_fn(k, |i, _| mean_fn(angle(i)));
        family.push(GaussianModel::new(mean, cov)?);
    }
    Ok(family)
}
