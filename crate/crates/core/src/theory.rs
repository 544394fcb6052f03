//! Closed-form mean and mean-square analysis.
//!
//! With `B̂_n = B_n ⊗ I_L` the random combination matrix of one iteration,
//! `A = I − MR` and column-major vectorization, the weighted variance
//! recursion reads
//!
//! ```text
//! E‖w̃_n‖²_s = E‖w̃_{n-1}‖²_{F D s} + vec(H)ᵀ D s
//! F = A ⊗ A,   D = E[B̂ᵀ ⊗ B̂ᵀ],   H = blockdiag{μ_k² ζ_k² R_k}
//! ```
//!
//! `D` is assembled from the scalar moments `E[b_{i,j} b_{k,l}]` of the
//! entries of `B_n`. Up to [`DENSE_LIMIT`] stacked unknowns the operators
//! are materialized and solved directly; above it they are applied
//! matrix-free through their Kronecker structure.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CombinationWeights, Topology};
use crate::linalg::{self, kron};
use crate::model::NetworkModel;
use crate::selection::SelectionLaw;

/// Largest `L·K` for which `F` and `D` are materialized.
pub const DENSE_LIMIT: usize = 32;

/// One nonzero `E[b_{i,j} b_{k,l}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMoment {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub value: f64,
}

fn closed(t: &Topology, i: usize) -> impl Iterator<Item = usize> + '_ {
    std::iter::once(i).chain(t.neighbors(i).iter().copied())
}

/// `E[b_{i,j}]`: the mean combination matrix.
///
/// Diagonal `1 − Σ_{l∈N_i} E[a_{i,l}] c_{i,l}`, which is `1 − p_i + p_i c_{i,i}`
/// in RC mode; off-diagonal `E[a_{i,j}] c_{i,j}` on edges.
pub fn build_bbar(c: &CombinationWeights, t: &Topology, law: &SelectionLaw) -> Result<DMatrix<f64>> {
    law.check(t)?;
    let k = t.node_count();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        if let Some(p) = law.node_probability(t, i) {
            b[(i, i)] = 1.0 - p + p * c.get(i, i);
        } else {
            b[(i, i)] = 1.0;
        }
        for &j in t.neighbors(i) {
            let pij = law.first_moment(t, i, j)?;
            b[(i, j)] = pij * c.get(i, j);
            if law.node_probability(t, i).is_none() {
                b[(i, i)] -= pij * c.get(i, j);
            }
        }
    }
    Ok(b)
}

/// `E[b_{i,j} b_{k,l}]` by the five-case table.
pub fn pair_moment(
    c: &CombinationWeights,
    t: &Topology,
    law: &SelectionLaw,
    (i, j): (usize, usize),
    (k, l): (usize, usize),
) -> Result<f64> {
    let ij_edge = t.has_edge(i, j);
    let kl_edge = t.has_edge(k, l);
    // Σ_{r∈N_i} c_{i,r} E[a_{i,r}], i.e. p_i (1 − c_{i,i}) in RC mode.
    let mean_off = |i: usize| -> Result<f64> {
        t.neighbors(i)
            .iter()
            .map(|&r| Ok(c.get(i, r) * law.first_moment(t, i, r)?))
            .sum()
    };
    if i == j && k == l {
        let mut cross = 0.0;
        for &r in t.neighbors(i) {
            for &u in t.neighbors(k) {
                cross += c.get(i, r) * c.get(k, u) * law.second_moment(t, i, r, k, u)?;
            }
        }
        Ok(1.0 - mean_off(i)? - mean_off(k)? + cross)
    } else if i == j && kl_edge {
        let ckl = c.get(k, l);
        let mut s = 0.0;
        for &r in t.neighbors(i) {
            s += c.get(i, r) * law.second_moment(t, i, r, k, l)?;
        }
        Ok(law.first_moment(t, k, l)? * ckl - ckl * s)
    } else if ij_edge && k == l {
        let cij = c.get(i, j);
        let mut s = 0.0;
        for &r in t.neighbors(k) {
            s += c.get(k, r) * law.second_moment(t, i, j, k, r)?;
        }
        Ok(law.first_moment(t, i, j)? * cij - cij * s)
    } else if ij_edge && kl_edge {
        Ok(c.get(i, j) * c.get(k, l) * law.second_moment(t, i, j, k, l)?)
    } else {
        Ok(0.0)
    }
}

/// Every nonzero pair moment, ordered by `(i, j, k, l)`.
pub fn pair_moments(c: &CombinationWeights, t: &Topology, law: &SelectionLaw) -> Result<Vec<PairMoment>> {
    law.check(t)?;
    let n = t.node_count();
    let mut out = Vec::new();
    for i in 0..n {
        for j in closed(t, i) {
            for k in 0..n {
                for l in closed(t, k) {
                    let value = pair_moment(c, t, law, (i, j), (k, l))?;
                    if value != 0.0 {
                        out.push(PairMoment { i, j, k, l, value });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense `D = E[B̂ᵀ ⊗ B̂ᵀ]` from the pair moments.
///
/// With `B̂[(i,α),(j,α)] = b_{i,j}` and `n = LK`,
/// `D[p n + q, r n + s] = E[B̂[r,p] B̂[s,q]]`.
pub fn build_d(c: &CombinationWeights, t: &Topology, law: &SelectionLaw, dim: usize) -> Result<DMatrix<f64>> {
    let n = t.node_count() * dim;
    if n > DENSE_LIMIT {
        return Err(Error::DenseTooLarge { size: n * n });
    }
    Ok(dense_d(&pair_moments(c, t, law)?, n, dim))
}

fn dense_d(moments: &[PairMoment], n: usize, dim: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n * n, n * n);
    for m in moments {
        for a in 0..dim {
            for b in 0..dim {
                let r = m.i * dim + a;
                let p = m.j * dim + a;
                let s = m.k * dim + b;
                let q = m.l * dim + b;
                d[(p * n + q, r * n + s)] += m.value;
            }
        }
    }
    d
}

/// Exhaustive reference for `D`: enumerates every joint selection outcome,
/// forms `B_n` entrywise, and averages `B̂ᵀ ⊗ B̂ᵀ` with exact probabilities.
pub fn build_d_oracle(
    c: &CombinationWeights,
    t: &Topology,
    law: &SelectionLaw,
    dim: usize,
) -> Result<DMatrix<f64>> {
    const LIMIT: f64 = 1e6;
    law.check(t)?;
    let outcomes = law.outcome_count(t);
    if outcomes > LIMIT {
        return Err(Error::EnumerationBudget { outcomes, limit: LIMIT });
    }
    let k = t.node_count();
    let n = k * dim;
    let eye = DMatrix::identity(dim, dim);
    let mut acc = DMatrix::zeros(n * n, n * n);

    // Per node: list of (bits over neighbors, probability).
    let per_node: Vec<Vec<(Vec<bool>, f64)>> = (0..k)
        .map(|node| node_outcomes(t, law, node))
        .collect();
    let mut idx = vec![0usize; k];
    loop {
        let mut prob = 1.0;
        let mut b = DMatrix::zeros(k, k);
        for node in 0..k {
            let (bits, p) = &per_node[node][idx[node]];
            prob *= p;
            let mut diag = 1.0;
            for (&l, &a) in t.neighbors(node).iter().zip(bits) {
                let v = if a { c.get(node, l) } else { 0.0 };
                b[(node, l)] = v;
                diag -= v;
            }
            b[(node, node)] = diag;
        }
        if prob > 0.0 {
            let bt = kron(&b, &eye).transpose();
            acc += kron(&bt, &bt) * prob;
        }
        // Odometer over the per-node outcome lists.
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(acc);
            }
            idx[pos] += 1;
            if idx[pos] < per_node[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn node_outcomes(t: &Topology, law: &SelectionLaw, node: usize) -> Vec<(Vec<bool>, f64)> {
    let d = t.degree(node);
    match law {
        SelectionLaw::Rc { budgets } => {
            let m = budgets[node];
            let subsets: Vec<Vec<bool>> = (0u64..(1 << d))
                .filter(|mask| mask.count_ones() as usize == m)
                .map(|mask| (0..d).map(|i| mask >> i & 1 == 1).collect())
                .collect();
            let p = 1.0 / subsets.len() as f64;
            subsets.into_iter().map(|s| (s, p)).collect()
        }
        SelectionLaw::Pdlms { probs } => (0u64..(1 << d))
            .map(|mask| {
                let bits: Vec<bool> = (0..d).map(|i| mask >> i & 1 == 1).collect();
                let p = bits
                    .iter()
                    .zip(&probs[node])
                    .map(|(&a, &q)| if a { q } else { 1.0 - q })
                    .product();
                (bits, p)
            })
            .collect(),
    }
}

/// `(I − MR) ⊗ (I − MR)`, the small-step-size approximation of `F`.
pub fn build_f(transition: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = transition.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::DenseTooLarge { size: n * n });
    }
    Ok(kron(transition, transition))
}

/// `2 / λ_max(R)`.
pub fn step_size_bound(covariance: &DMatrix<f64>) -> Result<f64> {
    if !covariance.is_square() || covariance.nrows() == 0 || !linalg::is_symmetric(covariance, 1e-12) {
        return Err(Error::NotPositiveDefinite);
    }
    let ev = linalg::symmetric_eigenvalues(covariance);
    match ev.last() {
        Some(&max) if ev[0] > 0.0 && max.is_finite() => Ok(2.0 / max),
        _ => Err(Error::NotPositiveDefinite),
    }
}

/// How the mean-square quantities are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Dense up to [`DENSE_LIMIT`], structured above.
    #[default]
    Auto,
    Dense,
    Structured,
}

/// Tolerances for the structured (matrix-free) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub strategy: Strategy,
    /// Relative change at which the fixed-point solve stops.
    pub solve_tol: f64,
    pub solve_max_iter: usize,
    pub power_tol: f64,
    pub power_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            solve_tol: 1e-12,
            solve_max_iter: 2_000_000,
            power_tol: 1e-10,
            power_max_iter: 500_000,
        }
    }
}

/// Stacked analysis operators of one configuration.
#[derive(Debug, Clone)]
pub struct TheoryOperators {
    node_count: usize,
    dim: usize,
    /// `blockdiag{μ_k I_L}`.
    pub step: DMatrix<f64>,
    /// `blockdiag{R_k}`.
    pub covariance: DMatrix<f64>,
    /// `E[B_n]`.
    pub bbar: DMatrix<f64>,
    /// `blockdiag{μ_k² ζ_k² R_k}`.
    pub noise: DMatrix<f64>,
    /// `I − MR`.
    pub transition: DMatrix<f64>,
    pub moments: Vec<PairMoment>,
    step_sizes: Vec<f64>,
    covariances: Vec<DMatrix<f64>>,
    options: SolverOptions,
    dense: Option<DenseOps>,
}

#[derive(Debug, Clone)]
struct DenseOps {
    d: DMatrix<f64>,
    fd: DMatrix<f64>,
}

impl TheoryOperators {
    pub fn new(model: &NetworkModel, law: &SelectionLaw) -> Result<Self> {
        Self::with_options(model, law, SolverOptions::default())
    }

    pub fn with_options(model: &NetworkModel, law: &SelectionLaw, options: SolverOptions) -> Result<Self> {
        model.validate()?;
        let t = &model.topology;
        let k = model.node_count();
        let l = model.dimension();
        let n = k * l;
        let mut step = DMatrix::zeros(n, n);
        let mut covariance = DMatrix::zeros(n, n);
        let mut noise = DMatrix::zeros(n, n);
        for (node, p) in model.profiles.iter().enumerate() {
            let o = node * l;
            for a in 0..l {
                step[(o + a, o + a)] = p.step_size;
            }
            covariance.view_mut((o, o), (l, l)).copy_from(&p.covariance);
            noise
                .view_mut((o, o), (l, l))
                .copy_from(&(&p.covariance * (p.step_size * p.step_size * p.noise_variance)));
        }
        let transition = DMatrix::identity(n, n) - &step * &covariance;
        let bbar = build_bbar(&model.weights, t, law)?;
        let moments = pair_moments(&model.weights, t, law)?;
        let dense = match (options.strategy, n <= DENSE_LIMIT) {
            (Strategy::Dense, false) => return Err(Error::DenseTooLarge { size: n * n }),
            (Strategy::Dense, true) | (Strategy::Auto, true) => {
                let d = dense_d(&moments, n, l);
                let fd = kron(&transition, &transition) * &d;
                Some(DenseOps { d, fd })
            }
            _ => None,
        };
        Ok(Self {
            node_count: k,
            dim: l,
            step,
            covariance,
            bbar,
            noise,
            transition,
            moments,
            step_sizes: model.profiles.iter().map(|p| p.step_size).collect(),
            covariances: model.profiles.iter().map(|p| p.covariance.clone()).collect(),
            options,
            dense,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L·K`.
    pub fn stacked_len(&self) -> usize {
        self.node_count * self.dim
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// Materialized `D`, if this instance is dense.
    pub fn d_matrix(&self) -> Option<&DMatrix<f64>> {
        self.dense.as_ref().map(|d| &d.d)
    }

    pub fn fd_matrix(&self) -> Option<&DMatrix<f64>> {
        self.dense.as_ref().map(|d| &d.fd)
    }

    /// `F` materialized on demand.
    pub fn build_f(&self) -> Result<DMatrix<f64>> {
        build_f(&self.transition)
    }

    /// `D s = vec(E[B̂ᵀ S B̂])`.
    pub fn apply_d(&self, s: &[f64], out: &mut [f64]) {
        let (n, l) = (self.stacked_len(), self.dim);
        out.fill(0.0);
        for m in &self.moments {
            for b in 0..l {
                for a in 0..l {
                    // out block (j, l) += v · S block (i, k)
                    out[(m.j * l + a) + (m.l * l + b) * n] += m.value * s[(m.i * l + a) + (m.k * l + b) * n];
                }
            }
        }
    }

    /// `Dᵀ y = vec(E[B̂ Y B̂ᵀ])`.
    pub fn apply_dt(&self, y: &[f64], out: &mut [f64]) {
        let (n, l) = (self.stacked_len(), self.dim);
        out.fill(0.0);
        for m in &self.moments {
            for b in 0..l {
                for a in 0..l {
                    out[(m.i * l + a) + (m.k * l + b) * n] += m.value * y[(m.j * l + a) + (m.l * l + b) * n];
                }
            }
        }
    }

    /// `F s = vec(A S Aᵀ)`.
    pub fn apply_f(&self, s: &[f64], out: &mut [f64]) {
        let n = self.stacked_len();
        let sm = DMatrix::from_column_slice(n, n, s);
        let r = &self.transition * sm * self.transition.transpose();
        out.copy_from_slice(r.as_slice());
    }

    /// `Fᵀ y = vec(Aᵀ Y A)`.
    pub fn apply_ft(&self, y: &[f64], out: &mut [f64]) {
        let n = self.stacked_len();
        let ym = DMatrix::from_column_slice(n, n, y);
        let r = self.transition.transpose() * ym * &self.transition;
        out.copy_from_slice(r.as_slice());
    }

    /// `F D s`.
    pub fn apply_fd(&self, s: &[f64], out: &mut [f64]) {
        if let Some(dense) = &self.dense {
            let r = &dense.fd * DVector::from_column_slice(s);
            out.copy_from_slice(r.as_slice());
        } else {
            let mut tmp = vec![0.0; s.len()];
            self.apply_d(s, &mut tmp);
            self.apply_f(&tmp, out);
        }
    }

    /// `(F D)ᵀ y = Dᵀ Fᵀ y`.
    pub fn apply_fd_t(&self, y: &[f64], out: &mut [f64]) {
        if let Some(dense) = &self.dense {
            let r = dense.fd.tr_mul(&DVector::from_column_slice(y));
            out.copy_from_slice(r.as_slice());
        } else {
            let mut tmp = vec![0.0; y.len()];
            self.apply_ft(y, &mut tmp);
            self.apply_dt(&tmp, out);
        }
    }

    /// `2 / λ_max(R_k)` per node.
    pub fn step_size_bounds(&self) -> Result<Vec<f64>> {
        self.covariances.iter().map(step_size_bound).collect()
    }

    /// Spectral radii governing the mean recursion.
    pub fn mean_stability_report(&self) -> Result<MeanStabilityReport> {
        let bounds = self.step_size_bounds()?;
        let mut rho_transition: f64 = 0.0;
        for (mu, r) in self.step_sizes.iter().zip(&self.covariances) {
            for ev in linalg::symmetric_eigenvalues(r) {
                rho_transition = rho_transition.max((1.0 - mu * ev).abs());
            }
        }
        let within: Vec<bool> = self
            .step_sizes
            .iter()
            .zip(&bounds)
            .map(|(&mu, &b)| mu > 0.0 && mu < b)
            .collect();
        let rho_mean = linalg::spectral_radius(&self.mean_transition());
        Ok(MeanStabilityReport {
            rho_transition,
            rho_mean,
            stable: within.iter().all(|&w| w),
            step_size_bounds: bounds,
            within_bound: within,
        })
    }

    /// `(B̄ ⊗ I_L)(I − MR)`.
    pub fn mean_transition(&self) -> DMatrix<f64> {
        kron(&self.bbar, &DMatrix::identity(self.dim, self.dim)) * &self.transition
    }

    /// Mean error trajectory `E[w̃_0], ..., E[w̃_{n_steps}]`.
    pub fn evolve_mean(&self, initial: &DVector<f64>, n_steps: usize) -> Result<Vec<DVector<f64>>> {
        if initial.len() != self.stacked_len() {
            return Err(Error::DimensionMismatch {
                expected: self.stacked_len(),
                actual: initial.len(),
            });
        }
        let p = self.mean_transition();
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(initial.clone());
        for i in 0..n_steps {
            let next = &p * &out[i];
            out.push(next);
        }
        Ok(out)
    }

    /// `ρ(F D)`.
    pub fn rho_fd(&self) -> Result<f64> {
        match &self.dense {
            Some(dense) => Ok(linalg::spectral_radius(&dense.fd)),
            None => {
                let n2 = self.stacked_len().pow(2);
                linalg::power_iteration(
                    n2,
                    |x, y| self.apply_fd(x, y),
                    self.options.power_tol,
                    self.options.power_max_iter,
                )
            }
        }
    }

    /// `vec(H)ᵀ D` as a column vector, i.e. `Dᵀ vec(H)`.
    fn noise_row(&self) -> Vec<f64> {
        let n2 = self.stacked_len().pow(2);
        let mut out = vec![0.0; n2];
        self.apply_dt(self.noise.as_slice(), &mut out);
        out
    }

    /// Steady-state MSD of every node and of the network.
    pub fn steady_state(&self) -> Result<SteadyState> {
        let rho_fd = self.rho_fd()?;
        if !(rho_fd < 1.0) {
            return Err(Error::MeanSquareUnstable { rho: rho_fd });
        }
        let (k, l) = (self.node_count, self.dim);
        let n = self.stacked_len();
        let r = self.noise_row();
        let node = if let Some(dense) = &self.dense {
            // Forward solves (I − FD) x = σ_k with one factorization.
            let g = DMatrix::identity(n * n, n * n) - &dense.fd;
            let lu = g.lu();
            let mut rhs = DMatrix::zeros(n * n, k);
            for node in 0..k {
                for a in 0..l {
                    let idx = node * l + a;
                    rhs[(idx + idx * n, node)] = 1.0;
                }
            }
            let x = lu.solve(&rhs).ok_or(Error::MeanSquareUnstable { rho: rho_fd })?;
            (0..k).map(|c| linalg::dot(&r, x.column(c).as_slice())).collect()
        } else {
            // Adjoint fixed point y = Dᵀ vec(H) + (FD)ᵀ y; y = vec of the
            // steady-state error covariance, whose diagonal blocks give η_k.
            let y = self.fixed_point(&r, |v, o| self.apply_fd_t(v, o))?;
            (0..k)
                .map(|node| (0..l).map(|a| y[(node * l + a) * (n + 1)]).sum())
                .collect::<Vec<f64>>()
        };
        // vec(I) = Σ_k σ_k, so the network value is the node average.
        let network = node.iter().sum::<f64>() / k as f64;
        Ok(SteadyState { node, network, rho_fd })
    }

    /// `η_k` or `η`.
    pub fn steady_state_msd(&self, target: MsdTarget) -> Result<f64> {
        let ss = self.steady_state()?;
        Ok(match target {
            MsdTarget::Node(k) => *ss.node.get(k).ok_or(Error::DimensionMismatch {
                expected: self.node_count,
                actual: k,
            })?,
            MsdTarget::Network => ss.network,
        })
    }

    fn fixed_point(&self, b: &[f64], apply: impl Fn(&[f64], &mut [f64])) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        let mut next = vec![0.0; b.len()];
        let mut change = f64::INFINITY;
        for _ in 0..self.options.solve_max_iter {
            apply(&x, &mut next);
            let mut diff = 0.0;
            let mut size = 0.0;
            for ((nx, bi), xi) in next.iter_mut().zip(b).zip(&x) {
                *nx += bi;
                diff += (*nx - xi) * (*nx - xi);
                size += *nx * *nx;
            }
            std::mem::swap(&mut x, &mut next);
            if !size.is_finite() {
                break;
            }
            change = if size == 0.0 { 0.0 } else { (diff / size).sqrt() };
            if change <= self.options.solve_tol {
                return Ok(x);
            }
        }
        Err(Error::NoConvergence {
            iterations: self.options.solve_max_iter,
            residual: change,
        })
    }

    /// Predicted network MSD `E[(1/K)‖w̃_n‖²]` for `n = 0..=n_steps` from a
    /// deterministic initial error.
    ///
    /// Runs `s_i = (FD)^i vec(I)/K` forward: the prediction at step `n` is
    /// `‖w̃_0‖²_{s_n} + Σ_{i<n} vec(H)ᵀ D s_i`.
    pub fn predict_transient(&self, initial_error: &[f64], n_steps: usize) -> Result<Vec<f64>> {
        let n = self.stacked_len();
        if initial_error.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: initial_error.len(),
            });
        }
        let rho_fd = self.rho_fd()?;
        if !(rho_fd < 1.0) {
            return Err(Error::MeanSquareUnstable { rho: rho_fd });
        }
        let r = self.noise_row();
        let mut s = linalg::vec_of(&DMatrix::identity(n, n)).as_slice().to_vec();
        let inv_k = 1.0 / self.node_count as f64;
        s.iter_mut().for_each(|v| *v *= inv_k);
        let mut next = vec![0.0; s.len()];
        let mut noise_sum = 0.0;
        let mut out = Vec::with_capacity(n_steps + 1);
        for step in 0..=n_steps {
            out.push(VarianceWeight::new(s.clone()).weighted_norm(initial_error) + noise_sum);
            if step == n_steps {
                break;
            }
            noise_sum += linalg::dot(&r, &s);
            self.apply_fd(&s, &mut next);
            std::mem::swap(&mut s, &mut next);
        }
        Ok(out)
    }
}

/// Which steady-state MSD to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsdTarget {
    Node(usize),
    Network,
}

/// Vectorized weighting matrix `s = vec(S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceWeight(pub Vec<f64>);

impl VarianceWeight {
    pub fn new(s: Vec<f64>) -> Self {
        Self(s)
    }

    pub fn from_matrix(s: &DMatrix<f64>) -> Self {
        Self(s.as_slice().to_vec())
    }

    /// `wᵀ S w`.
    pub fn weighted_norm(&self, w: &[f64]) -> f64 {
        let n = w.len();
        debug_assert_eq!(self.0.len(), n * n);
        let mut acc = 0.0;
        for c in 0..n {
            let col = &self.0[c * n..(c + 1) * n];
            acc += w[c] * linalg::dot(col, w);
        }
        acc
    }
}

/// Mean-stability summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStabilityReport {
    /// `ρ(I − MR)`.
    pub rho_transition: f64,
    /// `ρ((B̄ ⊗ I_L)(I − MR))`.
    pub rho_mean: f64,
    pub step_size_bounds: Vec<f64>,
    pub within_bound: Vec<bool>,
    pub stable: bool,
}

/// Steady-state MSD values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub node: Vec<f64>,
    pub network: f64,
    pub rho_fd: f64,
}

/// `10 log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{relative_degree_weights, uniform_weights};
    use crate::model::NodeProfile;

    fn scalar_model(mu: f64, r: f64, zeta2: f64) -> NetworkModel {
        let t = Topology::from_edges(1, &[]).unwrap();
        let c = uniform_weights(&t);
        NetworkModel::new(
            t,
            c,
            DVector::from_element(1, 1.0),
            vec![NodeProfile {
                step_size: mu,
                covariance: DMatrix::from_element(1, 1, r),
                noise_variance: zeta2,
                budget: 0,
            }],
        )
        .unwrap()
    }

    fn path3_model(budgets: Vec<usize>, dim: usize) -> (NetworkModel, SelectionLaw) {
        let t = Topology::path(3);
        let c = relative_degree_weights(&t);
        let profiles = (0..3)
            .map(|k| NodeProfile {
                step_size: 0.05,
                covariance: DMatrix::identity(dim, dim) * (1.0 + 0.5 * k as f64),
                noise_variance: 0.01 * (k + 1) as f64,
                budget: budgets[k],
            })
            .collect();
        let m = NetworkModel::new(t.clone(), c, DVector::from_element(dim, 0.5), profiles).unwrap();
        let law = SelectionLaw::rc(&t, budgets).unwrap();
        (m, law)
    }

    #[test]
    fn bbar_examples() {
        let t = Topology::path(3);
        let c = relative_degree_weights(&t);
        assert_eq!(build_bbar(&c, &t, &SelectionLaw::full(&t)).unwrap(), *c.matrix());
        assert_eq!(build_bbar(&c, &t, &SelectionLaw::none(&t)).unwrap(), DMatrix::identity(3, 3));
        let b = build_bbar(&c, &t, &SelectionLaw::rc(&t, vec![1, 1, 1]).unwrap()).unwrap();
        let expect = [1.0 / 7.0, 5.0 / 7.0, 1.0 / 7.0];
        for j in 0..3 {
            assert!((b[(1, j)] - expect[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn step_size_bound_examples() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert!((step_size_bound(&r).unwrap() - 1.0).abs() < 1e-15);
        assert!((step_size_bound(&DMatrix::identity(3, 3)).unwrap() - 2.0).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(step_size_bound(&bad).is_err());
    }

    #[test]
    fn step_size_bound_matches_independent_eigensolve() {
        let r = crate::model::make_covariance(4, 3.0, 10.0, 42).unwrap();
        // Power iteration on the SPD matrix as the independent route.
        let lam = linalg::power_iteration(4, |x, y| {
            let v = &r * DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        }, 1e-15, 100_000)
        .unwrap();
        assert!((step_size_bound(&r).unwrap() - 2.0 / lam).abs() < 1e-10);
    }

    #[test]
    fn scalar_mean_stability() {
        let ops = TheoryOperators::new(&scalar_model(0.5, 1.0, 0.1), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let rep = ops.mean_stability_report().unwrap();
        assert!(rep.stable);
        assert!((rep.rho_transition - 0.5).abs() < 1e-15);

        let ops = TheoryOperators::new(&scalar_model(2.5, 1.0, 0.1), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let rep = ops.mean_stability_report().unwrap();
        assert!(!rep.stable);
        assert!((rep.rho_transition - 1.5).abs() < 1e-15);
    }

    #[test]
    fn scalar_evolve_mean() {
        let (mu, r) = (0.3, 1.7);
        let ops = TheoryOperators::new(&scalar_model(mu, r, 0.1), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let traj = ops.evolve_mean(&DVector::from_element(1, 2.0), 50).unwrap();
        for (n, v) in traj.iter().enumerate() {
            let expect = (1.0 - mu * r).powi(n as i32) * 2.0;
            assert!((v[0] - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
        let zero = ops.evolve_mean(&DVector::zeros(1), 10).unwrap();
        assert!(zero.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn scalar_f_and_h() {
        let (mu, r, z) = (0.2, 1.5, 0.3);
        let ops = TheoryOperators::new(&scalar_model(mu, r, z), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let f = ops.build_f().unwrap();
        assert!((f[(0, 0)] - (1.0 - mu * r).powi(2)).abs() < 1e-15);
        assert!((ops.noise[(0, 0)] - mu * mu * z * r).abs() < 1e-15);
    }

    #[test]
    fn scalar_steady_state_closed_form() {
        let (mu, r, z) = (0.01, 1.0, 0.1);
        let ops = TheoryOperators::new(&scalar_model(mu, r, z), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let expect = mu * z / (2.0 - mu * r);
        let got = ops.steady_state_msd(MsdTarget::Network).unwrap();
        assert!(((got - expect) / expect).abs() < 1e-12, "{got} vs {expect}");
        assert!((got - 5.0251e-4).abs() < 1e-8);
    }

    #[test]
    fn scalar_transient_recursion() {
        let (mu, r, z) = (0.05, 1.3, 0.2);
        let ops = TheoryOperators::new(&scalar_model(mu, r, z), &SelectionLaw::Rc { budgets: vec![0] }).unwrap();
        let w0 = [-0.8];
        let pred = ops.predict_transient(&w0, 300).unwrap();
        let mut e = 0.64;
        for p in &pred {
            assert!((p - e).abs() <= 1e-12 * e);
            e = (1.0 - mu * r).powi(2) * e + mu * mu * z * r;
        }
    }

    #[test]
    fn zero_noise_means_zero_msd() {
        let t = Topology::path(3);
        let (mut m, law) = path3_model(vec![1, 1, 1], 2);
        for p in &mut m.profiles {
            p.noise_variance = 0.0;
        }
        let ops = TheoryOperators::new(&m, &law).unwrap();
        let ss = ops.steady_state().unwrap();
        assert_eq!(ss.network, 0.0);
        assert!(ss.node.iter().all(|&v| v == 0.0));
        let _ = t;
    }

    #[test]
    fn d_special_cases() {
        let t = Topology::path(3);
        let c = relative_degree_weights(&t);
        for dim in [1, 2] {
            let d_full = build_d(&c, &t, &SelectionLaw::full(&t), dim).unwrap();
            let bt = kron(c.matrix(), &DMatrix::identity(dim, dim)).transpose();
            assert!((d_full - kron(&bt, &bt)).amax() < 1e-15);
            let d_none = build_d(&c, &t, &SelectionLaw::none(&t), dim).unwrap();
            let n = 3 * dim;
            assert!((d_none - DMatrix::identity(n * n, n * n)).amax() < 1e-15);
        }
    }

    #[test]
    fn d_matches_oracle_on_path() {
        let t = Topology::path(3);
        let c = relative_degree_weights(&t);
        let law = SelectionLaw::rc(&t, vec![1, 1, 1]).unwrap();
        let d = build_d(&c, &t, &law, 1).unwrap();
        let o = build_d_oracle(&c, &t, &law, 1).unwrap();
        assert!((d - o).amax() < 1e-14);
    }

    #[test]
    fn oracle_pair_frequency_on_star() {
        // Hub d = 3, m = 2. With unit weights on the links, the oracle's
        // E[b_{0,1} b_{0,2}] divided by c² recovers the pair probability 1/3.
        let t = Topology::star(4);
        let c = uniform_weights(&t);
        let law = SelectionLaw::rc(&t, vec![2, 1, 1, 1]).unwrap();
        let o = build_d_oracle(&c, &t, &law, 1).unwrap();
        // D[p n + q, r n + s] = E[b_{r,p} b_{s,q}] for L = 1.
        let n = 4;
        let (r, p, s, q) = (0, 1, 0, 2);
        let pair = o[(p * n + q, r * n + s)] / (c.get(0, 1) * c.get(0, 2));
        assert!((pair - 1.0 / 3.0).abs() < 1e-14);
        for col in 0..n * n {
            assert!((o.column(col).sum() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn oracle_enumeration_budget() {
        let t = Topology::from_edges(
            8,
            &(0..8).flat_map(|a| ((a + 1)..8).map(move |b| (a, b))).collect::<Vec<_>>(),
        )
        .unwrap();
        let law = SelectionLaw::rc(&t, vec![3; 8]).unwrap();
        let c = uniform_weights(&t);
        assert!(matches!(build_d_oracle(&c, &t, &law, 1), Err(Error::EnumerationBudget { .. })));
    }

    #[test]
    fn dense_and_structured_agree() {
        let (m, law) = path3_model(vec![1, 2, 1], 2);
        let dense = TheoryOperators::new(&m, &law).unwrap();
        let opts = SolverOptions {
            strategy: Strategy::Structured,
            ..SolverOptions::default()
        };
        let structured = TheoryOperators::with_options(&m, &law, opts).unwrap();
        assert!(dense.is_dense() && !structured.is_dense());

        let a = dense.steady_state().unwrap();
        let b = structured.steady_state().unwrap();
        assert!((a.rho_fd - b.rho_fd).abs() < 1e-8);
        for (x, y) in a.node.iter().zip(&b.node) {
            assert!(((x - y) / x).abs() < 1e-9, "{x} vs {y}");
        }
        let w0 = vec![-0.5; 6];
        let pa = dense.predict_transient(&w0, 200).unwrap();
        let pb = structured.predict_transient(&w0, 200).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!(((x - y) / x).abs() < 1e-12);
        }
    }

    #[test]
    fn structured_apply_matches_dense_matrices() {
        let (m, law) = path3_model(vec![1, 1, 1], 2);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        let n2 = ops.stacked_len().pow(2);
        let s: Vec<f64> = (0..n2).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let d = ops.d_matrix().unwrap();
        let f = ops.build_f().unwrap();
        let sv = DVector::from_column_slice(&s);
        let mut out = vec![0.0; n2];
        ops.apply_d(&s, &mut out);
        assert!((DVector::from_column_slice(&out) - d * &sv).amax() < 1e-12);
        ops.apply_dt(&s, &mut out);
        assert!((DVector::from_column_slice(&out) - d.tr_mul(&sv)).amax() < 1e-12);
        ops.apply_f(&s, &mut out);
        assert!((DVector::from_column_slice(&out) - &f * &sv).amax() < 1e-12);
        ops.apply_ft(&s, &mut out);
        assert!((DVector::from_column_slice(&out) - f.tr_mul(&sv)).amax() < 1e-12);
    }

    #[test]
    fn f_spectrum_is_pairwise_products() {
        let (m, law) = path3_model(vec![1, 1, 1], 2);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        let f = ops.build_f().unwrap();
        let a = &ops.transition;
        // A is symmetric here (block-diagonal scaled covariances).
        let ea = linalg::symmetric_eigenvalues(a);
        let mut expect: Vec<f64> = ea.iter().flat_map(|x| ea.iter().map(move |y| x * y)).collect();
        expect.sort_by(f64::total_cmp);
        let mut got = linalg::symmetric_eigenvalues(&f);
        got.sort_by(f64::total_cmp);
        for (x, y) in expect.iter().zip(&got) {
            assert!((x - y).abs() < 1e-12);
        }
        // μ → 0: F → I.
        let tiny = m.clone().with_step_size(1e-300);
        let ops = TheoryOperators::new(&tiny, &law).unwrap();
        let f = ops.build_f().unwrap();
        assert_eq!(f, DMatrix::identity(36, 36));
    }

    #[test]
    fn h_is_symmetric_psd() {
        let (m, law) = path3_model(vec![1, 1, 1], 2);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        assert!(linalg::is_symmetric(&ops.noise, 0.0));
        assert!(linalg::symmetric_eigenvalues(&ops.noise)[0] >= 0.0);
    }

    #[test]
    fn network_is_mean_of_nodes() {
        let (m, law) = path3_model(vec![1, 2, 1], 2);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        let ss = ops.steady_state().unwrap();
        let mean = ss.node.iter().sum::<f64>() / 3.0;
        assert!((ss.network - mean).abs() < 1e-10 * mean);
        assert_eq!(ops.steady_state_msd(MsdTarget::Node(1)).unwrap(), ss.node[1]);
    }

    #[test]
    fn unstable_step_size_is_reported() {
        let (m, law) = path3_model(vec![1, 1, 1], 1);
        let m = m.with_step_size(1.9);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        assert!(matches!(ops.steady_state(), Err(Error::MeanSquareUnstable { .. })));
    }

    #[test]
    fn transient_converges_to_steady_state() {
        let (m, law) = path3_model(vec![1, 2, 1], 2);
        let ops = TheoryOperators::new(&m, &law).unwrap();
        let w0: Vec<f64> = (0..6).map(|i| -(m.target[i % 2])).collect();
        let pred = ops.predict_transient(&w0, 4000).unwrap();
        let w0_norm: f64 = w0.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!((pred[0] - w0_norm).abs() < 1e-15);
        let ss = ops.steady_state().unwrap().network;
        assert!(((pred[4000] - ss) / ss).abs() < 1e-8);
    }

    #[test]
    fn pdlms_bbar_rows() {
        let t = Topology::path(3);
        let c = relative_degree_weights(&t);
        let law = SelectionLaw::pdlms_uniform(&t, 0.3).unwrap();
        let b = build_bbar(&c, &t, &law).unwrap();
        for i in 0..3 {
            assert!((b.row(i).sum() - 1.0).abs() < 1e-15);
        }
        assert!((b[(1, 1)] - (1.0 - 0.3 * (4.0 / 7.0))).abs() < 1e-15);
    }

    #[test]
    fn db_conversion() {
        assert_eq!(to_db(1.0), 0.0);
        assert!((to_db(0.01) + 20.0).abs() < 1e-12);
    }
}
