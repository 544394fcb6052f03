//! Adapt-then-combine recursions.
//!
//! Every iteration runs an LMS adaptation at each node on its previous
//! estimate, then a combination over the fresh intermediate estimates:
//!
//! * `Full` — weighted sum over the closed neighborhood (DLMS);
//! * `Reduced` — only consulted neighbors contribute; the weight of every
//!   unconsulted neighbor is moved onto the node's own intermediate estimate
//!   (RC-DLMS and P-DLMS);
//! * `None` — the intermediate estimate is kept as is (non-cooperative LMS).

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{CombinationWeights, Topology};
use crate::model::{NetworkModel, Observation, RegressorSampler};
use crate::selection::SelectionPattern;

/// `K` vectors of length `L` stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVectors {
    dim: usize,
    data: Vec<f64>,
}

impl NodeVectors {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; nodes * dim],
        }
    }

    /// Every node holds a copy of `v`.
    pub fn replicated(nodes: usize, v: &[f64]) -> Self {
        Self {
            dim: v.len(),
            data: v.repeat(nodes),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.len(),
            });
        }
        Ok(Self {
            dim,
            data: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn node_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Stacked vector `[v_1ᵀ, ..., v_Kᵀ]ᵀ`.
    pub fn stacked(&self) -> &[f64] {
        &self.data
    }
}

/// Estimates and intermediate estimates of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub estimates: NodeVectors,
    pub intermediates: NodeVectors,
    pub iteration: usize,
}

impl NetworkState {
    /// All estimates start at zero.
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self::from_estimates(NodeVectors::zeros(nodes, dim))
    }

    pub fn from_estimates(estimates: NodeVectors) -> Self {
        let intermediates = estimates.clone();
        Self {
            estimates,
            intermediates,
            iteration: 0,
        }
    }

    /// Stacked error `w̃ = [w_1 - h; ...; w_K - h]`.
    pub fn error_vector(&self, h: &[f64]) -> Vec<f64> {
        let l = h.len();
        self.estimates
            .stacked()
            .iter()
            .enumerate()
            .map(|(i, w)| w - h[i % l])
            .collect()
    }
}

/// One time step's observations at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub regressors: NodeVectors,
    pub responses: Vec<f64>,
}

impl ObservationBatch {
    pub fn zeros(nodes: usize, dim: usize) -> Self {
        Self {
            regressors: NodeVectors::zeros(nodes, dim),
            responses: vec![0.0; nodes],
        }
    }

    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = obs.iter().map(|o| o.regressor.clone()).collect();
        Ok(Self {
            regressors: NodeVectors::from_rows(&rows)?,
            responses: obs.iter().map(|o| o.response).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.responses.len()
    }
}

/// Draws a batch: for each node, a regressor then one noise deviate, from
/// that node's own stream.
pub fn draw_observations<R: Rng>(
    model: &NetworkModel,
    samplers: &[RegressorSampler],
    rngs: &mut [R],
    scratch: &mut [f64],
    batch: &mut ObservationBatch,
) {
    let h = model.target.as_slice();
    for (k, rng) in rngs.iter_mut().enumerate() {
        let x = batch.regressors.node_mut(k);
        samplers[k].sample_into(rng, scratch, x);
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        let clean: f64 = x.iter().zip(h).map(|(a, b)| a * b).sum();
        batch.responses[k] = clean + model.profiles[k].noise_variance.sqrt() * z;
    }
}

/// How intermediate estimates are fused in one iteration.
#[derive(Debug, Clone, Copy)]
pub enum Combination<'a> {
    Full,
    Reduced(&'a SelectionPattern),
    None,
}

/// LMS adaptation `w + μ x (y - xᵀw)`.
pub fn adapt(w_prev: &[f64], x: &[f64], y: f64, mu: f64) -> Result<Vec<f64>> {
    if x.len() != w_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: w_prev.len(),
            actual: x.len(),
        });
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(crate::error::invalid("step_size", "must be finite and > 0"));
    }
    if !y.is_finite() || w_prev.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("adapt input"));
    }
    let mut out = vec![0.0; w_prev.len()];
    adapt_into(w_prev, x, y, mu, &mut out);
    Ok(out)
}

#[inline]
fn adapt_into(w_prev: &[f64], x: &[f64], y: f64, mu: f64, out: &mut [f64]) {
    let e: f64 = y - x.iter().zip(w_prev).map(|(a, b)| a * b).sum::<f64>();
    let g = mu * e;
    for ((o, w), xi) in out.iter_mut().zip(w_prev).zip(x) {
        *o = w + g * xi;
    }
}

fn check_z(z: &NodeVectors, c: &CombinationWeights) -> Result<()> {
    if z.node_count() != c.node_count() {
        return Err(Error::DimensionMismatch {
            expected: c.node_count(),
            actual: z.node_count(),
        });
    }
    Ok(())
}

/// `c_{k,k} z_k + Σ_{l ∈ N_k} c_{k,l} z_l`.
pub fn combine_full(z: &NodeVectors, c: &CombinationWeights, t: &Topology, k: usize) -> Result<Vec<f64>> {
    check_z(z, c)?;
    let mut out = vec![0.0; z.dim()];
    combine_full_into(z, c, t, k, &mut out);
    Ok(out)
}

#[inline]
fn combine_full_into(z: &NodeVectors, c: &CombinationWeights, t: &Topology, k: usize, out: &mut [f64]) {
    let ckk = c.get(k, k);
    for (o, v) in out.iter_mut().zip(z.node(k)) {
        *o = ckk * v;
    }
    for &l in t.neighbors(k) {
        let ckl = c.get(k, l);
        for (o, v) in out.iter_mut().zip(z.node(l)) {
            *o += ckl * v;
        }
    }
}

/// Self weight and consulted-neighbor weights realized by a pattern at node
/// `k`. They sum to the row sum of `c`, i.e. one.
pub fn effective_weights(
    c: &CombinationWeights,
    t: &Topology,
    pattern: &SelectionPattern,
    k: usize,
) -> (f64, Vec<(usize, f64)>) {
    let mut own = c.get(k, k);
    let mut others = Vec::new();
    let row = pattern.row(k);
    if !row.iter().any(|&b| b) {
        return (1.0, others);
    }
    for (&l, &active) in t.neighbors(k).iter().zip(row) {
        if active {
            others.push((l, c.get(k, l)));
        } else {
            own += c.get(k, l);
        }
    }
    (own, others)
}

/// Reduced combination: unconsulted neighbors are replaced by `z_k`.
pub fn combine_reduced(
    z: &NodeVectors,
    c: &CombinationWeights,
    t: &Topology,
    pattern: &SelectionPattern,
    k: usize,
) -> Result<Vec<f64>> {
    check_z(z, c)?;
    if !pattern.fits(t) {
        return Err(crate::error::invalid("pattern", "does not match the topology"));
    }
    let mut out = vec![0.0; z.dim()];
    combine_reduced_into(z, c, t, pattern, k, &mut out);
    Ok(out)
}

// With every neighbor consulted this performs exactly the operations of
// `combine_full_into`; with none consulted it copies `z_k`.
#[inline]
fn combine_reduced_into(
    z: &NodeVectors,
    c: &CombinationWeights,
    t: &Topology,
    pattern: &SelectionPattern,
    k: usize,
    out: &mut [f64],
) {
    let row = pattern.row(k);
    if !row.iter().any(|&b| b) {
        out.copy_from_slice(z.node(k));
        return;
    }
    let mut own = c.get(k, k);
    for (&l, &active) in t.neighbors(k).iter().zip(row) {
        if !active {
            own += c.get(k, l);
        }
    }
    for (o, v) in out.iter_mut().zip(z.node(k)) {
        *o = own * v;
    }
    for (&l, &active) in t.neighbors(k).iter().zip(row) {
        if active {
            let ckl = c.get(k, l);
            for (o, v) in out.iter_mut().zip(z.node(l)) {
                *o += ckl * v;
            }
        }
    }
}

/// One synchronous iteration: adapt everywhere, then combine everywhere.
pub fn step_network(
    state: &mut NetworkState,
    obs: &ObservationBatch,
    model: &NetworkModel,
    combination: Combination<'_>,
) -> Result<()> {
    let k_count = model.node_count();
    let l = model.dimension();
    if state.estimates.node_count() != k_count || state.estimates.dim() != l {
        return Err(Error::DimensionMismatch {
            expected: k_count * l,
            actual: state.estimates.stacked().len(),
        });
    }
    if obs.node_count() != k_count || obs.regressors.dim() != l {
        return Err(Error::DimensionMismatch {
            expected: k_count,
            actual: obs.node_count(),
        });
    }
    if let Combination::Reduced(p) = combination {
        if !p.fits(&model.topology) {
            return Err(crate::error::invalid("pattern", "does not match the topology"));
        }
    }
    step_unchecked(state, obs, model, combination);
    Ok(())
}

pub(crate) fn step_unchecked(
    state: &mut NetworkState,
    obs: &ObservationBatch,
    model: &NetworkModel,
    combination: Combination<'_>,
) {
    let t = &model.topology;
    let c = &model.weights;
    for k in 0..model.node_count() {
        adapt_into(
            state.estimates.node(k),
            obs.regressors.node(k),
            obs.responses[k],
            model.profiles[k].step_size,
            state.intermediates.node_mut(k),
        );
    }
    for k in 0..model.node_count() {
        let out = state.estimates.node_mut(k);
        match combination {
            Combination::Full => combine_full_into(&state.intermediates, c, t, k, out),
            Combination::Reduced(p) => combine_reduced_into(&state.intermediates, c, t, p, k, out),
            Combination::None => out.copy_from_slice(state.intermediates.node(k)),
        }
    }
    state.iteration += 1;
}

/// `‖w_k - h‖²`.
pub fn node_msd(state: &NetworkState, k: usize, h: &[f64]) -> f64 {
    state
        .estimates
        .node(k)
        .iter()
        .zip(h)
        .map(|(w, t)| (w - t) * (w - t))
        .sum()
}

/// Mean of [`node_msd`] over nodes.
pub fn network_msd(state: &NetworkState, h: &[f64]) -> f64 {
    let k = state.estimates.node_count();
    (0..k).map(|i| node_msd(state, i, h)).sum::<f64>() / k as f64
}
