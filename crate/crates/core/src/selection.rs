//! Per-iteration neighbor consultation patterns and their exact moments.
//!
//! In RC mode node `k` consults a uniformly random `m_k`-subset of its open
//! neighborhood at every iteration, independently across nodes and time, so
//! `E[a_{k,l}] = m_k / d_k` and two distinct links of the same node are
//! jointly active with the hypergeometric probability
//! `p_k (m_k - 1) / (d_k - 1)`. In PDLMS mode every directed link is an
//! independent Bernoulli variable.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::graph::Topology;

/// How consultation decisions are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionLaw {
    /// Uniform `m_k`-subsets of each neighborhood.
    Rc { budgets: Vec<usize> },
    /// Independent link activations; `probs[k][i]` belongs to the link from
    /// `neighbors(k)[i]` into `k`.
    Pdlms { probs: Vec<Vec<f64>> },
}

impl SelectionLaw {
    pub fn rc(t: &Topology, budgets: Vec<usize>) -> Result<Self> {
        let law = SelectionLaw::Rc { budgets };
        law.check(t)?;
        Ok(law)
    }

    /// `m_k = min(max_budget, d_k)`.
    pub fn rc_capped(t: &Topology, max_budget: usize) -> Self {
        SelectionLaw::Rc {
            budgets: t.degrees().into_iter().map(|d| d.min(max_budget)).collect(),
        }
    }

    /// Every node consults all neighbors.
    pub fn full(t: &Topology) -> Self {
        SelectionLaw::Rc { budgets: t.degrees() }
    }

    /// No node consults anyone.
    pub fn none(t: &Topology) -> Self {
        SelectionLaw::Rc {
            budgets: vec![0; t.node_count()],
        }
    }

    pub fn pdlms_uniform(t: &Topology, p: f64) -> Result<Self> {
        let probs = (0..t.node_count()).map(|k| vec![p; t.degree(k)]).collect();
        let law = SelectionLaw::Pdlms { probs };
        law.check(t)?;
        Ok(law)
    }

    /// Checks the law against a topology.
    pub fn check(&self, t: &Topology) -> Result<()> {
        let k = t.node_count();
        match self {
            SelectionLaw::Rc { budgets } => {
                if budgets.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        actual: budgets.len(),
                    });
                }
                for (node, &m) in budgets.iter().enumerate() {
                    if m > t.degree(node) {
                        return Err(Error::BudgetExceedsDegree {
                            node,
                            budget: m,
                            degree: t.degree(node),
                        });
                    }
                }
            }
            SelectionLaw::Pdlms { probs } => {
                if probs.len() != k {
                    return Err(Error::DimensionMismatch {
                        expected: k,
                        actual: probs.len(),
                    });
                }
                for (node, row) in probs.iter().enumerate() {
                    if row.len() != t.degree(node) {
                        return Err(Error::DimensionMismatch {
                            expected: t.degree(node),
                            actual: row.len(),
                        });
                    }
                    if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                        return Err(invalid("link_probability", format!("{p} outside [0, 1]")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Selection probability `p_k = m_k / d_k` in RC mode, `0` for isolated
    /// nodes. `None` in PDLMS mode, where probabilities are per link.
    pub fn node_probability(&self, t: &Topology, k: usize) -> Option<f64> {
        match self {
            SelectionLaw::Rc { budgets } => Some(match t.degree(k) {
                0 => 0.0,
                d => budgets[k] as f64 / d as f64,
            }),
            SelectionLaw::Pdlms { .. } => None,
        }
    }

    /// `E[a_{k,l}]`.
    pub fn first_moment(&self, t: &Topology, k: usize, l: usize) -> Result<f64> {
        let idx = t.neighbor_index(k, l).ok_or(Error::NotAnEdge { k, l })?;
        Ok(match self {
            SelectionLaw::Rc { budgets } => budgets[k] as f64 / t.degree(k) as f64,
            SelectionLaw::Pdlms { probs } => probs[k][idx],
        })
    }

    /// `E[a_{i,j} a_{k,l}]` for directed edges `(i, j)` and `(k, l)`.
    pub fn second_moment(&self, t: &Topology, i: usize, j: usize, k: usize, l: usize) -> Result<f64> {
        let pij = self.first_moment(t, i, j)?;
        let pkl = self.first_moment(t, k, l)?;
        Ok(match self {
            SelectionLaw::Rc { budgets } => {
                if i != k {
                    pij * pkl
                } else if j == l {
                    pij
                } else {
                    // j != l are both neighbors of i, so d_i >= 2.
                    let d = t.degree(i) as f64;
                    let m = budgets[i] as f64;
                    if budgets[i] == 0 {
                        0.0
                    } else {
                        pij * (m - 1.0) / (d - 1.0)
                    }
                }
            }
            SelectionLaw::Pdlms { .. } => {
                if i == k && j == l {
                    pij
                } else {
                    pij * pkl
                }
            }
        })
    }

    /// Number of joint outcomes over all nodes (used to bound enumeration).
    pub fn outcome_count(&self, t: &Topology) -> f64 {
        match self {
            SelectionLaw::Rc { budgets } => (0..t.node_count())
                .map(|k| binomial(t.degree(k), budgets[k]))
                .product(),
            SelectionLaw::Pdlms { probs } => probs.iter().map(|r| 2f64.powi(r.len() as i32)).product(),
        }
    }

    /// Draws one pattern.
    pub fn sample<R: Rng + ?Sized>(&self, t: &Topology, rng: &mut R) -> SelectionPattern {
        let mut pattern = SelectionPattern::empty(t);
        self.sample_into(t, rng, &mut pattern, &mut Vec::new());
        pattern
    }

    /// Draws one pattern into `pattern`, reusing `scratch`.
    ///
    /// RC subsets come from a partial Fisher-Yates shuffle of the neighbor
    /// positions, which uses exactly `m_k` draws per node.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        _t: &Topology,
        rng: &mut R,
        pattern: &mut SelectionPattern,
        scratch: &mut Vec<usize>,
    ) {
        match self {
            SelectionLaw::Rc { budgets } => {
                for (k, bits) in pattern.bits.iter_mut().enumerate() {
                    let d = bits.len();
                    let m = budgets[k];
                    if m == d {
                        bits.fill(true);
                        continue;
                    }
                    bits.fill(false);
                    scratch.clear();
                    scratch.extend(0..d);
                    for i in 0..m {
                        let j = rng.random_range(i..d);
                        scratch.swap(i, j);
                        bits[scratch[i]] = true;
                    }
                }
            }
            SelectionLaw::Pdlms { probs } => {
                for (bits, row) in pattern.bits.iter_mut().zip(probs) {
                    for (b, &p) in bits.iter_mut().zip(row) {
                        *b = rng.random::<f64>() < p;
                    }
                }
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Which neighbors each node receives from in one iteration.
///
/// `bits[k][i]` refers to `topology.neighbors(k)[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionPattern {
    bits: Vec<Vec<bool>>,
}

impl SelectionPattern {
    pub fn empty(t: &Topology) -> Self {
        Self {
            bits: (0..t.node_count()).map(|k| vec![false; t.degree(k)]).collect(),
        }
    }

    pub fn all(t: &Topology) -> Self {
        Self {
            bits: (0..t.node_count()).map(|k| vec![true; t.degree(k)]).collect(),
        }
    }

    /// Builds a pattern from explicit consulted neighbor lists (0-based).
    pub fn from_consulted(t: &Topology, consulted: &[Vec<usize>]) -> Result<Self> {
        if consulted.len() != t.node_count() {
            return Err(Error::DimensionMismatch {
                expected: t.node_count(),
                actual: consulted.len(),
            });
        }
        let mut p = Self::empty(t);
        for (k, list) in consulted.iter().enumerate() {
            for &l in list {
                let idx = t.neighbor_index(k, l).ok_or(Error::NotAnEdge { k, l })?;
                p.bits[k][idx] = true;
            }
        }
        Ok(p)
    }

    /// Bits of node `k`, aligned with its neighbor list.
    pub fn row(&self, k: usize) -> &[bool] {
        &self.bits[k]
    }

    pub fn node_count(&self) -> usize {
        self.bits.len()
    }

    /// Whether this pattern has the shape of `t`'s neighbor lists.
    pub fn fits(&self, t: &Topology) -> bool {
        self.bits.len() == t.node_count() && self.bits.iter().enumerate().all(|(k, b)| b.len() == t.degree(k))
    }

    pub fn consulted(&self, t: &Topology, k: usize) -> Vec<usize> {
        t.neighbors(k)
            .iter()
            .zip(&self.bits[k])
            .filter_map(|(&l, &b)| b.then_some(l))
            .collect()
    }

    pub fn active_count(&self, k: usize) -> usize {
        self.bits[k].iter().filter(|&&b| b).count()
    }

    /// Trace lines for iteration `n`, one per node: `n k: l1 l2 ...`, 1-based.
    pub fn trace_lines(&self, t: &Topology, n: usize) -> String {
        let mut out = String::new();
        for k in 0..self.node_count() {
            let _ = write!(out, "{n} {}:", k + 1);
            for l in self.consulted(t, k) {
                let _ = write!(out, " {}", l + 1);
            }
            out.push('\n');
        }
        out
    }
}
