//! Network topologies and combination-weight rules.
//!
//! Nodes are 0-based in memory. The edge-list text format is 1-based:
//!
//! ```text
//! nodes 3
//! 1 2
//! 2 3
//! ```

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of attempts made by [`generate_topology`].
pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from undirected 0-based edges.
    ///
    /// Rejects self-loops, duplicate edges and out-of-range ids. Connectivity is
    /// not required here; see [`Topology::validate`].
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(invalid("node_count", "must be at least 1"));
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(invalid("edges", format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(invalid("edges", format!("self-loop at node {a}")));
            }
            if neighbors[a].contains(&b) {
                return Err(invalid("edges", format!("duplicate edge ({a}, {b})")));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { neighbors })
    }

    /// Path graph `0 - 1 - ... - (n-1)`.
    pub fn path(node_count: usize) -> Self {
        let edges: Vec<_> = (1..node_count).map(|i| (i - 1, i)).collect();
        Self::from_edges(node_count, &edges).expect("path edges are valid")
    }

    /// Star with node 0 as hub.
    pub fn star(node_count: usize) -> Self {
        let edges: Vec<_> = (1..node_count).map(|i| (0, i)).collect();
        Self::from_edges(node_count, &edges).expect("star edges are valid")
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Open neighborhood of `k`, ascending.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighbors[k].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn max_degree(&self) -> usize {
        self.neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, k: usize, l: usize) -> bool {
        k < self.node_count() && self.neighbors[k].binary_search(&l).is_ok()
    }

    /// Position of `l` in the neighbor list of `k`.
    pub fn neighbor_index(&self, k: usize, l: usize) -> Option<usize> {
        self.neighbors.get(k)?.binary_search(&l).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(k, l)` with `k < l`, lexicographically ordered.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (k, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&l| l > k).map(|&l| (k, l)));
        }
        out
    }

    /// Checks that the graph is connected and every node has a neighbor when
    /// `K > 1`.
    pub fn validate(&self) -> Result<()> {
        if !is_connected(self) {
            return Err(invalid("topology", "graph is not connected"));
        }
        Ok(())
    }

    /// Relabels nodes: node `k` becomes `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.node_count();
        if perm.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: perm.len(),
            });
        }
        let edges: Vec<_> = self.edges().iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::from_edges(k, &edges)
    }

    /// Serializes to the 1-based edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.node_count());
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{} {}", a + 1, b + 1);
        }
        out
    }

    /// Parses the 1-based edge-list format produced by [`Topology::to_edge_list`].
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            reason: "missing `nodes K` header".into(),
        })?;
        let node_count = header
            .strip_prefix("nodes ")
            .and_then(|s| s.trim().parse::<usize>().ok())
            .ok_or(Error::Parse {
                line: 1,
                reason: format!("expected `nodes K`, found `{header}`"),
            })?;
        let mut edges = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|v| v.parse::<usize>().ok())
                    .filter(|&v| v >= 1)
                    .ok_or(Error::Parse {
                        line: line_no,
                        reason: format!("expected two 1-based node ids, found `{line}`"),
                    })
            };
            let a = parse(parts.next())?;
            let b = parse(parts.next())?;
            if parts.next().is_some() || a >= b {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected `k l` with k < l, found `{line}`"),
                });
            }
            edges.push((a - 1, b - 1));
        }
        Self::from_edges(node_count, &edges).map_err(|e| Error::Parse {
            line: 0,
            reason: e.to_string(),
        })
    }
}

/// True iff every node is reachable from node 0.
pub fn is_connected(t: &Topology) -> bool {
    let n = t.node_count();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(k) = queue.pop_front() {
        for &l in t.neighbors(k) {
            if !seen[l] {
                seen[l] = true;
                reached += 1;
                queue.push_back(l);
            }
        }
    }
    reached == n
}

/// Options for [`generate_topology_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    /// Target average degree; `None` uses the midpoint of the degree bounds.
    pub mean_degree: Option<f64>,
    pub max_attempts: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            mean_degree: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Random connected topology with `degree_min <= d_k <= degree_max`.
pub fn generate_topology(
    node_count: usize,
    degree_min: usize,
    degree_max: usize,
    seed: u64,
) -> Result<Topology> {
    generate_topology_with(
        node_count,
        degree_min,
        degree_max,
        seed,
        GenerateOptions::default(),
    )
}

/// Each attempt grows a random spanning tree under the degree cap, adds
/// random extra edges up to the target edge count, patches nodes below the
/// degree floor, and is rejected if any bound still fails.
pub fn generate_topology_with(
    node_count: usize,
    degree_min: usize,
    degree_max: usize,
    seed: u64,
    opts: GenerateOptions,
) -> Result<Topology> {
    if node_count == 0 {
        return Err(invalid("node_count", "must be at least 1"));
    }
    if node_count == 1 {
        return Topology::from_edges(1, &[]);
    }
    if degree_min < 1 || degree_min > degree_max || degree_max > node_count - 1 {
        return Err(invalid(
            "degree bounds",
            format!(
                "need 1 <= degree_min <= degree_max <= K-1, got [{degree_min}, {degree_max}] with K = {node_count}"
            ),
        ));
    }
    let mean = opts
        .mean_degree
        .unwrap_or((degree_min + degree_max) as f64 / 2.0)
        .clamp(degree_min as f64, degree_max as f64);
    if !mean.is_finite() {
        return Err(Error::NonFinite("mean_degree"));
    }
    let target_edges = ((node_count as f64 * mean) / 2.0).round() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for _ in 0..opts.max_attempts {
        if let Some(t) = attempt(node_count, degree_min, degree_max, target_edges, &mut rng) {
            return Ok(t);
        }
    }
    Err(Error::TopologyInfeasible {
        attempts: opts.max_attempts,
        reason: format!(
            "no connected graph on {node_count} nodes with degrees in [{degree_min}, {degree_max}] found"
        ),
    })
}

fn attempt(
    n: usize,
    dmin: usize,
    dmax: usize,
    target_edges: usize,
    rng: &mut ChaCha12Rng,
) -> Option<Topology> {
    let mut adj = vec![vec![false; n]; n];
    let mut deg = vec![0usize; n];
    let mut edges = 0usize;
    let add = |a: usize, b: usize, adj: &mut Vec<Vec<bool>>, deg: &mut Vec<usize>, edges: &mut usize| {
        adj[a][b] = true;
        adj[b][a] = true;
        deg[a] += 1;
        deg[b] += 1;
        *edges += 1;
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        let open: Vec<usize> = order[..i].iter().copied().filter(|&v| deg[v] < dmax).collect();
        if open.is_empty() {
            return None;
        }
        let parent = open[rng.random_range(0..open.len())];
        add(order[i], parent, &mut adj, &mut deg, &mut edges);
    }

    let mut candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !adj[a][b])
        .collect();
    candidates.shuffle(rng);
    for &(a, b) in &candidates {
        if edges >= target_edges {
            break;
        }
        if deg[a] < dmax && deg[b] < dmax {
            add(a, b, &mut adj, &mut deg, &mut edges);
        }
    }
    for &(a, b) in &candidates {
        if (deg[a] < dmin || deg[b] < dmin) && !adj[a][b] && deg[a] < dmax && deg[b] < dmax {
            add(a, b, &mut adj, &mut deg, &mut edges);
        }
    }
    if deg.iter().any(|&d| d < dmin || d > dmax) {
        return None;
    }
    let list: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|&(a, b)| adj[a][b])
        .collect();
    let t = Topology::from_edges(n, &list).ok()?;
    is_connected(&t).then_some(t)
}

/// Which rule produced a [`CombinationWeights`] matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightRule {
    RelativeDegree,
    Uniform,
    Metropolis,
}

impl WeightRule {
    pub fn build(self, t: &Topology) -> CombinationWeights {
        match self {
            WeightRule::RelativeDegree => relative_degree_weights(t),
            WeightRule::Uniform => uniform_weights(t),
            WeightRule::Metropolis => metropolis_weights(t),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightRule::RelativeDegree => "relative-degree",
            WeightRule::Uniform => "uniform",
            WeightRule::Metropolis => "metropolis",
        }
    }
}

/// Row-stochastic `K × K` matrix of combination weights `c_{k,l}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationWeights {
    entries: DMatrix<f64>,
}

impl CombinationWeights {
    /// Wraps a matrix after checking it against the topology: nonnegative,
    /// rows summing to one within `1e-12`, supported on closed neighborhoods.
    pub fn new(entries: DMatrix<f64>, t: &Topology) -> Result<Self> {
        let k = t.node_count();
        if entries.shape() != (k, k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: entries.nrows(),
            });
        }
        for i in 0..k {
            let mut sum = 0.0;
            for j in 0..k {
                let c = entries[(i, j)];
                if !c.is_finite() {
                    return Err(Error::NonFinite("combination weights"));
                }
                if !(0.0..=1.0).contains(&c) {
                    return Err(invalid("weights", format!("c[{i},{j}] = {c} outside [0, 1]")));
                }
                if c != 0.0 && i != j && !t.has_edge(i, j) {
                    return Err(invalid("weights", format!("c[{i},{j}] nonzero off the graph")));
                }
                sum += c;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(invalid("weights", format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[(k, l)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn node_count(&self) -> usize {
        self.entries.nrows()
    }
}

/// `c_{k,l} = n_l / Σ_{j ∈ N_k ∪ {k}} n_j` with `n_j = d_j + 1`.
pub fn relative_degree_weights(t: &Topology) -> CombinationWeights {
    let k = t.node_count();
    let mass: Vec<f64> = (0..k).map(|j| (t.degree(j) + 1) as f64).collect();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        let total: f64 = mass[i] + t.neighbors(i).iter().map(|&j| mass[j]).sum::<f64>();
        c[(i, i)] = mass[i] / total;
        for &j in t.neighbors(i) {
            c[(i, j)] = mass[j] / total;
        }
    }
    CombinationWeights { entries: c }
}

/// Equal split over the closed neighborhood.
pub fn uniform_weights(t: &Topology) -> CombinationWeights {
    let k = t.node_count();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        let w = 1.0 / (t.degree(i) + 1) as f64;
        c[(i, i)] = w;
        for &j in t.neighbors(i) {
            c[(i, j)] = w;
        }
    }
    CombinationWeights { entries: c }
}

/// Metropolis rule: `1 / (1 + max(d_k, d_l))` per edge, remainder on the diagonal.
pub fn metropolis_weights(t: &Topology) -> CombinationWeights {
    let k = t.node_count();
    let mut c = DMatrix::zeros(k, k);
    for i in 0..k {
        let mut off = 0.0;
        for &j in t.neighbors(i) {
            let w = 1.0 / (1 + t.degree(i).max(t.degree(j))) as f64;
            c[(i, j)] = w;
            off += w;
        }
        c[(i, i)] = 1.0 - off;
    }
    CombinationWeights { entries: c }
}
