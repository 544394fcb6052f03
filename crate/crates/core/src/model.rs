//! Synthetic estimation problems: the target vector, per-node regressor
//! covariances and noise levels, and the linear observation model
//! `y = xᵀh + v`.
//!
//! Regressors are zero-mean Gaussian with covariance `R_k`, noise is
//! zero-mean Gaussian with variance `ζ_k²`, both independent across nodes
//! and time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{CombinationWeights, Topology};
use crate::linalg;

/// Per-node parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeProfile {
    pub step_size: f64,
    pub covariance: DMatrix<f64>,
    pub noise_variance: f64,
    /// Number of neighbors consulted per iteration (RC mode).
    pub budget: usize,
}

impl NodeProfile {
    pub fn validate(&self, degree: usize) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(invalid("step_size", format!("must be > 0, got {}", self.step_size)));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(invalid(
                "noise_variance",
                format!("must be >= 0, got {}", self.noise_variance),
            ));
        }
        let r = &self.covariance;
        if !r.is_square() || r.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariance", "must be a finite square matrix"));
        }
        if !linalg::is_symmetric(r, 1e-12) {
            return Err(invalid("covariance", "not symmetric"));
        }
        if linalg::symmetric_eigenvalues(r).first().copied().unwrap_or(0.0) <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        if self.budget > degree {
            return Err(Error::BudgetExceedsDegree {
                node: 0,
                budget: self.budget,
                degree,
            });
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

/// Complete description of one estimation problem over a network.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub topology: Topology,
    pub weights: CombinationWeights,
    pub target: DVector<f64>,
    pub profiles: Vec<NodeProfile>,
}

impl NetworkModel {
    pub fn new(
        topology: Topology,
        weights: CombinationWeights,
        target: DVector<f64>,
        profiles: Vec<NodeProfile>,
    ) -> Result<Self> {
        let model = Self {
            topology,
            weights,
            target,
            profiles,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.topology.node_count();
        if self.profiles.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.profiles.len(),
            });
        }
        if self.weights.node_count() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: self.weights.node_count(),
            });
        }
        let l = self.dimension();
        if l == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target"));
        }
        for (node, p) in self.profiles.iter().enumerate() {
            if p.covariance.nrows() != l {
                return Err(Error::DimensionMismatch {
                    expected: l,
                    actual: p.covariance.nrows(),
                });
            }
            p.validate(self.topology.degree(node)).map_err(|e| match e {
                Error::BudgetExceedsDegree { budget, degree, .. } => Error::BudgetExceedsDegree {
                    node,
                    budget,
                    degree,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn dimension(&self) -> usize {
        self.target.len()
    }

    pub fn budgets(&self) -> Vec<usize> {
        self.profiles.iter().map(|p| p.budget).collect()
    }

    /// Sets `m_k = min(max_budget, d_k)` at every node.
    pub fn with_max_budget(mut self, max_budget: usize) -> Self {
        for (k, p) in self.profiles.iter_mut().enumerate() {
            p.budget = max_budget.min(self.topology.degree(k));
        }
        self
    }

    pub fn with_step_size(mut self, mu: f64) -> Self {
        for p in &mut self.profiles {
            p.step_size = mu;
        }
        self
    }

    /// Precomputed Cholesky factors for regressor sampling.
    pub fn samplers(&self) -> Result<Vec<RegressorSampler>> {
        self.profiles
            .iter()
            .map(|p| RegressorSampler::new(&p.covariance))
            .collect()
    }
}

/// One `(x, y)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub regressor: Vec<f64>,
    pub response: f64,
}

/// SPD matrix with the requested trace and eigenvalue spread.
///
/// Eigenvalues are log-spaced between `1` and `condition`, rescaled to sum to
/// `trace_target`, and rotated by a random orthogonal basis drawn from `seed`.
/// A `condition` of one yields the scaled identity exactly.
pub fn make_covariance(
    dimension: usize,
    trace_target: f64,
    condition: f64,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if dimension == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    if !trace_target.is_finite() || trace_target <= 0.0 {
        return Err(invalid("trace", format!("must be finite and > 0, got {trace_target}")));
    }
    if !condition.is_finite() || condition < 1.0 {
        return Err(invalid("condition", format!("must be finite and >= 1, got {condition}")));
    }
    if condition == 1.0 {
        return Ok(DMatrix::identity(dimension, dimension) * (trace_target / dimension as f64));
    }
    if dimension == 1 {
        return Err(invalid("condition", "a 1x1 covariance has condition number 1"));
    }
    let raw: Vec<f64> = (0..dimension)
        .map(|i| condition.powf(i as f64 / (dimension - 1) as f64))
        .collect();
    let scale = trace_target / raw.iter().sum::<f64>();
    let eig = DVector::from_iterator(dimension, raw.iter().map(|v| v * scale));

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dimension, dimension, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dimension {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    Ok((&m + m.transpose()) * 0.5)
}

/// Draws zero-mean Gaussian vectors with a fixed covariance.
#[derive(Debug, Clone)]
pub struct RegressorSampler {
    dim: usize,
    /// Lower Cholesky factor, row-major.
    factor: Vec<f64>,
}

impl RegressorSampler {
    pub fn new(covariance: &DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::NotPositiveDefinite);
        }
        let dim = covariance.nrows();
        let chol = covariance.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let factor = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(Self { dim, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one draw into `out`, using `scratch` for the standard normals.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, scratch: &mut [f64], out: &mut [f64]) {
        let n = self.dim;
        for z in scratch[..n].iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i + 1];
            out[i] = row.iter().zip(&scratch[..=i]).map(|(a, b)| a * b).sum();
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut scratch = vec![0.0; self.dim];
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut scratch, &mut out);
        out
    }
}

/// One regressor draw with covariance `covariance`.
pub fn sample_regressor<R: Rng + ?Sized>(covariance: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(RegressorSampler::new(covariance)?.sample(rng))
}

/// `xᵀh + v` with `v ~ N(0, noise_variance)`.
///
/// A normal deviate is drawn even when the variance is zero so that the
/// stream position does not depend on the noise level.
pub fn observe<R: Rng + ?Sized>(x: &[f64], h: &[f64], noise_variance: f64, rng: &mut R) -> Result<f64> {
    if x.len() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: x.len(),
        });
    }
    if !(noise_variance >= 0.0) {
        return Err(invalid("noise_variance", "must be >= 0"));
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(linalg::dot(x, h) + noise_variance.sqrt() * z)
}

/// Unit-norm random target vector.
pub fn make_target(dimension: usize, seed: u64) -> Result<DVector<f64>> {
    if dimension == 0 {
        return Err(invalid("dimension", "must be at least 1"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let v = DVector::from_fn(dimension, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return Ok(v / n);
        }
    }
}

/// Parameters from which per-node profiles are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub dimension: usize,
    pub step_size: f64,
    /// Bounds of the log-uniform draw of `trace(R_k)`.
    pub trace_min: f64,
    pub trace_max: f64,
    /// Bounds of the log-uniform draw of `ζ_k²`.
    pub noise_min: f64,
    pub noise_max: f64,
    /// Eigenvalue spread `λ_max / λ_min` of every `R_k`.
    pub condition: f64,
    pub target_seed: u64,
    pub profile_seed: u64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            dimension: 4,
            step_size: 0.01,
            trace_min: 0.5,
            trace_max: 2.0,
            noise_min: 0.005,
            noise_max: 0.02,
            condition: 2.0,
            target_seed: 1,
            profile_seed: 2,
        }
    }
}

/// Generated per-node values, recorded in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedProfile {
    pub node: usize,
    pub trace: f64,
    pub noise_variance: f64,
    pub covariance_seed: u64,
}

impl ProfileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(invalid("dimension", "must be at least 1"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(invalid("step_size", "must be finite and > 0"));
        }
        for (name, lo, hi) in [
            ("trace_min/trace_max", self.trace_min, self.trace_max),
            ("noise_min/noise_max", self.noise_min, self.noise_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(invalid(
                    if name.starts_with("trace") { "trace_min" } else { "noise_min" },
                    format!("{name} must satisfy 0 < min <= max, got [{lo}, {hi}]"),
                ));
            }
        }
        if !(self.condition.is_finite() && self.condition >= 1.0) {
            return Err(invalid("condition", "must be finite and >= 1"));
        }
        if self.dimension == 1 && self.condition != 1.0 {
            return Err(invalid("condition", "must be 1 when dimension = 1"));
        }
        Ok(())
    }

    /// Draws the per-node trace, noise level and covariance seed.
    pub fn draw(&self, node_count: usize) -> Vec<GeneratedProfile> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.profile_seed);
        let log_uniform = |rng: &mut ChaCha12Rng, lo: f64, hi: f64| {
            if lo == hi {
                lo
            } else {
                (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
            }
        };
        (0..node_count)
            .map(|node| GeneratedProfile {
                node,
                trace: log_uniform(&mut rng, self.trace_min, self.trace_max),
                noise_variance: log_uniform(&mut rng, self.noise_min, self.noise_max),
                covariance_seed: rng.random(),
            })
            .collect()
    }

    /// Builds the full model. Budgets start at zero.
    pub fn build(&self, topology: Topology, weights: CombinationWeights) -> Result<NetworkModel> {
        self.validate()?;
        let target = make_target(self.dimension, self.target_seed)?;
        let profiles = self
            .draw(topology.node_count())
            .into_iter()
            .map(|g| {
                Ok(NodeProfile {
                    step_size: self.step_size,
                    covariance: make_covariance(self.dimension, g.trace, self.condition, g.covariance_seed)?,
                    noise_variance: g.noise_variance,
                    budget: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkModel::new(topology, weights, target, profiles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn covariance_trivial_cases() {
        let one = make_covariance(1, 2.0, 1.0, 3).unwrap();
        assert_eq!(one, DMatrix::from_element(1, 1, 2.0));
        let id = make_covariance(3, 3.0, 1.0, 9).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));
    }

    #[test]
    fn covariance_trace_and_condition() {
        for seed in 0..10 {
            let r = make_covariance(4, 2.5, 10.0, seed).unwrap();
            assert!(linalg::is_symmetric(&r, 0.0));
            let ev = linalg::symmetric_eigenvalues(&r);
            assert!((r.trace() - 2.5).abs() < 1e-10);
            assert!((ev.iter().sum::<f64>() - 2.5).abs() < 1e-10);
            assert!((ev[3] / ev[0] - 10.0).abs() < 1e-6);
        }
        assert_eq!(make_covariance(4, 2.5, 10.0, 1).unwrap(), make_covariance(4, 2.5, 10.0, 1).unwrap());
    }

    #[test]
    fn covariance_rejects_bad_input() {
        assert!(make_covariance(0, 1.0, 1.0, 0).is_err());
        assert!(make_covariance(2, f64::NAN, 1.0, 0).is_err());
        assert!(make_covariance(2, 1.0, 0.5, 0).is_err());
        assert!(make_covariance(2, -1.0, 1.0, 0).is_err());
        assert!(make_covariance(2, 1.0, f64::INFINITY, 0).is_err());
    }

    #[test]
    fn identity_regressor_mean() {
        let s = RegressorSampler::new(&DMatrix::identity(2, 2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let x = s.sample(&mut rng);
            mean[0] += x[0];
            mean[1] += x[1];
        }
        for m in mean {
            assert!((m / n as f64).abs() < 5e-3);
        }
    }

    #[test]
    fn diagonal_regressor_covariance() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let s = RegressorSampler::new(&r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1_000_000;
        let mut acc = DMatrix::zeros(2, 2);
        let (mut scratch, mut x) = ([0.0; 2], [0.0; 2]);
        for _ in 0..n {
            s.sample_into(&mut rng, &mut scratch, &mut x);
            for i in 0..2 {
                for j in 0..2 {
                    acc[(i, j)] += x[i] * x[j];
                }
            }
        }
        acc /= n as f64;
        assert!((acc - r).amax() < 2e-2);
    }

    #[test]
    fn regressor_reproducible_and_rejects_non_spd() {
        let r = make_covariance(3, 1.0, 4.0, 5).unwrap();
        let a = sample_regressor(&r, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = sample_regressor(&r, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(sample_regressor(&bad, &mut ChaCha8Rng::seed_from_u64(1)), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn noiseless_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(observe(&[1.0, 2.0], &[3.0, 4.0], 0.0, &mut rng).unwrap(), 11.0);
        assert!(observe(&[1.0], &[3.0, 4.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = observe(&[0.0, 0.0], &[0.3, -2.0], 1.0, &mut rng).unwrap();
            s1 += y;
            s2 += y * y;
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 1e-2);
        assert!((var - 1.0).abs() < 1e-2);

        // Residual variance with a nonzero regressor.
        let x = [0.7, -1.1];
        let h = [0.2, 0.9];
        let zeta2 = 0.25;
        let mut s2 = 0.0;
        for _ in 0..n {
            let e = observe(&x, &h, zeta2, &mut rng).unwrap() - linalg::dot(&x, &h);
            s2 += e * e;
        }
        assert!((s2 / n as f64 / zeta2 - 1.0).abs() < 1e-2);
    }

    #[test]
    fn cross_node_independence() {
        // Two nodes' regressor streams are uncorrelated.
        use crate::rng::{stream, Purpose};
        let s = RegressorSampler::new(&DMatrix::identity(1, 1)).unwrap();
        let mut a = stream(5, 0, Purpose::NodeData(0));
        let mut b = stream(5, 0, Purpose::NodeData(1));
        let n = 1_000_000;
        let mut c = 0.0;
        for _ in 0..n {
            c += s.sample(&mut a)[0] * s.sample(&mut b)[0];
        }
        assert!((c / n as f64).abs() < 5e-3);
    }

    #[test]
    fn target_vectors() {
        let a = make_target(4, 1).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a, make_target(4, 1).unwrap());
        assert_ne!(a, make_target(4, 2).unwrap());
        assert!(make_target(0, 1).is_err());
    }

    #[test]
    fn profile_draws_stay_in_range() {
        let spec = ProfileSpec {
            trace_min: 0.5,
            trace_max: 2.0,
            noise_min: 0.01,
            noise_max: 0.1,
            ..ProfileSpec::default()
        };
        let draws = spec.draw(50);
        assert!(draws.iter().all(|g| (0.5..=2.0).contains(&g.trace)));
        assert!(draws.iter().all(|g| (0.01..=0.1).contains(&g.noise_variance)));
        assert_eq!(draws, spec.draw(50));
    }

    #[test]
    fn profile_budget_validation() {
        let p = NodeProfile {
            step_size: 0.1,
            covariance: DMatrix::identity(2, 2),
            noise_variance: 0.1,
            budget: 3,
        };
        assert!(matches!(p.validate(2), Err(Error::BudgetExceedsDegree { .. })));
        assert!(p.validate(3).is_ok());
        let bad = NodeProfile { step_size: 0.0, ..p.clone() };
        assert!(bad.validate(3).is_err());
    }
}
