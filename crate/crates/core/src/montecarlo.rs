//! Ensembles of independent trials and theory-versus-experiment comparison.
//!
//! Trial `i` draws node data from `stream(master_seed, i, NodeData(k))` and
//! selection patterns from `stream(master_seed, i, Selection)`, so two modes
//! run with the same seed see identical regressors and noise. Trials are
//! grouped into fixed-size chunks that are summed in index order, which
//! makes the ensemble average independent of thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{draw_observations, network_msd, node_msd, step_unchecked, Combination, NetworkState, NodeVectors, ObservationBatch};
use crate::config::{AlgorithmMode, ExperimentConfig, Initial};
use crate::error::{invalid, Error, Result};
use crate::model::{NetworkModel, RegressorSampler};
use crate::rng::{stream, Purpose};
use crate::selection::{SelectionLaw, SelectionPattern};
use crate::theory::{step_size_bound, to_db, SolverOptions, TheoryOperators};

/// Network MSD above which a trial is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Minimum horizon when it is derived from the mean time constant.
pub const MIN_HORIZON: usize = 2000;

/// Horizon as a multiple of the mean time constant.
pub const HORIZON_TIME_CONSTANTS: f64 = 12.0;

const CHUNK: usize = 16;

/// Per-iteration MSD of one trial. Index `n` holds the value after
/// iteration `n + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub network: Vec<f64>,
    /// `nodes[n * K + k]`.
    pub nodes: Vec<f64>,
    pub divergent: bool,
}

/// Ensemble-averaged curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCurves {
    pub node_count: usize,
    pub network: Vec<f64>,
    /// `nodes[n * K + k]`.
    pub nodes: Vec<f64>,
    pub trials: usize,
    pub divergent: usize,
}

impl EnsembleCurves {
    pub fn node_curve(&self, k: usize) -> Vec<f64> {
        self.nodes.iter().skip(k).step_by(self.node_count).copied().collect()
    }

    pub fn iterations(&self) -> usize {
        self.network.len()
    }
}

/// Full comparison of simulation and theory. All MSD values are linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdReport {
    pub label: String,
    pub curves: EnsembleCurves,
    pub steady_exp: Vec<f64>,
    pub steady_exp_network: f64,
    pub steady_theory: Vec<f64>,
    pub steady_theory_network: f64,
    pub rho_transition: f64,
    pub rho_fd: f64,
    pub window: usize,
}

impl MsdReport {
    /// `10 log10(exp) − 10 log10(theory)` per node.
    pub fn delta_db(&self) -> Vec<f64> {
        self.steady_exp
            .iter()
            .zip(&self.steady_theory)
            .map(|(e, t)| to_db(*e) - to_db(*t))
            .collect()
    }

    pub fn network_delta_db(&self) -> f64 {
        to_db(self.steady_exp_network) - to_db(self.steady_theory_network)
    }
}

/// Mean of the last `window` entries.
pub fn steady_state_estimate(curve: &[f64], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(invalid("window", "must be at least 1"));
    }
    if window > curve.len() {
        return Err(invalid(
            "window",
            format!("{window} exceeds curve length {}", curve.len()),
        ));
    }
    Ok(curve[curve.len() - window..].iter().sum::<f64>() / window as f64)
}

/// A resolved experiment: model, selection law and horizon.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: NetworkModel,
    pub law: SelectionLaw,
    pub mode: AlgorithmMode,
    pub iterations: usize,
    pub window: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub initial: Initial,
    samplers: Vec<RegressorSampler>,
}

impl Experiment {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        if let Err(issues) = cfg.validate() {
            let first = &issues[0];
            return Err(Error::InvalidParameter {
                name: first.field,
                reason: first.message.clone(),
            });
        }
        let (model, law) = cfg.build_model()?;
        let iterations = match cfg.run.iterations {
            Some(n) => n,
            None => default_horizon(&model)?.max(cfg.run.window),
        };
        Self::new(model, law, cfg.mode(), iterations, cfg.run.window, cfg.run.trials, cfg.run.master_seed, cfg.run.initial)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: NetworkModel,
        law: SelectionLaw,
        mode: AlgorithmMode,
        iterations: usize,
        window: usize,
        trials: usize,
        master_seed: u64,
        initial: Initial,
    ) -> Result<Self> {
        model.validate()?;
        law.check(&model.topology)?;
        if iterations == 0 || trials == 0 {
            return Err(invalid("iterations/trials", "must be at least 1"));
        }
        if window == 0 || window > iterations {
            return Err(invalid("window", "must satisfy 1 <= window <= iterations"));
        }
        let samplers = model.samplers()?;
        Ok(Self {
            model,
            law,
            mode,
            iterations,
            window,
            trials,
            master_seed,
            initial,
            samplers,
        })
    }

    fn initial_state(&self) -> NetworkState {
        let (k, l) = (self.model.node_count(), self.model.dimension());
        match self.initial {
            Initial::Zero => NetworkState::zeros(k, l),
            Initial::Target => NetworkState::from_estimates(NodeVectors::replicated(k, self.model.target.as_slice())),
        }
    }

    /// Stacked initial error `w_0 − h`.
    pub fn initial_error(&self) -> Vec<f64> {
        self.initial_state().error_vector(self.model.target.as_slice())
    }

    /// Runs trial `index`.
    pub fn run_trial(&self, index: u64) -> Trajectory {
        let model = &self.model;
        let t = &model.topology;
        let (k, l) = (model.node_count(), model.dimension());
        let h = model.target.as_slice();
        let mut rngs: Vec<_> = (0..k).map(|node| stream(self.master_seed, index, Purpose::NodeData(node))).collect();
        let mut sel_rng = stream(self.master_seed, index, Purpose::Selection);
        let mut state = self.initial_state();
        let mut batch = ObservationBatch::zeros(k, l);
        let mut scratch = vec![0.0; l];
        let mut pattern = SelectionPattern::empty(t);
        let mut sel_scratch = Vec::new();
        let mut network = Vec::with_capacity(self.iterations);
        let mut nodes = Vec::with_capacity(self.iterations * k);
        let mut divergent = false;
        for _ in 0..self.iterations {
            draw_observations(model, &self.samplers, &mut rngs, &mut scratch, &mut batch);
            let combination = match self.mode {
                AlgorithmMode::Lms => Combination::None,
                AlgorithmMode::Dlms => Combination::Full,
                AlgorithmMode::Rc { .. } | AlgorithmMode::Pdlms { .. } => {
                    self.law.sample_into(t, &mut sel_rng, &mut pattern, &mut sel_scratch);
                    Combination::Reduced(&pattern)
                }
            };
            step_unchecked(&mut state, &batch, model, combination);
            let net = network_msd(&state, h);
            if !(net <= DIVERGENCE_THRESHOLD) {
                divergent = true;
                break;
            }
            network.push(net);
            nodes.extend((0..k).map(|node| node_msd(&state, node, h)));
        }
        if divergent {
            network.resize(self.iterations, f64::INFINITY);
            nodes.resize(self.iterations * k, f64::INFINITY);
        }
        Trajectory { network, nodes, divergent }
    }

    /// Runs trials `0..trials` and averages them.
    pub fn run_ensemble(&self) -> Result<EnsembleCurves> {
        let indices: Vec<u64> = (0..self.trials as u64).collect();
        self.run_ensemble_indices(&indices)
    }

    /// Averages the given trials. Divergent trials are counted and left out
    /// of the average; any divergence under a mean-stable configuration is
    /// an error.
    pub fn run_ensemble_indices(&self, indices: &[u64]) -> Result<EnsembleCurves> {
        let k = self.model.node_count();
        let len = self.iterations;
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        let chunks: Vec<(Vec<f64>, Vec<f64>, usize)> = sorted
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut net = vec![0.0; len];
                let mut nodes = vec![0.0; len * k];
                let mut bad = 0;
                for &i in chunk {
                    let tr = self.run_trial(i);
                    if tr.divergent {
                        bad += 1;
                        continue;
                    }
                    net.iter_mut().zip(&tr.network).for_each(|(a, b)| *a += b);
                    nodes.iter_mut().zip(&tr.nodes).for_each(|(a, b)| *a += b);
                }
                (net, nodes, bad)
            })
            .collect();
        let mut network = vec![0.0; len];
        let mut nodes = vec![0.0; len * k];
        let mut divergent = 0;
        for (n, s, bad) in chunks {
            network.iter_mut().zip(&n).for_each(|(a, b)| *a += b);
            nodes.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
            divergent += bad;
        }
        let good = sorted.len() - divergent;
        if divergent > 0 && mean_stable(&self.model)? {
            return Err(Error::UnexpectedDivergence {
                divergent,
                trials: sorted.len(),
            });
        }
        let scale = if good == 0 { f64::NAN } else { 1.0 / good as f64 };
        network.iter_mut().for_each(|v| *v *= scale);
        nodes.iter_mut().for_each(|v| *v *= scale);
        Ok(EnsembleCurves {
            node_count: k,
            network,
            nodes,
            trials: sorted.len(),
            divergent,
        })
    }

    pub fn theory(&self) -> Result<TheoryOperators> {
        TheoryOperators::with_options(&self.model, &self.law, SolverOptions::default())
    }

    /// Runs the ensemble and evaluates the steady-state theory.
    pub fn compare(&self) -> Result<MsdReport> {
        let ops = self.theory()?;
        let stability = ops.mean_stability_report()?;
        let ss = ops.steady_state()?;
        let curves = self.run_ensemble()?;
        let k = self.model.node_count();
        let steady_exp = (0..k)
            .map(|node| steady_state_estimate(&curves.node_curve(node), self.window))
            .collect::<Result<Vec<_>>>()?;
        let steady_exp_network = steady_state_estimate(&curves.network, self.window)?;
        Ok(MsdReport {
            label: self.mode.label(&self.model.topology),
            curves,
            steady_exp,
            steady_exp_network,
            steady_theory: ss.node,
            steady_theory_network: ss.network,
            rho_transition: stability.rho_transition,
            rho_fd: ss.rho_fd,
            window: self.window,
        })
    }
}

/// Whether every step size satisfies `0 < μ_k < 2 / λ_max(R_k)`.
pub fn mean_stable(model: &NetworkModel) -> Result<bool> {
    for p in &model.profiles {
        if !(p.step_size > 0.0 && p.step_size < step_size_bound(&p.covariance)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `max(MIN_HORIZON, HORIZON_TIME_CONSTANTS · τ)` with `τ = −1/ln ρ(I − MR)`.
pub fn default_horizon(model: &NetworkModel) -> Result<usize> {
    let mut rho: f64 = 0.0;
    for p in &model.profiles {
        for ev in crate::linalg::symmetric_eigenvalues(&p.covariance) {
            rho = rho.max((1.0 - p.step_size * ev).abs());
        }
    }
    if !(rho < 1.0) || rho == 0.0 {
        return Ok(MIN_HORIZON);
    }
    let tau = -1.0 / rho.ln();
    Ok(((HORIZON_TIME_CONSTANTS * tau).ceil() as usize).max(MIN_HORIZON))
}

/// [`Experiment::run_trial`] from a configuration.
pub fn run_trial(cfg: &ExperimentConfig, index: u64) -> Result<Trajectory> {
    Ok(Experiment::from_config(cfg)?.run_trial(index))
}

/// [`Experiment::run_ensemble`] from a configuration.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<EnsembleCurves> {
    Experiment::from_config(cfg)?.run_ensemble()
}

/// [`Experiment::compare`] from a configuration.
pub fn compare(cfg: &ExperimentConfig) -> Result<MsdReport> {
    Experiment::from_config(cfg)?.compare()
}
