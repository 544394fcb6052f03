//! Experiment configuration: everything needed to regenerate a model and
//! rerun an ensemble bit-exactly.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{generate_topology_with, GenerateOptions, Topology, WeightRule, DEFAULT_MAX_ATTEMPTS};
use crate::model::{NetworkModel, ProfileSpec};
use crate::selection::SelectionLaw;

/// Network section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: usize,
    pub degree_min: usize,
    pub degree_max: usize,
    /// Target average degree; midpoint of the bounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_degree: Option<f64>,
    pub topology_seed: u64,
    pub weights: WeightRule,
    /// Embedded edge list. When present it is used instead of regenerating
    /// from `topology_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            nodes: 20,
            degree_min: 1,
            degree_max: 7,
            mean_degree: None,
            topology_seed: 0,
            weights: WeightRule::RelativeDegree,
            topology: None,
        }
    }
}

impl NetworkSpec {
    pub fn topology(&self) -> Result<Topology> {
        match &self.topology {
            Some(text) => Topology::from_edge_list(text),
            None => generate_topology_with(
                self.nodes,
                self.degree_min,
                self.degree_max,
                self.topology_seed,
                GenerateOptions {
                    mean_degree: self.mean_degree,
                    max_attempts: DEFAULT_MAX_ATTEMPTS,
                },
            ),
        }
    }
}

/// Algorithm family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Lms,
    Dlms,
    Rc,
    Pdlms,
}

/// Algorithm with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmMode {
    /// Non-cooperative LMS.
    Lms,
    /// Diffusion LMS with full consultation.
    Dlms,
    /// Reduced-communication DLMS with `m_k = min(max_budget, d_k)`.
    Rc { max_budget: usize },
    /// Probabilistic DLMS with every link active with the same probability.
    Pdlms { link_probability: f64 },
}

impl AlgorithmMode {
    pub fn law(&self, t: &Topology) -> Result<SelectionLaw> {
        Ok(match *self {
            AlgorithmMode::Lms => SelectionLaw::none(t),
            AlgorithmMode::Dlms => SelectionLaw::full(t),
            AlgorithmMode::Rc { max_budget } => SelectionLaw::rc_capped(t, max_budget),
            AlgorithmMode::Pdlms { link_probability } => SelectionLaw::pdlms_uniform(t, link_probability)?,
        })
    }

    /// Short label; RC modes that coincide with LMS or DLMS say so.
    pub fn label(&self, t: &Topology) -> String {
        match *self {
            AlgorithmMode::Lms => "lms".into(),
            AlgorithmMode::Dlms => "dlms".into(),
            AlgorithmMode::Rc { max_budget: 0 } => "rc M=0 (non-cooperative LMS equivalent)".into(),
            AlgorithmMode::Rc { max_budget } if max_budget >= t.max_degree() => {
                format!("rc M={max_budget} (DLMS equivalent)")
            }
            AlgorithmMode::Rc { max_budget } => format!("rc M={max_budget}"),
            AlgorithmMode::Pdlms { link_probability } => format!("pdlms p={link_probability}"),
        }
    }
}

/// Initial estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initial {
    #[default]
    Zero,
    /// Start every node at the true parameter vector.
    Target,
}

/// Run section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub mode: ModeKind,
    /// `M` for RC mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_budget: Option<usize>,
    /// Link probability for PDLMS mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_probability: Option<f64>,
    pub trials: usize,
    /// Horizon; derived from the mean time constant when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub window: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub initial: Initial,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            mode: ModeKind::Dlms,
            max_budget: None,
            link_probability: None,
            trials: 10_000,
            iterations: None,
            window: 500,
            master_seed: 0,
            initial: Initial::Zero,
        }
    }
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub model: ProfileSpec,
    pub run: RunSpec,
}

/// One rejected field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ExperimentConfig {
    /// Every invariant violation, keyed by field.
    pub fn validate(&self) -> std::result::Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut push = |field: &'static str, message: String| issues.push(ConfigIssue { field, message });
        let n = &self.network;
        if n.nodes == 0 {
            push("network.nodes", "must be at least 1".into());
        }
        if n.nodes > 1 {
            if n.degree_min < 1 {
                push("network.degree_min", "must be at least 1".into());
            }
            if n.degree_min > n.degree_max {
                push("network.degree_max", format!("must be >= degree_min ({})", n.degree_min));
            }
            if n.degree_max > n.nodes - 1 {
                push("network.degree_max", format!("must be <= nodes - 1 ({})", n.nodes - 1));
            }
        }
        if let Some(m) = n.mean_degree {
            if !(m.is_finite() && m > 0.0) {
                push("network.mean_degree", "must be finite and > 0".into());
            }
        }
        if let Some(text) = &n.topology {
            match Topology::from_edge_list(text) {
                Ok(t) if t.node_count() != n.nodes => push(
                    "network.topology",
                    format!("edge list has {} nodes, expected {}", t.node_count(), n.nodes),
                ),
                Ok(t) if !crate::graph::is_connected(&t) => {
                    push("network.topology", "graph is not connected".into())
                }
                Ok(_) => {}
                Err(e) => push("network.topology", e.to_string()),
            }
        }

        let m = &self.model;
        if m.dimension == 0 {
            push("model.dimension", "must be at least 1".into());
        }
        if !(m.step_size.is_finite() && m.step_size > 0.0) {
            push("model.step_size", "must be finite and > 0".into());
        }
        if !(m.trace_min.is_finite() && m.trace_min > 0.0) {
            push("model.trace_min", "must be finite and > 0".into());
        }
        if !(m.trace_max.is_finite() && m.trace_max >= m.trace_min) {
            push("model.trace_max", "must be finite and >= trace_min".into());
        }
        if !(m.noise_min.is_finite() && m.noise_min > 0.0) {
            push("model.noise_min", "must be finite and > 0".into());
        }
        if !(m.noise_max.is_finite() && m.noise_max >= m.noise_min) {
            push("model.noise_max", "must be finite and >= noise_min".into());
        }
        if !(m.condition.is_finite() && m.condition >= 1.0) {
            push("model.condition", "must be finite and >= 1".into());
        } else if m.dimension == 1 && m.condition != 1.0 {
            push("model.condition", "must be 1 when dimension = 1".into());
        }

        let r = &self.run;
        match r.mode {
            ModeKind::Rc if r.max_budget.is_none() => push("run.max_budget", "required for mode = \"rc\"".into()),
            ModeKind::Pdlms => match r.link_probability {
                None => push("run.link_probability", "required for mode = \"pdlms\"".into()),
                Some(p) if !(0.0..=1.0).contains(&p) => {
                    push("run.link_probability", format!("must be in [0, 1], got {p}"))
                }
                _ => {}
            },
            _ => {}
        }
        if r.mode != ModeKind::Rc && r.max_budget.is_some() {
            push("run.max_budget", "only valid for mode = \"rc\"".into());
        }
        if r.mode != ModeKind::Pdlms && r.link_probability.is_some() {
            push("run.link_probability", "only valid for mode = \"pdlms\"".into());
        }
        if r.trials == 0 {
            push("run.trials", "must be at least 1".into());
        }
        if r.window == 0 {
            push("run.window", "must be at least 1".into());
        }
        if let Some(it) = r.iterations {
            if it == 0 {
                push("run.iterations", "must be at least 1".into());
            } else if r.window > it {
                push("run.window", format!("must be <= iterations ({it})"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn mode(&self) -> AlgorithmMode {
        match self.run.mode {
            ModeKind::Lms => AlgorithmMode::Lms,
            ModeKind::Dlms => AlgorithmMode::Dlms,
            ModeKind::Rc => AlgorithmMode::Rc {
                max_budget: self.run.max_budget.unwrap_or(0),
            },
            ModeKind::Pdlms => AlgorithmMode::Pdlms {
                link_probability: self.run.link_probability.unwrap_or(1.0),
            },
        }
    }

    pub fn set_mode(&mut self, mode: AlgorithmMode) {
        let (kind, m, p) = match mode {
            AlgorithmMode::Lms => (ModeKind::Lms, None, None),
            AlgorithmMode::Dlms => (ModeKind::Dlms, None, None),
            AlgorithmMode::Rc { max_budget } => (ModeKind::Rc, Some(max_budget), None),
            AlgorithmMode::Pdlms { link_probability } => (ModeKind::Pdlms, None, Some(link_probability)),
        };
        self.run.mode = kind;
        self.run.max_budget = m;
        self.run.link_probability = p;
    }

    /// Topology, weights and per-node profiles with budgets applied.
    pub fn build_model(&self) -> Result<(NetworkModel, SelectionLaw)> {
        let t = self.network.topology()?;
        let c = self.network.weights.build(&t);
        let law = self.mode().law(&t)?;
        let mut model = self.model.build(t, c)?;
        if let SelectionLaw::Rc { budgets } = &law {
            for (p, &m) in model.profiles.iter_mut().zip(budgets) {
                p.budget = m;
            }
        }
        model.validate()?;
        Ok((model, law))
    }
}
