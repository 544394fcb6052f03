//! Reduced-communication diffusion LMS over adaptive networks.
//!
//! The crate simulates LMS, diffusion LMS (DLMS), reduced-communication DLMS
//! (each node consults a random subset of `m_k` neighbors per iteration) and
//! probabilistic DLMS, and predicts their mean-square deviation in closed
//! form from Kronecker-structured second-moment operators.
//!
//! * [`graph`] — topologies and combination weights.
//! * [`model`] — regressor covariances, noise and observations.
//! * [`selection`] — consultation patterns and their moments.
//! * [`algorithms`] — the adapt-then-combine recursions.
//! * [`theory`] — mean and mean-square analysis.
//! * [`montecarlo`] — ensembles and theory-versus-experiment reports.

// `!(x < bound)` is used on purpose throughout so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod config;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod selection;
pub mod theory;

pub use algorithms::{
    adapt, combine_full, combine_reduced, network_msd, node_msd, step_network, Combination, NetworkState, NodeVectors,
    ObservationBatch,
};
pub use config::{AlgorithmMode, ExperimentConfig, Initial, ModeKind, NetworkSpec, RunSpec};
pub use error::{Error, Result};
pub use graph::{CombinationWeights, Topology, WeightRule};
pub use model::{NetworkModel, NodeProfile, Observation, ProfileSpec};
pub use montecarlo::{EnsembleCurves, Experiment, MsdReport, Trajectory};
pub use selection::{SelectionLaw, SelectionPattern};
pub use theory::{MeanStabilityReport, MsdTarget, SteadyState, TheoryOperators};
