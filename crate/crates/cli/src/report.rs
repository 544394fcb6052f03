//! Artifact writers: CSV tables, theory JSON, manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rcdlms::config::ExperimentConfig;
use rcdlms::model::GeneratedProfile;
use rcdlms::theory::to_db;
use rcdlms::{MsdReport, NetworkModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{CmdResult, Failure};

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn config_to_toml(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

/// Fingerprint of the canonical serialization of a configuration.
pub fn config_fingerprint(cfg: &ExperimentConfig) -> String {
    sha256_hex(config_to_toml(cfg).as_bytes())
}

pub fn write_file(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

pub fn read_config(path: &Path) -> CmdResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    check_config(&cfg)?;
    Ok(cfg)
}

pub fn check_config(cfg: &ExperimentConfig) -> CmdResult {
    cfg.validate().map_err(|issues| {
        let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
        Failure::validation(format!("invalid configuration:\n{}", lines.join("\n")))
    })
}

/// `iteration,msd_db_network,msd_db_node_1..K`; iteration is 1-based.
pub fn curve_csv(report: &MsdReport) -> String {
    let k = report.curves.node_count;
    let mut out = String::from("iteration,msd_db_network");
    for node in 1..=k {
        let _ = write!(out, ",msd_db_node_{node}");
    }
    out.push('\n');
    for (n, net) in report.curves.network.iter().enumerate() {
        let _ = write!(out, "{},{}", n + 1, fmt_f64(to_db(*net)));
        for v in &report.curves.nodes[n * k..(n + 1) * k] {
            let _ = write!(out, ",{}", fmt_f64(to_db(*v)));
        }
        out.push('\n');
    }
    out
}

/// One steady-state row: `eta_theory,eta_exp,eta_theory_db,eta_exp_db,delta_db`.
pub fn steady_fields(theory: f64, exp: f64) -> String {
    let (t, e) = (to_db(theory), to_db(exp));
    format!("{},{},{},{},{}", fmt_f64(theory), fmt_f64(exp), fmt_f64(t), fmt_f64(e), fmt_f64(e - t))
}

pub const STEADY_HEADER: &str = "eta_theory,eta_exp,eta_theory_db,eta_exp_db,delta_db";

pub fn steady_csv(report: &MsdReport) -> String {
    let mut out = format!("node,{STEADY_HEADER}\n");
    for (k, (t, e)) in report.steady_theory.iter().zip(&report.steady_exp).enumerate() {
        let _ = writeln!(out, "{},{}", k + 1, steady_fields(*t, *e));
    }
    let _ = writeln!(
        out,
        "network,{}",
        steady_fields(report.steady_theory_network, report.steady_exp_network)
    );
    out
}

/// Theory summary written as `theory.json`.
#[derive(Debug, Serialize)]
pub struct TheorySummary {
    pub label: String,
    pub config_sha256: String,
    pub rho_transition: f64,
    pub rho_mean: f64,
    pub rho_fd: Option<f64>,
    pub mean_stable: bool,
    pub step_size_bounds: Vec<f64>,
    pub eta_theory: Vec<f64>,
    pub eta_theory_db: Vec<f64>,
    pub eta_theory_network: Option<f64>,
    pub eta_theory_network_db: Option<f64>,
}

/// Per-node values resolved from the configuration.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeRecord {
    pub node: usize,
    pub degree: usize,
    pub budget: usize,
    pub step_size: f64,
    pub trace: f64,
    pub noise_variance: f64,
    /// Decimal string: TOML integers are signed 64-bit.
    pub covariance_seed: String,
    pub covariance: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Everything generated from a configuration's seeds.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelRecord {
    pub nodes: usize,
    pub dimension: usize,
    pub edges: Vec<[usize; 2]>,
    pub target: Vec<f64>,
    pub node: Vec<NodeRecord>,
}

impl ModelRecord {
    pub fn new(cfg: &ExperimentConfig, model: &NetworkModel) -> Self {
        let t = &model.topology;
        let drawn: Vec<GeneratedProfile> = cfg.model.draw(model.node_count());
        let l = model.dimension();
        let node = model
            .profiles
            .iter()
            .zip(&drawn)
            .enumerate()
            .map(|(k, (p, g))| NodeRecord {
                node: k + 1,
                degree: t.degree(k),
                budget: p.budget,
                step_size: p.step_size,
                trace: g.trace,
                noise_variance: p.noise_variance,
                covariance_seed: g.covariance_seed.to_string(),
                covariance: (0..l).map(|r| p.covariance.row(r).iter().copied().collect()).collect(),
                weights: model.weights.matrix().row(k).iter().copied().collect(),
            })
            .collect();
        Self {
            nodes: model.node_count(),
            dimension: l,
            edges: t.edges().into_iter().map(|(a, b)| [a + 1, b + 1]).collect(),
            target: model.target.iter().copied().collect(),
            node,
        }
    }
}

/// Hash of one emitted artifact.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Manifest of one `run`: the resolved configuration plus artifact hashes.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub command: String,
    pub config_sha256: String,
    pub artifacts: Vec<Artifact>,
    pub config: ExperimentConfig,
    pub model: ModelRecord,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, model: &NetworkModel) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command: command.into(),
            config_sha256: config_fingerprint(cfg),
            artifacts: Vec::new(),
            config: cfg.clone(),
            model: ModelRecord::new(cfg, model),
        }
    }

    /// Writes `contents` under `dir` and records its hash.
    pub fn emit(&mut self, dir: &Path, name: &str, contents: &str) -> CmdResult {
        write_file(&dir.join(name), contents)?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CmdResult<PathBuf> {
        let path = dir.join("manifest.toml");
        let text = toml::to_string(self).map_err(|e| Failure::validation(e.to_string()))?;
        write_file(&path, &text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CmdResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        toml::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
    }
}
