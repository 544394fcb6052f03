use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rcdlms::config::{ExperimentConfig, NetworkSpec};
use rcdlms::montecarlo::Experiment;
use rcdlms::theory::{to_db, MeanStabilityReport};
use rcdlms::{AlgorithmMode, ModeKind, MsdReport, WeightRule};

use crate::failure::{CmdResult, Failure};
use crate::report::{
    check_config, config_fingerprint, config_to_toml, curve_csv, fmt_f64, read_config, steady_csv, steady_fields,
    write_file, ModelRecord, RunManifest, TheorySummary, STEADY_HEADER,
};

/// Flags of `generate`.
#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub nodes: usize,
    pub dimension: usize,
    pub degree_min: usize,
    pub degree_max: usize,
    pub mean_degree: Option<f64>,
    pub weights: WeightRule,
    pub topology_seed: u64,
    pub target_seed: u64,
    pub profile_seed: u64,
    pub step_size: f64,
    pub trace_range: (f64, f64),
    pub noise_range: (f64, f64),
    pub condition: f64,
    pub trials: usize,
    pub window: usize,
    pub master_seed: u64,
    pub out: PathBuf,
}

/// Writes a self-contained configuration (topology embedded) and a model
/// manifest `<stem>.model.toml` next to it.
pub fn generate(args: &GenerateArgs) -> CmdResult<Vec<PathBuf>> {
    let mut cfg = ExperimentConfig {
        network: NetworkSpec {
            nodes: args.nodes,
            degree_min: args.degree_min,
            degree_max: args.degree_max,
            mean_degree: args.mean_degree,
            topology_seed: args.topology_seed,
            weights: args.weights,
            topology: None,
        },
        ..ExperimentConfig::default()
    };
    cfg.model.dimension = args.dimension;
    cfg.model.step_size = args.step_size;
    (cfg.model.trace_min, cfg.model.trace_max) = args.trace_range;
    (cfg.model.noise_min, cfg.model.noise_max) = args.noise_range;
    cfg.model.condition = args.condition;
    cfg.model.target_seed = args.target_seed;
    cfg.model.profile_seed = args.profile_seed;
    cfg.run.trials = args.trials;
    cfg.run.window = args.window;
    cfg.run.master_seed = args.master_seed;
    check_config(&cfg)?;
    let topology = cfg.network.topology()?;
    cfg.network.topology = Some(topology.to_edge_list());
    let (model, _) = cfg.build_model()?;

    let manifest_path = args.out.with_extension("model.toml");
    write_file(&args.out, &config_to_toml(&cfg))?;
    let record = ModelRecord::new(&cfg, &model);
    let text = toml::to_string(&record).map_err(|e| Failure::validation(e.to_string()))?;
    write_file(&manifest_path, &text)?;
    Ok(vec![args.out.clone(), manifest_path])
}

/// Overrides applied to a loaded configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub mode: Option<ModeKind>,
    pub max_budget: Option<usize>,
    pub link_probability: Option<f64>,
    pub trials: Option<usize>,
    pub iterations: Option<usize>,
    pub window: Option<usize>,
    pub master_seed: Option<u64>,
}

impl RunOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> CmdResult {
        if let Some(mode) = self.mode {
            let resolved = match mode {
                ModeKind::Lms => AlgorithmMode::Lms,
                ModeKind::Dlms => AlgorithmMode::Dlms,
                ModeKind::Rc => AlgorithmMode::Rc {
                    max_budget: self
                        .max_budget
                        .or(cfg.run.max_budget)
                        .ok_or_else(|| Failure::validation("--mode rc requires --M"))?,
                },
                ModeKind::Pdlms => AlgorithmMode::Pdlms {
                    link_probability: self
                        .link_probability
                        .or(cfg.run.link_probability)
                        .ok_or_else(|| Failure::validation("--mode pdlms requires --p"))?,
                },
            };
            cfg.set_mode(resolved);
        } else {
            if self.max_budget.is_some() {
                cfg.run.max_budget = self.max_budget;
            }
            if self.link_probability.is_some() {
                cfg.run.link_probability = self.link_probability;
            }
        }
        if let Some(t) = self.trials {
            cfg.run.trials = t;
        }
        if self.iterations.is_some() {
            cfg.run.iterations = self.iterations;
        }
        if let Some(w) = self.window {
            cfg.run.window = w;
        }
        if let Some(s) = self.master_seed {
            cfg.run.master_seed = s;
        }
        check_config(cfg)
    }
}

/// Theory-side checks of one configuration.
struct Assessment {
    experiment: Experiment,
    stability: MeanStabilityReport,
    rho_fd: Option<f64>,
}

impl Assessment {
    fn new(cfg: &ExperimentConfig) -> CmdResult<Self> {
        let experiment = Experiment::from_config(cfg)?;
        let ops = experiment.theory()?;
        let stability = ops.mean_stability_report()?;
        let rho_fd = if stability.stable { Some(ops.rho_fd()?) } else { None };
        Ok(Self {
            experiment,
            stability,
            rho_fd,
        })
    }

    fn unstable_reason(&self) -> Option<String> {
        let s = &self.stability;
        if !s.stable {
            let worst = s
                .within_bound
                .iter()
                .position(|w| !w)
                .map(|k| format!("node {} exceeds mu < {:.6e}", k + 1, s.step_size_bounds[k]))
                .unwrap_or_default();
            return Some(format!(
                "mean-unstable: rho(I - MR) = {:.6}, rho(mean) = {:.6}; {worst}",
                s.rho_transition, s.rho_mean
            ));
        }
        match self.rho_fd {
            Some(r) if r >= 1.0 => Some(format!("mean-square unstable: rho(FD) = {r:.6}")),
            _ => None,
        }
    }

    fn summary(&self, cfg: &ExperimentConfig, report: Option<&MsdReport>) -> TheorySummary {
        let eta: Vec<f64> = report.map(|r| r.steady_theory.clone()).unwrap_or_default();
        TheorySummary {
            label: self.experiment.mode.label(&self.experiment.model.topology),
            config_sha256: config_fingerprint(cfg),
            rho_transition: self.stability.rho_transition,
            rho_mean: self.stability.rho_mean,
            rho_fd: self.rho_fd,
            mean_stable: self.stability.stable,
            step_size_bounds: self.stability.step_size_bounds.clone(),
            eta_theory_db: eta.iter().map(|v| to_db(*v)).collect(),
            eta_theory: eta,
            eta_theory_network: report.map(|r| r.steady_theory_network),
            eta_theory_network_db: report.map(|r| to_db(r.steady_theory_network)),
        }
    }
}

/// Runs one configuration and writes `curve.csv`, `steady.csv`,
/// `theory.json` and `manifest.toml` into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CmdResult<MsdReport> {
    let a = Assessment::new(cfg)?;
    let mut manifest = RunManifest::new("run", cfg, &a.experiment.model);
    if let Some(reason) = a.unstable_reason() {
        let json = serde_json::to_string_pretty(&a.summary(cfg, None)).expect("summary serializes");
        manifest.emit(out, "theory.json", &json)?;
        manifest.write(out)?;
        return Err(Failure::instability(reason));
    }
    let report = a.experiment.compare()?;
    manifest.emit(out, "curve.csv", &curve_csv(&report))?;
    manifest.emit(out, "steady.csv", &steady_csv(&report))?;
    let json = serde_json::to_string_pretty(&a.summary(cfg, Some(&report))).expect("summary serializes");
    manifest.emit(out, "theory.json", &json)?;
    manifest.write(out)?;
    Ok(report)
}

/// Re-runs the configuration stored in a manifest and checks every
/// recorded artifact hash. Returns the mismatching artifact names.
pub fn replay(manifest_path: &Path, out: &Path) -> CmdResult<Vec<String>> {
    let recorded = RunManifest::read(manifest_path)?;
    check_config(&recorded.config)?;
    let result = run(&recorded.config, out);
    let fresh = RunManifest::read(&out.join("manifest.toml"))?;
    let mut mismatched = Vec::new();
    for art in &recorded.artifacts {
        match fresh.artifacts.iter().find(|a| a.path == art.path) {
            Some(a) if a.sha256 == art.sha256 => {}
            _ => mismatched.push(art.path.clone()),
        }
    }
    match result {
        Ok(_) => Ok(mismatched),
        Err(e) if e.kind == crate::failure::ExitKind::Instability => Ok(mismatched),
        Err(e) => Err(e),
    }
}

/// Grid of a sweep.
#[derive(Debug, Clone)]
pub struct SweepArgs {
    pub budgets: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub out: PathBuf,
}

/// Runs every `(μ, M)` grid point in RC mode. Writes `sweep.csv` (one row
/// per grid point and node plus a network row), `curves.csv` and `plot.py`.
pub fn sweep(base: &ExperimentConfig, args: &SweepArgs) -> CmdResult<usize> {
    if args.budgets.is_empty() || args.step_sizes.is_empty() {
        return Err(Failure::validation("sweep lists must be nonempty"));
    }
    let k = base.network.nodes;
    let mut rows = format!("mu,M,node,{STEADY_HEADER},status\n");
    let mut curves = String::from("mu,M,iteration,msd_db_network,msd_db_network_theory\n");
    let mut count = 0;
    for &mu in &args.step_sizes {
        for &m in &args.budgets {
            let mut cfg = base.clone();
            cfg.model.step_size = mu;
            cfg.set_mode(AlgorithmMode::Rc { max_budget: m });
            check_config(&cfg)?;
            let a = Assessment::new(&cfg)?;
            let prefix = format!("{},{m}", fmt_f64(mu));
            if let Some(reason) = a.unstable_reason() {
                for node in (1..=k).map(|n| n.to_string()).chain(["network".to_string()]) {
                    let _ = writeln!(rows, "{prefix},{node},,,,,,\"{reason}\"");
                    count += 1;
                }
                continue;
            }
            let report = a.experiment.compare()?;
            for (node, (t, e)) in report.steady_theory.iter().zip(&report.steady_exp).enumerate() {
                let _ = writeln!(rows, "{prefix},{},{},ok", node + 1, steady_fields(*t, *e));
                count += 1;
            }
            let _ = writeln!(
                rows,
                "{prefix},network,{},ok",
                steady_fields(report.steady_theory_network, report.steady_exp_network)
            );
            count += 1;
            let ops = a.experiment.theory()?;
            let predicted = ops.predict_transient(&a.experiment.initial_error(), report.curves.iterations())?;
            for (n, v) in report.curves.network.iter().enumerate() {
                let _ = writeln!(
                    curves,
                    "{prefix},{},{},{}",
                    n + 1,
                    fmt_f64(to_db(*v)),
                    fmt_f64(to_db(predicted[n + 1]))
                );
            }
        }
    }
    write_file(&args.out.join("sweep.csv"), &rows)?;
    write_file(&args.out.join("curves.csv"), &curves)?;
    write_file(&args.out.join("plot.py"), PLOT_SCRIPT)?;
    write_file(&args.out.join("config.toml"), &config_to_toml(base))?;
    Ok(count)
}

pub fn load(path: &Path) -> CmdResult<ExperimentConfig> {
    read_config(path)
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Figures from sweep.csv and curves.csv (written next to this script).

1. learning curves per M (first step size), simulation vs theory;
2. steady-state network MSD versus M, one line per step size;
3. per-node steady-state MSD for every M (first step size).
"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
out = sys.argv[1] if len(sys.argv) > 1 else here


def rows(name):
    with open(os.path.join(here, name), newline="") as f:
        return list(csv.DictReader(f))


steady = [r for r in rows("sweep.csv") if r["status"] == "ok"]
curves = rows("curves.csv")
mus = sorted({float(r["mu"]) for r in steady})
ms = sorted({int(r["M"]) for r in steady})
mu0 = mus[0] if mus else None

fig, ax = plt.subplots()
series = defaultdict(lambda: ([], [], []))
for r in curves:
    if float(r["mu"]) == mu0:
        it, sim, th = series[int(r["M"])]
        it.append(int(r["iteration"]))
        sim.append(float(r["msd_db_network"]))
        th.append(float(r["msd_db_network_theory"]))
for m, (it, sim, th) in sorted(series.items()):
    line, = ax.plot(it, sim, lw=0.8, label=f"M={m}")
    ax.plot(it, th, "--", color=line.get_color(), lw=1.0)
ax.set_xlabel("iteration")
ax.set_ylabel("network MSD (dB)")
ax.set_title(f"learning curves, mu={mu0} (dashed: theory)")
ax.legend()
fig.savefig(os.path.join(out, "learning_curves.png"), dpi=150)

fig, ax = plt.subplots()
for mu in mus:
    net = sorted((int(r["M"]), float(r["eta_exp_db"]), float(r["eta_theory_db"]))
                 for r in steady if r["node"] == "network" and float(r["mu"]) == mu)
    if not net:
        continue
    line, = ax.plot([n[0] for n in net], [n[1] for n in net], "o", label=f"mu={mu} simulation")
    ax.plot([n[0] for n in net], [n[2] for n in net], "-", color=line.get_color(), label=f"mu={mu} theory")
ax.set_xlabel("M")
ax.set_ylabel("steady-state network MSD (dB)")
ax.legend()
fig.savefig(os.path.join(out, "steady_vs_M.png"), dpi=150)

fig, ax = plt.subplots()
for m in ms:
    per = sorted((int(r["node"]), float(r["eta_exp_db"]), float(r["eta_theory_db"]))
                 for r in steady if r["node"] != "network" and float(r["mu"]) == mu0 and int(r["M"]) == m)
    line, = ax.plot([p[0] for p in per], [p[1] for p in per], "o", label=f"M={m}")
    ax.plot([p[0] for p in per], [p[2] for p in per], "-", color=line.get_color())
ax.set_xlabel("node")
ax.set_ylabel("steady-state MSD (dB)")
ax.set_title(f"per-node steady state, mu={mu0} (lines: theory)")
ax.legend()
fig.savefig(os.path.join(out, "steady_per_node.png"), dpi=150)
"#;
