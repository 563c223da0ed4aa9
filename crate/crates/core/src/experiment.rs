//! The paired attack/defense experiment.
//!
//! All arms share the same data, split, partition, malicious nodes and
//! poisoned datasets, all derived from the master seed, so the arms differ
//! only in what they are meant to compare.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;

use crate::attack::{attack_federation, save_manifest, AttackOutcome, AttackPlan};
use crate::config::{Arm, DataSource, ExperimentConfig, MaliciousNodes};
use crate::dataset::{generate_synthetic, load_csv, partition, train_test_split, Dataset};
use crate::error::{Error, Result};
use crate::fedrep::{append_audit_log, make_nodes, run_rounds, save_telemetry, FedConfig, FederationRun};
use crate::plot::emit_plot;
use crate::rng::{self, tag};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "poison_manifest.csv";
pub const PLOT_FILE: &str = "accuracy.svg";
pub const CONFIG_FILE: &str = "config.txt";

pub fn telemetry_file(arm: Arm) -> String {
    format!("telemetry_{}.csv", arm.name())
}

/// Everything the arms share.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    /// Clean node datasets.
    pub nodes: Vec<Dataset>,
    /// Ground-truth compromise flags by node position.
    pub flags: Vec<bool>,
    /// Present when at least one poisoned arm is requested.
    pub attack: Option<AttackOutcome>,
}

impl Prepared {
    /// 1-based ids of compromised nodes.
    pub fn malicious_ids(&self) -> Vec<usize> {
        self.flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k + 1).collect()
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synthetic(spec) => generate_synthetic(spec),
        DataSource::Csv(path) => load_csv(path),
    }
}

/// Compromise flags by node position.
pub fn malicious_flags(cfg: &ExperimentConfig) -> Vec<bool> {
    let mut flags = vec![false; cfg.nodes];
    match &cfg.malicious {
        MaliciousNodes::Ids(ids) => {
            for &id in ids {
                flags[id - 1] = true;
            }
        }
        MaliciousNodes::Count(count) => {
            let mut rng = rng::stream(cfg.seed, &[tag::MALICIOUS]);
            for k in index::sample(&mut rng, cfg.nodes, *count) {
                flags[k] = true;
            }
        }
    }
    flags
}

pub fn attack_plan(cfg: &ExperimentConfig, flags: Vec<bool>) -> AttackPlan {
    AttackPlan {
        flags,
        budget: cfg.budget,
        explainer_repeats: cfg.explainer_repeats,
        explainer_seed: rng::derive_seed(cfg.seed, &[tag::EXPLAINER]),
        risk: cfg.risk,
        reference: cfg.reference,
    }
}

/// Data, split, partition and (if needed) the poisoning shared by all arms.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let data = load_data(cfg)?;
    let (train, test) = train_test_split(&data, cfg.test_fraction, rng::derive_seed(cfg.seed, &[tag::SPLIT]))?;
    let nodes = partition(&train, cfg.nodes, cfg.scheme, rng::derive_seed(cfg.seed, &[tag::PARTITION]))?;
    let flags = malicious_flags(cfg);
    let attack = if cfg.arms.iter().any(|a| a.poisoned()) {
        Some(attack_federation(&nodes, &attack_plan(cfg, flags.clone()))?)
    } else {
        None
    };
    Ok(Prepared {
        train,
        test,
        nodes,
        flags,
        attack,
    })
}

/// Federation settings for `arm`.
pub fn arm_config(cfg: &ExperimentConfig, arm: Arm) -> FedConfig {
    FedConfig {
        defense_enabled: arm.defense(),
        ..cfg.fed.clone()
    }
}

/// Run one arm on the shared inputs.
pub fn run_arm(prepared: &Prepared, cfg: &ExperimentConfig, arm: Arm) -> Result<FederationRun> {
    let inner = || {
        let datasets = if arm.poisoned() {
            prepared
                .attack
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("poisoned arm without an attack".into()))?
                .poisoned
                .clone()
        } else {
            prepared.nodes.clone()
        };
        let fed = arm_config(cfg, arm);
        let nodes = make_nodes(datasets, &prepared.flags, &fed)?;
        run_rounds(nodes, &prepared.test, &fed)
    };
    inner().map_err(|e| Error::Arm {
        arm: arm.name().to_string(),
        source: Box::new(e),
    })
}

#[derive(Debug, Clone)]
pub struct ArmRun {
    pub arm: Arm,
    pub run: FederationRun,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub prepared: Prepared,
    pub arms: Vec<ArmRun>,
}

impl ExperimentOutcome {
    pub fn arm(&self, arm: Arm) -> Option<&FederationRun> {
        self.arms.iter().find(|a| a.arm == arm).map(|a| &a.run)
    }

    /// `arm,final_accuracy` followed by one `evicted_node<id>` column per
    /// compromised node holding the eviction round or `never`.
    pub fn summary_csv(&self) -> String {
        let ids = self.prepared.malicious_ids();
        let mut out = String::from("arm,final_accuracy");
        for id in &ids {
            let _ = write!(out, ",evicted_node{id}");
        }
        out.push('\n');
        for a in &self.arms {
            let acc = a.run.final_accuracy().map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
            let _ = write!(out, "{},{acc}", a.arm);
            for &id in &ids {
                match a.run.eviction_round(id) {
                    Some(r) => {
                        let _ = write!(out, ",{r}");
                    }
                    None => out.push_str(",never"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// How the defense treated the compromised nodes in one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DefenseStats {
    /// Median final reputation over compromised nodes.
    pub malicious_median_reputation: f64,
    /// Minimum final reputation over honest nodes.
    pub honest_min_reputation: f64,
    pub malicious_evicted: usize,
    pub honest_evicted: usize,
}

/// Reputation and eviction statistics of `run` against ground-truth `flags`.
pub fn defense_stats(run: &FederationRun, flags: &[bool]) -> DefenseStats {
    let mut malicious: Vec<f64> = Vec::new();
    let mut honest_min = f64::INFINITY;
    let (mut malicious_evicted, mut honest_evicted) = (0, 0);
    for (node, &flag) in run.nodes.iter().zip(flags) {
        if flag {
            malicious.push(node.reputation);
            malicious_evicted += usize::from(!node.alive);
        } else {
            honest_min = honest_min.min(node.reputation);
            honest_evicted += usize::from(!node.alive);
        }
    }
    malicious.sort_by(f64::total_cmp);
    let median = match malicious.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => malicious[n / 2],
        n => 0.5 * (malicious[n / 2 - 1] + malicious[n / 2]),
    };
    DefenseStats {
        malicious_median_reputation: median,
        honest_min_reputation: honest_min,
        malicious_evicted,
        honest_evicted,
    }
}

/// Run every configured arm without touching the filesystem.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let prepared = prepare(cfg)?;
    let runs: Vec<FederationRun> = cfg
        .arms
        .par_iter()
        .map(|&arm| run_arm(&prepared, cfg, arm))
        .collect::<Result<_>>()?;
    let arms = cfg.arms.iter().zip(runs).map(|(&arm, run)| ArmRun { arm, run }).collect();
    Ok(ExperimentOutcome { prepared, arms })
}

/// Write telemetry, summary, manifest, plot and the resolved config into
/// `cfg.out`. Returns the written paths.
pub fn write_outputs(outcome: &ExperimentOutcome, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &cfg.out;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut telemetry = Vec::new();
    for a in &outcome.arms {
        let path = dir.join(telemetry_file(a.arm));
        save_telemetry(&a.run.history, &path)?;
        telemetry.push(path.clone());
        written.push(path);
    }
    let summary = dir.join(SUMMARY_FILE);
    std::fs::write(&summary, outcome.summary_csv()).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);
    if let Some(attack) = &outcome.prepared.attack {
        let path = dir.join(MANIFEST_FILE);
        save_manifest(&attack.manifest, &path)?;
        written.push(path);
    }
    let plot = dir.join(PLOT_FILE);
    emit_plot(&telemetry, &plot)?;
    written.push(plot);
    let config = dir.join(CONFIG_FILE);
    std::fs::write(&config, cfg.raw().to_text()).map_err(|e| Error::io(&config, e))?;
    written.push(config);

    if let Some(audit_dir) = &cfg.audit_dir {
        std::fs::create_dir_all(audit_dir).map_err(|e| Error::io(audit_dir, e))?;
        for a in &outcome.arms {
            append_audit_log(&a.run.audit, audit_dir.join(format!("{}.audit.log", a.arm)))?;
        }
    }
    Ok(written)
}

/// Simulate and write all outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let outcome = simulate(cfg)?;
    write_outputs(&outcome, cfg)?;
    Ok(outcome)
}

/// Paths of the telemetry files a run of `cfg` writes.
pub fn telemetry_paths(cfg: &ExperimentConfig) -> Vec<PathBuf> {
    cfg.arms.iter().map(|&a| Path::new(&cfg.out).join(telemetry_file(a))).collect()
}
