//! Federated training with plain size-weighted averaging and with the
//! reputation defense.
//!
//! Each round every alive node takes local gradient steps from the broadcast
//! model. Its contribution is the relative drop of its own mean loss:
//! `e = (L(w_global) - L(w_local)) / L(w_global)`. Under the defense, nodes
//! with `e > e_min` join the aggregation group, the others lose reputation,
//! and nodes whose reputation falls below `r_min` are evicted for good. The
//! group is averaged with weights proportional to reputation.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{train_local, LinearModel, TrainConfig};
use crate::rng::{self, tag};

/// How reputation reacts to a non-positive contribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReputationRule {
    /// `r - r * e / e_min`, which raises reputation when `e < 0`.
    Literal,
    /// `r * max(0, 1 + e / e_min)`.
    Corrected,
}

impl fmt::Display for ReputationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReputationRule::Literal => "literal",
            ReputationRule::Corrected => "corrected",
        })
    }
}

impl FromStr for ReputationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ReputationRule::Literal),
            "corrected" => Ok(ReputationRule::Corrected),
            other => Err(Error::InvalidArgument(format!(
                "unknown reputation rule `{other}` (expected literal or corrected)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub rounds: usize,
    pub train: TrainConfig,
    pub e_min: f64,
    pub r_min: f64,
    pub r_init: f64,
    pub rule: ReputationRule,
    pub defense_enabled: bool,
    pub master_seed: u64,
    /// Initial global weights are uniform in `[-init_scale, init_scale]`;
    /// zero gives the all-zero model.
    pub init_scale: f64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            train: TrainConfig::default(),
            e_min: 0.01,
            r_min: 0.2,
            r_init: 1.0,
            rule: ReputationRule::Corrected,
            defense_enabled: true,
            master_seed: 1,
            init_scale: 0.0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.e_min > 0.0 && self.e_min <= 1.0) {
            return Err(Error::config("fed.e_min", format!("must lie in (0, 1], got {}", self.e_min)));
        }
        if !(self.r_init > 0.0 && self.r_init.is_finite()) {
            return Err(Error::config("fed.r_init", format!("must be > 0, got {}", self.r_init)));
        }
        if !(self.r_min >= 0.0 && self.r_min < self.r_init) {
            return Err(Error::config(
                "fed.r_min",
                format!("must satisfy 0 <= r_min < r_init, got {} (r_init {})", self.r_min, self.r_init),
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::config("fed.init_scale", "must be >= 0"));
        }
        Ok(())
    }
}

/// One federation participant.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// 1-based id.
    pub id: usize,
    pub data: Dataset,
    pub local_model: LinearModel,
    pub reputation: f64,
    /// Ground truth for reporting only; the defense never looks at it.
    pub malicious: bool,
    pub alive: bool,
}

impl NodeState {
    pub fn new(id: usize, data: Dataset, classes: usize, malicious: bool, r_init: f64) -> Self {
        let local_model = LinearModel::zeros(classes, data.dim());
        Self {
            id,
            data,
            local_model,
            reputation: r_init,
            malicious,
            alive: true,
        }
    }
}

/// Build node states for datasets, ids `1..=K`.
pub fn make_nodes(datasets: Vec<Dataset>, malicious: &[bool], cfg: &FedConfig) -> Result<Vec<NodeState>> {
    if datasets.len() != malicious.len() {
        return Err(Error::LengthMismatch {
            what: "malicious flags",
            expected: datasets.len(),
            found: malicious.len(),
        });
    }
    let classes = datasets.iter().map(Dataset::classes).max().unwrap_or(1);
    Ok(datasets
        .into_iter()
        .zip(malicious)
        .enumerate()
        .map(|(k, (d, &m))| NodeState::new(k + 1, d, classes, m, cfg.r_init))
        .collect())
}

/// Per-node telemetry for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRound {
    pub node: usize,
    pub contribution: f64,
    /// Reputation after this round's update.
    pub reputation: f64,
    pub in_group: bool,
    pub evicted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// Nodes alive at the start of the round, in id order.
    pub nodes: Vec<NodeRound>,
    pub global_accuracy: f64,
    /// Size-weighted mean loss of the new global model over the round's
    /// participants.
    pub global_loss: f64,
    /// Defense round with no usable group: the global model was carried over.
    pub empty_group: bool,
}

/// One reputation update, as written to the audit log.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub round: usize,
    pub node: usize,
    pub contribution: f64,
    pub r_old: f64,
    /// Value produced by the rule before clamping to `[0, r_init]`.
    pub r_new: f64,
    pub rule: ReputationRule,
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t={} node={} e={} r_old={} r_new={} rule={}",
            self.round, self.node, self.contribution, self.r_old, self.r_new, self.rule
        )
    }
}

/// Result of a reputation update: the rule's raw output and the stored,
/// clamped value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReputationUpdate {
    pub raw: f64,
    pub value: f64,
}

/// `cfg.local_steps` gradient steps from `global` on the node's data.
pub fn local_update(global: &LinearModel, node: &NodeState, cfg: &TrainConfig) -> Result<LinearModel> {
    if !node.alive {
        return Err(Error::InvalidArgument(format!("node {} has been evicted", node.id)));
    }
    train_local(global, &node.data, cfg)
}

/// Relative reduction of the node's own mean loss going from `before` to
/// `after`.
pub fn contribution(node: &NodeState, before: &LinearModel, after: &LinearModel) -> Result<f64> {
    relative_improvement(before.mean_loss(&node.data)?, after.mean_loss(&node.data)?)
}

/// `(loss_before - loss_after) / loss_before`.
pub fn relative_improvement(loss_before: f64, loss_after: f64) -> Result<f64> {
    if !(loss_before > 0.0) {
        return Err(Error::DegenerateLoss);
    }
    Ok((loss_before - loss_after) / loss_before)
}

/// Reputation after a round with contribution `e`.
pub fn update_reputation(r: f64, e: f64, e_min: f64, r_init: f64, rule: ReputationRule) -> Result<ReputationUpdate> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("reputation must be >= 0, got {r}")));
    }
    if !(e_min > 0.0) {
        return Err(Error::InvalidArgument(format!("e_min must be > 0, got {e_min}")));
    }
    let raw = if e > e_min {
        r
    } else if e > 0.0 {
        r * (e_min - e) / e_min
    } else {
        match rule {
            ReputationRule::Literal => r - r * e / e_min,
            ReputationRule::Corrected => r * (1.0 + e / e_min).max(0.0),
        }
    };
    Ok(ReputationUpdate {
        raw,
        value: raw.clamp(0.0, r_init),
    })
}

/// Group membership decided in one defense round (1-based node ids).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupSelection {
    pub group: Vec<usize>,
    pub evictions: Vec<usize>,
}

/// Sort alive nodes into the aggregation group, update the reputation of the
/// rest and evict those that fall below `r_min`.
///
/// `contributions[i]` belongs to `nodes[i]` and must be `Some` for every
/// alive node.
pub fn select_group(
    nodes: &mut [NodeState],
    contributions: &[Option<f64>],
    cfg: &FedConfig,
    round: usize,
    audit: &mut Vec<AuditEntry>,
) -> Result<GroupSelection> {
    if contributions.len() != nodes.len() {
        return Err(Error::LengthMismatch {
            what: "contributions",
            expected: nodes.len(),
            found: contributions.len(),
        });
    }
    let mut selection = GroupSelection::default();
    for (node, e) in nodes.iter_mut().zip(contributions) {
        if !node.alive {
            continue;
        }
        let e = e.ok_or_else(|| Error::InvalidArgument(format!("missing contribution for node {}", node.id)))?;
        if e > cfg.e_min {
            selection.group.push(node.id);
        } else {
            let update = update_reputation(node.reputation, e, cfg.e_min, cfg.r_init, cfg.rule)?;
            audit.push(AuditEntry {
                round,
                node: node.id,
                contribution: e,
                r_old: node.reputation,
                r_new: update.raw,
                rule: cfg.rule,
            });
            node.reputation = update.value;
        }
        if node.reputation < cfg.r_min {
            node.alive = false;
            selection.evictions.push(node.id);
        }
    }
    Ok(selection)
}

/// `anchor + sum_k w_k (m_k - anchor)` with `anchor = models[0]`; identical
/// inputs come back bit-for-bit.
fn weighted_average(models: &[&LinearModel], weights: &[f64]) -> Result<LinearModel> {
    let first = *models.first().ok_or(Error::EmptyGroup)?;
    if let Some(m) = models.iter().find(|m| !m.same_shape(first)) {
        return Err(Error::DimensionMismatch {
            expected: first.classes() * first.dim(),
            found: m.classes() * m.dim(),
        });
    }
    let mut out = first.clone();
    for (m, &w) in models.iter().zip(weights).skip(1) {
        for ((o, &v), &a) in out.params_mut().zip(m.params()).zip(first.params()) {
            *o += w * (v - a);
        }
    }
    Ok(out)
}

fn normalized(raw: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::EmptyGroup);
    }
    Ok(raw.iter().map(|v| v / total).collect())
}

/// Aggregation weights `r_k / sum_G r`.
pub fn reputation_weights(reputations: &[f64]) -> Result<Vec<f64>> {
    if reputations.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::InvalidArgument("reputations must be >= 0".into()));
    }
    normalized(reputations)
}

/// Aggregation weights `S_k / S`.
pub fn size_weights(sizes: &[usize]) -> Result<Vec<f64>> {
    normalized(&sizes.iter().map(|&s| s as f64).collect::<Vec<_>>())
}

/// Reputation-weighted average of the group's local models.
pub fn aggregate_reputation(models: &[&LinearModel], reputations: &[f64]) -> Result<LinearModel> {
    if models.len() != reputations.len() {
        return Err(Error::LengthMismatch {
            what: "reputations",
            expected: models.len(),
            found: reputations.len(),
        });
    }
    if models.is_empty() {
        return Err(Error::EmptyGroup);
    }
    weighted_average(models, &reputation_weights(reputations)?)
}

/// Dataset-size-weighted average of local models.
pub fn aggregate_fedavg(models: &[&LinearModel], sizes: &[usize]) -> Result<LinearModel> {
    if models.len() != sizes.len() {
        return Err(Error::LengthMismatch {
            what: "dataset sizes",
            expected: models.len(),
            found: sizes.len(),
        });
    }
    if models.is_empty() {
        return Err(Error::InvalidArgument("fedavg needs at least one model".into()));
    }
    weighted_average(models, &size_weights(sizes)?)
}

/// `sum_k (S_k / S) * mean_loss_k`, skipping empty nodes.
pub fn global_loss(model: &LinearModel, datasets: &[&Dataset]) -> Result<f64> {
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut loss = 0.0;
    for d in datasets.iter().filter(|d| !d.is_empty()) {
        loss += d.len() as f64 / total as f64 * model.mean_loss(d)?;
    }
    Ok(loss)
}

/// Output of [`run_rounds`].
#[derive(Debug, Clone)]
pub struct FederationRun {
    pub history: Vec<RoundRecord>,
    pub global: LinearModel,
    /// Global model after each round.
    pub trajectory: Vec<LinearModel>,
    pub audit: Vec<AuditEntry>,
    pub nodes: Vec<NodeState>,
}

impl FederationRun {
    /// Round in which node `id` was evicted, if it was.
    pub fn eviction_round(&self, id: usize) -> Option<usize> {
        self.history
            .iter()
            .find_map(|r| r.nodes.iter().any(|n| n.node == id && n.evicted).then_some(r.round))
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.history.last().map(|r| r.global_accuracy)
    }
}

/// Round-by-round driver.
#[derive(Debug, Clone)]
pub struct Federation {
    cfg: FedConfig,
    nodes: Vec<NodeState>,
    global: LinearModel,
    round: usize,
    audit: Vec<AuditEntry>,
}

impl Federation {
    pub fn new(nodes: Vec<NodeState>, cfg: FedConfig) -> Result<Self> {
        cfg.validate()?;
        let first = nodes
            .first()
            .ok_or_else(|| Error::InvalidArgument("federation needs at least one node".into()))?;
        let (classes, dim) = (first.local_model.classes(), first.data.dim());
        if let Some(n) = nodes.iter().find(|n| n.data.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: n.data.dim(),
            });
        }
        let global = if cfg.init_scale > 0.0 {
            let mut rng = rng::stream(cfg.master_seed, &[tag::INIT]);
            let mut m = LinearModel::zeros(classes, dim);
            for p in m.params_mut() {
                *p = rng.random_range(-cfg.init_scale..=cfg.init_scale);
            }
            m
        } else {
            LinearModel::zeros(classes, dim)
        };
        Ok(Self {
            cfg,
            nodes,
            global,
            round: 0,
            audit: Vec::new(),
        })
    }

    pub fn global(&self) -> &LinearModel {
        &self.global
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn config(&self) -> &FedConfig {
        &self.cfg
    }

    /// Rounds completed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    /// Swap the local dataset of node `id`.
    pub fn replace_data(&mut self, id: usize, data: Dataset) -> Result<()> {
        let node = self
            .nodes
            .iter_mut()
            .find(|n| n.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {id}")))?;
        if data.dim() != node.data.dim() {
            return Err(Error::DimensionMismatch {
                expected: node.data.dim(),
                found: data.dim(),
            });
        }
        node.data = data;
        Ok(())
    }

    /// Run one round and evaluate the new global model on `test`.
    pub fn step(&mut self, test: &Dataset) -> Result<RoundRecord> {
        let round = self.round + 1;
        let participants: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i].alive).collect();
        if participants.is_empty() {
            return Err(Error::NoAliveNodes { round });
        }

        let global = &self.global;
        let train = &self.cfg.train;
        let updates: Vec<(usize, LinearModel, f64)> = participants
            .par_iter()
            .map(|&i| {
                let node = &self.nodes[i];
                let local = local_update(global, node, train)?;
                let e = contribution(node, global, &local)?;
                Ok((i, local, e))
            })
            .collect::<Result<_>>()?;

        let mut contributions = vec![None; self.nodes.len()];
        for (i, local, e) in updates {
            self.nodes[i].local_model = local;
            contributions[i] = Some(e);
        }

        let mut empty_group = false;
        let (in_group, evicted): (Vec<usize>, Vec<usize>) = if self.cfg.defense_enabled {
            let selection = select_group(&mut self.nodes, &contributions, &self.cfg, round, &mut self.audit)?;
            let members: Vec<&NodeState> = self
                .nodes
                .iter()
                .filter(|n| selection.group.contains(&n.id))
                .collect();
            let models: Vec<&LinearModel> = members.iter().map(|n| &n.local_model).collect();
            let reputations: Vec<f64> = members.iter().map(|n| n.reputation).collect();
            match aggregate_reputation(&models, &reputations) {
                Ok(next) => self.global = next,
                Err(Error::EmptyGroup) => empty_group = true,
                Err(e) => return Err(e),
            }
            (selection.group, selection.evictions)
        } else {
            let models: Vec<&LinearModel> = participants.iter().map(|&i| &self.nodes[i].local_model).collect();
            let sizes: Vec<usize> = participants.iter().map(|&i| self.nodes[i].data.len()).collect();
            self.global = aggregate_fedavg(&models, &sizes)?;
            (participants.iter().map(|&i| self.nodes[i].id).collect(), Vec::new())
        };

        let node_rows = participants
            .iter()
            .map(|&i| {
                let n = &self.nodes[i];
                NodeRound {
                    node: n.id,
                    contribution: contributions[i].expect("participant has a contribution"),
                    reputation: n.reputation,
                    in_group: !empty_group && in_group.contains(&n.id),
                    evicted: evicted.contains(&n.id),
                }
            })
            .collect();
        let datasets: Vec<&Dataset> = participants.iter().map(|&i| &self.nodes[i].data).collect();
        let record = RoundRecord {
            round,
            nodes: node_rows,
            global_accuracy: self.global.accuracy(test)?,
            global_loss: global_loss(&self.global, &datasets)?,
            empty_group,
        };
        self.round = round;
        Ok(record)
    }

    pub fn into_parts(self) -> (LinearModel, Vec<NodeState>, Vec<AuditEntry>) {
        (self.global, self.nodes, self.audit)
    }
}

/// Run `cfg.rounds` rounds from the initial global model.
pub fn run_rounds(nodes: Vec<NodeState>, test: &Dataset, cfg: &FedConfig) -> Result<FederationRun> {
    let mut fed = Federation::new(nodes, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.rounds);
    let mut trajectory = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        history.push(fed.step(test)?);
        trajectory.push(fed.global().clone());
    }
    let (global, nodes, audit) = fed.into_parts();
    Ok(FederationRun {
        history,
        global,
        trajectory,
        audit,
        nodes,
    })
}

/// CSV `round,node,contribution,reputation,in_group,evicted,global_accuracy,global_loss`,
/// one row per participating node per round; booleans are `0`/`1`.
pub fn write_telemetry<W: Write>(history: &[RoundRecord], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "round,node,contribution,reputation,in_group,evicted,global_accuracy,global_loss"
    )?;
    for r in history {
        for n in &r.nodes {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.round,
                n.node,
                n.contribution,
                n.reputation,
                u8::from(n.in_group),
                u8::from(n.evicted),
                r.global_accuracy,
                r.global_loss
            )?;
        }
    }
    out.flush()
}

pub fn save_telemetry(history: &[RoundRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_telemetry(history, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn write_audit_log<W: Write>(entries: &[AuditEntry], mut out: W) -> std::io::Result<()> {
    for e in entries {
        writeln!(out, "{e}")?;
    }
    out.flush()
}

/// Append entries to the audit log at `path`, creating it if needed.
pub fn append_audit_log(entries: &[AuditEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    write_audit_log(entries, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, Sample, SyntheticSpec};

    fn tiny(seed: u64) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            n_per_class: 6,
            dim: 3,
            classes: 3,
            class_separation: 3.0,
            noise_sigma: 1.0,
            seed,
        })
        .unwrap()
    }

    fn node(id: usize, data: Dataset) -> NodeState {
        let classes = data.classes();
        NodeState::new(id, data, classes, false, 1.0)
    }

    #[test]
    fn local_update_without_gradient_is_identity() {
        // one class: softmax is constant 1, data gradient vanishes
        let d = Dataset::new(vec![Sample::new(vec![1.0, 2.0], 1)], 2, 1).unwrap();
        let n = node(1, d);
        let g = LinearModel::from_parts(1, 2, vec![0.3, -0.7], vec![0.1]).unwrap();
        let cfg = TrainConfig {
            reg_weight: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(local_update(&g, &n, &cfg).unwrap(), g);
    }

    #[test]
    fn local_update_single_step_equals_sgd_step() {
        let n = node(1, tiny(1));
        let g = LinearModel::zeros(3, 3);
        let cfg = TrainConfig::default();
        assert_eq!(
            local_update(&g, &n, &cfg).unwrap(),
            crate::model::sgd_step(&g, &n.data, &cfg).unwrap()
        );
        let twin = node(2, tiny(1));
        assert_eq!(local_update(&g, &n, &cfg).unwrap(), local_update(&g, &twin, &cfg).unwrap());
    }

    #[test]
    fn evicted_node_cannot_update() {
        let mut n = node(1, tiny(1));
        n.alive = false;
        assert!(local_update(&LinearModel::zeros(3, 3), &n, &TrainConfig::default()).is_err());
    }

    #[test]
    fn relative_improvement_examples() {
        assert_eq!(relative_improvement(1.0, 0.5).unwrap(), 0.5);
        assert!((relative_improvement(1.0, 1.2).unwrap() + 0.2).abs() < 1e-15);
        assert!(matches!(relative_improvement(0.0, 0.0), Err(Error::DegenerateLoss)));
    }

    #[test]
    fn contribution_identity_is_zero() {
        let n = node(1, tiny(2));
        let m = LinearModel::zeros(3, 3);
        assert_eq!(contribution(&n, &m, &m).unwrap(), 0.0);
    }

    #[test]
    fn contribution_positive_after_descent() {
        let n = node(1, tiny(2));
        let m = LinearModel::zeros(3, 3);
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let after = local_update(&m, &n, &cfg).unwrap();
        let e = contribution(&n, &m, &after).unwrap();
        assert!(e > 0.0 && e <= 1.0);
    }

    #[test]
    fn reputation_rule_examples() {
        let up = |r, e, rule| update_reputation(r, e, 0.1, 1.0, rule).unwrap();
        assert_eq!(up(1.0, 0.2, ReputationRule::Corrected).value, 1.0);
        assert_eq!(up(1.0, 0.05, ReputationRule::Corrected).value, 0.5);
        assert_eq!(up(1.0, 0.05, ReputationRule::Literal).value, 0.5);
        assert_eq!(up(0.8, -0.1, ReputationRule::Corrected).value, 0.0);
        let lit = up(0.8, -0.1, ReputationRule::Literal);
        assert!((lit.raw - 1.6).abs() < 1e-15);
        assert_eq!(lit.value, 1.0);
        assert!(update_reputation(-0.1, 0.0, 0.1, 1.0, ReputationRule::Corrected).is_err());
        assert!(update_reputation(1.0, 0.0, 0.0, 1.0, ReputationRule::Corrected).is_err());
    }

    #[test]
    fn rule_parses() {
        assert_eq!("literal".parse::<ReputationRule>().unwrap(), ReputationRule::Literal);
        assert_eq!("corrected".parse::<ReputationRule>().unwrap(), ReputationRule::Corrected);
        assert!("bogus".parse::<ReputationRule>().is_err());
    }

    #[test]
    fn group_selection_branches() {
        let cfg = FedConfig::default();
        let mut nodes = vec![node(1, tiny(1)), node(2, tiny(2)), node(3, tiny(3))];
        nodes[2].reputation = 0.25;
        let mut audit = Vec::new();
        let sel = select_group(&mut nodes, &[Some(0.5), Some(0.5), Some(-0.02)], &cfg, 4, &mut audit).unwrap();
        assert_eq!(sel.group, vec![1, 2]);
        assert_eq!(sel.evictions, vec![3]);
        assert!(!nodes[2].alive);
        assert_eq!(nodes[0].reputation, 1.0);
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].to_string(), "t=4 node=3 e=-0.02 r_old=0.25 r_new=0 rule=corrected");

        // evicted nodes are skipped afterwards
        let sel = select_group(&mut nodes, &[Some(0.5), Some(0.5), None], &cfg, 5, &mut audit).unwrap();
        assert_eq!(sel.group, vec![1, 2]);
        assert!(sel.evictions.is_empty());
    }

    #[test]
    fn aggregation_weights() {
        let a = LinearModel::from_parts(1, 2, vec![1.0, 2.0], vec![4.0]).unwrap();
        let b = LinearModel::from_parts(1, 2, vec![5.0, -2.0], vec![0.0]).unwrap();
        let w = aggregate_reputation(&[&a, &b], &[1.0, 3.0]).unwrap();
        assert_eq!(w.weights(), &[4.0, -1.0]);
        assert_eq!(w.bias(), &[1.0]);
        assert_eq!(reputation_weights(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(size_weights(&[10, 30]).unwrap(), vec![0.25, 0.75]);
        let avg = aggregate_fedavg(&[&a, &b], &[10, 10]).unwrap();
        assert_eq!(avg.weights(), &[3.0, 0.0]);
        assert_eq!(aggregate_reputation(&[&a], &[0.4]).unwrap(), a);
        assert_eq!(aggregate_fedavg(&[&a, &a, &a], &[3, 7, 11]).unwrap(), a);
        assert!(matches!(aggregate_reputation(&[], &[]), Err(Error::EmptyGroup)));
        assert!(matches!(aggregate_reputation(&[&a], &[0.0]), Err(Error::EmptyGroup)));
    }

    #[test]
    fn global_loss_matches_pooled_loss() {
        let a = tiny(1);
        let b = generate_synthetic(&SyntheticSpec {
            n_per_class: 2,
            dim: 3,
            classes: 3,
            class_separation: 3.0,
            noise_sigma: 1.0,
            seed: 9,
        })
        .unwrap();
        let m = LinearModel::from_parts(3, 3, vec![0.5, -0.1, 0.2, 0.0, 0.3, -0.4, 0.1, 0.1, 0.9], vec![0.1, 0.0, -0.2]).unwrap();
        let pooled = Dataset::concat(&[a.clone(), b.clone()]).unwrap();
        let fed = global_loss(&m, &[&a, &b]).unwrap();
        assert!((fed - m.mean_loss(&pooled).unwrap()).abs() < 1e-12);
        assert!((global_loss(&m, &[&a]).unwrap() - m.mean_loss(&a).unwrap()).abs() < 1e-15);
        assert!(global_loss(&m, &[]).is_err());
    }

    #[test]
    fn zero_rounds_returns_initial_model() {
        let cfg = FedConfig {
            rounds: 0,
            ..FedConfig::default()
        };
        let run = run_rounds(vec![node(1, tiny(1))], &tiny(5), &cfg).unwrap();
        assert!(run.history.is_empty());
        assert_eq!(run.global, LinearModel::zeros(3, 3));
    }

    #[test]
    fn empty_group_carries_model_over() {
        // e_min = 1 can never be exceeded
        let cfg = FedConfig {
            rounds: 2,
            e_min: 1.0,
            r_min: 0.0,
            ..FedConfig::default()
        };
        let run = run_rounds(vec![node(1, tiny(1)), node(2, tiny(2))], &tiny(5), &cfg).unwrap();
        assert!(run.history.iter().all(|r| r.empty_group));
        assert_eq!(run.global, LinearModel::zeros(3, 3));
        assert!(run.history.iter().flat_map(|r| &r.nodes).all(|n| !n.in_group));
    }

    #[test]
    fn all_nodes_evicted_is_an_error() {
        let cfg = FedConfig {
            rounds: 3,
            e_min: 1.0,
            r_min: 0.5,
            ..FedConfig::default()
        };
        let err = run_rounds(vec![node(1, tiny(1))], &tiny(5), &cfg).unwrap_err();
        assert!(matches!(err, Error::NoAliveNodes { round: 2 }), "{err}");
    }

    #[test]
    fn config_validation() {
        let bad = FedConfig {
            r_min: 1.0,
            ..FedConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FedConfig {
            e_min: -0.1,
            ..FedConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(FedConfig::default().validate().is_ok());
    }

    // The defense must not branch on ground truth: outside tests, this file
    // never reads the `malicious` field.
    #[test]
    fn defense_never_reads_malicious_flag() {
        let src = include_str!("fedrep.rs");
        let body = src.split("#[cfg(test)]").next().unwrap();
        assert!(!body.contains(".malicious"));
    }

    #[test]
    fn telemetry_format() {
        let history = vec![RoundRecord {
            round: 1,
            nodes: vec![NodeRound {
                node: 2,
                contribution: 0.5,
                reputation: 1.0,
                in_group: true,
                evicted: false,
            }],
            global_accuracy: 0.75,
            global_loss: 1.25,
            empty_group: false,
        }];
        let mut buf = Vec::new();
        write_telemetry(&history, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,node,contribution,reputation,in_group,evicted,global_accuracy,global_loss\n1,2,0.5,1,1,0,0.75,1.25\n"
        );
    }
}
