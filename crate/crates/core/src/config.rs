//! Experiment configuration: flat `key = value` lines.
//!
//! Blank lines and `#` comments are ignored. Keys are dotted (`fed.e_min`);
//! the part after the last dot may be used alone when it names exactly one
//! key (`e_min`), and is an error when it names several (`learning_rate`).
//! Unknown keys are errors. Every key has a default, listed in [`KEYS`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attack::Budget;
use crate::dataset::{PartitionScheme, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fedrep::{FedConfig, ReputationRule};
use crate::model::{SvmConfig, TrainConfig};
use crate::risk::RiskConfig;
use crate::rng::{self, tag};

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "1", "master seed; every random stream derives from it"),
    ("data.source", "synthetic", "synthetic | csv"),
    ("data.path", "", "CSV file when data.source = csv"),
    ("data.n_per_class", "125", "synthetic samples per class"),
    ("data.dim", "16", "synthetic feature count"),
    ("data.classes", "4", "synthetic class count"),
    ("data.separation", "4", "distance of each class mean from the origin"),
    ("data.sigma", "1", "per-feature Gaussian noise"),
    ("data.test_fraction", "0.2", "held-out share, stratified per class"),
    ("partition.nodes", "10", "number of federation nodes"),
    ("partition.scheme", "iid", "iid | skewed"),
    ("partition.beta", "0.5", "Dirichlet concentration for the skewed scheme"),
    ("attack.malicious", "3", "number of compromised nodes, drawn from the seed"),
    ("attack.nodes", "", "explicit comma-separated 1-based node ids; overrides attack.malicious"),
    ("attack.budget_fraction", "0.2", "share of each compromised node's samples to corrupt (rounded up)"),
    ("attack.budget", "", "fixed per-node sample count; overrides attack.budget_fraction"),
    ("attack.explainer_repeats", "5", "permutation repeats per feature"),
    ("attack.reference_learning_rate", "0.5", "step size of the attacker's reference model"),
    ("attack.reference_steps", "200", "gradient steps of the attacker's reference model"),
    ("attack.reference_reg_weight", "0.01", "L2 weight of the attacker's reference model"),
    ("risk.tol", "0.001", "margin slack when collecting support vectors"),
    ("risk.max_levels", "0", "cap on the number of risk ranks; 0 means none"),
    ("svm.epochs", "300", "subgradient epochs per one-vs-rest SVM"),
    ("svm.learning_rate", "0.05", "SVM step size"),
    ("svm.lambda", "0.01", "SVM L2 weight"),
    ("train.learning_rate", "10", "local step size"),
    ("train.reg_weight", "0.01", "local L2 weight"),
    ("train.local_steps", "1", "gradient steps per node per round"),
    ("fed.rounds", "30", "aggregation rounds"),
    ("fed.e_min", "0.01", "contribution threshold for joining the aggregation group"),
    ("fed.r_min", "0.2", "eviction threshold on reputation"),
    ("fed.r_init", "1", "initial and maximum reputation"),
    ("fed.reputation_rule", "corrected", "corrected | literal"),
    ("fed.init_scale", "0", "initial global weights uniform in [-s, s]; 0 gives zeros"),
    (
        "arms",
        "clean-fedavg,poisoned-fedavg,poisoned-defense,clean-defense",
        "comma-separated subset of the four arms",
    ),
    ("out", "out", "output directory"),
    ("audit_log", "", "directory for per-arm reputation audit logs; empty disables them"),
];

/// One experiment arm: clean or poisoned data, with or without the defense.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    CleanFedavg,
    PoisonedFedavg,
    PoisonedDefense,
    CleanDefense,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::CleanFedavg, Arm::PoisonedFedavg, Arm::PoisonedDefense, Arm::CleanDefense];

    pub fn name(self) -> &'static str {
        match self {
            Arm::CleanFedavg => "clean-fedavg",
            Arm::PoisonedFedavg => "poisoned-fedavg",
            Arm::PoisonedDefense => "poisoned-defense",
            Arm::CleanDefense => "clean-defense",
        }
    }

    pub fn poisoned(self) -> bool {
        matches!(self, Arm::PoisonedFedavg | Arm::PoisonedDefense)
    }

    pub fn defense(self) -> bool {
        matches!(self, Arm::PoisonedDefense | Arm::CleanDefense)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("arms", format!("unknown arm `{s}`")))
    }
}

/// Canonical key/value table, defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v, _)| (k, v.to_string())).collect(),
        }
    }
}

impl RawConfig {
    /// Canonical key for `key`: itself, or the single key it is a suffix of.
    fn resolve(key: &str, line: usize) -> Result<&'static str> {
        if let Some(&(k, _, _)) = KEYS.iter().find(|(k, _, _)| *k == key) {
            return Ok(k);
        }
        let matches: Vec<&'static str> = KEYS
            .iter()
            .map(|&(k, _, _)| k)
            .filter(|k| k.rsplit('.').next() == Some(key))
            .collect();
        match matches.as_slice() {
            [only] => Ok(only),
            [] => Err(Error::UnknownKey {
                line,
                key: key.to_string(),
            }),
            many => Err(Error::AmbiguousKey {
                line,
                key: key.to_string(),
                candidates: many.join(", "),
            }),
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Malformed {
                what: "config line",
                detail: format!("line {line_no}: expected `key = value`"),
            })?;
            let key = Self::resolve(key.trim(), line_no)?;
            raw.values.insert(key, value.trim().to_string());
        }
        Ok(raw)
    }

    /// Set one key, accepting the same short forms as the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = Self::resolve(key, 0)?;
        self.values.insert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    /// All keys in canonical form; parses back to the same table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            out.push_str(&format!("# {doc}\n{k} = {}\n", self.get(k)));
        }
        out
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}")))
    }

    fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.get(key).is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
}

/// Which nodes the attacker controls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaliciousNodes {
    /// This many nodes, drawn from the master seed.
    Count(usize),
    /// Explicit 1-based ids.
    Ids(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub test_fraction: f64,
    pub nodes: usize,
    pub scheme: PartitionScheme,
    pub malicious: MaliciousNodes,
    pub budget: Budget,
    pub explainer_repeats: usize,
    pub reference: TrainConfig,
    pub risk: RiskConfig,
    pub fed: FedConfig,
    pub arms: Vec<Arm>,
    pub out: PathBuf,
    pub audit_dir: Option<PathBuf>,
    raw: RawConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let seed: u64 = raw.parse("seed")?;
        let data = match raw.get("data.source") {
            "synthetic" => DataSource::Synthetic(SyntheticSpec {
                n_per_class: raw.parse("data.n_per_class")?,
                dim: raw.parse("data.dim")?,
                classes: raw.parse("data.classes")?,
                class_separation: raw.parse("data.separation")?,
                noise_sigma: raw.parse("data.sigma")?,
                seed: rng::derive_seed(seed, &[tag::SYNTHETIC]),
            }),
            "csv" => {
                let path = raw.get("data.path");
                if path.is_empty() {
                    return Err(Error::config("data.path", "required when data.source = csv"));
                }
                DataSource::Csv(PathBuf::from(path))
            }
            other => return Err(Error::config("data.source", format!("expected synthetic or csv, got `{other}`"))),
        };
        if let DataSource::Synthetic(spec) = &data {
            spec.validate().map_err(|e| Error::config("data", e.to_string()))?;
        }
        let test_fraction: f64 = raw.parse("data.test_fraction")?;
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::config("data.test_fraction", "must lie in (0, 1)"));
        }

        let nodes: usize = raw.parse("partition.nodes")?;
        if nodes < 1 {
            return Err(Error::config("partition.nodes", "must be >= 1"));
        }
        let scheme = match raw.get("partition.scheme") {
            "iid" => PartitionScheme::Iid,
            "skewed" => {
                let beta: f64 = raw.parse("partition.beta")?;
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::config("partition.beta", "must be > 0"));
                }
                PartitionScheme::LabelSkewed { beta }
            }
            other => {
                return Err(Error::config(
                    "partition.scheme",
                    format!("expected iid or skewed, got `{other}`"),
                ))
            }
        };

        let malicious = if raw.get("attack.nodes").is_empty() {
            let count: usize = raw.parse("attack.malicious")?;
            if count > nodes {
                return Err(Error::config("attack.malicious", format!("exceeds partition.nodes ({nodes})")));
            }
            MaliciousNodes::Count(count)
        } else {
            let mut ids = Vec::new();
            for part in raw.get("attack.nodes").split(',') {
                let id: usize = part
                    .trim()
                    .parse()
                    .map_err(|e| Error::config("attack.nodes", format!("`{}`: {e}", part.trim())))?;
                if id < 1 || id > nodes {
                    return Err(Error::config("attack.nodes", format!("node {id} outside 1..={nodes}")));
                }
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
            ids.sort_unstable();
            MaliciousNodes::Ids(ids)
        };
        let budget = match raw.optional::<usize>("attack.budget")? {
            Some(count) => Budget::Count(count),
            None => {
                let f: f64 = raw.parse("attack.budget_fraction")?;
                Budget::Fraction(f)
            }
        };
        budget
            .validate()
            .map_err(|e| Error::config("attack.budget_fraction", e.to_string()))?;
        let explainer_repeats: usize = raw.parse("attack.explainer_repeats")?;
        if explainer_repeats < 1 {
            return Err(Error::config("attack.explainer_repeats", "must be >= 1"));
        }
        let reference = TrainConfig {
            learning_rate: raw.parse("attack.reference_learning_rate")?,
            reg_weight: raw.parse("attack.reference_reg_weight")?,
            local_steps: raw.parse("attack.reference_steps")?,
        };
        reference
            .validate()
            .map_err(|e| Error::config("attack.reference_*", e.to_string()))?;

        let svm = SvmConfig {
            epochs: raw.parse("svm.epochs")?,
            learning_rate: raw.parse("svm.learning_rate")?,
            lambda: raw.parse("svm.lambda")?,
        };
        svm.validate().map_err(|e| Error::config("svm", e.to_string()))?;
        let tol: f64 = raw.parse("risk.tol")?;
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(Error::config("risk.tol", "must be >= 0"));
        }
        let max_levels: usize = raw.parse("risk.max_levels")?;
        let risk = RiskConfig {
            svm,
            tol,
            max_levels: (max_levels > 0).then_some(max_levels),
        };

        let train = TrainConfig {
            learning_rate: raw.parse("train.learning_rate")?,
            reg_weight: raw.parse("train.reg_weight")?,
            local_steps: raw.parse("train.local_steps")?,
        };
        train.validate().map_err(|e| Error::config("train", e.to_string()))?;
        let rule: ReputationRule = raw
            .get("fed.reputation_rule")
            .parse()
            .map_err(|e: Error| Error::config("fed.reputation_rule", e.to_string()))?;
        let fed = FedConfig {
            rounds: raw.parse("fed.rounds")?,
            train,
            e_min: raw.parse("fed.e_min")?,
            r_min: raw.parse("fed.r_min")?,
            r_init: raw.parse("fed.r_init")?,
            rule,
            defense_enabled: true,
            master_seed: seed,
            init_scale: raw.parse("fed.init_scale")?,
        };
        fed.validate()?;

        let mut arms = Vec::new();
        for name in raw.get("arms").split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let arm: Arm = name.parse()?;
            if !arms.contains(&arm) {
                arms.push(arm);
            }
        }
        if arms.is_empty() {
            return Err(Error::config("arms", "at least one arm is required"));
        }
        let out = raw.get("out");
        if out.is_empty() {
            return Err(Error::config("out", "must not be empty"));
        }
        let audit_dir = Some(raw.get("audit_log")).filter(|s| !s.is_empty()).map(PathBuf::from);

        Ok(Self {
            seed,
            data,
            test_fraction,
            nodes,
            scheme,
            malicious,
            budget,
            explainer_repeats,
            reference,
            risk,
            fed,
            arms,
            out: PathBuf::from(out),
            audit_dir,
            raw,
        })
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse_str(text)?)
    }

    /// The resolved table, defaults included.
    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    /// A copy with one key replaced and everything re-validated.
    pub fn with(&self, key: &str, value: impl Into<String>) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.set(key, value)?;
        Self::from_raw(raw)
    }

    pub fn with_seed(&self, seed: u64) -> Result<Self> {
        self.with("seed", seed.to_string())
    }

    pub fn with_out(&self, out: impl AsRef<Path>) -> Result<Self> {
        self.with("out", out.as_ref().to_string_lossy().into_owned())
    }
}

/// Read and validate a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_only_gives_defaults() {
        let cfg = ExperimentConfig::parse_str("seed=1\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.nodes, 10);
        assert_eq!(cfg.fed.rounds, 30);
        assert_eq!(cfg.budget, Budget::Fraction(0.2));
        assert_eq!(cfg.malicious, MaliciousNodes::Count(3));
        assert_eq!(cfg.arms, Arm::ALL.to_vec());
        assert_eq!(cfg.fed.rule, ReputationRule::Corrected);
    }

    #[test]
    fn negative_e_min_names_the_key() {
        let err = ExperimentConfig::parse_str("e_min=-0.1").unwrap_err();
        assert!(err.to_string().contains("e_min"), "{err}");
    }

    #[test]
    fn rule_enum_validation() {
        let cfg = ExperimentConfig::parse_str("reputation_rule=literal").unwrap();
        assert_eq!(cfg.fed.rule, ReputationRule::Literal);
        assert!(ExperimentConfig::parse_str("reputation_rule=bogus").is_err());
    }

    #[test]
    fn unknown_and_ambiguous_keys() {
        assert!(matches!(
            RawConfig::parse_str("\n\nbogus = 1"),
            Err(Error::UnknownKey { line: 3, .. })
        ));
        assert!(matches!(
            RawConfig::parse_str("learning_rate = 1"),
            Err(Error::AmbiguousKey { .. })
        ));
        assert!(RawConfig::parse_str("train.learning_rate = 0.3").is_ok());
    }

    #[test]
    fn type_mismatch_and_constraints() {
        assert!(ExperimentConfig::parse_str("fed.rounds = many").is_err());
        assert!(ExperimentConfig::parse_str("r_min = 1.0").is_err());
        assert!(ExperimentConfig::parse_str("arms = ").is_err());
        assert!(ExperimentConfig::parse_str("arms = clean-fedavg, nope").is_err());
        assert!(ExperimentConfig::parse_str("attack.nodes = 11").is_err());
        assert!(ExperimentConfig::parse_str("budget_fraction = 1.5").is_err());
        assert!(ExperimentConfig::parse_str("data.source = csv").is_err());
        assert!(ExperimentConfig::parse_str("novalue").is_err());
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = ExperimentConfig::parse_str("# header\n  fed.rounds = 5   # trailing\n\narms = clean-fedavg\n").unwrap();
        assert_eq!(cfg.fed.rounds, 5);
        assert_eq!(cfg.arms, vec![Arm::CleanFedavg]);
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = ExperimentConfig::parse_str("seed = 9\nattack.nodes = 4,2\nbudget = 3").unwrap();
        assert_eq!(cfg.malicious, MaliciousNodes::Ids(vec![2, 4]));
        assert_eq!(cfg.budget, Budget::Count(3));
        let again = ExperimentConfig::parse_str(&cfg.raw().to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn seed_override() {
        let cfg = ExperimentConfig::default().with_seed(42).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.fed.master_seed, 42);
    }
}
