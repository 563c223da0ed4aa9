//! The SVM-XAI poisoning attacker.
//!
//! In every flagged node the attacker takes the `alpha` highest-risk samples
//! (smallest rank, then lowest index), moves each label to its cyclic
//! successor and exchanges the node's most and least important feature
//! values. Unflagged nodes pass through untouched.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{train_local, LinearModel, TrainConfig};
use crate::risk::{assess_risk, RiskAnnotatedDataset, RiskConfig};
use crate::rng;
use crate::xai::{permutation_importance, ImportanceReport};

/// Per-node attack budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Count(usize),
    /// Resolved per node as `ceil(fraction * |D_k|)`.
    Fraction(f64),
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Budget::Fraction(f) if !(0.0..=1.0).contains(&f) => Err(Error::InvalidArgument(format!(
                "budget fraction must lie in [0, 1], got {f}"
            ))),
            _ => Ok(()),
        }
    }

    /// Number of samples to corrupt in a node of `n` samples, clamped to `n`.
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            Budget::Count(a) => a.min(n),
            Budget::Fraction(f) => ((f * n as f64).ceil() as usize).min(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    /// `flags[k]` marks node `k` (0-based position) as compromised.
    pub flags: Vec<bool>,
    pub budget: Budget,
    pub explainer_repeats: usize,
    pub explainer_seed: u64,
    pub risk: RiskConfig,
    /// Training of the attacker's reference model on the node's clean data.
    pub reference: TrainConfig,
}

impl AttackPlan {
    pub fn new(flags: Vec<bool>) -> Self {
        Self {
            flags,
            budget: Budget::Fraction(0.2),
            explainer_repeats: 5,
            explainer_seed: 0,
            risk: RiskConfig::default(),
            reference: TrainConfig {
                learning_rate: 0.5,
                reg_weight: 0.01,
                local_steps: 200,
            },
        }
    }
}

/// One corrupted sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// 1-based node id.
    pub node: usize,
    /// 0-based row within the node's dataset.
    pub sample_index: usize,
    pub old_label: usize,
    pub new_label: usize,
    /// 0-based feature indices.
    pub f_max: usize,
    pub f_min: usize,
}

/// Cyclic successor `(y mod C) + 1`; never returns `y`.
pub fn flip_label(label: usize, classes: usize) -> Result<usize> {
    if label == 0 || label > classes {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(label % classes + 1)
}

/// Copy of `x` with entries `a` and `b` exchanged.
pub fn swap_features(x: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
    for idx in [a, b] {
        if idx >= x.len() {
            return Err(Error::FeatureOutOfRange {
                index: idx,
                dim: x.len(),
            });
        }
    }
    let mut out = x.to_vec();
    out.swap(a, b);
    Ok(out)
}

/// Indices of the `alpha` samples with the smallest rank, ties by index.
pub fn select_targets(ranks: &[usize], alpha: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by_key(|&i| (ranks[i], i));
    order.truncate(alpha);
    order.sort_unstable();
    order
}

/// Poison one node. `node` is the 1-based id recorded in the manifest.
pub fn poison_node(
    annotated: &RiskAnnotatedDataset,
    node: usize,
    flagged: bool,
    budget: Budget,
    report: Option<&ImportanceReport>,
) -> Result<(Dataset, Vec<ManifestEntry>)> {
    budget.validate()?;
    let data = annotated.data();
    let alpha = budget.resolve(data.len());
    if !flagged || alpha == 0 {
        return Ok((annotated.strip(), Vec::new()));
    }
    let report = report.ok_or_else(|| Error::InvalidArgument(format!("node {node}: flagged without an importance report")))?;
    if report.importances.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: report.importances.len(),
        });
    }
    let (f_max, f_min) = report.extreme_features();
    let mut samples: Vec<Sample> = data.samples().to_vec();
    let mut manifest = Vec::with_capacity(alpha);
    for i in select_targets(annotated.ranks(), alpha) {
        let s = &mut samples[i];
        let new_label = flip_label(s.label, data.classes())?;
        manifest.push(ManifestEntry {
            node,
            sample_index: i,
            old_label: s.label,
            new_label,
            f_max,
            f_min,
        });
        s.label = new_label;
        s.features = swap_features(&s.features, f_max, f_min)?;
    }
    Ok((Dataset::new(samples, data.dim(), data.classes())?, manifest))
}

/// Apply [`poison_node`] to every node; `reports[k]` is required for flagged
/// nodes only.
pub fn poison_federation(
    annotated: &[RiskAnnotatedDataset],
    plan: &AttackPlan,
    reports: &[Option<ImportanceReport>],
) -> Result<(Vec<Dataset>, Vec<ManifestEntry>)> {
    if annotated.len() != plan.flags.len() {
        return Err(Error::LengthMismatch {
            what: "attack flags",
            expected: annotated.len(),
            found: plan.flags.len(),
        });
    }
    if reports.len() != annotated.len() {
        return Err(Error::LengthMismatch {
            what: "importance reports",
            expected: annotated.len(),
            found: reports.len(),
        });
    }
    let results: Vec<(Dataset, Vec<ManifestEntry>)> = annotated
        .par_iter()
        .zip(reports.par_iter())
        .enumerate()
        .map(|(k, (a, r))| poison_node(a, k + 1, plan.flags[k], plan.budget, r.as_ref()))
        .collect::<Result<_>>()?;
    let mut nodes = Vec::with_capacity(results.len());
    let mut manifest = Vec::new();
    for (d, m) in results {
        nodes.push(d);
        manifest.extend(m);
    }
    Ok((nodes, manifest))
}

/// Everything the attacker computed for one federation.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub poisoned: Vec<Dataset>,
    pub manifest: Vec<ManifestEntry>,
    /// Risk annotations of flagged nodes.
    pub annotated: Vec<Option<RiskAnnotatedDataset>>,
    pub reports: Vec<Option<ImportanceReport>>,
}

/// The attacker's reference model: trained on the node's clean local data.
pub fn reference_model(data: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    train_local(&LinearModel::zeros(data.classes(), data.dim()), data, cfg)
}

/// Full attack on clean node datasets: risk assessment, explanation and
/// poisoning for every flagged node.
pub fn attack_federation(nodes: &[Dataset], plan: &AttackPlan) -> Result<AttackOutcome> {
    if nodes.len() != plan.flags.len() {
        return Err(Error::LengthMismatch {
            what: "attack flags",
            expected: nodes.len(),
            found: plan.flags.len(),
        });
    }
    plan.budget.validate()?;
    plan.reference.validate()?;
    let prepared: Vec<(RiskAnnotatedDataset, Option<ImportanceReport>, bool)> = nodes
        .par_iter()
        .enumerate()
        .map(|(k, data)| {
            if !plan.flags[k] {
                let ranks = vec![1; data.len()];
                return Ok((RiskAnnotatedDataset::new(data.clone(), ranks)?, None, false));
            }
            let annotated = assess_risk(data, &plan.risk)?;
            let model = reference_model(data, &plan.reference)?;
            let seed = rng::derive_seed(plan.explainer_seed, &[k as u64 + 1]);
            let report = permutation_importance(&model, data, plan.explainer_repeats, seed)?;
            Ok((annotated, Some(report), true))
        })
        .collect::<Result<_>>()?;

    let annotated_all: Vec<RiskAnnotatedDataset> = prepared.iter().map(|p| p.0.clone()).collect();
    let reports: Vec<Option<ImportanceReport>> = prepared.iter().map(|p| p.1.clone()).collect();
    let (poisoned, manifest) = poison_federation(&annotated_all, plan, &reports)?;
    let annotated = prepared.into_iter().map(|(a, _, flagged)| flagged.then_some(a)).collect();
    Ok(AttackOutcome {
        poisoned,
        manifest,
        annotated,
        reports,
    })
}

/// CSV `node,sample_index,old_label,new_label,f_max,f_min`. Feature numbers
/// are written 1-based to match the `f1..fd` column names.
pub fn write_manifest<W: Write>(manifest: &[ManifestEntry], mut out: W) -> std::io::Result<()> {
    writeln!(out, "node,sample_index,old_label,new_label,f_max,f_min")?;
    for e in manifest {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.node,
            e.sample_index,
            e.old_label,
            e.new_label,
            e.f_max + 1,
            e.f_min + 1
        )?;
    }
    out.flush()
}

pub fn save_manifest(manifest: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(manifest, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;

    fn annotated(n: usize) -> RiskAnnotatedDataset {
        let samples = (0..n)
            .map(|i| Sample::new(vec![i as f64, 10.0 + i as f64, 20.0 + i as f64], i % 4 + 1))
            .collect();
        let d = Dataset::new(samples, 3, 4).unwrap();
        // ranks cycle 1..=5 so ties exist
        let ranks = (0..n).map(|i| i % 5 + 1).collect();
        RiskAnnotatedDataset::new(d, ranks).unwrap()
    }

    fn report() -> ImportanceReport {
        ImportanceReport {
            importances: vec![0.1, 0.4, -0.05],
            baseline_accuracy: 0.9,
            repeats: 1,
            seed: 0,
        }
    }

    #[test]
    fn flip_rule() {
        assert_eq!(flip_label(4, 4).unwrap(), 1);
        assert_eq!(flip_label(1, 4).unwrap(), 2);
        assert_eq!(flip_label(2, 4).unwrap(), 3);
        assert_eq!(flip_label(3, 4).unwrap(), 4);
        assert!(flip_label(0, 4).is_err());
        assert!(flip_label(5, 4).is_err());
    }

    #[test]
    fn flip_is_a_c_cycle() {
        for c in 2..8 {
            for y in 1..=c {
                assert_ne!(flip_label(y, c).unwrap(), y);
                let mut z = y;
                for _ in 0..c {
                    z = flip_label(z, c).unwrap();
                }
                assert_eq!(z, y);
            }
        }
    }

    #[test]
    fn swap_examples() {
        assert_eq!(swap_features(&[10.0, 20.0, 30.0], 0, 2).unwrap(), vec![30.0, 20.0, 10.0]);
        assert_eq!(swap_features(&[1.0, 2.0], 1, 1).unwrap(), vec![1.0, 2.0]);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(swap_features(&swap_features(&x, 0, 1).unwrap(), 0, 1).unwrap(), x.to_vec());
        assert!(matches!(swap_features(&x, 0, 3), Err(Error::FeatureOutOfRange { index: 3, dim: 3 })));
    }

    #[test]
    fn unflagged_and_zero_budget_pass_through() {
        let a = annotated(10);
        let (d, m) = poison_node(&a, 1, false, Budget::Fraction(0.5), None).unwrap();
        assert_eq!(d, a.strip());
        assert!(m.is_empty());
        let (d, m) = poison_node(&a, 1, true, Budget::Count(0), Some(&report())).unwrap();
        assert_eq!(d, a.strip());
        assert!(m.is_empty());
    }

    #[test]
    fn full_budget_changes_every_label() {
        let a = annotated(12);
        let (d, m) = poison_node(&a, 1, true, Budget::Count(100), Some(&report())).unwrap();
        assert_eq!(m.len(), 12);
        for (new, old) in d.iter().zip(a.data().iter()) {
            assert_ne!(new.label, old.label);
        }
    }

    #[test]
    fn fraction_budget_uses_ceiling() {
        assert_eq!(Budget::Fraction(0.2).resolve(50), 10);
        assert_eq!(Budget::Fraction(0.2).resolve(40), 8);
        assert_eq!(Budget::Fraction(0.2).resolve(32), 7);
        assert_eq!(Budget::Count(9).resolve(4), 4);
        assert!(Budget::Fraction(1.5).validate().is_err());
    }

    #[test]
    fn twenty_percent_of_fifty_modifies_ten() {
        let a = annotated(50);
        let (d, m) = poison_node(&a, 2, true, Budget::Fraction(0.2), Some(&report())).unwrap();
        let changed = d.iter().zip(a.data().iter()).filter(|(x, y)| x.label != y.label).count();
        assert_eq!(changed, 10);
        assert_eq!(m.len(), 10);
        assert!(m.iter().all(|e| e.node == 2 && e.f_max == 1 && e.f_min == 2));
    }

    #[test]
    fn targets_follow_rank_then_index() {
        let ranks = [3, 1, 2, 1, 3, 2];
        assert_eq!(select_targets(&ranks, 3), vec![1, 2, 3]);
        assert_eq!(select_targets(&ranks, 0), Vec::<usize>::new());
    }

    #[test]
    fn attacked_samples_keep_their_feature_multiset() {
        let a = annotated(20);
        let (d, m) = poison_node(&a, 1, true, Budget::Count(6), Some(&report())).unwrap();
        for e in &m {
            let mut before = a.data().samples()[e.sample_index].features.clone();
            let mut after = d.samples()[e.sample_index].features.clone();
            before.sort_by(f64::total_cmp);
            after.sort_by(f64::total_cmp);
            assert_eq!(before, after);
        }
    }

    #[test]
    fn federation_locality_and_accounting() {
        let nodes = vec![annotated(10), annotated(15), annotated(20)];
        let plan = AttackPlan {
            budget: Budget::Count(4),
            ..AttackPlan::new(vec![true, false, false])
        };
        let reports = vec![Some(report()), None, None];
        let (out, manifest) = poison_federation(&nodes, &plan, &reports).unwrap();
        assert_ne!(out[0], nodes[0].strip());
        assert_eq!(out[1], nodes[1].strip());
        assert_eq!(out[2], nodes[2].strip());
        assert_eq!(manifest.len(), 4);

        let plan = AttackPlan::new(vec![true, true]);
        assert!(poison_federation(&nodes, &plan, &reports).is_err());
    }

    #[test]
    fn flagged_node_without_report_errors() {
        assert!(poison_node(&annotated(5), 1, true, Budget::Count(1), None).is_err());
    }

    #[test]
    fn manifest_uses_one_based_features() {
        let m = vec![ManifestEntry {
            node: 3,
            sample_index: 7,
            old_label: 4,
            new_label: 1,
            f_max: 0,
            f_min: 5,
        }];
        let mut buf = Vec::new();
        write_manifest(&m, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "node,sample_index,old_label,new_label,f_max,f_min\n3,7,4,1,1,6\n"
        );
    }
}
