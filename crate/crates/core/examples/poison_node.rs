//! Poison one node's highest-risk samples and list what changed.

use reputation_fl::attack::{poison_node, reference_model, Budget};
use reputation_fl::dataset::{generate_synthetic, SyntheticSpec};
use reputation_fl::model::TrainConfig;
use reputation_fl::risk::{assess_risk, RiskConfig};
use reputation_fl::xai::permutation_importance;

fn main() -> reputation_fl::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_per_class: 10,
        ..SyntheticSpec::default()
    })?;
    let annotated = assess_risk(&data, &RiskConfig::default())?;
    let model = reference_model(&data, &TrainConfig { learning_rate: 0.5, ..TrainConfig::default() })?;
    let report = permutation_importance(&model, &data, 5, 3)?;
    let (poisoned, manifest) = poison_node(&annotated, 1, true, Budget::Fraction(0.2), Some(&report))?;
    println!("poisoned {} of {} samples", manifest.len(), poisoned.len());
    for e in &manifest {
        println!(
            "  row {:>2} rank {}: label {} -> {}, swapped features {} and {}",
            e.sample_index,
            annotated.ranks()[e.sample_index],
            e.old_label,
            e.new_label,
            e.f_max + 1,
            e.f_min + 1
        );
    }
    Ok(())
}
