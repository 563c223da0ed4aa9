//! Permutation importance of a trained linear model.

use reputation_fl::attack::reference_model;
use reputation_fl::dataset::{generate_synthetic, SyntheticSpec};
use reputation_fl::model::TrainConfig;
use reputation_fl::xai::permutation_importance;

fn main() -> reputation_fl::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        dim: 8,
        ..SyntheticSpec::default()
    })?;
    let train = TrainConfig {
        learning_rate: 0.5,
        ..TrainConfig::default()
    };
    let model = reference_model(&data, &train)?;
    let report = permutation_importance(&model, &data, 5, 42)?;
    println!("baseline accuracy {:.3}", report.baseline_accuracy);
    for (j, imp) in report.importances.iter().enumerate() {
        println!("  feature {:>2}: {imp:+.4}", j + 1);
    }
    let (hi, lo) = report.extreme_features();
    println!("most important {}, least important {}", hi + 1, lo + 1);
    Ok(())
}
