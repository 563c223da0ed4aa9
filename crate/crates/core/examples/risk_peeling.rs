//! Rank samples by how close they sit to the decision boundaries.

use reputation_fl::dataset::{generate_synthetic, SyntheticSpec};
use reputation_fl::risk::{assess_risk, RiskConfig};

fn main() -> reputation_fl::Result<()> {
    let data = generate_synthetic(&SyntheticSpec {
        n_per_class: 40,
        class_separation: 2.5,
        ..SyntheticSpec::default()
    })?;
    let annotated = assess_risk(&data, &RiskConfig::default())?;
    let mut per_level = vec![0usize; annotated.levels()];
    for &r in annotated.ranks() {
        per_level[r - 1] += 1;
    }
    println!("{} samples peeled into {} levels", annotated.len(), annotated.levels());
    for (level, count) in per_level.iter().enumerate() {
        println!("  rank {:>2}: {count}", level + 1);
    }
    Ok(())
}
