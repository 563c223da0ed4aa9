//! Generate Gaussian blobs, split them, and show how label skew grows as beta shrinks.

use reputation_fl::dataset::{generate_synthetic, label_tv_distance, partition, train_test_split, PartitionScheme, SyntheticSpec};

fn main() -> reputation_fl::Result<()> {
    let data = generate_synthetic(&SyntheticSpec::default())?;
    let (train, test) = train_test_split(&data, 0.2, 1)?;
    println!("{} samples, {} features, {} classes", data.len(), data.dim(), data.classes());
    println!("train {} / test {}, class counts {:?}", train.len(), test.len(), train.class_counts());

    for scheme in [
        PartitionScheme::Iid,
        PartitionScheme::LabelSkewed { beta: 10.0 },
        PartitionScheme::LabelSkewed { beta: 0.1 },
    ] {
        let nodes = partition(&train, 10, scheme, 7)?;
        let tv: f64 = nodes.iter().map(|n| label_tv_distance(n, &train)).sum::<f64>() / nodes.len() as f64;
        println!("{scheme:?}: mean label TV distance {tv:.3}");
    }
    Ok(())
}
