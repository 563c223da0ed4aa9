//! Poisoned federation with and without reputation-based group selection.

use reputation_fl::experiment::{defense_stats, simulate};
use reputation_fl::{Arm, ExperimentConfig};

fn main() -> reputation_fl::Result<()> {
    let cfg = ExperimentConfig::default().with("arms", "clean-fedavg,poisoned-fedavg,poisoned-defense")?;
    let outcome = simulate(&cfg)?;
    println!("malicious nodes: {:?}", outcome.prepared.malicious_ids());
    for run in &outcome.arms {
        println!("{:<18} final accuracy {:.3}", run.arm.name(), run.run.final_accuracy().unwrap_or(f64::NAN));
    }
    let defended = outcome.arm(Arm::PoisonedDefense).expect("arm was configured");
    let stats = defense_stats(defended, &outcome.prepared.flags);
    println!("{stats:?}");
    for node in &defended.nodes {
        match defended.eviction_round(node.id) {
            Some(t) => println!("  node {} evicted in round {t}", node.id),
            None => println!("  node {} kept, reputation {:.3}", node.id, node.reputation),
        }
    }
    Ok(())
}
