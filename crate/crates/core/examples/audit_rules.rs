//! Compare the two reputation update rules and print their audit trail.

use reputation_fl::experiment::{prepare, run_arm};
use reputation_fl::fedrep::{update_reputation, ReputationRule};
use reputation_fl::{Arm, ExperimentConfig};

fn main() -> reputation_fl::Result<()> {
    println!("  e      literal  corrected   (r = 1, e_min = 0.1)");
    for e in [0.2, 0.1, 0.05, 0.0, -0.05, -0.2] {
        let lit = update_reputation(1.0, e, 0.1, 1.0, ReputationRule::Literal)?;
        let cor = update_reputation(1.0, e, 0.1, 1.0, ReputationRule::Corrected)?;
        println!("{e:>5.2}  {:>8.3}  {:>8.3}", lit.value, cor.value);
    }

    let cfg = ExperimentConfig::default()
        .with("fed.reputation_rule", "literal")?
        .with("fed.rounds", "5")?;
    let prepared = prepare(&cfg)?;
    let run = run_arm(&prepared, &cfg, Arm::PoisonedDefense)?;
    for entry in run.audit.iter().take(20) {
        println!("{entry}");
    }
    Ok(())
}
