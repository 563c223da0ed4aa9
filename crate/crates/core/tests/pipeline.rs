//! End-to-end behaviour of partitioning and the federated loop.

use reputation_fl::dataset::{generate_synthetic, label_tv_distance, partition, PartitionScheme, SyntheticSpec};
use reputation_fl::experiment::prepare;
use reputation_fl::fedrep::{make_nodes, run_rounds, FedConfig, ReputationRule};
use reputation_fl::model::{train_local, LinearModel, TrainConfig};
use reputation_fl::{Arm, ExperimentConfig};

fn blobs(seed: u64) -> reputation_fl::Dataset {
    generate_synthetic(&SyntheticSpec {
        n_per_class: 50,
        dim: 4,
        classes: 4,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

// Frozen from a first measurement: 0.5909 for beta 0.1 and 0.0339 for beta 100.
#[test]
fn small_beta_skews_labels_more() {
    let data = blobs(1);
    let mean_tv = |beta: f64| {
        let mut total = 0.0;
        for seed in 0..20u64 {
            let nodes = partition(&data, 5, PartitionScheme::LabelSkewed { beta }, seed).unwrap();
            total += nodes.iter().map(|n| label_tv_distance(n, &data)).sum::<f64>() / 5.0;
        }
        total / 20.0
    };
    let (skewed, even) = (mean_tv(0.1), mean_tv(100.0));
    assert!((skewed - 0.5909).abs() < 1e-4, "{skewed}");
    assert!((even - 0.0339).abs() < 1e-4, "{even}");
    assert!(skewed > even);
}

#[test]
fn single_node_fedavg_is_centralized_training() {
    let data = blobs(3);
    let cfg = FedConfig {
        rounds: 12,
        defense_enabled: false,
        train: TrainConfig {
            learning_rate: 0.7,
            reg_weight: 0.05,
            local_steps: 2,
        },
        ..FedConfig::default()
    };
    let nodes = make_nodes(vec![data.clone()], &[false], &cfg).unwrap();
    let run = run_rounds(nodes, &data, &cfg).unwrap();
    let mut central = LinearModel::zeros(4, 4);
    for global in &run.trajectory {
        central = train_local(&central, &data, &cfg.train).unwrap();
        assert_eq!(&central, global);
    }
}

#[test]
fn clean_federation_learns_with_and_without_defense() {
    let cfg = ExperimentConfig::default();
    let prepared = prepare(&cfg.with("arms", "clean-fedavg,clean-defense").unwrap()).unwrap();
    for defense in [false, true] {
        let fed = FedConfig {
            defense_enabled: defense,
            ..cfg.fed.clone()
        };
        let nodes = make_nodes(prepared.nodes.clone(), &prepared.flags, &fed).unwrap();
        let run = run_rounds(nodes, &prepared.test, &fed).unwrap();
        assert!(run.final_accuracy().unwrap() > 0.85, "defense {defense}");
    }
}

#[test]
fn ground_truth_flags_do_not_change_the_run() {
    let cfg = ExperimentConfig::default();
    let prepared = prepare(&cfg).unwrap();
    let fed = reputation_fl::experiment::arm_config(&cfg, Arm::PoisonedDefense);
    let data = prepared.attack.unwrap().poisoned;
    let truth = make_nodes(data.clone(), &prepared.flags, &fed).unwrap();
    let inverted: Vec<bool> = prepared.flags.iter().map(|f| !f).collect();
    let lies = make_nodes(data, &inverted, &fed).unwrap();
    let a = run_rounds(truth, &prepared.test, &fed).unwrap();
    let b = run_rounds(lies, &prepared.test, &fed).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.trajectory, b.trajectory);
}

#[test]
fn evicted_nodes_never_reappear() {
    let cfg = ExperimentConfig::default();
    let prepared = prepare(&cfg).unwrap();
    let run = reputation_fl::experiment::run_arm(&prepared, &cfg, Arm::PoisonedDefense).unwrap();
    for record in &run.history {
        for n in record.nodes.iter().filter(|n| n.evicted) {
            assert!(!n.in_group);
            for later in run.history.iter().filter(|r| r.round > record.round) {
                assert!(later.nodes.iter().all(|m| m.node != n.node));
            }
        }
        for n in &record.nodes {
            assert!((0.0..=cfg.fed.r_init).contains(&n.reputation));
        }
    }
}

#[test]
fn corrected_reputations_never_rise() {
    let cfg = ExperimentConfig::default().with("fed.e_min", "0.2").unwrap();
    let prepared = prepare(&cfg).unwrap();
    let fed = FedConfig {
        rule: ReputationRule::Corrected,
        r_min: 0.0,
        ..reputation_fl::experiment::arm_config(&cfg, Arm::PoisonedDefense)
    };
    let nodes = make_nodes(prepared.attack.unwrap().poisoned, &prepared.flags, &fed).unwrap();
    let run = run_rounds(nodes, &prepared.test, &fed).unwrap();
    let mut last = vec![fed.r_init; cfg.nodes];
    for record in &run.history {
        for n in &record.nodes {
            assert!(n.reputation <= last[n.node - 1]);
            if n.contribution > fed.e_min {
                assert_eq!(n.reputation, last[n.node - 1]);
            }
            last[n.node - 1] = n.reputation;
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = ExperimentConfig::default().with("fed.rounds", "10").unwrap();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = serial.install(|| reputation_fl::simulate(&cfg).unwrap());
    let many = reputation_fl::simulate(&cfg).unwrap();
    assert_eq!(one.summary_csv(), many.summary_csv());
    for (a, b) in one.arms.iter().zip(&many.arms) {
        assert_eq!(a.run.history, b.run.history);
        assert_eq!(a.run.trajectory, b.run.trajectory);
    }
}
