//! Sweep config settings over several seeds and report how each arm fares.
//!
//! Each argument is `key=v1,v2,...`; every combination is run for seeds 1..=5.
//! Without arguments a small grid over the local learning rate and the
//! contribution threshold is used.
//!
//! `cargo run --release --example calibrate -- train.learning_rate=3,10 fed.r_min=0.2,0.3`

use reputation_fl::config::{Arm, ExperimentConfig};
use reputation_fl::experiment::{defense_stats, simulate};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("arguments are key=v1,v2,...")?;
        axes.push((k.to_string(), v.split(',').map(str::to_string).collect()));
    }
    if axes.is_empty() {
        axes.push(("train.learning_rate".into(), ["1", "3", "10"].map(String::from).to_vec()));
        axes.push(("fed.e_min".into(), ["0.01", "0.05"].map(String::from).to_vec()));
    }

    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in &axes {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }

    println!("setting | clean-avg pois-avg pois-def clean-def | mal-rep hon-min mal-evict hon-evict failed");
    for combo in combos {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in &combo {
            cfg = cfg.with(k, v.as_str())?;
        }
        let mut acc = [0.0; 4];
        let (mut mal_rep, mut hon_min, mut mal, mut hon, mut failed) = (0.0, 0.0, 0.0, 0.0, 0);
        for seed in SEEDS {
            // e.g. every node evicted
            let Ok(out) = simulate(&cfg.with_seed(seed)?) else {
                failed += 1;
                continue;
            };
            for (slot, arm) in Arm::ALL.iter().enumerate() {
                acc[slot] += out.arm(*arm).and_then(|r| r.final_accuracy()).unwrap_or(f64::NAN);
            }
            let run = out.arm(Arm::PoisonedDefense).ok_or("missing arm")?;
            let s = defense_stats(run, &out.prepared.flags);
            mal_rep += s.malicious_median_reputation;
            hon_min += s.honest_min_reputation;
            mal += s.malicious_evicted as f64;
            hon += s.honest_evicted as f64;
        }
        // averages over the seeds that completed
        let n = (SEEDS.len() - failed) as f64;
        let label: Vec<String> = combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{} | {:.4} {:.4} {:.4} {:.4} | {:.3} {:.3} {:.1} {:.1} {failed}",
            label.join(" "),
            acc[0] / n,
            acc[1] / n,
            acc[2] / n,
            acc[3] / n,
            mal_rep / n,
            hon_min / n,
            mal / n,
            hon / n,
        );
    }
    Ok(())
}
