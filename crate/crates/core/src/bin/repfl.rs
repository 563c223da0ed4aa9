//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use reputation_fl::attack::{poison_node, reference_model, save_manifest};
use reputation_fl::config::{parse_config, DataSource, ExperimentConfig};
use reputation_fl::dataset::{generate_synthetic, load_csv, save_csv};
use reputation_fl::experiment::{run_experiment, MANIFEST_FILE, PLOT_FILE};
use reputation_fl::plot::emit_plot;
use reputation_fl::risk::{assess_risk, load_annotated_csv, save_annotated_csv};
use reputation_fl::rng::{self, tag};
use reputation_fl::xai::permutation_importance;

#[derive(Parser)]
#[command(name = "repfl", version, about = "Risk-targeted poisoning and reputation-weighted federated learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed)?;
        }
        if let Some(out) = &self.out {
            cfg = cfg.with_out(out)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset to <out>/dataset.csv.
    Generate(#[command(flatten)] Common),
    /// Annotate a dataset CSV with risk ranks; writes <out>/annotated.csv.
    AssessRisk {
        /// Dataset CSV.
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Poison one node's annotated CSV; writes <out>/poisoned.csv,
    /// <out>/poison_manifest.csv and <out>/importance.csv.
    Attack {
        /// Risk-annotated CSV.
        input: PathBuf,
        /// 1-based node id recorded in the manifest.
        #[arg(long, default_value_t = 1)]
        node: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full experiment.
    Run(#[command(flatten)] Common),
    /// Chart telemetry CSVs; writes <out>/accuracy.svg.
    Plot {
        /// Telemetry CSVs, one per arm.
        #[arg(required = true)]
        telemetry: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(&cfg.out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.load()?;
            let DataSource::Synthetic(spec) = &cfg.data else {
                anyhow::bail!("generate needs data.source = synthetic");
            };
            let data = generate_synthetic(spec)?;
            let path = out_dir(&cfg)?.join("dataset.csv");
            save_csv(&data, &path)?;
            println!("wrote {} samples to {}", data.len(), path.display());
        }
        Command::AssessRisk { input, common } => {
            let cfg = common.load()?;
            let data = load_csv(&input)?;
            let annotated = assess_risk(&data, &cfg.risk)?;
            let path = out_dir(&cfg)?.join("annotated.csv");
            save_annotated_csv(&annotated, &path)?;
            println!("{} samples in {} risk ranks -> {}", annotated.len(), annotated.levels(), path.display());
        }
        Command::Attack { input, node, common } => {
            let cfg = common.load()?;
            anyhow::ensure!(node >= 1, "--node is 1-based");
            let annotated = load_annotated_csv(&input)?;
            let model = reference_model(annotated.data(), &cfg.reference)?;
            let seed = rng::derive_seed(rng::derive_seed(cfg.seed, &[tag::EXPLAINER]), &[node as u64]);
            let report = permutation_importance(&model, annotated.data(), cfg.explainer_repeats, seed)?;
            let (poisoned, manifest) = poison_node(&annotated, node, true, cfg.budget, Some(&report))?;
            let dir = out_dir(&cfg)?;
            save_csv(&poisoned, dir.join("poisoned.csv"))?;
            save_manifest(&manifest, dir.join(MANIFEST_FILE))?;
            report.save_csv(dir.join("importance.csv"))?;
            println!("corrupted {} of {} samples -> {}", manifest.len(), poisoned.len(), dir.display());
        }
        Command::Run(common) => {
            let cfg = common.load()?;
            let outcome = run_experiment(&cfg)?;
            print!("{}", outcome.summary_csv());
            eprintln!("outputs in {}", cfg.out.display());
        }
        Command::Plot { telemetry, common } => {
            let cfg = common.load()?;
            let path = out_dir(&cfg)?.join(PLOT_FILE);
            emit_plot(&telemetry, &path)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their
/// parent's message.
fn one_line(e: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !line.contains(&msg) {
            if !line.is_empty() {
                line.push_str(": ");
            }
            line.push_str(&msg);
        }
    }
    line.replace('\n', " ")
}
