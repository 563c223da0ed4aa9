//! Deterministic simulator for risk-targeted data poisoning against
//! federated learning and a reputation-based aggregation defense.
//!
//! The pipeline:
//!
//! 1. [`dataset`] builds or loads a labeled feature table and deals it out to
//!    federation nodes.
//! 2. [`risk`] ranks every sample by how early it is peeled off as a support
//!    vector of one-vs-rest linear SVMs.
//! 3. [`xai`] scores features by permutation importance.
//! 4. [`attack`] flips labels and swaps the most/least important features on
//!    the highest-risk samples of compromised nodes.
//! 5. [`fedrep`] trains a softmax classifier with plain size-weighted
//!    averaging or with the reputation defense.
//! 6. [`experiment`] runs the paired arms from a [`config`] file and writes
//!    telemetry, a summary and a [`plot`].
//!
//! All randomness flows from a single master seed through keyed streams
//! ([`rng`]), so every output is reproducible byte for byte.

pub mod attack;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fedrep;
pub mod model;
pub mod plot;
pub mod risk;
pub mod rng;
pub mod xai;

pub use config::{parse_config, Arm, ExperimentConfig};
pub use dataset::{Dataset, Sample};
pub use error::{Error, Result};
pub use experiment::{run_experiment, simulate};
pub use fedrep::{run_rounds, FedConfig, ReputationRule};
pub use model::{LinearModel, TrainConfig};
pub use risk::{assess_risk, RiskAnnotatedDataset};
