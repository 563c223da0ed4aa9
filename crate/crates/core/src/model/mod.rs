//! Classifiers: the softmax linear model trained by the federation and the
//! binary hinge-loss SVM used to peel support vectors.

mod linear;
mod svm;

pub use linear::{
    sgd_step, train_local, LinearModel, Prediction, TrainConfig, LOSS_PROBABILITY_FLOOR,
};
pub use svm::{
    hinge_objective, hinge_subgradient, one_vs_rest_signs, support_indices, train_binary_svm,
    train_binary_svm_traced, SvmConfig, SvmSeparator,
};
