//! Binary linear SVM on the L2-regularized hinge objective
//! `lambda/2 ||w||^2 + (1/n) sum_i max(0, 1 - y_i (w . x_i + b))`,
//! minimized by full-batch subgradient descent.

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSeparator {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl SvmSeparator {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    /// `w . x + b`
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub epochs: usize,
    /// Fixed subgradient step size.
    pub learning_rate: f64,
    pub lambda: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.05,
            lambda: 0.01,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("svm epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("svm learning_rate must be > 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument("svm lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// `+1` for samples of `class`, `-1` otherwise.
pub fn one_vs_rest_signs(data: &Dataset, class: usize) -> Vec<f64> {
    data.labels().map(|l| if l == class { 1.0 } else { -1.0 }).collect()
}

fn check_problem(points: &[&[f64]], signs: &[f64]) -> Result<usize> {
    if points.len() != signs.len() {
        return Err(Error::LengthMismatch {
            what: "svm signs",
            expected: points.len(),
            found: signs.len(),
        });
    }
    let dim = points.first().map(|p| p.len()).ok_or(Error::EmptyDataset)?;
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::InvalidArgument("svm signs must be +1 or -1".into()));
    }
    Ok(dim)
}

pub fn hinge_objective(sep: &SvmSeparator, points: &[&[f64]], signs: &[f64], lambda: f64) -> f64 {
    let n = points.len() as f64;
    let reg = 0.5 * lambda * sep.weights.iter().map(|w| w * w).sum::<f64>();
    let hinge: f64 = points
        .iter()
        .zip(signs)
        .map(|(x, &y)| (1.0 - y * sep.decision(x)).max(0.0))
        .sum();
    reg + hinge / n
}

/// Subgradient `(d/dw, d/db)` of [`hinge_objective`]. Points exactly on the
/// kink contribute nothing.
pub fn hinge_subgradient(sep: &SvmSeparator, points: &[&[f64]], signs: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = points.len() as f64;
    let mut gw: Vec<f64> = sep.weights.iter().map(|w| lambda * w).collect();
    let mut gb = 0.0;
    for (x, &y) in points.iter().zip(signs) {
        if y * sep.decision(x) < 1.0 {
            for (g, v) in gw.iter_mut().zip(x.iter()) {
                *g -= y * v / n;
            }
            gb -= y / n;
        }
    }
    (gw, gb)
}

/// Train on `points` with `signs` in {-1, +1}. Returns the iterate with the
/// lowest objective seen, starting from the zero separator.
pub fn train_binary_svm(points: &[&[f64]], signs: &[f64], cfg: &SvmConfig) -> Result<SvmSeparator> {
    train_binary_svm_traced(points, signs, cfg).map(|(sep, _)| sep)
}

/// As [`train_binary_svm`], also returning the objective after each epoch
/// (index 0 is the zero separator).
pub fn train_binary_svm_traced(points: &[&[f64]], signs: &[f64], cfg: &SvmConfig) -> Result<(SvmSeparator, Vec<f64>)> {
    cfg.validate()?;
    let dim = check_problem(points, signs)?;
    let has_pos = signs.iter().any(|&s| s > 0.0);
    let has_neg = signs.iter().any(|&s| s < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::SingleClass);
    }

    let mut current = SvmSeparator::zeros(dim);
    let mut best = current.clone();
    let mut best_obj = hinge_objective(&current, points, signs, cfg.lambda);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(best_obj);
    for _ in 0..cfg.epochs {
        let (gw, gb) = hinge_subgradient(&current, points, signs, cfg.lambda);
        for (w, g) in current.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        current.bias -= cfg.learning_rate * gb;
        let obj = hinge_objective(&current, points, signs, cfg.lambda);
        trace.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best = current.clone();
        }
    }
    Ok((best, trace))
}

/// Indices with functional margin `y_i (w . x_i + b) <= 1 + tol`.
///
/// Never empty for non-empty input: if no point passes the margin test, the
/// single point closest to the hyperplane (lowest index on ties) is returned.
pub fn support_indices(sep: &SvmSeparator, points: &[&[f64]], signs: &[f64], tol: f64) -> Vec<usize> {
    let selected: Vec<usize> = points
        .iter()
        .zip(signs)
        .enumerate()
        .filter(|(_, (x, &y))| y * sep.decision(x) <= 1.0 + tol)
        .map(|(i, _)| i)
        .collect();
    if !selected.is_empty() || points.is_empty() {
        return selected;
    }
    let closest = points
        .iter()
        .enumerate()
        .map(|(i, x)| (i, sep.decision(x).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("non-empty");
    vec![closest]
}
