use std::fmt::Write as _;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Probabilities are floored here inside the loss so it stays finite.
pub const LOSS_PROBABILITY_FLOOR: f64 = 1e-12;

/// C-class linear classifier `softmax(W x + b)`.
///
/// `weights` is row-major `classes x dim`; row `c - 1` scores label `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Predicted 1-based label and the full probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub probabilities: Vec<f64>,
}

/// Local training hyperparameters. Steps are always full-batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Step size applied to the per-sample mean gradient. The default is
    /// large because one full-batch step per round is all a node takes.
    pub learning_rate: f64,
    /// Coefficient of the `0.5 * ||W||^2` penalty.
    pub reg_weight: f64,
    pub local_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 10.0,
            reg_weight: 0.01,
            local_steps: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return Err(Error::InvalidArgument("reg_weight must be >= 0".into()));
        }
        if self.local_steps < 1 {
            return Err(Error::InvalidArgument("local_steps must be >= 1".into()));
        }
        Ok(())
    }
}

impl LinearModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim {
            return Err(Error::LengthMismatch {
                what: "weights",
                expected: classes * dim,
                found: weights.len(),
            });
        }
        if bias.len() != classes {
            return Err(Error::LengthMismatch {
                what: "bias",
                expected: classes,
                found: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(Self {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// Weight row for label `label` (1-based).
    pub fn row(&self, label: usize) -> &[f64] {
        &self.weights[(label - 1) * self.dim..label * self.dim]
    }

    /// All parameters, weights first then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    pub fn same_shape(&self, other: &LinearModel) -> bool {
        self.classes == other.classes && self.dim == other.dim
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        if data.classes() > self.classes {
            return Err(Error::LabelOutOfRange {
                label: data.classes(),
                classes: self.classes,
            });
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, z) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.dim..(c + 1) * self.dim];
            *z = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut z = vec![0.0; self.classes];
        self.logits_into(x, &mut z);
        Ok(z)
    }

    /// Softmax probabilities and the argmax label; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        let mut z = self.logits(x)?;
        let label = argmax(&z) + 1;
        softmax_in_place(&mut z);
        Ok(Prediction {
            label,
            probabilities: z,
        })
    }

    fn predict_label(&self, x: &[f64], scratch: &mut [f64]) -> usize {
        self.logits_into(x, scratch);
        argmax(scratch) + 1
    }

    /// Mean cross-entropy of the true labels.
    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.check_data(data)?;
        Ok(self.total_loss(data) / data.len() as f64)
    }

    fn total_loss(&self, data: &Dataset) -> f64 {
        let cap = -LOSS_PROBABILITY_FLOOR.ln();
        let mut z = vec![0.0; self.classes];
        data.iter()
            .map(|s| {
                self.logits_into(&s.features, &mut z);
                // -log p_y = logsumexp(z) - z_y, written to stay positive as p_y -> 1
                let zy = z[s.label - 1];
                let tail: f64 = z
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != s.label - 1)
                    .map(|(_, &zc)| (zc - zy).exp())
                    .sum();
                let loss = if tail.is_finite() { tail.ln_1p() } else { f64::INFINITY };
                loss.min(cap)
            })
            .sum()
    }

    /// Fraction of samples whose predicted label equals the true label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: data.dim(),
            });
        }
        let mut z = vec![0.0; self.classes];
        let correct = data
            .iter()
            .filter(|s| self.predict_label(&s.features, &mut z) == s.label)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }

    /// Gradient of the summed (not averaged) cross-entropy over `data`, with
    /// the same shape as the model.
    pub fn data_gradient(&self, data: &Dataset) -> Result<LinearModel> {
        self.check_data(data)?;
        let mut grad = LinearModel::zeros(self.classes, self.dim);
        let mut p = vec![0.0; self.classes];
        for s in data {
            self.logits_into(&s.features, &mut p);
            softmax_in_place(&mut p);
            p[s.label - 1] -= 1.0;
            for (c, &pc) in p.iter().enumerate() {
                let row = &mut grad.weights[c * self.dim..(c + 1) * self.dim];
                for (g, &x) in row.iter_mut().zip(&s.features) {
                    *g += pc * x;
                }
                grad.bias[c] += pc;
            }
        }
        Ok(grad)
    }

    /// Text form: `dims C d`, C rows of d weights, one row of C biases.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dims {} {}", self.classes, self.dim);
        for c in 0..self.classes {
            let row: Vec<String> = self.weights[c * self.dim..(c + 1) * self.dim]
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let bias: Vec<String> = self.bias.iter().map(|v| format!("{v:.17e}")).collect();
        let _ = writeln!(out, "{}", bias.join(" "));
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let malformed = |detail: String| Error::Malformed {
            what: "model text",
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| malformed("missing header".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (classes, dim) = match parts.as_slice() {
            ["dims", c, d] => (
                c.parse::<usize>().map_err(|e| malformed(format!("class count: {e}")))?,
                d.parse::<usize>().map_err(|e| malformed(format!("dimension: {e}")))?,
            ),
            _ => return Err(malformed(format!("bad header `{header}`"))),
        };
        let parse_row = |line: Option<&str>, n: usize, what: &str| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| malformed(format!("missing {what} row")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| malformed(format!("{what}: `{t}`: {e}"))))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(malformed(format!("{what} row has {} values, expected {n}", row.len())));
            }
            Ok(row)
        };
        let mut weights = Vec::with_capacity(classes * dim);
        for _ in 0..classes {
            weights.extend(parse_row(lines.next(), dim, "weight")?);
        }
        let bias = parse_row(lines.next(), classes, "bias")?;
        LinearModel::from_parts(classes, dim, weights, bias)
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// One full-batch step:
/// `W <- W - (eta / n) * (xi * W + sum_i grad f_i)`, `b <- b - (eta / n) * sum_i grad_b f_i`.
///
/// The bias is not regularized.
pub fn sgd_step(model: &LinearModel, data: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grad = model.data_gradient(data)?;
    let scale = cfg.learning_rate / data.len() as f64;
    let mut next = model.clone();
    for (w, g) in next.weights.iter_mut().zip(&grad.weights) {
        *w -= scale * (cfg.reg_weight * *w + g);
    }
    for (b, g) in next.bias.iter_mut().zip(&grad.bias) {
        *b -= scale * g;
    }
    Ok(next)
}

/// `cfg.local_steps` consecutive [`sgd_step`]s.
pub fn train_local(model: &LinearModel, data: &Dataset, cfg: &TrainConfig) -> Result<LinearModel> {
    let mut current = sgd_step(model, data, cfg)?;
    for _ in 1..cfg.local_steps {
        current = sgd_step(&current, data, cfg)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize) -> (LinearModel, Dataset) {
        let weights = (0..classes * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bias = (0..classes).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = LinearModel::from_parts(classes, dim, weights, bias).unwrap();
        let samples = (0..n)
            .map(|_| {
                Sample::new(
                    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    rng.random_range(1..=classes),
                )
            })
            .collect();
        (model, Dataset::new(samples, dim, classes).unwrap())
    }

    #[test]
    fn zero_model_is_uniform_and_picks_class_one() {
        let m = LinearModel::zeros(4, 3);
        let p = m.predict(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(p.label, 1);
        for v in p.probabilities {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_bias_wins() {
        let m = LinearModel::from_parts(4, 2, vec![0.0; 8], vec![0.0, 10.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.predict(&[3.0, 4.0]).unwrap().label, 2);
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let m = LinearModel::zeros(4, 3);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { expected: 3, found: 1 })));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (m, d) = random_instance(&mut rng, 1, 5, 4);
            let p = m.predict(&d.samples()[0].features).unwrap();
            let total: f64 = p.probabilities.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(p.probabilities.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn zero_model_loss_is_ln_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, d) = random_instance(&mut rng, 10, 3, 4);
        let loss = LinearModel::zeros(4, 3).mean_loss(&d).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_model_has_small_loss() {
        let d = Dataset::new(
            vec![Sample::new(vec![1.0, 0.0], 1), Sample::new(vec![0.0, 1.0], 2)],
            2,
            2,
        )
        .unwrap();
        let m = LinearModel::from_parts(2, 2, vec![20.0, 0.0, 0.0, 20.0], vec![0.0, 0.0]).unwrap();
        assert!(m.mean_loss(&d).unwrap() < 0.01);
        assert_eq!(m.accuracy(&d).unwrap(), 1.0);
    }

    // Oracle: -mean(log p_true) from explicit softmax probabilities.
    #[test]
    fn loss_matches_per_sample_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, d) = random_instance(&mut rng, 5, 3, 4);
        let oracle = -d
            .iter()
            .map(|s| {
                let z: Vec<f64> = (1..=4)
                    .map(|c| m.bias()[c - 1] + m.row(c).iter().zip(&s.features).map(|(w, x)| w * x).sum::<f64>())
                    .collect();
                let denom: f64 = z.iter().map(|v| v.exp()).sum();
                (z[s.label - 1].exp() / denom).ln()
            })
            .sum::<f64>()
            / 5.0;
        assert!((m.mean_loss(&d).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn loss_is_capped() {
        let d = Dataset::new(vec![Sample::new(vec![1.0], 1)], 1, 2).unwrap();
        let m = LinearModel::from_parts(2, 1, vec![-500.0, 500.0], vec![0.0, 0.0]).unwrap();
        assert!((m.mean_loss(&d).unwrap() - (-LOSS_PROBABILITY_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_errors() {
        let m = LinearModel::zeros(2, 2);
        let d = Dataset::empty(2, 2);
        assert!(matches!(m.mean_loss(&d), Err(Error::EmptyDataset)));
        assert!(matches!(m.accuracy(&d), Err(Error::EmptyDataset)));
        assert!(matches!(sgd_step(&m, &d, &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn stationary_when_perfectly_fit_and_unregularized() {
        let d = Dataset::new(
            vec![Sample::new(vec![1.0, 0.0], 1), Sample::new(vec![0.0, 1.0], 2)],
            2,
            2,
        )
        .unwrap();
        let m = LinearModel::from_parts(2, 2, vec![40.0, 0.0, 0.0, 40.0], vec![0.0, 0.0]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            reg_weight: 0.0,
            local_steps: 1,
        };
        let next = sgd_step(&m, &d, &cfg).unwrap();
        for (a, b) in next.params().zip(m.params()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn l2_term_shrinks_weights_geometrically() {
        // zero data gradient: two mirrored samples per class cancel out at W = c * I
        let d = Dataset::new(
            vec![
                Sample::new(vec![1.0, 0.0], 1),
                Sample::new(vec![-1.0, 0.0], 1),
                Sample::new(vec![0.0, 1.0], 1),
                Sample::new(vec![0.0, -1.0], 1),
            ],
            2,
            1,
        )
        .unwrap();
        // single class: p = 1 always, gradient is exactly zero
        let m = LinearModel::from_parts(1, 2, vec![3.0, -2.0], vec![0.5]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.2,
            reg_weight: 0.5,
            local_steps: 1,
        };
        let next = sgd_step(&m, &d, &cfg).unwrap();
        let factor = 1.0 - 0.2 * 0.5 / 4.0;
        assert!((next.weights()[0] - 3.0 * factor).abs() < 1e-15);
        assert!((next.weights()[1] + 2.0 * factor).abs() < 1e-15);
        assert_eq!(next.bias()[0], 0.5);
    }

    // Oracle: central finite differences of the summed loss.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, d) = random_instance(&mut rng, 8, 3, 4);
        let grad = m.data_gradient(&d).unwrap();
        let h = 1e-6;
        let analytic: Vec<f64> = grad.params().copied().collect();
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = m.clone();
            let mut minus = m.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (plus.mean_loss(&d).unwrap() - minus.mean_loss(&d).unwrap()) * 8.0 / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-4 || (a - fd).abs() < 1e-7, "param {k}: {a} vs {fd}");
        }
    }

    #[test]
    fn train_local_composes_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, d) = random_instance(&mut rng, 6, 2, 3);
        let cfg = TrainConfig {
            local_steps: 3,
            ..TrainConfig::default()
        };
        let one = TrainConfig { local_steps: 1, ..cfg };
        let manual = sgd_step(&sgd_step(&sgd_step(&m, &d, &one).unwrap(), &d, &one).unwrap(), &d, &one).unwrap();
        assert_eq!(train_local(&m, &d, &cfg).unwrap(), manual);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (m, _) = random_instance(&mut rng, 1, 5, 4);
        let text = m.to_text();
        assert!(text.starts_with("dims 4 5\n"));
        assert_eq!(LinearModel::from_text(&text).unwrap(), m);
    }

    #[test]
    fn text_rejects_short_rows() {
        assert!(LinearModel::from_text("dims 2 2\n1 2\n3\n0 0\n").is_err());
        assert!(LinearModel::from_text("dim 2 2\n").is_err());
    }
}
