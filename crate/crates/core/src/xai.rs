//! Permutation feature importance: the accuracy lost when one feature column
//! is shuffled, averaged over repeats.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    /// Accuracy drop per feature (0-based index).
    pub importances: Vec<f64>,
    pub baseline_accuracy: f64,
    pub repeats: usize,
    pub seed: u64,
}

/// Importance of each feature of `data` for `model`.
///
/// The permutation for column `j`, repeat `r` comes from the stream keyed by
/// `(seed, j, r)`, so columns and repeats can be evaluated in any order.
pub fn permutation_importance(model: &LinearModel, data: &Dataset, repeats: usize, seed: u64) -> Result<ImportanceReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if repeats < 1 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    let baseline = model.accuracy(data)?;
    let importances = (0..data.dim())
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = data.iter().map(|s| s.features[j]).collect();
            let mut total = 0.0;
            for r in 0..repeats {
                let mut rng = rng::stream(seed, &[tag::EXPLAINER, j as u64, r as u64]);
                let mut shuffled = column.clone();
                shuffled.shuffle(&mut rng);
                let mut samples = data.samples().to_vec();
                for (s, v) in samples.iter_mut().zip(shuffled) {
                    s.features[j] = v;
                }
                let permuted = Dataset::from_unchecked(samples, data.dim(), data.classes());
                total += model.accuracy(&permuted)?;
            }
            Ok(baseline - total / repeats as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ImportanceReport {
        importances,
        baseline_accuracy: baseline,
        repeats,
        seed,
    })
}

impl ImportanceReport {
    /// `(most important, least important)` feature indices, 0-based; ties go
    /// to the lowest index.
    pub fn extreme_features(&self) -> (usize, usize) {
        extreme_features(&self.importances)
    }

    /// CSV `feature,importance` with a leading `# baseline=<value>` comment.
    /// Feature numbers are 1-based, matching the `f1..fd` column names.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# baseline={}", self.baseline_accuracy)?;
        writeln!(out, "feature,importance")?;
        for (j, v) in self.importances.iter().enumerate() {
            writeln!(out, "{},{v}", j + 1)?;
        }
        out.flush()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// Argmax and argmin of `importances`, lowest index on ties.
pub fn extreme_features(importances: &[f64]) -> (usize, usize) {
    let mut hi = 0;
    let mut lo = 0;
    for (j, &v) in importances.iter().enumerate().skip(1) {
        if v > importances[hi] {
            hi = j;
        }
        if v < importances[lo] {
            lo = j;
        }
    }
    (hi, lo)
}
