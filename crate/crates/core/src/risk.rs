//! Risk ranking by iterative support-vector peeling.
//!
//! Each pass trains one-vs-rest linear SVMs on the samples still in the pool,
//! gives every sample in the union of their support sets the current rank and
//! removes them. Rank 1 is peeled first and sits closest to a class boundary,
//! so it is the most exposed to tampering.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{self, Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{one_vs_rest_signs, support_indices, train_binary_svm, SvmConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    pub svm: SvmConfig,
    /// Slack on the margin test `y (w . x + b) <= 1 + tol`.
    pub tol: f64,
    /// Ranks at or beyond this value collapse into it.
    pub max_levels: Option<usize>,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            svm: SvmConfig::default(),
            tol: 1e-3,
            max_levels: None,
        }
    }
}

/// A dataset with one risk rank per sample, in the original sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskAnnotatedDataset {
    data: Dataset,
    ranks: Vec<usize>,
}

impl RiskAnnotatedDataset {
    pub fn new(data: Dataset, ranks: Vec<usize>) -> Result<Self> {
        if ranks.len() != data.len() {
            return Err(Error::LengthMismatch {
                what: "risk ranks",
                expected: data.len(),
                found: ranks.len(),
            });
        }
        let distinct: BTreeSet<usize> = ranks.iter().copied().collect();
        let contiguous = distinct.iter().copied().eq(1..=distinct.len());
        if !contiguous {
            return Err(Error::InvalidArgument("risk ranks must form 1..=J".into()));
        }
        Ok(Self { data, ranks })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// Number of distinct ranks `J`.
    pub fn levels(&self) -> usize {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    /// Drop the annotations.
    pub fn strip(&self) -> Dataset {
        self.data.clone()
    }

    pub fn into_parts(self) -> (Dataset, Vec<usize>) {
        (self.data, self.ranks)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sample, usize)> {
        self.data.iter().zip(self.ranks.iter().copied())
    }
}

/// Annotate every sample of `data` with its peel rank.
pub fn assess_risk(data: &Dataset, cfg: &RiskConfig) -> Result<RiskAnnotatedDataset> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.svm.validate()?;
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidArgument("risk tol must be >= 0".into()));
    }
    if cfg.max_levels == Some(0) {
        return Err(Error::InvalidArgument("max_levels must be >= 1".into()));
    }

    let mut ranks = vec![0usize; data.len()];
    let mut pool: Vec<usize> = (0..data.len()).collect();
    let mut rank = 1;
    while !pool.is_empty() {
        let remaining = data.subset(&pool);
        let present: Vec<usize> = remaining
            .class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c + 1)
            .collect();
        let last_level = cfg.max_levels == Some(rank);
        if present.len() < 2 || last_level {
            for &i in &pool {
                ranks[i] = rank;
            }
            break;
        }

        let points: Vec<&[f64]> = remaining.iter().map(|s| s.features.as_slice()).collect();
        let supports: Vec<Vec<usize>> = present
            .par_iter()
            .map(|&class| {
                let signs = one_vs_rest_signs(&remaining, class);
                let sep = train_binary_svm(&points, &signs, &cfg.svm)?;
                Ok(support_indices(&sep, &points, &signs, cfg.tol))
            })
            .collect::<Result<_>>()?;
        let peeled: BTreeSet<usize> = supports.into_iter().flatten().collect();
        for &pos in &peeled {
            ranks[pool[pos]] = rank;
        }
        pool = pool
            .iter()
            .enumerate()
            .filter(|(pos, _)| !peeled.contains(pos))
            .map(|(_, &i)| i)
            .collect();
        rank += 1;
    }
    RiskAnnotatedDataset::new(data.clone(), ranks)
}

/// Input schema plus a trailing `risk_rank` column.
pub fn write_annotated_csv<W: Write>(annotated: &RiskAnnotatedDataset, mut out: W) -> std::io::Result<()> {
    dataset::write_header(&mut out, annotated.data.dim(), &["risk_rank"])?;
    for (s, r) in annotated.iter() {
        dataset::write_row(&mut out, s, &[r])?;
    }
    out.flush()
}

pub fn save_annotated_csv(annotated: &RiskAnnotatedDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_annotated_csv(annotated, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_annotated_csv(path: impl AsRef<Path>) -> Result<RiskAnnotatedDataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let mut table = dataset::read_table(bytes.as_slice(), 1)?;
    let ranks = std::mem::take(&mut table.extra).into_iter().map(|e| e[0]).collect();
    RiskAnnotatedDataset::new(table.into_dataset()?, ranks)
}
