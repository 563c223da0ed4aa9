//! Labeled feature datasets: synthetic generation, CSV I/O, stratified
//! splitting and partitioning across federation nodes.
//!
//! Labels are 1-based class indices in `1..=classes` everywhere. Sample order
//! is meaningful: a sample's position is its identity in risk annotations and
//! poison manifests.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// One labeled feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Class label in `1..=classes`.
    pub label: usize,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Ordered collection of samples sharing a feature dimension and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    classes: usize,
}

impl Dataset {
    /// Validates that every sample has `dim` finite features and a label in
    /// `1..=classes`.
    pub fn new(samples: Vec<Sample>, dim: usize, classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if classes == 0 {
            return Err(Error::InvalidArgument("class count must be >= 1".into()));
        }
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite feature value".into()));
            }
            if s.label == 0 || s.label > classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes,
                });
            }
        }
        Ok(Self {
            samples,
            dim,
            classes,
        })
    }

    /// Empty dataset with the given shape.
    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            samples: Vec::new(),
            dim,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().map(|s| s.label)
    }

    /// Per-class sample counts, index `c - 1` for label `c`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label - 1] += 1;
        }
        counts
    }

    /// Number of distinct labels actually present.
    pub fn distinct_labels(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
            classes: self.classes,
        }
    }

    /// Same samples, reinterpreted with a larger class count.
    pub fn with_classes(mut self, classes: usize) -> Result<Self> {
        if let Some(max) = self.samples.iter().map(|s| s.label).max() {
            if max > classes {
                return Err(Error::LabelOutOfRange {
                    label: max,
                    classes,
                });
            }
        }
        self.classes = classes;
        Ok(self)
    }

    /// Concatenate datasets of equal shape.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut samples = Vec::with_capacity(parts.iter().map(Dataset::len).sum());
        for p in parts {
            if p.dim != first.dim {
                return Err(Error::DimensionMismatch {
                    expected: first.dim,
                    found: p.dim,
                });
            }
            samples.extend(p.samples.iter().cloned());
        }
        let classes = parts.iter().map(|p| p.classes).max().unwrap_or(first.classes);
        Ok(Dataset {
            samples,
            dim: first.dim,
            classes,
        })
    }

    pub(crate) fn from_unchecked(samples: Vec<Sample>, dim: usize, classes: usize) -> Self {
        Self {
            samples,
            dim,
            classes,
        }
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Parameters of the Gaussian-blob generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub dim: usize,
    pub classes: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: 125,
            dim: 16,
            classes: 4,
            class_separation: 4.0,
            noise_sigma: 1.0,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 1 {
            return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidArgument("dim must be >= 2".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument("classes must be >= 2".into()));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::InvalidArgument("class_separation must be > 0".into()));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument("noise_sigma must be > 0".into()));
        }
        Ok(())
    }

    /// Mean of class `label`: `class_separation` along axis `(label - 1) mod dim`.
    pub fn class_mean(&self, label: usize) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        mean[(label - 1) % self.dim] = self.class_separation;
        mean
    }
}

/// Isotropic Gaussian blobs, `n_per_class` samples per class, class-major order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::SYNTHETIC]);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))?;
    let mut samples = Vec::with_capacity(spec.n_per_class * spec.classes);
    for label in 1..=spec.classes {
        let mean = spec.class_mean(label);
        for _ in 0..spec.n_per_class {
            let features = mean.iter().map(|m| m + noise.sample(&mut rng)).collect();
            samples.push(Sample { features, label });
        }
    }
    Ok(Dataset::from_unchecked(samples, spec.dim, spec.classes))
}

/// Load a dataset from a CSV file with header `f1,...,fd,label`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let table = read_table(bytes.as_slice(), 0)?;
    table.into_dataset()
}

/// Parsed numeric table: features, labels and any trailing integer columns.
pub(crate) struct Table {
    pub dim: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub extra: Vec<Vec<usize>>,
}

impl Table {
    pub(crate) fn into_dataset(self) -> Result<Dataset> {
        if self.labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let classes = self.labels.iter().copied().max().unwrap_or(1);
        let samples = self
            .features
            .into_iter()
            .zip(self.labels)
            .map(|(features, label)| Sample { features, label })
            .collect();
        Ok(Dataset::from_unchecked(samples, self.dim, classes))
    }
}

fn parse_positive_int(field: &str) -> Option<usize> {
    let v: usize = field.trim().parse().ok()?;
    (v >= 1).then_some(v)
}

/// Reads `f1..fd,label[,extra...]` where the number of trailing positive
/// integer columns after `label` is `extra_cols`.
pub(crate) fn read_table<R: Read>(reader: R, extra_cols: usize) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(Error::Malformed {
                what: "csv",
                detail: "missing header".into(),
            })
        }
    };
    let width = header.len();
    if width < 2 + extra_cols {
        return Err(Error::Malformed {
            what: "csv header",
            detail: format!("expected at least {} columns, found {width}", 2 + extra_cols),
        });
    }
    let dim = width - 1 - extra_cols;
    if header.get(dim).map(str::trim) != Some("label") {
        return Err(Error::Malformed {
            what: "csv header",
            detail: format!("column {} must be named `label`", dim + 1),
        });
    }

    let mut table = Table {
        dim,
        features: Vec::new(),
        labels: Vec::new(),
        extra: Vec::new(),
    };
    for record in records {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != width {
            return Err(Error::RaggedRow {
                row,
                expected: width,
                found: record.len(),
            });
        }
        let mut features = Vec::with_capacity(dim);
        for (column, field) in record.iter().take(dim).enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => features.push(v),
                _ => {
                    return Err(Error::NonNumeric {
                        row,
                        column: column + 1,
                        value: field.to_string(),
                    })
                }
            }
        }
        let label_field = &record[dim];
        let label = parse_positive_int(label_field).ok_or_else(|| Error::InvalidLabel {
            row,
            value: label_field.to_string(),
        })?;
        let mut extra = Vec::with_capacity(extra_cols);
        for (offset, field) in record.iter().skip(dim + 1).enumerate() {
            let v = parse_positive_int(field).ok_or_else(|| Error::Malformed {
                what: "csv",
                detail: format!(
                    "row {row}, column {}: `{field}` is not a positive integer",
                    dim + 2 + offset
                ),
            })?;
            extra.push(v);
        }
        table.features.push(features);
        table.labels.push(label);
        table.extra.push(extra);
    }
    Ok(table)
}

pub(crate) fn write_header<W: Write>(out: &mut W, dim: usize, extra: &[&str]) -> std::io::Result<()> {
    for j in 1..=dim {
        write!(out, "f{j},")?;
    }
    write!(out, "label")?;
    for name in extra {
        write!(out, ",{name}")?;
    }
    writeln!(out)
}

pub(crate) fn write_row<W: Write>(out: &mut W, sample: &Sample, extra: &[usize]) -> std::io::Result<()> {
    for v in &sample.features {
        write!(out, "{v},")?;
    }
    write!(out, "{}", sample.label)?;
    for v in extra {
        write!(out, ",{v}")?;
    }
    writeln!(out)
}

/// Serialize in the `f1,...,fd,label` schema. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    write_header(&mut out, data.dim, &[])?;
    for s in &data.samples {
        write_row(&mut out, s, &[])?;
    }
    out.flush()
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Stratified shuffled split into `(train, test)`.
///
/// Each class contributes `round(test_fraction * n_c)` samples to the test
/// side.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng::stream(seed, &[tag::SPLIT]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for (i, s) in data.samples.iter().enumerate() {
        by_class[s.label - 1].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n_test = (test_fraction * members.len() as f64).round() as usize;
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} leaves one side of the split empty"
        )));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((data.subset(&train), data.subset(&test)))
}

/// How samples are dealt out to nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionScheme {
    /// Shuffle, then deal round-robin.
    Iid,
    /// Per-class node proportions drawn from a symmetric Dirichlet with the
    /// given concentration; smaller values give more skew.
    LabelSkewed { beta: f64 },
}

/// Split `data` into `nodes` disjoint, non-empty datasets whose union is the
/// input.
pub fn partition(data: &Dataset, nodes: usize, scheme: PartitionScheme, seed: u64) -> Result<Vec<Dataset>> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("node count must be >= 1".into()));
    }
    if nodes > data.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot partition {} samples across {nodes} nodes",
            data.len()
        )));
    }
    let mut rng = rng::stream(seed, &[tag::PARTITION]);
    let assignment: Vec<Vec<usize>> = match scheme {
        PartitionScheme::Iid => {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut rng);
            let mut buckets = vec![Vec::new(); nodes];
            for (pos, idx) in order.into_iter().enumerate() {
                buckets[pos % nodes].push(idx);
            }
            buckets
        }
        PartitionScheme::LabelSkewed { beta } => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta must be > 0, got {beta}")));
            }
            skewed_assignment(data, nodes, beta, &mut rng)?
        }
    };
    Ok(assignment.iter().map(|idx| data.subset(idx)).collect())
}

fn skewed_assignment(data: &Dataset, nodes: usize, beta: f64, rng: &mut rng::Rng) -> Result<Vec<Vec<usize>>> {
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::InvalidArgument(format!("beta: {e}")))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.classes];
    for (i, s) in data.samples.iter().enumerate() {
        by_class[s.label - 1].push(i);
    }
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    for mut members in by_class {
        if members.is_empty() {
            continue;
        }
        members.shuffle(rng);
        let mut weights: Vec<f64> = (0..nodes).map(|_| gamma.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            weights = vec![0.0; nodes];
            weights[rng.random_range(0..nodes)] = 1.0;
        } else {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        let counts = largest_remainder(&weights, members.len());
        let mut cursor = 0;
        for (bucket, count) in buckets.iter_mut().zip(counts) {
            bucket.extend_from_slice(&members[cursor..cursor + count]);
            cursor += count;
        }
    }
    // every node needs at least one sample
    while let Some(empty) = buckets.iter().position(Vec::is_empty) {
        let donor = (0..nodes)
            .max_by(|&a, &b| buckets[a].len().cmp(&buckets[b].len()).then(b.cmp(&a)))
            .expect("nodes >= 1");
        let moved = buckets[donor].pop().expect("donor holds >= 2 samples");
        buckets[empty].push(moved);
    }
    for b in &mut buckets {
        b.sort_unstable();
    }
    Ok(buckets)
}

/// Integer counts summing to `total`, proportional to `weights`.
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Total-variation distance between a node's label distribution and the
/// global one.
pub fn label_tv_distance(node: &Dataset, global: &Dataset) -> f64 {
    let n = node.class_counts();
    let g = global.class_counts();
    let nt = node.len().max(1) as f64;
    let gt = global.len().max(1) as f64;
    0.5 * n
        .iter()
        .zip(g.iter())
        .map(|(&a, &b)| (a as f64 / nt - b as f64 / gt).abs())
        .sum::<f64>()
}
