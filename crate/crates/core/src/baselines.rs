//! Reference classifiers: brute-force K-nearest-neighbors and nearest class
//! mean computed directly on (standardized) raw inputs.

use std::collections::BTreeMap;

use crate::datakit::SampleRecord;
use crate::error::{DncmError, Result};
use crate::ncm_head::{self, ClassMeanRegistry, DistanceMetric};
use crate::{Classifier, Label};

pub const DEFAULT_K: usize = 5;
pub const K_GRID: [usize; 5] = [1, 3, 5, 7, 9];

/// Full-scan KNN. No index structure: every query touches every stored sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    samples: Vec<SampleRecord>,
}

impl KnnModel {
    pub fn new(k: usize, samples: Vec<SampleRecord>) -> Result<Self> {
        if k == 0 {
            return Err(DncmError::input("k must be positive"));
        }
        Ok(Self { k, samples })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn add(&mut self, samples: &[SampleRecord]) {
        self.samples.extend_from_slice(samples);
    }

    /// Majority label among the `min(k, N)` nearest samples. Equal distances
    /// keep insertion order; tied votes go to the smallest label.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        if self.samples.is_empty() {
            return Err(DncmError::NoData);
        }
        let dim = self.samples[0].features.len();
        if x.len() != dim {
            return Err(DncmError::input(format!(
                "query has {} values, model has {dim}",
                x.len()
            )));
        }
        let k = self.k.min(self.samples.len());
        // Sorted by (distance, index); squared distances order identically.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, s) in self.samples.iter().enumerate() {
            let d: f64 = s
                .features
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.len() == k && d >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(bd, _)| bd <= d);
            best.insert(pos, (d, i));
            best.truncate(k);
        }
        let mut votes: BTreeMap<Label, usize> = BTreeMap::new();
        for &(_, i) in &best {
            *votes.entry(self.samples[i].label).or_default() += 1;
        }
        let mut winner = (0, 0);
        for (label, n) in votes {
            if n > winner.1 {
                winner = (label, n);
            }
        }
        Ok(winner.0)
    }
}

impl Classifier for KnnModel {
    fn predict(&self, x: &[f64]) -> Result<Label> {
        KnnModel::predict(self, x)
    }
}

pub fn knn_predict(model: &KnnModel, x: &[f64]) -> Result<Label> {
    model.predict(x)
}

pub fn knn_add(model: &mut KnnModel, samples: &[SampleRecord]) {
    model.add(samples)
}

/// Choose k from `grid` by accuracy on `validation`; the smaller k wins ties.
pub fn select_k(
    train: &[SampleRecord],
    validation: &[SampleRecord],
    grid: &[usize],
) -> Result<usize> {
    if validation.is_empty() {
        return Ok(DEFAULT_K);
    }
    let mut best = (0usize, -1.0f64);
    for &k in grid {
        let model = KnnModel::new(k, train.to_vec())?;
        let mut correct = 0;
        for r in validation {
            if model.predict(&r.features)? == r.label {
                correct += 1;
            }
        }
        let acc = correct as f64 / validation.len() as f64;
        if acc > best.1 {
            best = (k, acc);
        }
    }
    Ok(best.0)
}

/// Nearest class mean on raw inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawNcmModel {
    pub registry: ClassMeanRegistry,
}

impl RawNcmModel {
    pub fn fit(samples: &[SampleRecord]) -> Result<Self> {
        let mut m = Self::default();
        m.add(samples)?;
        Ok(m)
    }

    /// Running-mean update per sample, same recurrence as the DNCM head.
    pub fn add(&mut self, samples: &[SampleRecord]) -> Result<()> {
        for s in samples {
            self.registry.incremental_update(&s.features, s.label)?;
        }
        Ok(())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        ncm_head::predict(x, &self.registry, DistanceMetric::Euclidean)
    }
}

impl Classifier for RawNcmModel {
    fn predict(&self, x: &[f64]) -> Result<Label> {
        RawNcmModel::predict(self, x)
    }
}

pub fn raw_ncm_predict(model: &RawNcmModel, x: &[f64]) -> Result<Label> {
    model.predict(x)
}

pub fn raw_ncm_add(model: &mut RawNcmModel, samples: &[SampleRecord]) -> Result<()> {
    model.add(samples)
}
