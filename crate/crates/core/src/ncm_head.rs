//! Nearest-class-mean layer.
//!
//! Holds one running mean per class label and turns a feature vector into
//! distances, softmax probabilities over negative distances, a predicted
//! label, and the cross-entropy loss with its feature-space gradient.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{DncmError, Result};
use crate::feature_net::{join_reals, parse_reals, parse_tok};
use crate::Label;

const REGISTRY_MAGIC: &str = "DNCM-REGISTRY";
const REGISTRY_VERSION: u32 = 1;

/// Guard for the Euclidean gradient, which is singular at `d = 0`.
pub const EUCLIDEAN_GRAD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    SquaredEuclidean,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        match self {
            DistanceMetric::Euclidean => sq.sqrt(),
            DistanceMetric::SquaredEuclidean => sq,
        }
    }

    /// Accumulate `scale · ∂d(v, c)/∂v` into `out`. `d` is the precomputed distance.
    fn add_grad(self, v: &[f64], c: &[f64], d: f64, scale: f64, out: &mut [f64]) {
        let factor = match self {
            DistanceMetric::Euclidean => scale / d.max(EUCLIDEAN_GRAD_EPS),
            DistanceMetric::SquaredEuclidean => 2.0 * scale,
        };
        for ((o, vi), ci) in out.iter_mut().zip(v).zip(c) {
            *o += factor * (vi - ci);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMean {
    pub mean: Vec<f64>,
    pub count: u64,
}

/// Per-class running means in feature space, ordered by ascending label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassMeanRegistry {
    entries: BTreeMap<Label, ClassMean>,
}

impl ClassMeanRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Feature dimension of the stored means; `None` while empty.
    pub fn dim(&self) -> Option<usize> {
        self.entries.values().next().map(|e| e.mean.len())
    }

    pub fn get(&self, label: Label) -> Option<&ClassMean> {
        self.entries.get(&label)
    }

    pub fn contains(&self, label: Label) -> bool {
        self.entries.contains_key(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Label, &ClassMean)> {
        self.entries.iter().map(|(&l, e)| (l, e))
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) if d != v.len() => Err(DncmError::input(format!(
                "vector has {} values, registry means have {d}",
                v.len()
            ))),
            _ => Ok(()),
        }
    }

    /// Fold one observation into the running mean of `label`:
    /// `c ← N/(N+1)·c + 1/(N+1)·v`, `N ← N+1`.
    pub fn incremental_update(&mut self, v: &[f64], label: Label) -> Result<()> {
        if v.is_empty() {
            return Err(DncmError::input("empty feature vector"));
        }
        self.check_dim(v)?;
        match self.entries.get_mut(&label) {
            None => {
                self.entries.insert(
                    label,
                    ClassMean {
                        mean: v.to_vec(),
                        count: 1,
                    },
                );
            }
            Some(entry) => {
                let n = entry.count as f64;
                let keep = n / (n + 1.0);
                let take = 1.0 / (n + 1.0);
                for (c, &x) in entry.mean.iter_mut().zip(v) {
                    *c = keep * *c + take * x;
                }
                entry.count += 1;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{REGISTRY_MAGIC} {REGISTRY_VERSION} {} {}",
            self.entries.len(),
            self.dim().unwrap_or(0)
        )
        .unwrap();
        for (label, e) in &self.entries {
            writeln!(out, "{label} {} {}", e.count, join_reals(&e.mean)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "registry";
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| DncmError::format(WHAT, "empty"))?
            .split_whitespace()
            .collect();
        if header.len() != 4 || header[0] != REGISTRY_MAGIC {
            return Err(DncmError::format(WHAT, "bad header"));
        }
        if header[1] != REGISTRY_VERSION.to_string() {
            return Err(DncmError::format(
                WHAT,
                format!("unsupported version {}", header[1]),
            ));
        }
        let n: usize = parse_tok(WHAT, header[2])?;
        let dim: usize = parse_tok(WHAT, header[3])?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| DncmError::format(WHAT, "truncated"))?;
            let (label, rest) = line
                .split_once(' ')
                .ok_or_else(|| DncmError::format(WHAT, "bad entry"))?;
            let (count, rest) = rest
                .split_once(' ')
                .ok_or_else(|| DncmError::format(WHAT, "bad entry"))?;
            let label: Label = parse_tok(WHAT, label)?;
            let count: u64 = parse_tok(WHAT, count)?;
            let mean = parse_reals(WHAT, rest)?;
            if mean.len() != dim || count == 0 {
                return Err(DncmError::format(
                    WHAT,
                    format!("bad entry for class {label}"),
                ));
            }
            if entries.insert(label, ClassMean { mean, count }).is_some() {
                return Err(DncmError::format(WHAT, format!("duplicate class {label}")));
            }
        }
        Ok(Self { entries })
    }
}

/// Batch class means: one entry per distinct label, `mean = Σ v / N`.
pub fn class_means_from(features: &[Vec<f64>], labels: &[Label]) -> Result<ClassMeanRegistry> {
    if features.is_empty() {
        return Err(DncmError::input("no features to average"));
    }
    if features.len() != labels.len() {
        return Err(DncmError::input(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    if dim == 0 {
        return Err(DncmError::input("empty feature vector"));
    }
    let mut sums: BTreeMap<Label, (Vec<f64>, u64)> = BTreeMap::new();
    for (v, &y) in features.iter().zip(labels) {
        if v.len() != dim {
            return Err(DncmError::input("features differ in dimension"));
        }
        let (sum, n) = sums.entry(y).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        *n += 1;
    }
    let entries = sums
        .into_iter()
        .map(|(y, (sum, n))| {
            let mean = sum.into_iter().map(|s| s / n as f64).collect();
            (y, ClassMean { mean, count: n })
        })
        .collect();
    Ok(ClassMeanRegistry { entries })
}

/// Distance from `v` to every class mean, ascending by label.
pub fn distances(
    v: &[f64],
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
) -> Result<Vec<(Label, f64)>> {
    if registry.is_empty() {
        return Err(DncmError::NoClasses);
    }
    registry.check_dim(v)?;
    Ok(registry
        .entries
        .iter()
        .map(|(&y, e)| (y, metric.distance(v, &e.mean)))
        .collect())
}

/// Softmax over negative distances, shifted by the minimum distance.
pub fn class_probabilities(d: &[(Label, f64)]) -> Vec<(Label, f64)> {
    let min = d.iter().map(|&(_, x)| x).fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = d.iter().map(|&(_, x)| (-(x - min)).exp()).collect();
    let z: f64 = exps.iter().sum();
    d.iter().zip(exps).map(|(&(y, _), e)| (y, e / z)).collect()
}

/// Label of the smallest distance; the first (smallest) label wins ties.
pub fn argmin_label(d: &[(Label, f64)]) -> Option<Label> {
    let mut best: Option<(Label, f64)> = None;
    for &(y, x) in d {
        match best {
            Some((_, b)) if x >= b => {}
            _ => best = Some((y, x)),
        }
    }
    best.map(|(y, _)| y)
}

pub fn predict(v: &[f64], registry: &ClassMeanRegistry, metric: DistanceMetric) -> Result<Label> {
    let d = distances(v, registry, metric)?;
    Ok(argmin_label(&d).expect("registry is nonempty"))
}

/// One sample's loss `−log p(c_y | v)` and, optionally, `∂/∂v` of it.
fn sample_loss(
    v: &[f64],
    label: Label,
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    if !registry.contains(label) {
        return Err(DncmError::UnknownClass(label));
    }
    let d = distances(v, registry, metric)?;
    let min = d.iter().map(|&(_, x)| x).fold(f64::INFINITY, f64::min);
    let z: f64 = d.iter().map(|&(_, x)| (-(x - min)).exp()).sum();
    let own = d
        .iter()
        .find(|&&(y, _)| y == label)
        .expect("label present")
        .1;
    // −log(e^{−d_y} / Σ e^{−d_m}) = (d_y − min) + ln Σ e^{−(d_m − min)}
    let loss = (own - min) + z.ln();

    if let Some(out) = grad {
        // ∂L/∂d_k = t_k − p_k
        for (&(y, dk), e) in d.iter().zip(registry.entries.values()) {
            let p = (-(dk - min)).exp() / z;
            let t = if y == label { 1.0 } else { 0.0 };
            let w = t - p;
            if w != 0.0 {
                metric.add_grad(v, &e.mean, dk, w, out);
            }
        }
    }
    Ok(loss)
}

fn check_batch(features: &[Vec<f64>], labels: &[Label]) -> Result<()> {
    if features.len() != labels.len() {
        return Err(DncmError::input(format!(
            "{} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Cross-entropy of the distance softmax, summed over the batch.
pub fn loss(
    features: &[Vec<f64>],
    labels: &[Label],
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
) -> Result<f64> {
    check_batch(features, labels)?;
    features
        .iter()
        .zip(labels)
        .map(|(v, &y)| sample_loss(v, y, registry, metric, None))
        .sum()
}

/// `∂loss/∂v_i` for every sample, holding the class means constant.
pub fn loss_grad_wrt_features(
    features: &[Vec<f64>],
    labels: &[Label],
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
) -> Result<Vec<Vec<f64>>> {
    Ok(loss_and_grad(features, labels, registry, metric)?.1)
}

/// Loss and per-sample gradients in one pass.
pub fn loss_and_grad(
    features: &[Vec<f64>],
    labels: &[Label],
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_batch(features, labels)?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(features.len());
    for (v, &y) in features.iter().zip(labels) {
        let mut g = vec![0.0; v.len()];
        total += sample_loss(v, y, registry, metric, Some(&mut g))?;
        grads.push(g);
    }
    Ok((total, grads))
}
