//! Data plumbing: a synthetic E-nose style generator, CSV I/O, stratified
//! splits, z-score standardization, and PCA projection.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DncmError, Result};
use crate::feature_net::{join_reals, parse_reals, parse_tok};
use crate::{fmt_real, seeding, Label};

pub const DEFAULT_FEATURE_DIM: usize = 10;

/// One labeled sensor reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub features: Vec<f64>,
    pub label: Label,
}

impl SampleRecord {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.features.len())
    }

    /// Distinct labels, ascending.
    pub fn labels(&self) -> Vec<Label> {
        let mut l: Vec<Label> = self.records.iter().map(|r| r.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }

    pub fn by_label(&self) -> BTreeMap<Label, Vec<&SampleRecord>> {
        let mut m: BTreeMap<Label, Vec<&SampleRecord>> = BTreeMap::new();
        for r in &self.records {
            m.entry(r.label).or_default().push(r);
        }
        m
    }

    pub fn filter_labels(&self, keep: impl Fn(Label) -> bool) -> Dataset {
        Dataset::new(
            self.records
                .iter()
                .filter(|r| keep(r.label))
                .cloned()
                .collect(),
        )
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.features.clone()).collect()
    }

    pub fn label_vec(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn extend(&mut self, other: Dataset) {
        self.records.extend(other.records);
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub feature_dim: usize,
    /// Class centers are uniform in `[-center_scale, center_scale]^dim`.
    pub center_scale: f64,
    pub noise_sigma: f64,
    /// Additive drift per sample index along one shared unit direction.
    pub drift_slope: f64,
    /// First label; classes are `first_label .. first_label + num_classes`.
    pub first_label: Label,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            samples_per_class: 500,
            feature_dim: DEFAULT_FEATURE_DIM,
            center_scale: 1.0,
            noise_sigma: 0.1,
            drift_slope: 0.01,
            first_label: 0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.samples_per_class == 0 || self.feature_dim == 0 {
            return Err(DncmError::spec(
                "classes, samples per class and dimension must be positive",
            ));
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return Err(DncmError::spec("center_scale must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(DncmError::spec("noise_sigma must be nonnegative"));
        }
        if !(self.drift_slope >= 0.0 && self.drift_slope.is_finite()) {
            return Err(DncmError::spec("drift_slope must be nonnegative"));
        }
        Ok(())
    }

    /// Class centers in label order. Drawn from their own seed stream, so they
    /// do not depend on `samples_per_class`.
    pub fn class_centers(&self) -> Vec<Vec<f64>> {
        let mut rng = seeding::derived_rng(self.seed, 0);
        (0..self.num_classes)
            .map(|_| {
                (0..self.feature_dim)
                    .map(|_| rng.random_range(-self.center_scale..=self.center_scale))
                    .collect()
            })
            .collect()
    }

    /// Shared sensor-drift direction (unit length).
    pub fn drift_direction(&self) -> Vec<f64> {
        let mut rng = seeding::derived_rng(self.seed, 1);
        loop {
            let v: Vec<f64> = (0..self.feature_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let norm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            if norm > 1e-8 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// Generate `num_classes × samples_per_class` records, grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let centers = spec.class_centers();
    let drift = spec.drift_direction();
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let mut records = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (k, center) in centers.iter().enumerate() {
        let mut rng = seeding::derived_rng(spec.seed, 2 + k as u64);
        let label = spec.first_label + k as Label;
        for i in 0..spec.samples_per_class {
            let shift = spec.drift_slope * i as f64;
            let features = center
                .iter()
                .zip(&drift)
                .map(|(c, u)| c + rng.sample(noise) + shift * u)
                .collect();
            records.push(SampleRecord::new(features, label));
        }
    }
    Ok(Dataset::new(records))
}

pub fn csv_header(dim: usize) -> String {
    let mut h = String::from("label");
    for i in 0..dim {
        h.push_str(&format!(",f{i}"));
    }
    h
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let dim = dataset.dim().unwrap_or(DEFAULT_FEATURE_DIM);
    writeln!(out, "{}", csv_header(dim))?;
    for r in &dataset.records {
        write!(out, "{}", r.label)?;
        for &x in &r.features {
            write!(out, ",{}", fmt_real(x))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(dataset, File::create(path)?)
}

/// Parse the dataset CSV. Lines starting with `#` are comments; a leading
/// `label,f0,…` header is skipped. The feature count is fixed by the header or
/// by the first data row unless `expected_dim` is given.
pub fn read_csv<R: Read>(input: R, expected_dim: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut dim = expected_dim;
    let mut records = Vec::new();
    let mut first = true;
    for row in reader.records() {
        let row = row.map_err(|e| DncmError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let err = |message: String| DncmError::Parse { line, message };
        if first {
            first = false;
            let fields: Vec<&str> = row.iter().collect();
            if fields.first() == Some(&"label") {
                let header_dim = fields.len() - 1;
                if fields.join(",") != csv_header(header_dim) {
                    return Err(err(format!("unrecognized header `{}`", fields.join(","))));
                }
                match dim {
                    Some(d) if d != header_dim => {
                        return Err(err(format!(
                            "header has {header_dim} features, expected {d}"
                        )))
                    }
                    _ => dim = Some(header_dim),
                }
                continue;
            }
        }
        if row.len() < 2 {
            return Err(err("row has no feature columns".into()));
        }
        let want = *dim.get_or_insert(row.len() - 1);
        if row.len() - 1 != want {
            return Err(err(format!(
                "expected {want} feature columns, found {}",
                row.len() - 1
            )));
        }
        let label: Label = row[0]
            .parse()
            .map_err(|_| err(format!("label `{}` is not a nonnegative integer", &row[0])))?;
        let features = row
            .iter()
            .skip(1)
            .map(|f| match f.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(err(format!("feature `{f}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        records.push(SampleRecord::new(features, label));
    }
    Ok(Dataset::new(records))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?, None)
}

/// Train / validation / test fractions for a stratified split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

fn floor_count(n: usize, frac: f64) -> usize {
    // 1e-9 absorbs representation error such as 0.1 * 30 = 3.0000000000000004 or 2.9999…
    (n as f64 * frac + 1e-9).floor() as usize
}

/// Stratified split. Per class, validation and test take `floor(n·fraction)`
/// samples and the remainder goes to train. Each class is shuffled with its own
/// derived seed, so the split of a class does not depend on which other classes
/// are present.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let fr = [spec.train, spec.validation, spec.test];
    if fr.iter().any(|f| !(*f >= 0.0)) {
        return Err(DncmError::spec("split fractions must be nonnegative"));
    }
    if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DncmError::spec("split fractions must sum to 1"));
    }
    let all_positive = fr.iter().all(|&f| f > 0.0);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (label, members) in dataset.by_label() {
        let n = members.len();
        if all_positive && n < 3 {
            return Err(DncmError::spec(format!(
                "class {label} has {n} samples; need at least 3"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut seeding::derived_rng(spec.seed, label as u64));
        let n_val = floor_count(n, spec.validation);
        let n_test = floor_count(n, spec.test);
        let n_train = n - n_val - n_test;
        for (pos, &i) in idx.iter().enumerate() {
            let r = members[i].clone();
            if pos < n_train {
                train.push(r);
            } else if pos < n_train + n_val {
                val.push(r);
            } else {
                test.push(r);
            }
        }
    }
    Ok((Dataset::new(train), Dataset::new(val), Dataset::new(test)))
}

/// Per-feature z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero-variance features are clamped to 1.
    pub std: Vec<f64>,
}

const STATS_MAGIC: &str = "DNCM-STANDARDIZATION";
const STATS_VERSION: u32 = 1;

impl StandardizationStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    pub fn apply_dataset(&self, data: &Dataset) -> Dataset {
        Dataset::new(
            data.records
                .iter()
                .map(|r| SampleRecord::new(self.apply(&r.features), r.label))
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        format!(
            "{STATS_MAGIC} {STATS_VERSION} {}\n{}\n{}\n",
            self.dim(),
            join_reals(&self.mean),
            join_reals(&self.std)
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        const WHAT: &str = "standardization";
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
        if header.len() != 3 || header[0] != STATS_MAGIC || header[1] != STATS_VERSION.to_string() {
            return Err(DncmError::format(WHAT, "bad header"));
        }
        let dim: usize = parse_tok(WHAT, header[2])?;
        let mean = parse_reals(WHAT, lines.next().unwrap_or(""))?;
        let std = parse_reals(WHAT, lines.next().unwrap_or(""))?;
        if mean.len() != dim || std.len() != dim || std.iter().any(|s| !(*s > 0.0)) {
            return Err(DncmError::format(WHAT, "bad statistics"));
        }
        Ok(Self { mean, std })
    }
}

pub fn fit_standardization(train: &Dataset) -> Result<StandardizationStats> {
    let dim = train
        .dim()
        .ok_or_else(|| DncmError::input("cannot standardize an empty dataset"))?;
    let n = train.len() as f64;
    let mut mean = vec![0.0; dim];
    let mut std = vec![1.0; dim];
    for c in 0..dim {
        let first = train.records[0].features[c];
        if train.records.iter().all(|r| r.features[c] == first) {
            mean[c] = first;
            continue;
        }
        let m = train.records.iter().map(|r| r.features[c]).sum::<f64>() / n;
        let var = train
            .records
            .iter()
            .map(|r| (r.features[c] - m).powi(2))
            .sum::<f64>()
            / n;
        mean[c] = m;
        if var > 0.0 {
            std[c] = var.sqrt();
        }
    }
    Ok(StandardizationStats { mean, std })
}

pub fn apply_standardization(stats: &StandardizationStats, x: &[f64]) -> Vec<f64> {
    stats.apply(x)
}

/// Result of a PCA projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, one per output dimension.
    pub components: Vec<Vec<f64>>,
    pub explained_variance_ratio: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl PcaProjection {
    /// Map projected coordinates back to the input space.
    pub fn reconstruct(&self, point: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coef, axis) in point.iter().zip(&self.components) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += coef * a;
            }
        }
        out
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues descending with unit eigenvectors.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    (values, vectors)
}

/// Project `data` onto its top `out_dims` principal axes. Each axis is signed
/// so that its largest-magnitude coordinate is positive.
pub fn pca_project(data: &[Vec<f64>], out_dims: usize) -> Result<PcaProjection> {
    let n = data.len();
    let dim = data.first().map(Vec::len).unwrap_or(0);
    if out_dims == 0 || n < out_dims || out_dims > dim {
        return Err(DncmError::input(format!(
            "cannot project {n} points of dimension {dim} onto {out_dims} components"
        )));
    }
    if data.iter().any(|p| p.len() != dim) {
        return Err(DncmError::input("points differ in dimension"));
    }
    let mean: Vec<f64> = (0..dim)
        .map(|c| data.iter().map(|p| p[c]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = data
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let denom = (n.max(2) - 1) as f64;
    let mut cov = vec![vec![0.0; dim]; dim];
    for p in &centered {
        for i in 0..dim {
            for j in i..dim {
                cov[i][j] += p[i] * p[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= denom;
            cov[j][i] = cov[i][j];
        }
    }
    let total: f64 = (0..dim).map(|i| cov[i][i]).sum();
    if !(total > 0.0) {
        return Err(DncmError::ZeroVariance);
    }
    let (values, vectors) = symmetric_eigen(&cov);
    let components: Vec<Vec<f64>> = vectors
        .into_iter()
        .take(out_dims)
        .map(|mut axis| {
            let pivot = axis
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            if pivot < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            axis
        })
        .collect();
    let explained_variance_ratio = values
        .iter()
        .take(out_dims)
        .map(|&l| (l.max(0.0) / total).min(1.0))
        .collect();
    let points = centered
        .iter()
        .map(|p| {
            components
                .iter()
                .map(|axis| axis.iter().zip(p).map(|(a, x)| a * x).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        mean,
        components,
        explained_variance_ratio,
        points,
    })
}

/// `label,pc1,pc2,…` rows preceded by `# explained_variance: a,b,…`.
pub fn write_projection_csv<W: Write>(
    labels: &[Label],
    proj: &PcaProjection,
    out: W,
) -> Result<()> {
    let mut out = BufWriter::new(out);
    let ratios: Vec<String> = proj
        .explained_variance_ratio
        .iter()
        .map(|&r| fmt_real(r))
        .collect();
    writeln!(out, "# explained_variance: {}", ratios.join(","))?;
    let mut header = String::from("label");
    for i in 1..=proj.components.len() {
        header.push_str(&format!(",pc{i}"));
    }
    writeln!(out, "{header}")?;
    for (label, p) in labels.iter().zip(&proj.points) {
        write!(out, "{label}")?;
        for &x in p {
            write!(out, ",{}", fmt_real(x))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
