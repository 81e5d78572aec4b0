//! Experiment harness: repeated-trial sweeps over the number of new classes,
//! the number of training samples per new class, and the number of initial
//! classes, plus predict-latency measurement and per-class accuracy tables.
//!
//! All methods in a trial see the same random draws, which depend only on
//! `(seed, trial)`; adding or removing a method never changes the others.

use std::collections::BTreeMap;
use std::fmt;
use std::hint::black_box;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{select_k, KnnModel, RawNcmModel, K_GRID};
use crate::datakit::{split, Dataset, SampleRecord, SplitSpec};
use crate::error::{DncmError, Result};
use crate::ncm_head::{self, ClassMeanRegistry};
use crate::trainer::{initial_train, score, DncmModel, TrainingConfig};
use crate::{fmt_real, seeding, Classifier, Label};

/// Test-pool size per new class below which a sweep records a warning.
pub const DEFAULT_MIN_TEST_PER_CLASS: usize = 480;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DNCM")]
    Dncm,
    #[serde(rename = "KNN")]
    Knn,
    #[serde(rename = "RawNCM")]
    RawNcm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dncm, Method::Knn, Method::RawNcm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dncm => "DNCM",
            Method::Knn => "KNN",
            Method::RawNcm => "RawNCM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dncm" => Ok(Method::Dncm),
            "knn" => Ok(Method::Knn),
            "rawncm" | "raw-ncm" | "ncm" => Ok(Method::RawNcm),
            _ => Err(format!(
                "unknown method `{s}` (expected dncm, knn or raw-ncm)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    NewClassCount,
    SamplesPerNewClass,
    InitialClassCount,
}

impl SweepVariable {
    pub fn file_stem(self) -> &'static str {
        match self {
            SweepVariable::NewClassCount => "new-classes",
            SweepVariable::SamplesPerNewClass => "samples",
            SweepVariable::InitialClassCount => "initial-classes",
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepVariable::NewClassCount => "new_class_count",
            SweepVariable::SamplesPerNewClass => "samples_per_new_class",
            SweepVariable::InitialClassCount => "initial_class_count",
        }
    }
}

/// Which classes are scored after integrating new ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMix {
    /// Initial-class test split plus the held-out samples of every integrated class.
    #[default]
    Joint,
    /// Only the held-out samples of integrated new classes.
    NewOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
    pub trials: usize,
    pub train_samples_per_new_class: usize,
    /// K_new values evaluated per initial-class count; empty means the whole pool.
    pub new_class_values: Vec<usize>,
    pub methods: Vec<Method>,
    pub test_mix: TestMix,
    /// Fixed k for KNN; `None` selects it from {1,3,5,7,9} on the validation split.
    pub knn_k: Option<usize>,
    pub min_test_per_class: usize,
    /// Queries per latency measurement (first trial only).
    pub latency_queries: usize,
    pub latency_repetitions: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<usize>) -> Self {
        Self {
            variable,
            values,
            trials: 30,
            train_samples_per_new_class: 20,
            new_class_values: Vec::new(),
            methods: Method::ALL.to_vec(),
            test_mix: TestMix::Joint,
            knn_k: None,
            min_test_per_class: DEFAULT_MIN_TEST_PER_CLASS,
            latency_queries: 200,
            latency_repetitions: 3,
            seed: 0,
        }
    }

    fn validate(&self, expect: SweepVariable) -> Result<()> {
        if self.variable != expect {
            return Err(DncmError::spec(format!(
                "spec sweeps {:?}, runner expects {expect:?}",
                self.variable
            )));
        }
        if self.values.is_empty() || self.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DncmError::spec(
                "sweep values must be nonempty and strictly increasing",
            ));
        }
        if self.trials == 0 {
            return Err(DncmError::spec("trials must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(DncmError::spec("no methods selected"));
        }
        if self.knn_k == Some(0) {
            return Err(DncmError::spec("knn k must be positive"));
        }
        Ok(())
    }
}

/// Data and training setup shared by every sweep.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    /// Classes available for initial training.
    pub initial: Dataset,
    /// Classes that arrive during the updating phase; disjoint from `initial`.
    pub incremental: Dataset,
    pub split: SplitSpec,
    pub training: TrainingConfig,
    /// Seed for extractor initialization.
    pub init_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub value: usize,
    /// K_new for initial-class sweeps.
    pub new_classes: Option<usize>,
    pub trials: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Mean per-query predict latency in nanoseconds.
    pub mean_latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub spec: SweepSpec,
    pub training: TrainingConfig,
    pub split: SplitSpec,
    pub init_seed: u64,
    /// Chosen KNN k per initial-class count.
    pub knn_k: BTreeMap<usize, usize>,
    pub warnings: Vec<String>,
    pub crate_version: String,
    pub os: String,
    pub arch: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variable: SweepVariable,
    pub rows: Vec<SweepRow>,
    pub metadata: ReportMetadata,
}

impl SweepReport {
    pub fn row(
        &self,
        method: Method,
        value: usize,
        new_classes: Option<usize>,
    ) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.value == value && r.new_classes == new_classes)
    }

    pub fn mean_accuracy(&self, method: Method, value: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.value == value)
            .map(|r| r.mean_accuracy)
    }

    pub fn file_name(&self) -> String {
        format!("sweep_{}.csv", self.variable.file_stem())
    }

    pub fn metadata_file_name(&self) -> String {
        format!("sweep_{}.meta.json", self.variable.file_stem())
    }

    /// One row per method × sweep value (× K_new for initial-class sweeps).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let with_k_new = self.variable == SweepVariable::InitialClassCount;
        writeln!(
            out,
            "method,{}{},trials,mean_accuracy,std_accuracy,mean_latency_ns",
            self.variable.column(),
            if with_k_new { ",new_class_count" } else { "" }
        )?;
        for r in &self.rows {
            write!(out, "{},{}", r.method, r.value)?;
            if with_k_new {
                write!(
                    out,
                    ",{}",
                    r.new_classes.map(|k| k.to_string()).unwrap_or_default()
                )?;
            }
            writeln!(
                out,
                ",{},{},{},{}",
                r.trials,
                fmt_real(r.mean_accuracy),
                fmt_real(r.std_accuracy),
                fmt_real(r.mean_latency_ns)
            )?;
        }
        Ok(())
    }

    pub fn accuracy_csv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:?},{}\n",
                r.method,
                r.value,
                r.new_classes,
                fmt_real(r.mean_accuracy)
            ));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub median_ns: f64,
    pub min_ns: f64,
    pub max_ns: f64,
    pub repetitions: usize,
}

/// Per-query predict latency: one warm-up pass over `queries`, then the median
/// of `repetitions` timed passes.
pub fn measure_predict_latency<C: Classifier + ?Sized>(
    model: &C,
    queries: &[Vec<f64>],
    repetitions: usize,
) -> Result<LatencyStats> {
    if queries.is_empty() {
        return Err(DncmError::input("no queries to time"));
    }
    if repetitions < 3 {
        return Err(DncmError::input("latency needs at least 3 repetitions"));
    }
    for q in queries {
        black_box(model.predict(black_box(q))?);
    }
    let mut per_query = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for q in queries {
            black_box(model.predict(black_box(q))?);
        }
        let ns = start.elapsed().as_nanos() as f64 / queries.len() as f64;
        per_query.push(ns.max(f64::MIN_POSITIVE));
    }
    per_query.sort_by(f64::total_cmp);
    let mid = per_query.len() / 2;
    let median_ns = if per_query.len() % 2 == 1 {
        per_query[mid]
    } else {
        0.5 * (per_query[mid - 1] + per_query[mid])
    };
    Ok(LatencyStats {
        median_ns,
        min_ns: per_query[0],
        max_ns: per_query[per_query.len() - 1],
        repetitions,
    })
}

/// A sample prepared once per experiment: raw, standardized, and embedded.
#[derive(Debug, Clone)]
struct Prepared {
    raw: Vec<f64>,
    standardized: Vec<f64>,
    feature: Vec<f64>,
    label: Label,
}

/// Everything derived from training on one set of initial classes.
struct InitialStage {
    model: DncmModel,
    knn_base: KnnModel,
    raw_ncm_base: RawNcmModel,
    initial_test: Vec<Prepared>,
    /// Incremental samples grouped by class, in dataset order.
    pool: BTreeMap<Label, Vec<Prepared>>,
}

impl InitialStage {
    fn build(data: &ExperimentData, initial_labels: &[Label], spec: &SweepSpec) -> Result<Self> {
        let initial = data.initial.filter_labels(|l| initial_labels.contains(&l));
        if initial.is_empty() {
            return Err(DncmError::spec("no initial classes selected"));
        }
        let (train, validation, test) = split(&initial, &data.split)?;
        let (model, _) = initial_train(&train, Some(&validation), &data.training, data.init_seed)?;

        let prepare = |r: &SampleRecord| -> Result<Prepared> {
            let standardized = model.standardization.apply(&r.features);
            let feature = model.extractor.features(&standardized)?;
            Ok(Prepared {
                raw: r.features.clone(),
                standardized,
                feature,
                label: r.label,
            })
        };
        let std_train: Vec<SampleRecord> = model.standardization.apply_dataset(&train).records;
        let std_val: Vec<SampleRecord> = model.standardization.apply_dataset(&validation).records;
        let k = match spec.knn_k {
            Some(k) => k,
            None if spec.methods.contains(&Method::Knn) => select_k(&std_train, &std_val, &K_GRID)?,
            None => crate::baselines::DEFAULT_K,
        };
        let knn_base = KnnModel::new(k, std_train.clone())?;
        let raw_ncm_base = RawNcmModel::fit(&std_train)?;
        let initial_test = test
            .records
            .iter()
            .map(prepare)
            .collect::<Result<Vec<_>>>()?;
        let mut pool: BTreeMap<Label, Vec<Prepared>> = BTreeMap::new();
        for r in &data.incremental.records {
            pool.entry(r.label).or_default().push(prepare(r)?);
        }
        Ok(Self {
            model,
            knn_base,
            raw_ncm_base,
            initial_test,
            pool,
        })
    }
}

/// One trial's draw: the order in which new classes arrive and, per class,
/// a random permutation of its samples (training draws come from the front).
struct TrialDraw {
    class_order: Vec<Label>,
    permutations: BTreeMap<Label, Vec<usize>>,
}

fn draw_trial(pool: &BTreeMap<Label, Vec<Prepared>>, seed: u64, trial: usize) -> TrialDraw {
    let mut rng = seeding::derived_rng(seed, trial as u64);
    let mut class_order: Vec<Label> = pool.keys().copied().collect();
    class_order.shuffle(&mut rng);
    let permutations = pool
        .iter()
        .map(|(&label, members)| {
            let mut idx: Vec<usize> = (0..members.len()).collect();
            idx.shuffle(&mut rng);
            (label, idx)
        })
        .collect();
    TrialDraw {
        class_order,
        permutations,
    }
}

/// Integrate `classes` with `n_train` draws each and score every method.
/// Returns accuracy per method, plus latency when `time_it` is set.
fn run_point(
    stage: &InitialStage,
    draw: &TrialDraw,
    classes: &[Label],
    n_train: usize,
    spec: &SweepSpec,
    time_it: bool,
) -> Result<BTreeMap<Method, (f64, Option<f64>)>> {
    let mut train: Vec<&Prepared> = Vec::new();
    let mut test: Vec<&Prepared> = Vec::new();
    if spec.test_mix == TestMix::Joint || classes.is_empty() {
        test.extend(stage.initial_test.iter());
    }
    for label in classes {
        let members = &stage.pool[label];
        for (pos, &i) in draw.permutations[label].iter().enumerate() {
            if pos < n_train {
                train.push(&members[i]);
            } else {
                test.push(&members[i]);
            }
        }
    }
    let truth: Vec<Label> = test.iter().map(|p| p.label).collect();
    let latency_queries: Vec<Vec<f64>> = test
        .iter()
        .take(spec.latency_queries.max(1))
        .map(|p| p.raw.clone())
        .collect();

    let mut out = BTreeMap::new();
    for &method in &spec.methods {
        let (predicted, latency) = match method {
            Method::Dncm => {
                // Same arithmetic as updating_train + evaluate, on cached features.
                let mut registry: ClassMeanRegistry = stage.model.registry.clone();
                for p in &train {
                    registry.incremental_update(&p.feature, p.label)?;
                }
                let predicted = test
                    .iter()
                    .map(|p| ncm_head::predict(&p.feature, &registry, stage.model.metric))
                    .collect::<Result<Vec<_>>>()?;
                let latency = if time_it {
                    let model = DncmModel {
                        registry,
                        ..stage.model.clone()
                    };
                    Some(
                        measure_predict_latency(
                            &model,
                            &latency_queries,
                            spec.latency_repetitions,
                        )?
                        .median_ns,
                    )
                } else {
                    None
                };
                (predicted, latency)
            }
            Method::Knn => {
                let mut knn = stage.knn_base.clone();
                let added: Vec<SampleRecord> = train
                    .iter()
                    .map(|p| SampleRecord::new(p.standardized.clone(), p.label))
                    .collect();
                knn.add(&added);
                let predicted = test
                    .iter()
                    .map(|p| knn.predict(&p.standardized))
                    .collect::<Result<Vec<_>>>()?;
                let latency = if time_it {
                    let model = Standardized {
                        stats: &stage.model.standardization,
                        inner: &knn,
                    };
                    Some(
                        measure_predict_latency(
                            &model,
                            &latency_queries,
                            spec.latency_repetitions,
                        )?
                        .median_ns,
                    )
                } else {
                    None
                };
                (predicted, latency)
            }
            Method::RawNcm => {
                let mut ncm = stage.raw_ncm_base.clone();
                for p in &train {
                    ncm.registry.incremental_update(&p.standardized, p.label)?;
                }
                let predicted = test
                    .iter()
                    .map(|p| ncm.predict(&p.standardized))
                    .collect::<Result<Vec<_>>>()?;
                let latency = if time_it {
                    let model = Standardized {
                        stats: &stage.model.standardization,
                        inner: &ncm,
                    };
                    Some(
                        measure_predict_latency(
                            &model,
                            &latency_queries,
                            spec.latency_repetitions,
                        )?
                        .median_ns,
                    )
                } else {
                    None
                };
                (predicted, latency)
            }
        };
        out.insert(method, (score(&truth, &predicted).accuracy, latency));
    }
    Ok(out)
}

/// Baseline wrapper that applies the model's input scaling before predicting,
/// so latency covers the same raw-input path as DNCM.
struct Standardized<'a, C: Classifier> {
    stats: &'a crate::datakit::StandardizationStats,
    inner: &'a C,
}

impl<C: Classifier> Classifier for Standardized<'_, C> {
    fn predict(&self, x: &[f64]) -> Result<Label> {
        self.inner.predict(&self.stats.apply(x))
    }
}

#[derive(Default)]
struct Accumulator {
    accuracies: Vec<f64>,
    latency_ns: Vec<f64>,
}

impl Accumulator {
    fn finish(self, method: Method, value: usize, new_classes: Option<usize>) -> SweepRow {
        let n = self.accuracies.len() as f64;
        let mean = self.accuracies.iter().sum::<f64>() / n;
        let std = if self.accuracies.len() > 1 {
            (self
                .accuracies
                .iter()
                .map(|a| (a - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        let lat = if self.latency_ns.is_empty() {
            f64::MIN_POSITIVE
        } else {
            self.latency_ns.iter().sum::<f64>() / self.latency_ns.len() as f64
        };
        SweepRow {
            method,
            value,
            new_classes,
            trials: self.accuracies.len(),
            mean_accuracy: mean,
            std_accuracy: std,
            mean_latency_ns: lat,
        }
    }
}

/// Points swept inside one initial stage: (K_new, training samples per new class).
fn sweep_stage(
    stage: &InitialStage,
    points: &[(usize, usize)],
    spec: &SweepSpec,
    warnings: &mut Vec<String>,
) -> Result<Vec<BTreeMap<Method, Accumulator>>> {
    let pool_classes = stage.pool.len();
    let smallest_class = stage.pool.values().map(Vec::len).min().unwrap_or(0);
    for &(k_new, n_train) in points {
        if k_new > pool_classes {
            return Err(DncmError::spec(format!(
                "requested {k_new} new classes but the incremental pool holds {pool_classes}"
            )));
        }
        if k_new > 0 && n_train >= smallest_class {
            return Err(DncmError::spec(format!(
                "{n_train} training samples per new class leaves no test samples (smallest class has {smallest_class})"
            )));
        }
        if k_new > 0 && smallest_class - n_train < spec.min_test_per_class {
            let w = format!(
                "only {} test samples per new class at {n_train} training samples (floor {})",
                smallest_class - n_train,
                spec.min_test_per_class
            );
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
    }
    let mut acc: Vec<BTreeMap<Method, Accumulator>> =
        points.iter().map(|_| BTreeMap::new()).collect();
    for trial in 0..spec.trials {
        let draw = draw_trial(&stage.pool, spec.seed, trial);
        for (slot, &(k_new, n_train)) in acc.iter_mut().zip(points) {
            let classes = &draw.class_order[..k_new];
            let results = run_point(stage, &draw, classes, n_train, spec, trial == 0)?;
            for (method, (a, lat)) in results {
                let e = slot.entry(method).or_default();
                e.accuracies.push(a);
                e.latency_ns.extend(lat);
            }
        }
    }
    Ok(acc)
}

fn metadata(
    spec: &SweepSpec,
    data: &ExperimentData,
    knn_k: BTreeMap<usize, usize>,
    warnings: Vec<String>,
) -> ReportMetadata {
    ReportMetadata {
        spec: spec.clone(),
        training: data.training.clone(),
        split: data.split.clone(),
        init_seed: data.init_seed,
        knn_k,
        warnings,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        os: std::env::consts::OS.to_string(),
        arch: std::env::consts::ARCH.to_string(),
    }
}

fn rows_for(
    acc: Vec<BTreeMap<Method, Accumulator>>,
    values: &[usize],
    new_classes: impl Fn(usize) -> Option<usize>,
    methods: &[Method],
) -> Vec<SweepRow> {
    let mut by_method: BTreeMap<Method, Vec<SweepRow>> = BTreeMap::new();
    for (i, mut slot) in acc.into_iter().enumerate() {
        for &m in methods {
            if let Some(a) = slot.remove(&m) {
                by_method
                    .entry(m)
                    .or_default()
                    .push(a.finish(m, values[i], new_classes(i)));
            }
        }
    }
    methods
        .iter()
        .flat_map(|m| by_method.remove(m).unwrap_or_default())
        .collect()
}

/// Accuracy and latency as more new classes are integrated, each with
/// `train_samples_per_new_class` randomly drawn training samples.
pub fn run_new_class_sweep(spec: &SweepSpec, data: &ExperimentData) -> Result<SweepReport> {
    spec.validate(SweepVariable::NewClassCount)?;
    let labels = data.initial.labels();
    let stage = InitialStage::build(data, &labels, spec)?;
    let points: Vec<(usize, usize)> = spec
        .values
        .iter()
        .map(|&k| (k, spec.train_samples_per_new_class))
        .collect();
    let mut warnings = Vec::new();
    let acc = sweep_stage(&stage, &points, spec, &mut warnings)?;
    let knn_k = BTreeMap::from([(labels.len(), stage.knn_base.k())]);
    Ok(SweepReport {
        variable: SweepVariable::NewClassCount,
        rows: rows_for(acc, &spec.values, |_| None, &spec.methods),
        metadata: metadata(spec, data, knn_k, warnings),
    })
}

/// Accuracy as the number of training samples per new class varies, with
/// every class of the incremental pool integrated.
pub fn run_sample_size_sweep(spec: &SweepSpec, data: &ExperimentData) -> Result<SweepReport> {
    spec.validate(SweepVariable::SamplesPerNewClass)?;
    let labels = data.initial.labels();
    let stage = InitialStage::build(data, &labels, spec)?;
    let k_new = stage.pool.len();
    let points: Vec<(usize, usize)> = spec.values.iter().map(|&n| (k_new, n)).collect();
    let mut warnings = Vec::new();
    let acc = sweep_stage(&stage, &points, spec, &mut warnings)?;
    let knn_k = BTreeMap::from([(labels.len(), stage.knn_base.k())]);
    Ok(SweepReport {
        variable: SweepVariable::SamplesPerNewClass,
        rows: rows_for(acc, &spec.values, |_| None, &spec.methods),
        metadata: metadata(spec, data, knn_k, warnings),
    })
}

/// Retrain the extractor on the first K_init initial classes (ascending label)
/// for each sweep value, then sweep `new_class_values` on each trained model.
pub fn run_initial_class_sweep(spec: &SweepSpec, data: &ExperimentData) -> Result<SweepReport> {
    spec.validate(SweepVariable::InitialClassCount)?;
    let labels = data.initial.labels();
    if let Some(&max) = spec.values.last() {
        if max > labels.len() || spec.values[0] == 0 {
            return Err(DncmError::spec(format!(
                "initial-class counts must lie in 1..={} for this dataset",
                labels.len()
            )));
        }
    }
    let pool_size = data.incremental.labels().len();
    let k_new_values = if spec.new_class_values.is_empty() {
        vec![pool_size]
    } else {
        spec.new_class_values.clone()
    };
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let mut knn_k = BTreeMap::new();
    for &k_init in &spec.values {
        let stage = InitialStage::build(data, &labels[..k_init], spec)?;
        knn_k.insert(k_init, stage.knn_base.k());
        let points: Vec<(usize, usize)> = k_new_values
            .iter()
            .map(|&k| (k, spec.train_samples_per_new_class))
            .collect();
        let acc = sweep_stage(&stage, &points, spec, &mut warnings)?;
        let values = vec![k_init; points.len()];
        rows.extend(rows_for(
            acc,
            &values,
            |i| Some(k_new_values[i]),
            &spec.methods,
        ));
    }
    Ok(SweepReport {
        variable: SweepVariable::InitialClassCount,
        rows,
        metadata: metadata(spec, data, knn_k, warnings),
    })
}

pub fn run_sweep(spec: &SweepSpec, data: &ExperimentData) -> Result<SweepReport> {
    match spec.variable {
        SweepVariable::NewClassCount => run_new_class_sweep(spec, data),
        SweepVariable::SamplesPerNewClass => run_sample_size_sweep(spec, data),
        SweepVariable::InitialClassCount => run_initial_class_sweep(spec, data),
    }
}

/// Per-class accuracy of several methods on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracyTable {
    pub methods: Vec<String>,
    /// Label → accuracy per method, in `methods` order.
    pub rows: BTreeMap<Label, Vec<f64>>,
    /// Arithmetic mean of each method's column.
    pub averages: Vec<f64>,
}

impl ClassAccuracyTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "class,{}", self.methods.join(","))?;
        for (label, accs) in &self.rows {
            let cells: Vec<String> = accs.iter().map(|&a| fmt_real(a)).collect();
            writeln!(out, "{label},{}", cells.join(","))?;
        }
        let avg: Vec<String> = self.averages.iter().map(|&a| fmt_real(a)).collect();
        writeln!(out, "average,{}", avg.join(","))?;
        Ok(())
    }
}

pub fn build_class_accuracy_table(
    models: &[(&str, &dyn Classifier)],
    test: &Dataset,
) -> Result<ClassAccuracyTable> {
    if models.is_empty() || test.is_empty() {
        return Err(DncmError::input(
            "need at least one model and one test sample",
        ));
    }
    let truth = test.label_vec();
    let mut rows: BTreeMap<Label, Vec<f64>> = BTreeMap::new();
    for (_, model) in models {
        let predicted = test
            .records
            .iter()
            .map(|r| model.predict(&r.features))
            .collect::<Result<Vec<_>>>()?;
        for (label, acc) in score(&truth, &predicted).per_class {
            rows.entry(label).or_default().push(acc);
        }
    }
    let averages = (0..models.len())
        .map(|m| rows.values().map(|r| r[m]).sum::<f64>() / rows.len() as f64)
        .collect();
    Ok(ClassAccuracyTable {
        methods: models.iter().map(|(n, _)| n.to_string()).collect(),
        rows,
        averages,
    })
}

/// Per-class comparison: train on all initial classes, integrate every
/// pool class with `train_samples_per_new_class` draws (trial 0 of `seed`),
/// and report per-class accuracy over the new classes' held-out samples.
pub fn run_class_table(spec: &SweepSpec, data: &ExperimentData) -> Result<ClassAccuracyTable> {
    let labels = data.initial.labels();
    let stage = InitialStage::build(data, &labels, spec)?;
    let draw = draw_trial(&stage.pool, spec.seed, 0);
    let n_train = spec.train_samples_per_new_class;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, members) in &stage.pool {
        if n_train >= members.len() {
            return Err(DncmError::spec("training draw leaves no test samples"));
        }
        for (pos, &i) in draw.permutations[label].iter().enumerate() {
            let r = SampleRecord::new(members[i].raw.clone(), *label);
            if pos < n_train {
                train.push(r);
            } else {
                test.push(r);
            }
        }
    }
    let mut dncm = stage.model.clone();
    crate::trainer::updating_train(&mut dncm, &train)?;
    let std_train: Vec<SampleRecord> = train
        .iter()
        .map(|r| SampleRecord::new(stage.model.standardization.apply(&r.features), r.label))
        .collect();
    let mut knn = stage.knn_base.clone();
    knn.add(&std_train);
    let mut ncm = stage.raw_ncm_base.clone();
    ncm.add(&std_train)?;
    let stats = &stage.model.standardization;
    let knn_view = Standardized { stats, inner: &knn };
    let ncm_view = Standardized { stats, inner: &ncm };
    let mut models: Vec<(&str, &dyn Classifier)> = Vec::new();
    for m in &spec.methods {
        match m {
            Method::Dncm => models.push(("DNCM", &dncm)),
            Method::Knn => models.push(("KNN", &knn_view)),
            Method::RawNcm => models.push(("RawNCM", &ncm_view)),
        }
    }
    build_class_accuracy_table(&models, &Dataset::new(test))
}
