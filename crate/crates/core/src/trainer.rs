//! Two-phase learning: initial training of the extractor with per-epoch class
//! mean recomputation, then the frozen-extractor updating phase that folds new
//! samples into running class means.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datakit::{fit_standardization, Dataset, SampleRecord, StandardizationStats};
use crate::error::{DncmError, Result};
use crate::feature_net::{
    backward, chain_spec, forward, init_weights, sgd_momentum_step, GradientStack, OptimizerState,
    WeightStack,
};
use crate::ncm_head::{self, class_means_from, ClassMeanRegistry, DistanceMetric};
use crate::{fmt_real, seeding, Classifier, Label};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const EXTRACTOR_FILE: &str = "extractor.txt";
pub const REGISTRY_FILE: &str = "registry.txt";
pub const STANDARDIZATION_FILE: &str = "standardization.txt";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    pub max_epoch: usize,
    pub shuffle_seed: u64,
    pub metric: DistanceMetric,
    /// Widths of the extractor layers; the last one is the feature dimension.
    pub hidden_widths: Vec<usize>,
    pub bias_enabled: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            momentum: 0.9,
            learning_rate: 0.001,
            lr_decay_factor: 0.5,
            lr_decay_every_epochs: 15,
            max_epoch: 50,
            shuffle_seed: 0,
            metric: DistanceMetric::Euclidean,
            hidden_widths: vec![64, 32, 20],
            bias_enabled: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(DncmError::spec("batch_size must be positive"));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(DncmError::spec("momentum must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate < 0.1) {
            return Err(DncmError::spec("learning_rate must lie in (0, 0.1)"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(DncmError::spec("lr_decay_factor must lie in (0, 1]"));
        }
        if self.lr_decay_every_epochs == 0 {
            return Err(DncmError::spec("lr_decay_every_epochs must be positive"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(DncmError::spec(
                "hidden_widths must be nonempty and positive",
            ));
        }
        Ok(())
    }

    /// `δ · factor^⌊epoch / every⌋` for a zero-based epoch index.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.lr_decay_every_epochs) as i32;
        self.learning_rate * self.lr_decay_factor.powi(steps)
    }
}

/// How the model was trained; stored alongside the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainingConfig,
    pub seed: u64,
}

/// Trained extractor + NCM head + the input scaling it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct DncmModel {
    pub extractor: WeightStack,
    pub registry: ClassMeanRegistry,
    pub standardization: StandardizationStats,
    pub metric: DistanceMetric,
    pub training: Option<TrainingRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    format_version: u32,
    input_dim: usize,
    feature_dim: usize,
    metric: DistanceMetric,
    training: Option<TrainingRecord>,
}

impl DncmModel {
    /// Standardize then run the extractor.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.standardization.dim() {
            return Err(DncmError::input(format!(
                "sample has {} values, model expects {}",
                x.len(),
                self.standardization.dim()
            )));
        }
        self.extractor.features(&self.standardization.apply(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        ncm_head::predict(&self.embed(x)?, &self.registry, self.metric)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(EXTRACTOR_FILE), self.extractor.to_text())?;
        fs::write(dir.join(REGISTRY_FILE), self.registry.to_text())?;
        fs::write(
            dir.join(STANDARDIZATION_FILE),
            self.standardization.to_text(),
        )?;
        let meta = Metadata {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: self.extractor.input_dim(),
            feature_dim: self.extractor.output_dim(),
            metric: self.metric,
            training: self.training.clone(),
        };
        let mut json = serde_json::to_string_pretty(&meta)?;
        json.push('\n');
        fs::write(dir.join(METADATA_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: Metadata = serde_json::from_str(&fs::read_to_string(dir.join(METADATA_FILE))?)?;
        if meta.format_version != MODEL_FORMAT_VERSION {
            return Err(DncmError::format(
                "model",
                format!("unsupported format version {}", meta.format_version),
            ));
        }
        let extractor = WeightStack::from_text(&fs::read_to_string(dir.join(EXTRACTOR_FILE))?)?;
        let registry = ClassMeanRegistry::from_text(&fs::read_to_string(dir.join(REGISTRY_FILE))?)?;
        let standardization =
            StandardizationStats::from_text(&fs::read_to_string(dir.join(STANDARDIZATION_FILE))?)?;
        if extractor.input_dim() != meta.input_dim
            || extractor.output_dim() != meta.feature_dim
            || standardization.dim() != meta.input_dim
            || registry.dim().is_some_and(|d| d != meta.feature_dim)
        {
            return Err(DncmError::format("model", "component dimensions disagree"));
        }
        Ok(Self {
            extractor,
            registry,
            standardization,
            metric: meta.metric,
            training: meta.training,
        })
    }
}

impl Classifier for DncmModel {
    fn predict(&self, x: &[f64]) -> Result<Label> {
        DncmModel::predict(self, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "epoch,learning_rate,train_loss,train_accuracy,validation_accuracy"
        )?;
        for e in &self.epochs {
            let val = e.validation_accuracy.map(fmt_real).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch,
                fmt_real(e.learning_rate),
                fmt_real(e.train_loss),
                fmt_real(e.train_accuracy),
                val
            )?;
        }
        Ok(())
    }
}

fn embed_all(extractor: &WeightStack, inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| extractor.features(x)).collect()
}

fn accuracy_on(
    feats: &[Vec<f64>],
    labels: &[Label],
    registry: &ClassMeanRegistry,
    metric: DistanceMetric,
) -> Result<f64> {
    let mut correct = 0usize;
    for (v, &y) in feats.iter().zip(labels) {
        if ncm_head::predict(v, registry, metric)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / feats.len().max(1) as f64)
}

/// Initial training phase.
///
/// Each epoch recomputes the class means from the features of the whole
/// training set, then runs momentum SGD over shuffled minibatches with those
/// means held fixed. Inputs are z-scored with statistics fitted on `train`.
/// After the last epoch the registry is rebuilt from the final weights.
pub fn initial_train(
    train: &Dataset,
    validation: Option<&Dataset>,
    config: &TrainingConfig,
    seed: u64,
) -> Result<(DncmModel, TrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(DncmError::input("training set is empty"));
    }
    let input_dim = train.dim().unwrap_or(0);
    if train.records.iter().any(|r| r.features.len() != input_dim) {
        return Err(DncmError::input("training samples differ in dimension"));
    }
    let standardization = fit_standardization(train)?;
    let inputs: Vec<Vec<f64>> = train
        .records
        .iter()
        .map(|r| standardization.apply(&r.features))
        .collect();
    let labels = train.label_vec();
    let (val_inputs, val_labels) = match validation.filter(|v| !v.is_empty()) {
        Some(v) => (
            Some(
                v.records
                    .iter()
                    .map(|r| standardization.apply(&r.features))
                    .collect::<Vec<_>>(),
            ),
            v.label_vec(),
        ),
        None => (None, Vec::new()),
    };

    let mut extractor = init_weights(
        &chain_spec(input_dim, &config.hidden_widths),
        seed,
        config.bias_enabled,
    )?;
    let mut optimizer = OptimizerState::new(&extractor, config.momentum, config.learning_rate)?;
    let mut shuffle_rng = seeding::rng(config.shuffle_seed);
    let metric = config.metric;

    let mut feats = embed_all(&extractor, &inputs)?;
    let mut registry = class_means_from(&feats, &labels)?;
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut report = TrainReport::default();

    for epoch in 0..config.max_epoch {
        let lr = config.learning_rate_at(epoch);
        optimizer.learning_rate = lr;
        order.shuffle(&mut shuffle_rng);

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let diverged = |detail: String| DncmError::TrainingDivergence {
                epoch,
                batch: batch_idx,
                detail,
            };
            let mut caches = Vec::with_capacity(batch.len());
            let mut batch_feats = Vec::with_capacity(batch.len());
            let mut batch_labels = Vec::with_capacity(batch.len());
            for &i in batch {
                let (v, cache) = forward(&extractor, &inputs[i])?;
                batch_feats.push(v);
                caches.push(cache);
                batch_labels.push(labels[i]);
            }
            let (batch_loss, feat_grads) =
                ncm_head::loss_and_grad(&batch_feats, &batch_labels, &registry, metric)?;
            if !batch_loss.is_finite() {
                return Err(diverged(format!("loss is {batch_loss}")));
            }
            loss_sum += batch_loss;

            let mut grads = GradientStack::zeros_like(&extractor);
            for (cache, g) in caches.iter().zip(&feat_grads) {
                grads.add_assign(&backward(&extractor, cache, g)?);
            }
            sgd_momentum_step(&mut extractor, &grads, &mut optimizer).map_err(|e| match e {
                DncmError::TrainingDivergence { detail, .. } => diverged(detail),
                other => other,
            })?;
        }

        feats = embed_all(&extractor, &inputs)?;
        registry = class_means_from(&feats, &labels)?;
        let train_accuracy = accuracy_on(&feats, &labels, &registry, metric)?;
        let validation_accuracy = match &val_inputs {
            Some(vi) => Some(accuracy_on(
                &embed_all(&extractor, vi)?,
                &val_labels,
                &registry,
                metric,
            )?),
            None => None,
        };
        report.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / inputs.len() as f64,
            train_accuracy,
            validation_accuracy,
        });
    }

    let model = DncmModel {
        extractor,
        registry,
        standardization,
        metric,
        training: Some(TrainingRecord {
            config: config.clone(),
            seed,
        }),
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateSummary {
    pub samples: usize,
    /// Labels that were not in the registry before this update, ascending.
    pub new_classes: Vec<Label>,
}

/// Updating phase: embed each sample with the frozen extractor and fold it
/// into its class's running mean, in stream order. The whole stream is
/// dimension-checked before the registry is touched.
pub fn updating_train(model: &mut DncmModel, stream: &[SampleRecord]) -> Result<UpdateSummary> {
    let dim = model.standardization.dim();
    if let Some(bad) = stream.iter().position(|r| r.features.len() != dim) {
        return Err(DncmError::input(format!(
            "stream sample {bad} has {} values, model expects {dim}",
            stream[bad].features.len()
        )));
    }
    let before: BTreeSet<Label> = model.registry.labels().collect();
    let mut new_classes = BTreeSet::new();
    for r in stream {
        let v = model.embed(&r.features)?;
        model.registry.incremental_update(&v, r.label)?;
        if !before.contains(&r.label) {
            new_classes.insert(r.label);
        }
    }
    Ok(UpdateSummary {
        samples: stream.len(),
        new_classes: new_classes.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: BTreeMap<Label, f64>,
    pub samples: usize,
}

/// Score a prediction list against the truth; shared by every classifier.
pub fn score(truth: &[Label], predicted: &[Label]) -> Evaluation {
    let mut tally: BTreeMap<Label, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (&y, &p) in truth.iter().zip(predicted) {
        let t = tally.entry(y).or_default();
        t.1 += 1;
        if y == p {
            t.0 += 1;
            correct += 1;
        }
    }
    Evaluation {
        accuracy: correct as f64 / truth.len().max(1) as f64,
        per_class: tally
            .into_iter()
            .map(|(y, (c, n))| (y, c as f64 / n as f64))
            .collect(),
        samples: truth.len(),
    }
}

pub fn evaluate(model: &DncmModel, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(DncmError::input("evaluation set is empty"));
    }
    if let Some(r) = dataset
        .records
        .iter()
        .find(|r| !model.registry.contains(r.label))
    {
        return Err(DncmError::UnknownClass(r.label));
    }
    let predicted = dataset
        .records
        .iter()
        .map(|r| model.predict(&r.features))
        .collect::<Result<Vec<_>>>()?;
    Ok(score(&dataset.label_vec(), &predicted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::{generate_synthetic, SyntheticSpec};
    use crate::feature_net::{Activation, Layer, LayerSpec};
    use rand::Rng;

    fn two_blobs(per_class: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticSpec {
            num_classes: 2,
            samples_per_class: per_class,
            noise_sigma: 0.1,
            seed,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn small_config(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            max_epoch: epochs,
            hidden_widths: vec![16, 8],
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn defaults_match_protocol() {
        let c = TrainingConfig::default();
        assert_eq!(c.batch_size, 16);
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.lr_decay_factor, 0.5);
        assert_eq!(c.lr_decay_every_epochs, 15);
        assert_eq!(c.max_epoch, 50);
        assert_eq!(c.hidden_widths, vec![64, 32, 20]);
        assert_eq!(c.metric, DistanceMetric::Euclidean);
    }

    #[test]
    fn config_validation() {
        for bad in [
            TrainingConfig {
                momentum: 1.0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                momentum: 0.0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                learning_rate: 0.1,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                lr_decay_factor: 0.0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                batch_size: 0,
                ..TrainingConfig::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainingConfig::default();
        for epoch in 0..50 {
            let want = 0.001 * 0.5f64.powi((epoch / 15) as i32);
            assert_eq!(c.learning_rate_at(epoch), want);
        }
        assert_eq!(c.learning_rate_at(14), 0.001);
        assert_eq!(c.learning_rate_at(15), 0.0005);
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let data = two_blobs(20, 1);
        let cfg = small_config(0);
        let (model, report) = initial_train(&data, None, &cfg, 5).unwrap();
        assert!(report.epochs.is_empty());
        let init = init_weights(&chain_spec(10, &cfg.hidden_widths), 5, true).unwrap();
        assert_eq!(model.extractor, init);
        let feats: Vec<Vec<f64>> = data
            .records
            .iter()
            .map(|r| model.embed(&r.features).unwrap())
            .collect();
        assert_eq!(
            model.registry,
            class_means_from(&feats, &data.label_vec()).unwrap()
        );
    }

    #[test]
    fn separable_pair_is_learned_perfectly() {
        let data = two_blobs(50, 2);
        let (model, report) = initial_train(&data, None, &TrainingConfig::default(), 3).unwrap();
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 1.0);
        assert_eq!(report.epochs.len(), 50);
        for (i, e) in report.epochs.iter().enumerate() {
            assert_eq!(
                e.learning_rate,
                TrainingConfig::default().learning_rate_at(i)
            );
            assert!(e.train_loss.is_finite());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = two_blobs(30, 4);
        let cfg = small_config(5);
        let (a, ra) = initial_train(&data, Some(&data), &cfg, 8).unwrap();
        let (b, rb) = initial_train(&data, Some(&data), &cfg, 8).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.extractor.to_text(), b.extractor.to_text());
        assert_eq!(a.registry.to_text(), b.registry.to_text());
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(initial_train(&Dataset::default(), None, &small_config(1), 0).is_err());
    }

    #[test]
    fn exploding_learning_rate_reports_divergence() {
        // A huge learning rate is not reachable through validate(), so drive the
        // optimizer directly with a hand-built network whose loss gradient is large.
        let layer = Layer {
            spec: LayerSpec {
                input_dim: 1,
                output_dim: 1,
                activation: Activation::Identity,
            },
            weights: vec![1.0],
            bias: vec![],
        };
        let mut ws = WeightStack::from_layers(vec![layer], false).unwrap();
        let mut state = OptimizerState::new(&ws, 0.5, 1e308).unwrap();
        let mut g = GradientStack::zeros_like(&ws);
        g.weights[0][0] = 1e10;
        assert!(matches!(
            sgd_momentum_step(&mut ws, &g, &mut state),
            Err(DncmError::TrainingDivergence { .. })
        ));
    }

    fn trained_small() -> (DncmModel, Dataset) {
        let data = two_blobs(30, 6);
        let (model, _) = initial_train(&data, None, &small_config(3), 1).unwrap();
        (model, data)
    }

    #[test]
    fn empty_stream_is_noop() {
        let (mut model, _) = trained_small();
        let before = model.clone();
        let s = updating_train(&mut model, &[]).unwrap();
        assert_eq!(s, UpdateSummary::default());
        assert_eq!(model, before);
    }

    #[test]
    fn one_new_class_stream() {
        let (mut model, _) = trained_small();
        let extra = generate_synthetic(&SyntheticSpec {
            num_classes: 1,
            samples_per_class: 20,
            first_label: 40,
            seed: 99,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let frozen = model.extractor.to_text();
        let s = updating_train(&mut model, &extra.records).unwrap();
        assert_eq!(s.new_classes, vec![40]);
        assert_eq!(model.registry.len(), 3);
        assert_eq!(model.registry.get(40).unwrap().count, 20);
        assert_eq!(model.extractor.to_text(), frozen);
    }

    #[test]
    fn interleaved_and_grouped_streams_agree() {
        let (model, _) = trained_small();
        let extra = generate_synthetic(&SyntheticSpec {
            num_classes: 3,
            samples_per_class: 15,
            first_label: 10,
            seed: 7,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let grouped = extra.records.clone();
        let mut interleaved = Vec::new();
        for i in 0..15 {
            for k in 0..3 {
                interleaved.push(grouped[k * 15 + i].clone());
            }
        }
        let mut a = model.clone();
        let mut b = model.clone();
        updating_train(&mut a, &grouped).unwrap();
        updating_train(&mut b, &interleaved).unwrap();
        let feats: Vec<Vec<f64>> = grouped
            .iter()
            .map(|r| model.embed(&r.features).unwrap())
            .collect();
        let batch = class_means_from(&feats, &extra.label_vec()).unwrap();
        for (y, e) in batch.iter() {
            for reg in [&a.registry, &b.registry] {
                let got = reg.get(y).unwrap();
                assert_eq!(got.count, e.count);
                for (p, q) in got.mean.iter().zip(&e.mean) {
                    assert!((p - q).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn update_rejects_wrong_dimension_atomically() {
        let (mut model, _) = trained_small();
        let before = model.clone();
        let stream = vec![
            SampleRecord::new(vec![0.0; 10], 5),
            SampleRecord::new(vec![0.0; 9], 5),
        ];
        assert!(updating_train(&mut model, &stream).is_err());
        assert_eq!(model, before);
    }

    /// A model whose extractor is the identity on 2-dim inputs, so registry means
    /// can be placed directly in input space.
    fn identity_model(means: &[(Label, Vec<f64>)]) -> DncmModel {
        let layer = Layer {
            spec: LayerSpec {
                input_dim: 2,
                output_dim: 2,
                activation: Activation::Identity,
            },
            weights: vec![1.0, 0.0, 0.0, 1.0],
            bias: vec![],
        };
        let mut registry = ClassMeanRegistry::new();
        for (y, m) in means {
            registry.incremental_update(m, *y).unwrap();
        }
        DncmModel {
            extractor: WeightStack::from_layers(vec![layer], false).unwrap(),
            registry,
            standardization: StandardizationStats::identity(2),
            metric: DistanceMetric::Euclidean,
            training: None,
        }
    }

    #[test]
    fn evaluate_on_means_is_perfect() {
        let means = vec![
            (0, vec![0.0, 0.0]),
            (3, vec![5.0, 1.0]),
            (9, vec![-2.0, 4.0]),
        ];
        let model = identity_model(&means);
        let data = Dataset::new(
            means
                .iter()
                .map(|(y, m)| SampleRecord::new(m.clone(), *y))
                .collect(),
        );
        let e = evaluate(&model, &data).unwrap();
        assert_eq!(e.accuracy, 1.0);
        assert!(e.per_class.values().all(|&a| a == 1.0));
    }

    #[test]
    fn evaluate_hand_counted_fixture() {
        // Means at (0,0) for class 0 and (10,0) for class 1; the first seven
        // samples sit next to their own mean, the last three next to the other.
        let model = identity_model(&[(0, vec![0.0, 0.0]), (1, vec![10.0, 0.0])]);
        let rows = [
            (0, 1.0),
            (0, 2.0),
            (0, -1.0),
            (0, 3.0),
            (1, 9.0),
            (1, 8.0),
            (1, 12.0),
            (0, 9.5),
            (1, 0.5),
            (1, 4.0),
        ];
        let data = Dataset::new(
            rows.iter()
                .map(|&(y, x)| SampleRecord::new(vec![x, 0.0], y))
                .collect(),
        );
        let e = evaluate(&model, &data).unwrap();
        assert!((e.accuracy - 0.7).abs() < 1e-15);
        assert!((e.per_class[&0] - 0.8).abs() < 1e-15);
        assert!((e.per_class[&1] - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_permuted_labels_near_chance() {
        let k = 5usize;
        let means: Vec<(Label, Vec<f64>)> = (0..k)
            .map(|i| (i as Label, vec![10.0 * i as f64, 0.0]))
            .collect();
        let model = identity_model(&means);
        let mut rng = seeding::rng(12);
        let n = 2000;
        let data = Dataset::new(
            (0..n)
                .map(|i| {
                    let true_class = i % k;
                    SampleRecord::new(means[true_class].1.clone(), rng.random_range(0..k as Label))
                })
                .collect(),
        );
        let acc = evaluate(&model, &data).unwrap().accuracy;
        let p = 1.0 / k as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((acc - p).abs() <= 3.0 * sigma, "{acc}");
    }

    #[test]
    fn evaluate_unknown_label() {
        let model = identity_model(&[(0, vec![0.0, 0.0])]);
        let data = Dataset::new(vec![SampleRecord::new(vec![0.0, 0.0], 2)]);
        assert!(matches!(
            evaluate(&model, &data),
            Err(DncmError::UnknownClass(2))
        ));
    }

    #[test]
    fn evaluate_is_order_independent() {
        let (model, data) = trained_small();
        let mut rev = data.clone();
        rev.records.reverse();
        assert_eq!(
            evaluate(&model, &data).unwrap(),
            evaluate(&model, &rev).unwrap()
        );
    }

    #[test]
    fn model_round_trip() {
        let (model, data) = trained_small();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = DncmModel::load(dir.path()).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            evaluate(&back, &data).unwrap(),
            evaluate(&model, &data).unwrap()
        );
        fs::write(dir.path().join(REGISTRY_FILE), "junk").unwrap();
        assert!(DncmModel::load(dir.path()).is_err());
    }
}
