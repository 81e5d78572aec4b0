//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dncm::baselines::KnnModel;
use dncm::benchkit::{
    measure_predict_latency, run_initial_class_sweep, run_new_class_sweep, run_sample_size_sweep,
    ExperimentData, Method, SweepSpec, SweepVariable,
};
use dncm::datakit::{
    generate_synthetic, pca_project, read_csv, split, write_csv, Dataset, SampleRecord, SplitSpec,
    SyntheticSpec,
};
use dncm::feature_net::{backward, chain_spec, forward, init_weights, GradientStack, WeightStack};
use dncm::ncm_head::{
    argmin_label, class_means_from, class_probabilities, loss, loss_and_grad, ClassMeanRegistry,
    DistanceMetric,
};
use dncm::seeding;
use dncm::trainer::{
    evaluate, initial_train, updating_train, DncmModel, TrainingConfig, EXTRACTOR_FILE,
};
use dncm::Label;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

const DATA_SEED: u64 = 7;
const INIT_SEED: u64 = 1;
const INITIAL_CLASSES: usize = 10;
const NEW_CLASSES: usize = 25;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn synthetic(num_classes: usize) -> SyntheticSpec {
    SyntheticSpec {
        num_classes,
        samples_per_class: 500,
        seed: DATA_SEED,
        ..SyntheticSpec::default()
    }
}

fn experiment() -> Result<ExperimentData, String> {
    let all = generate_synthetic(&synthetic(INITIAL_CLASSES + NEW_CLASSES)).map_err(err)?;
    let cut = INITIAL_CLASSES as Label;
    Ok(ExperimentData {
        initial: all.filter_labels(|l| l < cut),
        incremental: all.filter_labels(|l| l >= cut),
        split: SplitSpec::default(),
        training: TrainingConfig::default(),
        init_seed: INIT_SEED,
    })
}

fn sweep(variable: SweepVariable, values: Vec<usize>, methods: Vec<Method>) -> SweepSpec {
    SweepSpec {
        trials: 30,
        methods,
        seed: DATA_SEED,
        ..SweepSpec::new(variable, values)
    }
}

fn gradient_check() -> Outcome {
    let mut rng = seeding::rng(101);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for metric in [DistanceMetric::Euclidean, DistanceMetric::SquaredEuclidean] {
        let params = init_weights(&chain_spec(4, &[8, 5]), 5, true).map_err(err)?;
        let xs: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<Label> = (0..12).map(|i| (i % 3) as Label).collect();
        let feats: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| params.features(x))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        // Means are held fixed across the perturbations.
        let registry = class_means_from(&feats, &labels).map_err(err)?;

        let batch_loss = |p: &WeightStack| -> f64 {
            let f: Vec<Vec<f64>> = xs.iter().map(|x| p.features(x).unwrap()).collect();
            loss(&f, &labels, &registry, metric).unwrap()
        };

        let mut analytic = GradientStack::zeros_like(&params);
        let mut caches = Vec::new();
        let mut fs = Vec::new();
        for x in &xs {
            let (f, c) = forward(&params, x).map_err(err)?;
            fs.push(f);
            caches.push(c);
        }
        let (_, dfeat) = loss_and_grad(&fs, &labels, &registry, metric).map_err(err)?;
        for (c, g) in caches.iter().zip(&dfeat) {
            analytic.add_assign(&backward(&params, c, g).map_err(err)?);
        }

        let h = 1e-5;
        for layer in 0..params.layers().len() {
            for which in 0..2 {
                let n = if which == 0 {
                    params.layers()[layer].weights.len()
                } else {
                    params.layers()[layer].bias.len()
                };
                for i in 0..n {
                    let nudge = |delta: f64| {
                        let mut p = params.clone();
                        let l = &mut p.layers_mut()[layer];
                        if which == 0 {
                            l.weights[i] += delta;
                        } else {
                            l.bias[i] += delta;
                        }
                        batch_loss(&p)
                    };
                    let numeric = (nudge(h) - nudge(-h)) / (2.0 * h);
                    let a = if which == 0 {
                        analytic.weights[layer][i]
                    } else {
                        analytic.bias[layer][i]
                    };
                    let scale = a.abs().max(numeric.abs());
                    let rel = if scale == 0.0 {
                        0.0
                    } else {
                        (a - numeric).abs() / scale
                    };
                    worst = worst.max(rel);
                    checked += 1;
                }
            }
        }
    }
    ensure(
        worst <= 1e-4,
        format!("max relative error {worst:.3e} > 1e-4"),
    )?;
    Ok(format!(
        "{checked} parameters, max relative error {worst:.2e}"
    ))
}

fn streaming_mean() -> Outcome {
    let mut rng = seeding::rng(202);
    let dim = 6;
    let stream: Vec<(Vec<f64>, Label)> = (0..10_000)
        .map(|_| {
            let y = rng.random_range(0..8u32);
            let v = (0..dim)
                .map(|_| rng.random_range(-10.0..10.0) + y as f64)
                .collect();
            (v, y)
        })
        .collect();
    let mut sums: BTreeMap<Label, (Vec<f64>, f64)> = BTreeMap::new();
    for (v, y) in &stream {
        let e = sums.entry(*y).or_insert((vec![0.0; dim], 0.0));
        for (s, x) in e.0.iter_mut().zip(v) {
            *s += x;
        }
        e.1 += 1.0;
    }
    let mut worst: f64 = 0.0;
    for perm in 0..3u64 {
        let mut order: Vec<usize> = (0..stream.len()).collect();
        order.shuffle(&mut seeding::derived_rng(303, perm));
        let mut reg = ClassMeanRegistry::new();
        for &i in &order {
            reg.incremental_update(&stream[i].0, stream[i].1)
                .map_err(err)?;
        }
        ensure(reg.len() == 8, "expected 8 classes")?;
        for (y, (s, n)) in &sums {
            let c = reg.get(*y).ok_or("missing class")?;
            ensure(c.count as f64 == *n, "count mismatch")?;
            for (m, t) in c.mean.iter().zip(s) {
                worst = worst.max((m - t / n).abs());
            }
        }
    }
    ensure(worst <= 1e-9, format!("max deviation {worst:.3e} > 1e-9"))?;
    Ok(format!("3 permutations, max deviation {worst:.2e}"))
}

fn softmax_predict() -> Outcome {
    let mut rng = seeding::rng(404);
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut mismatches = 0;
    for trial in 0..10_000 {
        let k = rng.random_range(1..=20usize);
        let mut labels: Vec<Label> = (0..60).collect();
        labels.shuffle(&mut rng);
        labels.truncate(k);
        labels.sort_unstable();
        let d: Vec<(Label, f64)> = labels
            .iter()
            .map(|&y| {
                // Every fourth vector draws from a tiny grid to force ties.
                let x = if trial % 4 == 0 {
                    rng.random_range(0..3) as f64
                } else {
                    rng.random_range(0.0..30.0)
                };
                (y, x)
            })
            .collect();
        let p = class_probabilities(&d);
        worst_sum = worst_sum.max((p.iter().map(|(_, q)| q).sum::<f64>() - 1.0).abs());
        let c = rng.random_range(-50.0..50.0);
        let shifted: Vec<(Label, f64)> = d.iter().map(|&(y, x)| (y, x + c)).collect();
        for ((_, a), (_, b)) in p.iter().zip(class_probabilities(&shifted)) {
            worst_shift = worst_shift.max((a - b).abs());
        }
        let mut oracle = 0;
        for i in 1..d.len() {
            if d[i].1 < d[oracle].1 {
                oracle = i;
            }
        }
        if argmin_label(&d) != Some(d[oracle].0) {
            mismatches += 1;
        }
    }
    ensure(
        worst_sum <= 1e-12,
        format!("probability sum off by {worst_sum:.3e}"),
    )?;
    ensure(
        worst_shift <= 1e-12,
        format!("shift changed probabilities by {worst_shift:.3e}"),
    )?;
    ensure(mismatches == 0, format!("{mismatches} argmin mismatches"))?;
    Ok(format!(
        "sum err {worst_sum:.1e}, shift err {worst_shift:.1e}, 0/10000 argmin mismatches"
    ))
}

fn training_effectiveness() -> Outcome {
    let spec = synthetic(INITIAL_CLASSES);
    let centers = spec.class_centers();
    let mut min_gap = f64::INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d: f64 = centers[i]
                .iter()
                .zip(&centers[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            min_gap = min_gap.min(d);
        }
    }
    ensure(
        min_gap >= 4.0 * spec.noise_sigma,
        format!("centers only {min_gap:.3} apart"),
    )?;
    let data = generate_synthetic(&spec).map_err(err)?;
    let (train, val, test) = split(&data, &SplitSpec::default()).map_err(err)?;
    let config = TrainingConfig::default();
    let (model, report) = initial_train(&train, Some(&val), &config, INIT_SEED).map_err(err)?;
    let first = report.epochs.first().ok_or("no epochs")?.train_loss;
    let last = report.epochs.last().ok_or("no epochs")?.train_loss;
    let acc = evaluate(&model, &test).map_err(err)?.accuracy;
    ensure(report.epochs.len() == 50, "expected 50 epochs")?;
    ensure(
        last < first,
        format!("loss did not fall: {first:.4} -> {last:.4}"),
    )?;
    ensure(acc >= 0.95, format!("test accuracy {acc:.4} < 0.95"))?;
    Ok(format!(
        "min center gap {:.2}σ, loss {first:.4} -> {last:.2e}, test accuracy {acc:.4}",
        min_gap / spec.noise_sigma
    ))
}

fn new_class_ordering() -> Outcome {
    let data = experiment()?;
    let spec = sweep(
        SweepVariable::NewClassCount,
        vec![5, 10, 15, 20, 25],
        vec![Method::Dncm, Method::RawNcm],
    );
    let r = run_new_class_sweep(&spec, &data).map_err(err)?;
    let acc = |m, v| r.mean_accuracy(m, v).unwrap();
    let mut line = Vec::new();
    for v in &spec.values {
        let (d, n) = (acc(Method::Dncm, *v), acc(Method::RawNcm, *v));
        ensure(
            d >= n,
            format!("at {v} new classes DNCM {d:.4} < raw NCM {n:.4}"),
        )?;
        line.push(format!("{v}:{d:.3}/{n:.3}"));
    }
    let dncm_drop = acc(Method::Dncm, 5) - acc(Method::Dncm, 25);
    let ncm_drop = acc(Method::RawNcm, 5) - acc(Method::RawNcm, 25);
    ensure(
        dncm_drop <= ncm_drop,
        format!("DNCM drop {dncm_drop:.4} > raw NCM drop {ncm_drop:.4}"),
    )?;
    Ok(format!(
        "DNCM/rawNCM {}, drops {dncm_drop:.4} vs {ncm_drop:.4}",
        line.join(" ")
    ))
}

fn small_sample() -> Outcome {
    let data = experiment()?;
    let spec = sweep(
        SweepVariable::SamplesPerNewClass,
        (3..=10).collect(),
        vec![Method::Dncm, Method::Knn],
    );
    let r = run_sample_size_sweep(&spec, &data).map_err(err)?;
    let acc = |m, v| r.mean_accuracy(m, v).unwrap();
    let dncm_drop = acc(Method::Dncm, 10) - acc(Method::Dncm, 3);
    let knn_drop = acc(Method::Knn, 10) - acc(Method::Knn, 3);
    ensure(
        dncm_drop < knn_drop,
        format!("DNCM drop {dncm_drop:.4} >= KNN drop {knn_drop:.4}"),
    )?;
    Ok(format!(
        "DNCM {:.4} -> {:.4} (drop {dncm_drop:.4}), KNN {:.4} -> {:.4} (drop {knn_drop:.4}), k={:?}",
        acc(Method::Dncm, 10),
        acc(Method::Dncm, 3),
        acc(Method::Knn, 10),
        acc(Method::Knn, 3),
        r.metadata.knn_k.values().next()
    ))
}

fn r_squared(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

fn latency_scaling() -> Outcome {
    let data = experiment()?;
    let (train, val, test) = split(&data.initial, &data.split).map_err(err)?;
    let mut cfg = data.training.clone();
    cfg.max_epoch = 5;
    let (base, _) = initial_train(&train, Some(&val), &cfg, INIT_SEED).map_err(err)?;
    let mut pool: Vec<SampleRecord> = data
        .initial
        .records
        .iter()
        .chain(&data.incremental.records)
        .cloned()
        .collect();
    pool.shuffle(&mut seeding::rng(505));
    let raw_queries: Vec<Vec<f64>> = test
        .records
        .iter()
        .take(300)
        .map(|r| r.features.clone())
        .collect();
    let std_queries: Vec<Vec<f64>> = raw_queries
        .iter()
        .map(|q| base.standardization.apply(q))
        .collect();
    let sizes = [1000usize, 2000, 4000, 8000];
    let mut models = Vec::new();
    for &n in &sizes {
        let samples: Vec<SampleRecord> = pool[..n]
            .iter()
            .map(|r| SampleRecord::new(base.standardization.apply(&r.features), r.label))
            .collect();
        let knn = KnnModel::new(5, samples).map_err(err)?;
        let mut model = base.clone();
        updating_train(&mut model, &pool[..n]).map_err(err)?;
        models.push((knn, model));
    }
    // Rounds interleave all sizes so a burst of background load hits every N
    // alike; each N keeps its fastest round.
    let mut knn_ns = vec![f64::INFINITY; sizes.len()];
    let mut dncm_ns = vec![f64::INFINITY; sizes.len()];
    for _round in 0..20 {
        for (i, (knn, model)) in models.iter().enumerate() {
            let k = measure_predict_latency(knn, &std_queries, 7).map_err(err)?;
            let d = measure_predict_latency(model, &raw_queries, 7).map_err(err)?;
            knn_ns[i] = knn_ns[i].min(k.median_ns);
            dncm_ns[i] = dncm_ns[i].min(d.median_ns);
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let (slope, r2) = r_squared(&xs, &knn_ns);
    let spread = dncm_ns.iter().cloned().fold(0.0, f64::max)
        / dncm_ns.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(
        slope > 0.0,
        format!("KNN latency slope {slope:.3e} not positive"),
    )?;
    ensure(r2 >= 0.9, format!("KNN latency R² {r2:.4} < 0.9"))?;
    ensure(spread <= 2.0, format!("DNCM latency varies {spread:.2}x"))?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{:.0}", x))
            .collect::<Vec<_>>()
            .join("/")
    };
    Ok(format!(
        "KNN ns {} (R² {r2:.4}), DNCM ns {} ({spread:.2}x)",
        fmt(&knn_ns),
        fmt(&dncm_ns)
    ))
}

fn initial_class_monotonicity() -> Outcome {
    let data = experiment()?;
    let spec = SweepSpec {
        new_class_values: vec![NEW_CLASSES],
        ..sweep(
            SweepVariable::InitialClassCount,
            vec![2, 4, 8, 10],
            vec![Method::Dncm],
        )
    };
    let r = run_initial_class_sweep(&spec, &data).map_err(err)?;
    let accs: Vec<f64> = spec
        .values
        .iter()
        .map(|&k| {
            r.row(Method::Dncm, k, Some(NEW_CLASSES))
                .unwrap()
                .mean_accuracy
        })
        .collect();
    for (w, k) in accs.windows(2).zip(spec.values.windows(2)) {
        ensure(
            w[1] >= w[0],
            format!(
                "accuracy fell from K_init {} ({:.4}) to {} ({:.4})",
                k[0], w[0], k[1], w[1]
            ),
        )?;
    }
    Ok(format!(
        "DNCM at 25 new classes: {}",
        spec.values
            .iter()
            .zip(&accs)
            .map(|(k, a)| format!("{k}:{a:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    ))
}

fn small_model() -> Result<(DncmModel, Dataset, Dataset), String> {
    let all = generate_synthetic(&SyntheticSpec {
        num_classes: 6,
        samples_per_class: 60,
        seed: DATA_SEED,
        ..SyntheticSpec::default()
    })
    .map_err(err)?;
    let initial = all.filter_labels(|l| l < 4);
    let incoming = all.filter_labels(|l| l >= 4);
    let (train, val, _) = split(&initial, &SplitSpec::default()).map_err(err)?;
    let cfg = TrainingConfig {
        max_epoch: 8,
        ..TrainingConfig::default()
    };
    let (model, _) = initial_train(&train, Some(&val), &cfg, INIT_SEED).map_err(err)?;
    Ok((model, initial, incoming))
}

fn frozen_extractor() -> Outcome {
    let (mut model, initial, incoming) = small_model()?;
    let dir = tempfile::tempdir().map_err(err)?;
    model.save(dir.path().join("before")).map_err(err)?;
    let before = std::fs::read(dir.path().join("before").join(EXTRACTOR_FILE)).map_err(err)?;
    let text = model.extractor.to_text();
    let streams: [&[SampleRecord]; 3] = [&[], &incoming.records, &initial.records[..50]];
    for (i, s) in streams.iter().enumerate() {
        updating_train(&mut model, s).map_err(err)?;
        ensure(
            model.extractor.to_text() == text,
            format!("extractor changed after stream {i}"),
        )?;
        let p = dir.path().join(format!("after{i}"));
        model.save(&p).map_err(err)?;
        ensure(
            std::fs::read(p.join(EXTRACTOR_FILE)).map_err(err)? == before,
            format!("extractor file differs after stream {i}"),
        )?;
    }
    Ok(format!(
        "{} bytes identical across 3 update streams",
        before.len()
    ))
}

fn determinism() -> Outcome {
    let spec = synthetic(4);
    let csv = |d: &Dataset| -> Result<Vec<u8>, String> {
        let mut buf = Vec::new();
        write_csv(d, &mut buf).map_err(err)?;
        Ok(buf)
    };
    let a = generate_synthetic(&spec).map_err(err)?;
    let b = generate_synthetic(&spec).map_err(err)?;
    ensure(csv(&a)? == csv(&b)?, "datasets differ")?;
    let back = read_csv(csv(&a)?.as_slice(), Some(spec.feature_dim)).map_err(err)?;
    ensure(back == a, "CSV round-trip changed values")?;

    let (m1, _, incoming) = small_model()?;
    let (m2, _, _) = small_model()?;
    let dir = tempfile::tempdir().map_err(err)?;
    m1.save(dir.path().join("a")).map_err(err)?;
    m2.save(dir.path().join("b")).map_err(err)?;
    for f in std::fs::read_dir(dir.path().join("a")).map_err(err)? {
        let name = f.map_err(err)?.file_name();
        let x = std::fs::read(dir.path().join("a").join(&name)).map_err(err)?;
        let y = std::fs::read(dir.path().join("b").join(&name)).map_err(err)?;
        ensure(x == y, format!("{name:?} differs between identical runs"))?;
    }
    let loaded = DncmModel::load(dir.path().join("a")).map_err(err)?;
    for r in a.records.iter().chain(&incoming.records) {
        ensure(
            loaded.embed(&r.features).map_err(err)? == m1.embed(&r.features).map_err(err)?
                && loaded.predict(&r.features).map_err(err)?
                    == m1.predict(&r.features).map_err(err)?,
            "loaded model predicts differently",
        )?;
    }

    let all = generate_synthetic(&SyntheticSpec {
        num_classes: 8,
        samples_per_class: 60,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .map_err(err)?;
    let data = ExperimentData {
        initial: all.filter_labels(|l| l < 4),
        incremental: all.filter_labels(|l| l >= 4),
        split: SplitSpec::default(),
        training: TrainingConfig {
            max_epoch: 4,
            ..TrainingConfig::default()
        },
        init_seed: 2,
    };
    let s = SweepSpec {
        trials: 3,
        min_test_per_class: 0,
        ..SweepSpec::new(SweepVariable::NewClassCount, vec![1, 4])
    };
    let r1 = run_new_class_sweep(&s, &data).map_err(err)?;
    let r2 = run_new_class_sweep(&s, &data).map_err(err)?;
    ensure(
        r1.accuracy_csv() == r2.accuracy_csv(),
        "sweep accuracies differ",
    )?;
    Ok("datasets, model artifacts, sweep accuracies and round-trip predictions identical".into())
}

fn pca_oracle() -> Outcome {
    let mut rng = seeding::rng(606);
    let scales = [3.0, 2.0, 1.0, 0.5, 0.1];
    let data: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            let z: Vec<f64> = scales
                .iter()
                .map(|s| s * rng.random_range(-1.0..1.0))
                .collect();
            // Mix coordinates so the axes are not the identity.
            vec![
                z[0] + 0.3 * z[1],
                z[1] - 0.2 * z[2],
                z[2] + 0.5 * z[0],
                z[3] + z[4],
                z[4] - 0.4 * z[3],
            ]
        })
        .collect();
    let proj = pca_project(&data, 2).map_err(err)?;
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..5)
        .map(|c| data.iter().map(|p| p[c]).sum::<f64>() / n)
        .collect();
    let cov = DMatrix::from_fn(5, 5, |i, j| {
        data.iter()
            .map(|p| (p[i] - mean[i]) * (p[j] - mean[j]))
            .sum::<f64>()
            / (n - 1.0)
    });
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().sum();
    let mut worst_axis: f64 = 0.0;
    for (c, &k) in order.iter().take(2).enumerate() {
        let oracle: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let dot: f64 = oracle
            .iter()
            .zip(&proj.components[c])
            .map(|(a, b)| a * b)
            .sum();
        let sign = dot.signum();
        for (a, b) in oracle.iter().zip(&proj.components[c]) {
            worst_axis = worst_axis.max((sign * a - b).abs());
        }
        let ratio = eig.eigenvalues[k] / total;
        ensure(
            (ratio - proj.explained_variance_ratio[c]).abs() <= 1e-9,
            format!("variance ratio {c} differs"),
        )?;
    }
    ensure(
        worst_axis <= 1e-8,
        format!("axes differ by {worst_axis:.3e}"),
    )?;
    ensure(
        proj.explained_variance_ratio
            .windows(2)
            .all(|w| w[0] >= w[1]),
        "explained variance not nonincreasing",
    )?;

    let planar: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            vec![1.0 + a, 2.0 - b, 0.5 * a + b, 3.0, a - 2.0 * b]
        })
        .collect();
    let pp = pca_project(&planar, 2).map_err(err)?;
    let mut worst_rec: f64 = 0.0;
    for (p, z) in planar.iter().zip(&pp.points) {
        for (x, y) in p.iter().zip(pp.reconstruct(z)) {
            worst_rec = worst_rec.max((x - y).abs());
        }
    }
    ensure(
        worst_rec <= 1e-9,
        format!("planar reconstruction error {worst_rec:.3e}"),
    )?;
    Ok(format!(
        "axis error {worst_axis:.1e}, planar reconstruction error {worst_rec:.1e}"
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "gradient correctness",
            budget: Some(Duration::from_secs(10)),
            run: gradient_check,
        },
        Criterion {
            id: 2,
            name: "streaming mean",
            budget: Some(Duration::from_secs(5)),
            run: streaming_mean,
        },
        Criterion {
            id: 3,
            name: "softmax and predict contracts",
            budget: None,
            run: softmax_predict,
        },
        Criterion {
            id: 4,
            name: "training effectiveness",
            budget: Some(Duration::from_secs(180)),
            run: training_effectiveness,
        },
        Criterion {
            id: 5,
            name: "new-class sweep ordering",
            budget: Some(Duration::from_secs(600)),
            run: new_class_ordering,
        },
        Criterion {
            id: 6,
            name: "small-sample robustness",
            budget: None,
            run: small_sample,
        },
        Criterion {
            id: 7,
            name: "latency scaling",
            budget: Some(Duration::from_secs(300)),
            run: latency_scaling,
        },
        Criterion {
            id: 8,
            name: "initial-class monotonicity",
            budget: None,
            run: initial_class_monotonicity,
        },
        Criterion {
            id: 9,
            name: "frozen extractor",
            budget: None,
            run: frozen_extractor,
        },
        Criterion {
            id: 10,
            name: "determinism and round-trips",
            budget: None,
            run: determinism,
        },
        Criterion {
            id: 11,
            name: "PCA oracle",
            budget: None,
            run: pca_oracle,
        },
    ];
    let filter: Option<u32> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_none_or(|f| f == c.id)) {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(budget)) = (&outcome, c.budget) {
            if elapsed > budget {
                outcome = Err(format!(
                    "took {:.1}s, budget {}s",
                    elapsed.as_secs_f64(),
                    budget.as_secs()
                ));
            }
        }
        match outcome {
            Ok(detail) => println!(
                "PASS {:>2} {}: {detail} [{:.1}s]",
                c.id,
                c.name,
                elapsed.as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "FAIL {:>2} {}: {why} [{:.1}s]",
                    c.id,
                    c.name,
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
