use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use dncm::benchkit::{run_class_table, run_sweep, ExperimentData, SweepSpec};
use dncm::datakit::{
    generate_synthetic, load_csv, pca_project, save_csv, split, write_projection_csv, Dataset,
};
use dncm::seeding::derive_seed;
use dncm::trainer::{evaluate, initial_train, updating_train, DncmModel};
use dncm::{benchkit, DncmError, Label};

use crate::args::{
    stream, BenchArgs, EvalArgs, GenDataArgs, ProjectArgs, Space, TrainArgs, UpdateArgs,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] DncmError),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 for usage and validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(
                DncmError::Io(_) | DncmError::Json(_) | DncmError::TrainingDivergence { .. },
            ) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

pub fn gen_data(args: &GenDataArgs, seed: u64) -> Result<()> {
    let syn = &args.synthetic;
    if syn.num_classes == 0 {
        return Err(CliError::Usage("--classes must be at least 1".into()));
    }
    let spec = syn.spec(seed);
    spec.validate()?;
    let all = generate_synthetic(&spec)?;
    let cut = syn.num_classes as Label;
    let initial = all.filter_labels(|l| l < cut);
    fs::create_dir_all(&args.out_dir)?;
    let path = args.out_dir.join("initial.csv");
    save_csv(&initial, &path)?;
    println!(
        "wrote {} rows ({} classes) to {}",
        initial.len(),
        syn.num_classes,
        path.display()
    );
    if syn.new_classes > 0 {
        let incremental = all.filter_labels(|l| l >= cut);
        let path = args.out_dir.join("incremental.csv");
        save_csv(&incremental, &path)?;
        println!(
            "wrote {} rows ({} classes) to {}",
            incremental.len(),
            syn.new_classes,
            path.display()
        );
    }
    Ok(())
}

pub fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    require_file(&args.data, "data file")?;
    let config = args.training.config(seed);
    config.validate()?;
    let data = load_csv(&args.data)?;
    let (train, validation, test) = split(&data, &args.training.split(seed))?;
    let (model, report) = initial_train(
        &train,
        Some(&validation),
        &config,
        derive_seed(seed, stream::INIT),
    )?;
    model.save(&args.out)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.join("train_report.csv"));
    report.write_csv(BufWriter::new(File::create(&report_path)?))?;
    if let Some(dir) = &args.split_dir {
        fs::create_dir_all(dir)?;
        save_csv(&train, dir.join("train.csv"))?;
        save_csv(&validation, dir.join("validation.csv"))?;
        save_csv(&test, dir.join("test.csv"))?;
    }
    if let Some(last) = report.epochs.last() {
        println!(
            "epoch {}: loss {:.6}, train accuracy {:.4}",
            last.epoch, last.train_loss, last.train_accuracy
        );
    }
    if !test.is_empty() {
        println!(
            "test accuracy {:.4} on {} samples",
            evaluate(&model, &test)?.accuracy,
            test.len()
        );
    }
    println!("model written to {}", args.out.display());
    Ok(())
}

pub fn update(args: &UpdateArgs) -> Result<()> {
    require_dir(&args.model, "model directory")?;
    require_file(&args.data, "data file")?;
    let mut model = DncmModel::load(&args.model)?;
    let data = load_csv(&args.data)?;
    let summary = updating_train(&mut model, &data.records)?;
    let out = args.out.as_ref().unwrap_or(&args.model);
    model.save(out)?;
    let added: Vec<String> = summary.new_classes.iter().map(|l| l.to_string()).collect();
    println!(
        "folded {} samples; {} new classes [{}]; registry holds {} classes",
        summary.samples,
        added.len(),
        added.join(","),
        model.registry.len()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    require_dir(&args.model, "model directory")?;
    require_file(&args.data, "data file")?;
    let model = DncmModel::load(&args.model)?;
    let data = load_csv(&args.data)?;
    if args.per_class {
        let table = benchkit::build_class_accuracy_table(&[("DNCM", &model)], &data)?;
        match &args.out {
            Some(path) => table.write_csv(BufWriter::new(File::create(path)?))?,
            None => table.write_csv(io::stdout().lock())?,
        }
        eprintln!(
            "accuracy {:.4} on {} samples",
            table.averages[0],
            data.len()
        );
    } else {
        let e = evaluate(&model, &data)?;
        println!("accuracy {:.4} on {} samples", e.accuracy, e.samples);
    }
    Ok(())
}

fn bench_data(args: &BenchArgs, seed: u64) -> Result<(Dataset, Dataset)> {
    match (&args.initial, &args.incremental) {
        (Some(initial), Some(incremental)) => {
            require_file(initial, "initial data file")?;
            require_file(incremental, "incremental data file")?;
            Ok((load_csv(initial)?, load_csv(incremental)?))
        }
        _ => {
            let all = generate_synthetic(&args.synthetic.spec(seed))?;
            let cut = args.synthetic.num_classes as Label;
            Ok((
                all.filter_labels(|l| l < cut),
                all.filter_labels(|l| l >= cut),
            ))
        }
    }
}

pub fn bench(args: &BenchArgs, seed: u64) -> Result<()> {
    let mut spec = SweepSpec::new(
        args.sweep.variable(),
        if args.values.is_empty() {
            args.sweep.default_values()
        } else {
            args.values.clone()
        },
    );
    spec.trials = args.trials;
    spec.train_samples_per_new_class = args.train_samples_per_new_class;
    spec.new_class_values = args.new_class_values.clone();
    spec.methods = args.methods.iter().map(|&m| m.into()).collect();
    spec.test_mix = args.test_mix.into();
    spec.knn_k = args.knn_k;
    spec.min_test_per_class = args.min_test_per_class;
    spec.latency_queries = args.latency_queries;
    spec.latency_repetitions = args.latency_repetitions;
    spec.seed = derive_seed(seed, stream::TRIALS);

    let training = args.training.config(seed);
    training.validate()?;
    let (initial, incremental) = bench_data(args, seed)?;
    let data = ExperimentData {
        initial,
        incremental,
        split: args.training.split(seed),
        training,
        init_seed: derive_seed(seed, stream::INIT),
    };
    let report = run_sweep(&spec, &data)?;
    fs::create_dir_all(&args.out_dir)?;
    let csv_path = args.out_dir.join(report.file_name());
    report.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let mut meta = serde_json::to_string_pretty(&report.metadata)?;
    meta.push('\n');
    fs::write(args.out_dir.join(report.metadata_file_name()), meta)?;
    for w in &report.metadata.warnings {
        eprintln!("warning: {w}");
    }
    for r in &report.rows {
        let k_new = r
            .new_classes
            .map(|k| format!(" new={k}"))
            .unwrap_or_default();
        println!(
            "{:<7} {:>3}{k_new}  accuracy {:.4} ± {:.4}  latency {:.0} ns",
            r.method.name(),
            r.value,
            r.mean_accuracy,
            r.std_accuracy,
            r.mean_latency_ns
        );
    }
    println!("report written to {}", csv_path.display());
    if args.class_table {
        let table = run_class_table(&spec, &data)?;
        let path = args.out_dir.join("class_table.csv");
        table.write_csv(BufWriter::new(File::create(&path)?))?;
        println!("per-class table written to {}", path.display());
    }
    Ok(())
}

pub fn project(args: &ProjectArgs) -> Result<()> {
    require_file(&args.data, "data file")?;
    let data = load_csv(&args.data)?;
    let points = match args.space {
        Space::Raw => data.features(),
        Space::Feature => {
            let dir = args
                .model
                .as_ref()
                .ok_or_else(|| CliError::Usage("--space feature needs --model".into()))?;
            require_dir(dir, "model directory")?;
            let model = DncmModel::load(dir)?;
            data.records
                .iter()
                .map(|r| model.embed(&r.features))
                .collect::<dncm::Result<Vec<_>>>()?
        }
    };
    let proj = pca_project(&points, 2)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_projection_csv(&data.label_vec(), &proj, &mut out)?;
    out.flush()?;
    println!(
        "explained variance {:.4}, {:.4}; written to {}",
        proj.explained_variance_ratio[0],
        proj.explained_variance_ratio[1],
        args.out.display()
    );
    Ok(())
}
