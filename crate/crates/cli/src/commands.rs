use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;

use bounded::baseline::{ca_classify, CaConfig};
use bounded::dataset::{concat, labeled_features, sampled_features};
use bounded::features::{extract_features_for, write_feature_file, FeatureMask, ScaleConfig};
use bounded::io::{read_cloud, write_atomic, write_classified_ply, write_ply, ClassCode, PlyFormat, PointCloud};
use bounded::knn::KnnIndex;
use bounded::metrics::{median, CloudEvaluation, EvaluationReport};
use bounded::net::{classify, load_model, save_model, Architecture, Model, Standardization, TrainConfig, TrainingSet};
use bounded::synth::{generate, generate_suite, sample_validation, Primitive, SceneSpec, Split, SuiteManifest};

use crate::config::FileConfig;
use crate::manifest::{manifest_path_for, RunManifest};
use crate::{
    BenchArgs, Baseline, ClassifyArgs, Cli, Command, EvalArgs, FeaturesArgs, ScaleArgs, SynthArgs, TrainArgs,
};

const THREADS_ENV: &str = "BOUNDED_THREADS";

pub fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    configure_threads(cli.threads.or(file.threads))?;
    match cli.command {
        Command::Synth(a) => synth(a, &file),
        Command::Features(a) => features(a, &file),
        Command::Train(a) => train(a, &file),
        Command::Classify(a) => classify_cmd(a),
        Command::Eval(a) => eval(a, &file),
        Command::Bench(a) => bench(a, &file),
    }
}

fn configure_threads(requested: Option<usize>) -> Result<()> {
    let threads = match requested {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = threads {
        ensure!(n > 0, "thread count must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

/// `out.ply` with suffix `.labels.csv` becomes `out.ply.labels.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_cloud(path: &Path) -> Result<PointCloud> {
    read_cloud(path).with_context(|| format!("reading {}", path.display()))
}

fn scale_config(args: &ScaleArgs, file: &FileConfig) -> Result<ScaleConfig> {
    let defaults = ScaleConfig::default();
    let scales = match (&args.scales, &file.features.scales) {
        (Some(s), _) => ScaleConfig::parse_scales(s)?,
        (None, Some(s)) => s.clone(),
        (None, None) => defaults.scales,
    };
    let mask = match args.mask.as_deref().or(file.features.mask.as_deref()) {
        Some(m) => FeatureMask::parse(m)?,
        None => defaults.mask,
    };
    Ok(ScaleConfig::new(scales, mask)?)
}

fn cloud_path(dir: &Path, split: Split, name: &str) -> PathBuf {
    dir.join(split_dir(split)).join(format!("{name}.ply"))
}

fn split_dir(split: Split) -> &'static str {
    match split {
        Split::Training => "training",
        Split::Validation => "validation",
        Split::Evaluation => "evaluation",
    }
}

fn read_suite_manifest(dir: &Path) -> Result<SuiteManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn synth(args: SynthArgs, file: &FileConfig) -> Result<()> {
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut run = RunManifest::new(
        "synth",
        json!({ "profile": args.profile.name(), "out": args.out }),
        Some(seed),
    );
    let suite = run.time("generation", || generate_suite(args.profile, seed))?;
    run.time("writing", || -> Result<()> {
        for c in &suite.clouds {
            let path = cloud_path(&args.out, c.split, &c.name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            write_ply(&c.cloud, &path, PlyFormat::BinaryLittleEndian)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        write_json(&args.out.join("manifest.json"), &suite.manifest())
    })?;
    for split in [Split::Training, Split::Validation, Split::Evaluation] {
        let counts = suite.class_counts(split);
        println!(
            "{:<10} {:>2} clouds  non-edge {:>8}  sharp-edge {:>7}  boundary {:>6}",
            split_dir(split),
            suite.split(split).count(),
            counts[0],
            counts[1],
            counts[2]
        );
    }
    run.finish(&args.out.join("run.json"))
}

fn features(args: FeaturesArgs, file: &FileConfig) -> Result<()> {
    let config = scale_config(&args.scale, file)?;
    let mut run = RunManifest::new("features", serde_json::to_value(&config)?, None);
    run.hash_input(&args.input)?;
    let cloud = run.time("reading", || load_cloud(&args.input))?;
    ensure!(
        cloud.len() >= config.largest(),
        "{} has {} points, fewer than the largest scale {}",
        args.input.display(),
        cloud.len(),
        config.largest()
    );
    let index = run.time("index", || KnnIndex::build(&cloud.points))?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let set = run.time("features", || extract_features_for(&index, &all, &config))?;
    write_feature_file(&set, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let seconds = run.seconds("index") + run.seconds("features");
    println!(
        "{} points, {} scales x 12 columns, {:.2} s, {:.0} points/s",
        cloud.len(),
        config.scale_count(),
        seconds,
        cloud.len() as f64 / seconds.max(1e-9)
    );
    run.finish(&manifest_path_for(&args.out))
}

struct TrainingData {
    pool: TrainingSet,
    validation: TrainingSet,
}

/// A validation cloud with the indices sampled from it, when a dataset
/// manifest supplies them.
type ValidationSource = (PathBuf, Option<Vec<usize>>);

fn training_data(args: &TrainArgs, config: &ScaleConfig, seed: u64, run: &mut RunManifest) -> Result<TrainingData> {
    let (train_paths, validation): (Vec<PathBuf>, Vec<ValidationSource>) = match &args.data {
        Some(dir) => {
            let manifest = read_suite_manifest(dir)?;
            let train = manifest
                .clouds
                .iter()
                .filter(|c| c.split == Split::Training)
                .map(|c| cloud_path(dir, c.split, &c.name))
                .collect();
            let val = manifest
                .validation_samples
                .iter()
                .map(|(name, idx)| (cloud_path(dir, Split::Validation, name), Some(idx.clone())))
                .collect();
            (train, val)
        }
        None => (
            args.train.clone(),
            args.validation.iter().map(|p| (p.clone(), None)).collect(),
        ),
    };
    ensure!(!train_paths.is_empty(), "no training clouds given (use --data or --train)");
    ensure!(!validation.is_empty(), "no validation clouds given (use --data or --validation)");

    let mut pool = Vec::new();
    for path in &train_paths {
        run.hash_input(path)?;
        let cloud = load_cloud(path)?;
        let set = run.time("preprocessing", || labeled_features(&cloud, config));
        pool.push(set.with_context(|| format!("features of {}", path.display()))?);
    }
    let mut clouds = Vec::new();
    for (path, _) in &validation {
        run.hash_input(path)?;
        clouds.push(load_cloud(path)?);
    }
    let samples: Vec<Vec<usize>> = if validation.iter().all(|(_, s)| s.is_some()) {
        validation.iter().map(|(_, s)| s.clone().unwrap_or_default()).collect()
    } else {
        let refs: Vec<&PointCloud> = clouds.iter().collect();
        for (c, (path, _)) in clouds.iter().zip(&validation) {
            ensure!(c.labels.is_some(), "{} carries no labels", path.display());
        }
        sample_validation(&refs, seed)
    };
    let mut val = Vec::new();
    for ((cloud, (path, _)), idx) in clouds.iter().zip(&validation).zip(&samples) {
        if idx.is_empty() {
            continue;
        }
        let set = run.time("preprocessing", || sampled_features(cloud, idx, config));
        val.push(set.with_context(|| format!("features of {}", path.display()))?);
    }
    ensure!(!val.is_empty(), "the validation clouds yielded no samples");
    Ok(TrainingData {
        pool: concat(&pool)?,
        validation: concat(&val)?,
    })
}

fn train_config(args: &TrainArgs, file: &FileConfig) -> TrainConfig {
    let t = &file.train;
    let mut c = TrainConfig::default();
    if let Some(v) = args.iters.or(t.iters) {
        c.iterations = v;
    }
    if let Some(v) = args.runs.or(t.runs) {
        c.runs = v;
    }
    if let Some(v) = args.batch_size.or(t.batch_size) {
        c.batch_size = v;
    }
    if let Some(v) = args.lr.or(t.lr) {
        c.lr = v;
    }
    if let Some(v) = t.gamma {
        c.gamma = v;
    }
    if let Some(v) = args.log_every.or(t.log_every) {
        c.log_every = v;
    }
    c.two_class = args.two_class || t.two_class.unwrap_or(false);
    c.seed = args.seed.or(file.seed).unwrap_or(0);
    c
}

fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let scale = scale_config(&args.scale, file)?;
    let config = train_config(&args, file);
    config.validate()?;
    let mut run = RunManifest::new(
        "train",
        json!({ "features": scale, "train": config }),
        Some(config.seed),
    );
    let data = training_data(&args, &scale, config.seed, &mut run)?;
    let counts = data.pool.class_counts();
    println!(
        "training pool {} points (non-edge {}, sharp-edge {}, boundary {}), validation {} points",
        data.pool.len(),
        counts[0],
        counts[1],
        counts[2],
        data.validation.len()
    );
    let outcome = run.time("training", || bounded::net::train(&data.pool, &data.validation, &config))?;
    for r in &outcome.runs {
        match (&r.final_val_loss, &r.error) {
            (Some(l), _) => println!("run {} (seed {:#018x}): validation loss {l:.6}", r.run, r.seed),
            (None, Some(e)) => println!("run {} (seed {:#018x}): failed: {e}", r.run, r.seed),
            (None, None) => println!("run {} (seed {:#018x}): no result", r.run, r.seed),
        }
    }
    println!("selected run {}", outcome.best_run);
    save_model(&outcome.model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let log = args.log.clone().unwrap_or_else(|| sibling(&args.out, ".log.csv"));
    write_text(&log, &outcome.best().log_csv())?;
    run.finish(&manifest_path_for(&args.out))
}

fn model_scale_config(model: &Model) -> Result<ScaleConfig> {
    Ok(ScaleConfig::new(model.scales.clone(), model.mask)?)
}

fn labels_csv(classification: &bounded::net::Classification) -> String {
    let mut s = String::from("index,label,p_non_edge,p_sharp_edge");
    if classification.classes == 3 {
        s.push_str(",p_boundary");
    }
    s.push('\n');
    for (i, c) in classification.predictions.iter().enumerate() {
        s.push_str(&format!("{i},{}", c.index()));
        for p in classification.probabilities_of(i) {
            s.push_str(&format!(",{p:.6}"));
        }
        s.push('\n');
    }
    s
}

fn classify_cmd(args: ClassifyArgs) -> Result<()> {
    let model = load_model(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let config = model_scale_config(&model)?;
    let mut run = RunManifest::new(
        "classify",
        json!({ "model": args.model, "features": config }),
        None,
    );
    run.hash_input(&args.model)?;
    run.hash_input(&args.input)?;
    let cloud = load_cloud(&args.input)?;
    let set = run.time("preprocessing", || {
        let index = KnnIndex::build(&cloud.points)?;
        let all: Vec<usize> = (0..cloud.len()).collect();
        extract_features_for(&index, &all, &config)
    })?;
    let result = run.time("classification", || classify(&model, &set))?;
    write_classified_ply(&cloud, &result.predictions, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let labels = args.labels.clone().unwrap_or_else(|| sibling(&args.out, ".labels.csv"));
    write_text(&labels, &labels_csv(&result))?;
    let mut counts = [0usize; 3];
    for c in &result.predictions {
        counts[c.index()] += 1;
    }
    println!(
        "{} points: non-edge {}, sharp-edge {}, boundary {}; preprocessing {:.2} s, classification {:.2} s",
        cloud.len(),
        counts[0],
        counts[1],
        counts[2],
        run.seconds("preprocessing"),
        run.seconds("classification")
    );
    run.finish(&manifest_path_for(&args.out))
}

fn eval_inputs(args: &EvalArgs) -> Result<Vec<(String, PathBuf)>> {
    let inputs: Vec<(String, PathBuf)> = match &args.data {
        Some(dir) => read_suite_manifest(dir)?
            .clouds
            .iter()
            .filter(|c| c.split == Split::Evaluation)
            .map(|c| (c.name.clone(), cloud_path(dir, c.split, &c.name)))
            .collect(),
        None => args
            .inputs
            .iter()
            .map(|p| {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (name, p.clone())
            })
            .collect(),
    };
    ensure!(!inputs.is_empty(), "no evaluation clouds given (use --data or --inputs)");
    Ok(inputs)
}

enum Method {
    Model(Box<Model>, ScaleConfig),
    Ca(CaConfig),
}

impl Method {
    fn predict(&self, cloud: &PointCloud) -> Result<Vec<ClassCode>> {
        match self {
            Method::Model(model, config) => {
                let index = KnnIndex::build(&cloud.points)?;
                let all: Vec<usize> = (0..cloud.len()).collect();
                let set = extract_features_for(&index, &all, config)?;
                Ok(classify(model, &set)?.predictions)
            }
            Method::Ca(config) => Ok(ca_classify(cloud, config)?),
        }
    }

    fn with_boundary(&self) -> bool {
        match self {
            Method::Model(model, _) => !model.arch.is_two_class(),
            Method::Ca(_) => false,
        }
    }
}

fn eval(args: EvalArgs, file: &FileConfig) -> Result<()> {
    let (method, description) = match (&args.model, args.baseline) {
        (Some(path), _) => {
            let model = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
            let config = model_scale_config(&model)?;
            let d = json!({ "method": "model", "model": path, "features": config, "two_class": model.arch.is_two_class() });
            (Method::Model(Box::new(model), config), d)
        }
        (None, Some(Baseline::Ca)) => {
            let mut config = CaConfig::default();
            if let Some(t) = args.threshold.or(file.eval.threshold) {
                config.threshold = t;
            }
            if let Some(k) = args.k.or(file.eval.k) {
                config.k = k;
            }
            config.validate()?;
            let d = json!({ "method": "ca", "threshold": config.threshold, "k": config.k });
            (Method::Ca(config), d)
        }
        (None, None) => bail!("either --model or --baseline is required"),
    };
    let mut run = RunManifest::new("eval", description.clone(), None);
    if let Some(path) = &args.model {
        run.hash_input(path)?;
    }
    let inputs = eval_inputs(&args)?;
    let mut clouds = Vec::new();
    for (name, path) in &inputs {
        run.hash_input(path)?;
        let cloud = load_cloud(path)?;
        let Some(labels) = cloud.labels.as_deref() else {
            bail!("{} carries no labels and cannot be evaluated", path.display());
        };
        let predictions = run.time("classification", || method.predict(&cloud))?;
        clouds.push(CloudEvaluation::new(name.clone(), &predictions, labels, method.with_boundary())?);
    }
    let report = EvaluationReport::new(clouds)?;
    for c in &report.clouds {
        print!("{:<16} sharp-edge F1 {:.4}", c.name, c.sharp_scores.f1);
        if let Some(b) = &c.boundary_scores {
            print!("  boundary F1 {:.4}", b.f1);
        }
        println!();
    }
    println!(
        "median sharp-edge: precision {:.4} recall {:.4} MCC {:.4} F1 {:.4} IoU {:.4}",
        report.sharp_median.precision,
        report.sharp_median.recall,
        report.sharp_median.mcc,
        report.sharp_median.f1,
        report.sharp_median.iou
    );
    if let Some(b) = &report.boundary_median {
        println!(
            "median boundary:   precision {:.4} recall {:.4} MCC {:.4} F1 {:.4} IoU {:.4}",
            b.precision, b.recall, b.mcc, b.f1, b.iou
        );
    }
    write_json(&args.out, &json!({ "evaluation": description, "report": report }))?;
    let csv = args.csv.clone().unwrap_or_else(|| sibling(&args.out, ".pr.csv"));
    write_text(&csv, &report.precision_recall_csv())?;
    run.finish(&manifest_path_for(&args.out))
}

/// A closed box surface with about `points` samples at unit spacing.
pub fn bench_cloud(points: usize, seed: u64) -> Result<PointCloud> {
    let side = (points as f64 / 6.0).sqrt().max(8.0);
    Ok(generate(&SceneSpec::new(Primitive::Box { size: [side; 3] }), seed)?)
}

fn bench(args: BenchArgs, file: &FileConfig) -> Result<()> {
    ensure!(args.repeats > 0, "--repeats must be positive");
    let seed = file.seed.unwrap_or(0);
    let mut run = RunManifest::new(
        "bench",
        json!({ "input": args.input, "points": args.points, "repeats": args.repeats, "model": args.model }),
        Some(seed),
    );
    let cloud = match &args.input {
        Some(path) => {
            run.hash_input(path)?;
            load_cloud(path)?
        }
        None => run.time("generation", || bench_cloud(args.points, seed))?,
    };
    let (model, config) = match &args.model {
        Some(path) => {
            run.hash_input(path)?;
            let model = load_model(path).with_context(|| format!("loading model {}", path.display()))?;
            let config = model_scale_config(&model)?;
            (model, config)
        }
        None => {
            let config = scale_config(&args.scale, file)?;
            let arch = Architecture::new(config.scale_count(), false);
            let width = arch.layout().input_width;
            let mut rng = bounded::seed::rng_for(seed, &[0]);
            let model = Model::new(arch, config.scales.clone(), config.mask, Standardization::identity(width), &mut rng)?;
            (model, config)
        }
    };
    ensure!(
        cloud.len() >= config.largest(),
        "the cloud has {} points, fewer than the largest scale {}",
        cloud.len(),
        config.largest()
    );
    let all: Vec<usize> = (0..cloud.len()).collect();
    let mut repeats = Vec::new();
    for _ in 0..args.repeats {
        let start = Instant::now();
        let t = Instant::now();
        let index = KnnIndex::build(&cloud.points)?;
        let index_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let set = extract_features_for(&index, &all, &config)?;
        let features_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let result = classify(&model, &set)?;
        let inference_s = t.elapsed().as_secs_f64();
        let total_s = start.elapsed().as_secs_f64();
        ensure!(result.predictions.len() == cloud.len(), "inference returned the wrong number of labels");
        repeats.push([index_s, features_s, inference_s, total_s]);
    }
    let column = |i: usize| -> Result<f64> { Ok(median(&repeats.iter().map(|r| r[i]).collect::<Vec<_>>())?) };
    let (index_s, features_s, inference_s, total_s) = (column(0)?, column(1)?, column(2)?, column(3)?);
    let n = cloud.len() as f64;
    let report = json!({
        "points": cloud.len(),
        "scales": config.scales,
        "threads": rayon::current_num_threads(),
        "repeats": repeats.iter().map(|r| json!({
            "index_seconds": r[0], "features_seconds": r[1], "inference_seconds": r[2], "total_seconds": r[3],
        })).collect::<Vec<_>>(),
        "median": {
            "index_seconds": index_s,
            "features_seconds": features_s,
            "inference_seconds": inference_s,
            "total_seconds": total_s,
        },
        "points_per_second": {
            "preprocessing": n / (index_s + features_s).max(1e-9),
            "classification": n / inference_s.max(1e-9),
            "total": n / total_s.max(1e-9),
        },
    });
    println!(
        "{} points, {} threads, median of {}: index {:.2} s, features {:.2} s, inference {:.2} s, total {:.2} s ({:.0} points/s)",
        cloud.len(),
        rayon::current_num_threads(),
        args.repeats,
        index_s,
        features_s,
        inference_s,
        total_s,
        n / total_s.max(1e-9)
    );
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            run.finish(&manifest_path_for(path))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}
