//! Mini-batch training with several independent runs and selection by
//! validation loss.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::kernel::{self, Workspace};
use super::{rng_for, Architecture, Model, Standardization, CHUNK_ROWS};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::io::ClassCode;

/// Chunks accumulated sequentially by one task before the fixed-order
/// reduction across tasks.
const CHUNKS_PER_TASK: usize = 16;

const STREAM_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub gamma: f64,
    pub dropout_p: f64,
    pub runs: usize,
    pub seed: u64,
    /// Iterations between log entries; the final iteration is always logged.
    pub log_every: usize,
    pub two_class: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16384,
            iterations: 3000,
            gamma: 2.0,
            dropout_p: 0.5,
            runs: 5,
            seed: 0,
            log_every: 100,
            two_class: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.beta1, self.beta2, self.adam_eps];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("optimizer settings must be positive".into()));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("Adam betas must be below 1".into()));
        }
        if self.batch_size == 0 || self.iterations == 0 || self.runs == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "batch size, iterations, runs and log cadence must be positive".into(),
            ));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("focal gamma {} must be nonnegative", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

/// Labeled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub features: FeatureSet,
    pub labels: Vec<ClassCode>,
}

impl TrainingSet {
    pub fn new(features: FeatureSet, labels: Vec<ClassCode>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        Ok(TrainingSet { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// Rows at `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> TrainingSet {
        TrainingSet {
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub log: Vec<LogEntry>,
    /// Validation loss after the last iteration; `None` if the run aborted.
    pub final_val_loss: Option<f64>,
    pub error: Option<String>,
}

impl RunSummary {
    /// The log as CSV with header `iteration,train_loss,val_loss`.
    pub fn log_csv(&self) -> String {
        let mut s = String::from("iteration,train_loss,val_loss\n");
        for e in &self.log {
            s.push_str(&format!("{},{:.17e},{:.17e}\n", e.iteration, e.train_loss, e.val_loss));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub runs: Vec<RunSummary>,
    pub best_run: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &RunSummary {
        &self.runs[self.best_run]
    }

    pub fn best_val_loss(&self) -> f64 {
        self.best().final_val_loss.expect("selected run finished")
    }
}

/// Trains `config.runs` models from independent seeds and keeps the one
/// with the lowest final validation loss (dropout disabled). Standardization
/// is fit once on the training pool and shared by all runs.
pub fn train(pool: &TrainingSet, validation: &TrainingSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::Empty("training pool is empty".into()));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation set is empty".into()));
    }
    if validation.features.scales != pool.features.scales || validation.features.mask != pool.features.mask {
        return Err(Error::Shape("validation features differ in scales or mask from the pool".into()));
    }
    let counts = pool.class_counts();
    for class in [ClassCode::NonEdge, ClassCode::SharpEdge] {
        if counts[class.index()] == 0 {
            return Err(Error::EmptyClass(class as u8));
        }
    }

    let mut arch = Architecture::new(pool.features.scales.len(), config.two_class);
    arch.dropout_p = config.dropout_p;
    arch.validate()?;
    let standardization = Standardization::fit(&pool.features)?;
    let template = Model::zeroed(
        arch,
        pool.features.scales.clone(),
        pool.features.mask,
        standardization,
    )?;

    let results: Vec<(RunSummary, Option<Model>)> = (0..config.runs)
        .into_par_iter()
        .map(|run| train_run(&template, pool, validation, config, run))
        .collect();

    let best = results
        .iter()
        .enumerate()
        .filter_map(|(i, (s, _))| s.final_val_loss.map(|l| (i, l)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let Some((best_run, _)) = best else {
        let first = &results[0].0;
        return Err(Error::NonFiniteLoss {
            run: first.run,
            iteration: first.log.last().map_or(0, |e| e.iteration),
        });
    };
    let mut runs = Vec::with_capacity(results.len());
    let mut model = None;
    for (i, (summary, m)) in results.into_iter().enumerate() {
        if i == best_run {
            model = m;
        }
        runs.push(summary);
    }
    Ok(TrainOutcome {
        model: model.expect("finished run has a model"),
        runs,
        best_run,
    })
}

fn train_run(
    template: &Model,
    pool: &TrainingSet,
    validation: &TrainingSet,
    config: &TrainConfig,
    run: usize,
) -> (RunSummary, Option<Model>) {
    let seed = crate::seed::derive_seed(config.seed, run as u64);
    let mut model = template.clone();
    let mut init_rng = rng_for(seed, &[STREAM_INIT]);
    for layer in model.layout().layers() {
        let bound = 1.0 / (layer.inputs as f64).sqrt();
        for p in &mut model.params[layer.parameters()] {
            *p = init_rng.random_range(-bound..bound);
        }
    }
    let mut batch_rng = rng_for(seed, &[STREAM_BATCH]);
    let mut state = AdamState::new(model.params.len());
    let mut summary = RunSummary {
        run,
        seed,
        log: Vec::new(),
        final_val_loss: None,
        error: None,
    };
    let mut batch = vec![0usize; config.batch_size];
    for iteration in 1..=config.iterations {
        for b in &mut batch {
            *b = batch_rng.random_range(0..pool.len());
        }
        let (loss, grad) = batch_gradient(&model, pool, &batch, config.gamma, Some((seed, iteration as u64)));
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            summary.error = Some(format!("non-finite training loss at iteration {iteration}"));
            summary.log.push(LogEntry {
                iteration,
                train_loss: loss,
                val_loss: f64::NAN,
            });
            return (summary, None);
        }
        adam_step(
            &mut model.params,
            &grad,
            &mut state,
            config.lr,
            config.beta1,
            config.beta2,
            config.adam_eps,
        );
        if iteration % config.log_every == 0 || iteration == config.iterations {
            let val_loss = validation_loss(&model, validation, config.gamma);
            summary.log.push(LogEntry {
                iteration,
                train_loss: loss,
                val_loss,
            });
            if !val_loss.is_finite() {
                summary.error = Some(format!("non-finite validation loss at iteration {iteration}"));
                return (summary, None);
            }
            if iteration == config.iterations {
                summary.final_val_loss = Some(val_loss);
            }
        }
    }
    (summary, Some(model))
}

/// Mean focal loss and gradient over the rows `batch` of `set`. With
/// `dropout = Some((seed, iteration))` masks come from a generator derived
/// per chunk, so the result does not depend on the thread count.
pub(crate) fn batch_gradient(
    model: &Model,
    set: &TrainingSet,
    batch: &[usize],
    gamma: f64,
    dropout: Option<(u64, u64)>,
) -> (f64, Vec<f64>) {
    let layout = model.layout();
    let scale = 1.0 / batch.len() as f64;
    let p = model.arch.dropout_p;

    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK_ROWS * CHUNKS_PER_TASK)
        .enumerate()
        .map(|(task, rows)| {
            let mut ws = Workspace::new(&layout, CHUNK_ROWS);
            let mut grad = vec![0.0; layout.total];
            let mut classes = Vec::with_capacity(CHUNK_ROWS);
            let mut loss = 0.0;
            for (c, chunk) in rows.chunks(CHUNK_ROWS).enumerate() {
                classes.clear();
                for (b, &i) in chunk.iter().enumerate() {
                    ws.load(b, set.features.row(i), &model.standardization);
                    classes.push(model.target_class(set.labels[i]).expect("valid class"));
                }
                let chunk_id = (task * CHUNKS_PER_TASK + c) as u64;
                let mut rng = dropout.map(|(seed, it)| rng_for(seed, &[STREAM_DROPOUT, it, chunk_id]));
                let drop = rng.as_mut().map(|r| (p, r));
                kernel::forward(&layout, &model.params, model.arch.leaky_slope, drop, chunk.len(), &mut ws);
                loss += kernel::backward(
                    &layout,
                    &model.params,
                    model.arch.leaky_slope,
                    &classes,
                    gamma,
                    scale,
                    &mut ws,
                    &mut grad,
                );
            }
            (loss, grad)
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; layout.total];
    for (l, g) in partials {
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total * scale, grad)
}

/// Mean focal loss over a whole set with dropout disabled.
pub fn validation_loss(model: &Model, set: &TrainingSet, gamma: f64) -> f64 {
    let probs = model
        .predict_proba(&set.features)
        .expect("validation features match the model");
    let c = model.classes();
    let total: f64 = probs
        .chunks_exact(c)
        .zip(&set.labels)
        .map(|(p, &l)| super::focal_loss(p, model.target_class(l).expect("valid class"), gamma))
        .sum();
    total / set.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMask;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two well separated blobs in the 24 inputs of a two-scale set.
    fn separable(n: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 24);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = if i % 2 == 0 { ClassCode::NonEdge } else { ClassCode::SharpEdge };
            let centre = if class == ClassCode::NonEdge { -1.0 } else { 1.0 };
            for _ in 0..24 {
                data.push((centre + rng.random_range(-0.8..0.8)) as f32);
            }
            labels.push(class);
        }
        TrainingSet::new(FeatureSet::from_raw(vec![32, 16], FeatureMask::ALL, data).unwrap(), labels).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            batch_size: 64,
            iterations: 40,
            runs: 2,
            log_every: 10,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn deterministic_logs() {
        let pool = separable(400, 1);
        let val = separable(100, 2);
        let a = train(&pool, &val, &small_config()).unwrap();
        let b = train(&pool, &val, &small_config()).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.log_csv(), y.log_csv());
        }
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.runs[0].log.len(), 4);
    }

    #[test]
    fn best_run_is_argmin() {
        let pool = separable(400, 3);
        let val = separable(100, 4);
        let out = train(&pool, &val, &small_config()).unwrap();
        for r in &out.runs {
            assert!(out.best_val_loss() <= r.final_val_loss.unwrap());
        }
        assert_eq!(validation_loss(&out.model, &val, 2.0), out.best_val_loss());
    }

    #[test]
    fn missing_class_rejected() {
        let mut pool = separable(40, 5);
        pool.labels.iter_mut().for_each(|l| *l = ClassCode::NonEdge);
        let val = separable(10, 6);
        assert!(matches!(train(&pool, &val, &small_config()), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn gradient_independent_of_chunking_threads() {
        let pool = separable(3000, 7);
        let val = separable(10, 8);
        let mut cfg = small_config();
        cfg.iterations = 1;
        cfg.runs = 1;
        let model = train(&pool, &val, &cfg).unwrap().model;
        let batch: Vec<usize> = (0..2500).collect();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| batch_gradient(&model, &pool, &batch, 2.0, Some((1, 2))));
        let b = three.install(|| batch_gradient(&model, &pool, &batch, 2.0, Some((1, 2))));
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }
}
