//! The pairwise-fusion classifier.
//!
//! Feature rows of adjacent scales are concatenated (24 values) and passed
//! through one shared fully connected map to 12 values. The fused vectors of
//! all pairs are concatenated and classified by a three-layer trunk with
//! leaky ReLU activations and dropout after both hidden layers:
//!
//! ```text
//! (k0,k1) (k1,k2) (k2,k3)  --shared 24->12-->  36 -> 24 -> 16 -> classes
//! ```
//!
//! All parameters live in one flat vector; [`Layout`] maps layers onto it.

mod adam;
mod file;
mod kernel;
mod loss;
mod train;

use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use file::{decode_model, encode_model, load_model, save_model};
pub use loss::{batch_focal_loss, focal_loss, PROB_FLOOR};
pub use train::{train, validation_loss, LogEntry, RunSummary, TrainConfig, TrainOutcome, TrainingSet};

use crate::error::{Error, Result};
use crate::features::{FeatureMask, FeatureMatrix, FeatureSet, FEATURE_COLUMNS};
use crate::io::ClassCode;
pub(crate) use crate::seed::rng_for;
use kernel::Workspace;

pub const FUSION_WIDTH: usize = 12;
pub const HIDDEN_WIDTHS: [usize; 2] = [24, 16];
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;
pub const DEFAULT_DROPOUT: f64 = 0.5;
pub const STD_FLOOR: f64 = 1e-8;

/// Samples processed together by the batch kernel.
pub(crate) const CHUNK_ROWS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub scale_count: usize,
    pub classes: usize,
    pub fusion_width: usize,
    pub hidden: [usize; 2],
    pub leaky_slope: f64,
    pub dropout_p: f64,
}

impl Architecture {
    /// The default network for `scale_count` scales; `two_class` drops the
    /// boundary output.
    pub fn new(scale_count: usize, two_class: bool) -> Self {
        Architecture {
            scale_count,
            classes: if two_class { 2 } else { 3 },
            fusion_width: FUSION_WIDTH,
            hidden: HIDDEN_WIDTHS,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout_p: DEFAULT_DROPOUT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_count < 2 {
            return Err(Error::Config("pairwise fusion needs at least two scales".into()));
        }
        if !(2..=3).contains(&self.classes) {
            return Err(Error::Config(format!("unsupported class count {}", self.classes)));
        }
        if self.fusion_width == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }

    pub fn is_two_class(&self) -> bool {
        self.classes == 2
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().total
    }
}

/// One fully connected layer's slot in the flat parameter vector; weights
/// are `outputs x inputs` row-major, followed by the biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Layer {
    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn biases(&self) -> Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    pub fn parameters(&self) -> Range<usize> {
        self.offset..self.biases().end
    }

    pub fn len(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub fusion: Layer,
    pub hidden1: Layer,
    pub hidden2: Layer,
    pub output: Layer,
    /// Values per feature row.
    pub row_width: usize,
    /// Values per sample (`row_width * scale_count`).
    pub input_width: usize,
    pub pairs: usize,
    pub total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let pairs = arch.scale_count.saturating_sub(1);
        let mut offset = 0;
        let mut layer = |inputs: usize, outputs: usize| {
            let l = Layer {
                inputs,
                outputs,
                offset,
            };
            offset += l.len();
            l
        };
        let fusion = layer(2 * FEATURE_COLUMNS, arch.fusion_width);
        let hidden1 = layer(pairs * arch.fusion_width, arch.hidden[0]);
        let hidden2 = layer(arch.hidden[0], arch.hidden[1]);
        let output = layer(arch.hidden[1], arch.classes);
        Layout {
            fusion,
            hidden1,
            hidden2,
            output,
            row_width: FEATURE_COLUMNS,
            input_width: FEATURE_COLUMNS * arch.scale_count,
            pairs,
            total: offset,
        }
    }

    pub fn fused_width(&self) -> usize {
        self.pairs * self.fusion.outputs
    }

    pub fn layers(&self) -> [Layer; 4] {
        [self.fusion, self.hidden1, self.hidden2, self.output]
    }
}

/// Per-input z-score statistics, frozen at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn identity(width: usize) -> Self {
        Standardization {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Column means and population standard deviations of the given rows,
    /// with the deviation floored at [`STD_FLOOR`].
    pub fn fit(features: &FeatureSet) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::Empty("cannot standardize an empty feature set".into()));
        }
        let w = features.width();
        let mut mean = vec![0.0; w];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(features.row(i)) {
                *m += v as f64;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; w];
        for i in 0..n {
            for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
        let std = var.into_iter().map(|s| (s / n as f64).sqrt().max(STD_FLOOR)).collect();
        Ok(Standardization { mean, std })
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    pub scales: Vec<usize>,
    pub mask: FeatureMask,
    pub standardization: Standardization,
    pub params: Vec<f64>,
}

impl Model {
    /// A freshly initialized model: weights and biases drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng>(
        arch: Architecture,
        scales: Vec<usize>,
        mask: FeatureMask,
        standardization: Standardization,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeroed(arch, scales, mask, standardization)?;
        let layout = model.layout();
        for layer in layout.layers() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in &mut model.params[layer.parameters()] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    /// A model with every parameter zero.
    pub fn zeroed(
        arch: Architecture,
        scales: Vec<usize>,
        mask: FeatureMask,
        standardization: Standardization,
    ) -> Result<Self> {
        arch.validate()?;
        if scales.len() != arch.scale_count {
            return Err(Error::Shape(format!(
                "{} scales for an architecture with {}",
                scales.len(),
                arch.scale_count
            )));
        }
        let layout = arch.layout();
        if standardization.mean.len() != layout.input_width || standardization.std.len() != layout.input_width {
            return Err(Error::Shape("standardization width does not match the input".into()));
        }
        if standardization.std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(Error::Config("standardization deviations must be positive".into()));
        }
        Ok(Model {
            arch,
            scales,
            mask,
            standardization,
            params: vec![0.0; layout.total],
        })
    }

    pub fn layout(&self) -> Layout {
        self.arch.layout()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn classes(&self) -> usize {
        self.arch.classes
    }

    fn check_matrix(&self, fm: &FeatureMatrix) -> Result<()> {
        if fm.scale_count() != self.arch.scale_count {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows, model expects {}",
                fm.scale_count(),
                self.arch.scale_count
            )));
        }
        Ok(())
    }

    fn check_set(&self, features: &FeatureSet) -> Result<()> {
        if features.scales != self.scales {
            return Err(Error::Shape(format!(
                "features computed at scales {:?}, model expects {:?}",
                features.scales, self.scales
            )));
        }
        if features.mask != self.mask {
            return Err(Error::Shape(format!(
                "feature mask {:#06x} differs from the model's {:#06x}",
                features.mask.bits(),
                self.mask.bits()
            )));
        }
        Ok(())
    }

    /// Class probabilities of one point. In training mode dropout masks are
    /// drawn from `rng`; otherwise `rng` is untouched.
    pub fn forward<R: Rng>(&self, features: &FeatureMatrix, training: bool, rng: &mut R) -> Result<Vec<f64>> {
        self.check_matrix(features)?;
        let layout = self.layout();
        let mut ws = Workspace::new(&layout, 1);
        ws.load(0, &features.flatten(), &self.standardization);
        let dropout = training.then_some((self.arch.dropout_p, rng));
        kernel::forward(&layout, &self.params, self.arch.leaky_slope, dropout, 1, &mut ws);
        let mut probs = vec![0.0; self.classes()];
        ws.probabilities(0, &mut probs);
        Ok(probs)
    }

    /// Mean focal loss of a batch and its gradient with respect to every
    /// parameter. Dropout masks are drawn from `rng` once per sample and
    /// reused for the backward pass.
    pub fn backward<R: Rng>(
        &self,
        batch: &[(FeatureMatrix, ClassCode)],
        gamma: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        let layout = self.layout();
        let mut grad = vec![0.0; layout.total];
        let mut ws = Workspace::new(&layout, CHUNK_ROWS);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut classes = Vec::with_capacity(CHUNK_ROWS);
        for chunk in batch.chunks(CHUNK_ROWS) {
            classes.clear();
            for (b, (fm, class)) in chunk.iter().enumerate() {
                self.check_matrix(fm)?;
                let class = self.target_class(*class)?;
                classes.push(class);
                ws.load(b, &fm.flatten(), &self.standardization);
            }
            let dropout = training.then_some((self.arch.dropout_p, &mut *rng));
            kernel::forward(&layout, &self.params, self.arch.leaky_slope, dropout, chunk.len(), &mut ws);
            loss += kernel::backward(
                &layout,
                &self.params,
                self.arch.leaky_slope,
                &classes,
                gamma,
                scale,
                &mut ws,
                &mut grad,
            );
        }
        Ok((loss * scale, grad))
    }

    /// Index of the output unit trained for `class`; boundary folds into
    /// non-edge for two-class models.
    pub fn target_class(&self, class: ClassCode) -> Result<usize> {
        Ok(match (class, self.arch.is_two_class()) {
            (ClassCode::Boundary, true) => 0,
            (c, _) => c.index(),
        })
    }

    /// Probabilities for every point of a feature set, `classes` values per
    /// point.
    pub fn predict_proba(&self, features: &FeatureSet) -> Result<Vec<f64>> {
        self.check_set(features)?;
        let layout = self.layout();
        let c = self.classes();
        let n = features.len();
        let mut out = vec![0.0; n * c];
        out.par_chunks_mut(CHUNK_ROWS * c)
            .enumerate()
            .for_each_init(
                || Workspace::new(&layout, CHUNK_ROWS),
                |ws, (chunk_index, out_chunk)| {
                    let start = chunk_index * CHUNK_ROWS;
                    let rows = out_chunk.len() / c;
                    for b in 0..rows {
                        ws.load(b, features.row(start + b), &self.standardization);
                    }
                    kernel::forward::<ChaCha8Rng>(&layout, &self.params, self.arch.leaky_slope, None, rows, ws);
                    for (b, p) in out_chunk.chunks_exact_mut(c).enumerate() {
                        ws.probabilities(b, p);
                    }
                },
            );
        Ok(out)
    }
}

/// Predicted classes and the probabilities they were taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predictions: Vec<ClassCode>,
    pub classes: usize,
    pub probabilities: Vec<f64>,
}

impl Classification {
    pub fn probabilities_of(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.classes..(i + 1) * self.classes]
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Arg-max class of every point.
pub fn classify(model: &Model, features: &FeatureSet) -> Result<Classification> {
    let probabilities = model.predict_proba(features)?;
    let c = model.classes();
    let predictions = probabilities
        .chunks_exact(c)
        .map(|p| ClassCode::from_index(argmax(p)).expect("class index below 3"))
        .collect();
    Ok(Classification {
        predictions,
        classes: c,
        probabilities,
    })
}
