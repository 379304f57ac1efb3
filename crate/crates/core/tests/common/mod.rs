//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use bounded::features::{
    neighborhood_frame, normalize_neighborhood, partition_by_plane, point_features, subset_stats, FeatureMask,
    FeatureMatrix, ScaleConfig, ScaleStats, FEATURE_COLUMNS,
};
use bounded::knn::KnnIndex;
use bounded::io::ClassCode;
use bounded::net::{Architecture, Model, Standardization};
use bounded::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// k-NN
// ---------------------------------------------------------------------------

/// Sorts every point by (squared distance, index) and keeps the first `k`.
pub fn knn_oracle(points: &[Vec3], q: Vec3, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dx = q.0[0] - p.0[0];
            let dy = q.0[1] - p.0[1];
            let dz = q.0[2] - p.0[2];
            (dx * dx + dy * dy + dz * dz, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, i)| i).collect()
}

/// Same order as [`knn_oracle`], selecting the first `k` before sorting
/// them; only the ordering key is shared.
pub fn knn_oracle_partial(points: &[Vec3], q: Vec3, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = [q.0[0] - p.0[0], q.0[1] - p.0[1], q.0[2] - p.0[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2], i)
        })
        .collect();
    let key = |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
    if k < order.len() {
        order.select_nth_unstable_by(k, key);
        order.truncate(k);
    }
    order.sort_by(key);
    order.into_iter().map(|(_, i)| i).collect()
}

/// A random cloud of one of several shapes, with deliberate duplicates and
/// grid ties in some draws.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let kind = rng.random_range(0..4);
    let mut pts: Vec<Vec3> = (0..n)
        .map(|_| match kind {
            0 => Vec3::new(rng.random(), rng.random(), rng.random()),
            1 => {
                let x: f64 = rng.random_range(-5.0..5.0);
                let y: f64 = rng.random_range(-5.0..5.0);
                Vec3::new(x, y, 0.1 * (x * y).sin())
            }
            2 => Vec3::new(
                rng.random_range(0..12) as f64,
                rng.random_range(0..12) as f64,
                rng.random_range(0..3) as f64,
            ),
            _ => {
                let v: [f64; 3] = UnitSphere.sample(rng);
                Vec3::new(v[0], v[1], v[2]) * 10.0
            }
        })
        .collect();
    if n > 4 {
        for _ in 0..n / 50 {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            pts[a] = pts[b];
        }
    }
    pts
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Uniform random rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut q: [f64; 4] = [n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng)];
    let len = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut q {
        *v /= len;
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(r: &[[f64; 3]; 3], p: Vec3) -> Vec3 {
    Vec3::new(
        r[0][0] * p.0[0] + r[0][1] * p.0[1] + r[0][2] * p.0[2],
        r[1][0] * p.0[0] + r[1][1] * p.0[1] + r[1][2] * p.0[2],
        r[2][0] * p.0[0] + r[2][1] * p.0[1] + r[2][2] * p.0[2],
    )
}

/// Population covariance, computed with nalgebra.
pub fn covariance_oracle(points: &[Vec3]) -> nalgebra::Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points
        .iter()
        .fold(nalgebra::Vector3::zeros(), |acc, p| acc + nalgebra::Vector3::new(p.0[0], p.0[1], p.0[2]))
        / n;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = nalgebra::Vector3::new(p.0[0], p.0[1], p.0[2]) - mean;
        cov += d * d.transpose();
    }
    cov / n
}

/// Eigenvalues of a symmetric matrix, descending, from nalgebra.
pub fn eigenvalues_oracle(m: &nalgebra::Matrix3<f64>) -> [f64; 3] {
    let e = nalgebra::SymmetricEigen::new(*m);
    let mut v = [e.eigenvalues[0], e.eigenvalues[1], e.eigenvalues[2]];
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// A patch of a random smooth or creased surface around the origin with
/// small noise; the query is point 0.
pub fn random_patch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    let noise = Normal::new(0.0, rng.random_range(0.002..0.03)).unwrap();
    let (a, b, c): (f64, f64, f64) = (
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.5..0.5),
    );
    let crease: f64 = if rng.random_bool(0.5) { rng.random_range(0.3..1.5) } else { 0.0 };
    let offset: f64 = rng.random_range(-0.3..0.3);
    let stretch: f64 = rng.random_range(0.5..1.5);
    let surface = |x: f64, y: f64| a * x * x + b * y * y + c * x * y + crease * (x - offset).abs();
    let mut pts = Vec::with_capacity(n);
    let (qx, qy): (f64, f64) = (rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
    pts.push(Vec3::new(qx * stretch, qy, surface(qx, qy) + noise.sample(rng)));
    while pts.len() < n {
        let x: f64 = rng.random_range(-1.0..1.0);
        let y: f64 = rng.random_range(-1.0..1.0);
        pts.push(Vec3::new(x * stretch, y, surface(x, y) + noise.sample(rng)));
    }
    pts
}

/// Whether point `query` of `points` has a neighborhood whose features
/// cannot flip under rounding: clear gaps at every scale boundary and at
/// the half-neighborhood used for the normal, no points near the tangent
/// plane, distinct in-plane eigenvalues and a clearly signed self offset.
pub fn well_conditioned(points: &[Vec3], query: usize, scales: &[usize]) -> bool {
    let q = points[query];
    let mut d: Vec<f64> = points.iter().map(|p| p.distance_squared(&q)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let order = knn_oracle(points, q, scales[0]);
    for &k in scales {
        if k < points.len() && (d[k] - d[k - 1]) < 1e-7 * d[k] {
            return false;
        }
        let hood: Vec<Vec3> = order[..k].iter().map(|&i| points[i]).collect();
        let Ok(frame) = neighborhood_frame(&hood, q) else {
            return false;
        };
        if (frame.sigma[0] - frame.sigma[1]) < 1e-6 * frame.sigma[0] {
            return false;
        }
        let mut to_center: Vec<f64> = hood.iter().map(|p| p.distance_squared(&frame.centroid)).collect();
        to_center.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let half = k / 2;
        if (to_center[half] - to_center[half - 1]) < 1e-7 * to_center[half] {
            return false;
        }
        if hood.iter().any(|p| frame.normalize(*p).dot(&frame.normal).abs() < 1e-6) {
            return false;
        }
        if frame.normalize(q).dot(&frame.normal).abs() < 1e-4 {
            return false;
        }
    }
    true
}

/// All features of `points[query]`, flattened largest scale first.
pub fn features_at(points: &[Vec3], query: usize, scales: &[usize]) -> Vec<f64> {
    let config = ScaleConfig::new(scales.to_vec(), FeatureMask::ALL).unwrap();
    let index = KnnIndex::build(points).unwrap();
    point_features(&index, query, &config).unwrap().flatten()
}

/// A random patch whose query neighborhood is well conditioned.
pub fn invariance_case(rng: &mut ChaCha8Rng, scales: &[usize]) -> Vec<Vec3> {
    loop {
        let pts = random_patch(rng, scales[0] + 72);
        if well_conditioned(&pts, 0, scales) {
            return pts;
        }
    }
}

/// Largest feature change under a random rotation plus translation.
pub fn rigid_motion_error(rng: &mut ChaCha8Rng, points: &[Vec3], scales: &[usize]) -> f64 {
    let r = random_rotation(rng);
    let t = Vec3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
    let moved: Vec<Vec3> = points.iter().map(|p| rotate(&r, *p) + t).collect();
    max_abs_diff(&features_at(points, 0, scales), &features_at(&moved, 0, scales))
}

/// Largest feature change under a random uniform scaling in [1e-3, 1e3].
pub fn uniform_scale_error(rng: &mut ChaCha8Rng, points: &[Vec3], scales: &[usize]) -> f64 {
    let s = 10f64.powf(rng.random_range(-3.0..3.0));
    let scaled: Vec<Vec3> = points.iter().map(|p| *p * s).collect();
    max_abs_diff(&features_at(points, 0, scales), &features_at(&scaled, 0, scales))
}

/// Largest change of d_perp at any scale when the partition and projection
/// use the negated normal.
pub fn normal_flip_error(points: &[Vec3], scales: &[usize]) -> f64 {
    let order = knn_oracle(points, points[0], scales[0]);
    let mut worst: f64 = 0.0;
    for &k in scales {
        let hood: Vec<Vec3> = order[..k].iter().map(|&i| points[i]).collect();
        let frame = neighborhood_frame(&hood, points[0]).unwrap();
        let normalized = normalize_neighborhood(&hood, &frame);
        let (u, l) = partition_by_plane(&normalized, frame.normal);
        let a = subset_stats(&u, &l, frame.normal);
        let flipped = -frame.normal;
        let (u2, l2) = partition_by_plane(&normalized, flipped);
        let b = subset_stats(&u2, &l2, flipped);
        worst = worst.max((a.d_perp - b.d_perp).abs());
    }
    worst
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// A model with random parameters and random standardization.
pub fn random_model(rng: &mut ChaCha8Rng, scale_count: usize, two_class: bool) -> Model {
    let arch = Architecture::new(scale_count, two_class);
    let width = scale_count * FEATURE_COLUMNS;
    let standardization = Standardization {
        mean: (0..width).map(|_| rng.random_range(-0.5..0.5)).collect(),
        std: (0..width).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    let scales: Vec<usize> = (0..scale_count).map(|i| 128 >> i).collect();
    let mut model = Model::new(arch, scales, FeatureMask::ALL, standardization, rng).unwrap();
    // Larger weights than the initializer give less saturated, more varied
    // activations for gradient checks.
    for p in &mut model.params {
        *p *= 1.5;
    }
    model
}

pub fn random_matrix(rng: &mut ChaCha8Rng, scale_count: usize) -> FeatureMatrix {
    FeatureMatrix {
        rows: (0..scale_count)
            .map(|_| {
                let mut a = [0.0; FEATURE_COLUMNS];
                for v in &mut a {
                    *v = rng.random_range(-2.0..2.0);
                }
                ScaleStats::from_array(&a)
            })
            .collect(),
    }
}

pub fn random_batch(rng: &mut ChaCha8Rng, scale_count: usize, classes: usize, n: usize) -> Vec<(FeatureMatrix, ClassCode)> {
    (0..n)
        .map(|_| {
            let c = ClassCode::from_index(rng.random_range(0..classes)).unwrap();
            (random_matrix(rng, scale_count), c)
        })
        .collect()
}

/// Forward pass written directly from the layer description, with an
/// optional separate copy of the fusion parameters for every scale pair.
pub struct NaiveNet {
    pub fusion: Vec<Vec<f64>>,
    pub trunk: Vec<f64>,
    pub model: Model,
}

pub struct NaiveOutput {
    pub probabilities: Vec<f64>,
    /// Every pre-activation that passes through a leaky ReLU.
    pub pre_activations: Vec<f64>,
}

fn dense(params: &[f64], inputs: usize, outputs: usize, x: &[f64]) -> Vec<f64> {
    (0..outputs)
        .map(|o| {
            let mut s = params[inputs * outputs + o];
            for i in 0..inputs {
                s += params[o * inputs + i] * x[i];
            }
            s
        })
        .collect()
}

impl NaiveNet {
    /// Splits the model's parameters; every pair starts from the shared
    /// fusion values.
    pub fn unshare(model: &Model) -> Self {
        let l = model.layout();
        let fusion = vec![model.params[l.fusion.parameters()].to_vec(); l.pairs];
        NaiveNet {
            fusion,
            trunk: model.params[l.hidden1.offset..].to_vec(),
            model: model.clone(),
        }
    }

    pub fn forward(&self, fm: &FeatureMatrix) -> NaiveOutput {
        let l = self.model.layout();
        let slope = self.model.arch.leaky_slope;
        let st = &self.model.standardization;
        let raw = fm.flatten();
        let z: Vec<f64> = raw.iter().enumerate().map(|(i, v)| (v - st.mean[i]) / st.std[i]).collect();
        let mut pre = Vec::new();
        let leaky = |v: Vec<f64>, pre: &mut Vec<f64>| -> Vec<f64> {
            pre.extend_from_slice(&v);
            v.into_iter().map(|x| if x > 0.0 { x } else { slope * x }).collect()
        };
        let mut fused = Vec::new();
        for p in 0..l.pairs {
            let input = &z[p * FEATURE_COLUMNS..(p + 2) * FEATURE_COLUMNS];
            let out = dense(&self.fusion[p], l.fusion.inputs, l.fusion.outputs, input);
            fused.extend(leaky(out, &mut pre));
        }
        let base = l.hidden1.offset;
        let slice = |layer: bounded::net::Layer| &self.trunk[layer.offset - base..layer.biases().end - base];
        let h1 = leaky(dense(slice(l.hidden1), l.hidden1.inputs, l.hidden1.outputs, &fused), &mut pre);
        let h2 = leaky(dense(slice(l.hidden2), l.hidden2.inputs, l.hidden2.outputs, &h1), &mut pre);
        let logits = dense(slice(l.output), l.output.inputs, l.output.outputs, &h2);
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        NaiveOutput {
            probabilities: e.into_iter().map(|v| v / s).collect(),
            pre_activations: pre,
        }
    }

    /// Mean focal loss of a batch.
    pub fn loss(&self, batch: &[(FeatureMatrix, ClassCode)], gamma: f64) -> f64 {
        let mut total = 0.0;
        for (fm, c) in batch {
            let p = self.forward(fm).probabilities;
            let t = self.model.target_class(*c).unwrap();
            let pt = p[t];
            total += -(1.0 - pt).powf(gamma) * pt.max(1e-12).ln();
        }
        total / batch.len() as f64
    }

    /// Smallest pre-activation magnitude over a batch; finite differences
    /// are only trusted away from the ReLU kink.
    pub fn kink_margin(&self, batch: &[(FeatureMatrix, ClassCode)]) -> f64 {
        batch
            .iter()
            .flat_map(|(fm, _)| self.forward(fm).pre_activations)
            .map(f64::abs)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Relative error between an analytic and a numerical derivative. The
/// denominator is floored so that derivatives near zero are judged by
/// their absolute error against that floor.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Maximum relative error of `model.backward` against central differences
/// of the loss over every parameter. With `dropout_seed` the same masks
/// are replayed for every evaluation.
pub fn gradient_check(
    model: &Model,
    batch: &[(FeatureMatrix, ClassCode)],
    gamma: f64,
    dropout_seed: Option<u64>,
    h: f64,
    floor: f64,
) -> f64 {
    let training = dropout_seed.is_some();
    let seed = dropout_seed.unwrap_or(0);
    let (_, grad) = model.backward(batch, gamma, training, &mut rng(seed)).unwrap();
    let mut m = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..model.params.len() {
        let orig = m.params[i];
        m.params[i] = orig + h;
        let (lp, _) = m.backward(batch, gamma, training, &mut rng(seed)).unwrap();
        m.params[i] = orig - h;
        let (lm, _) = m.backward(batch, gamma, training, &mut rng(seed)).unwrap();
        m.params[i] = orig;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max(relative_error(grad[i], fd, floor));
    }
    worst
}

/// Draws a random model and batch whose ReLU pre-activations all stay at
/// least `margin` away from zero.
pub fn gradient_case(
    rng: &mut ChaCha8Rng,
    batch_size: usize,
    margin: f64,
) -> (Model, Vec<(FeatureMatrix, ClassCode)>) {
    loop {
        let scale_count = rng.random_range(2..=4);
        let two_class = rng.random_bool(0.25);
        let model = random_model(rng, scale_count, two_class);
        let batch = random_batch(rng, scale_count, 3, batch_size);
        if NaiveNet::unshare(&model).kink_margin(&batch) > margin {
            return (model, batch);
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// The six scores from raw counts, with 0/0 read as 0.
pub fn naive_scores(tp: u64, fp: u64, fn_: u64, tn: u64) -> [f64; 6] {
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    // Product-of-rates identity for MCC; any empty margin gives 0.
    let mcc = if tp + fp == 0.0 || tp + fn_ == 0.0 || tn + fp == 0.0 || tn + fn_ == 0.0 {
        0.0
    } else {
        let (ppv, tpr) = (tp / (tp + fp), tp / (tp + fn_));
        let (tnr, npv) = (tn / (tn + fp), tn / (tn + fn_));
        (ppv * tpr * tnr * npv).sqrt() - ((1.0 - ppv) * (1.0 - tpr) * (1.0 - tnr) * (1.0 - npv)).sqrt()
    };
    let f1 = div(2.0 * tp, 2.0 * tp + fp + fn_);
    let accuracy = div(tp + tn, tp + tn + fp + fn_);
    let iou = div(tp, tp + fp + fn_);
    [precision, recall, mcc, f1, accuracy, iou]
}
