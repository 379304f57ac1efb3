//! Multi-scale neighborhood statistics.
//!
//! For every point and every neighborhood size `k` twelve values are
//! computed from the `k` nearest neighbors:
//!
//! | columns | name          | meaning                                                      |
//! |---------|---------------|--------------------------------------------------------------|
//! | 0..3    | `sigma_upper` | covariance spectrum of the points above the fitted plane     |
//! | 3..6    | `sigma_lower` | covariance spectrum of the points below the fitted plane     |
//! | 6, 7    | `d_perp/par`  | offset between the two half centroids, normal / tangential   |
//! | 8, 9    | `s_perp/par`  | offset of the point from its neighborhood centroid           |
//! | 10, 11  | `c_perp/par`  | offset between this scale's centroid and the leftover points |
//! |         |               | of the largest scale, measured in the largest scale's frame  |
//!
//! All statistics except `c` live in the neighborhood's normalized frame:
//! centered on the centroid and scaled by `2 / (sqrt(s1) + sqrt(s2))`, where
//! `s1 >= s2` are the two largest covariance eigenvalues.

mod file;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use file::{decode_feature_file, encode_feature_file, read_feature_file, write_feature_file};

use crate::error::{Error, Result};
use crate::geom::{centroid, covariance_about, mean_and_covariance, spectrum, Vec3};
use crate::io::PointCloud;
use crate::knn::{KnnIndex, KnnScratch};

pub const FEATURE_COLUMNS: usize = 12;
pub const DEFAULT_SCALES: [usize; 4] = [128, 64, 32, 16];
pub const MIN_SCALE: usize = 4;

pub const COLUMN_NAMES: [&str; FEATURE_COLUMNS] = [
    "sigma_upper_1",
    "sigma_upper_2",
    "sigma_upper_3",
    "sigma_lower_1",
    "sigma_lower_2",
    "sigma_lower_3",
    "d_perp",
    "d_par",
    "s_perp",
    "s_par",
    "c_perp",
    "c_par",
];

/// Column selector; bit `i` keeps column `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask(u16);

impl FeatureMask {
    pub const ALL: FeatureMask = FeatureMask(0x0FFF);
    pub const SIGMA_UPPER: FeatureMask = FeatureMask(0b0000_0000_0111);
    pub const SIGMA_LOWER: FeatureMask = FeatureMask(0b0000_0011_1000);
    pub const D: FeatureMask = FeatureMask(0b0000_1100_0000);
    pub const S: FeatureMask = FeatureMask(0b0011_0000_0000);
    pub const C: FeatureMask = FeatureMask(0b1100_0000_0000);
    pub const SIGMA: FeatureMask = FeatureMask(Self::SIGMA_UPPER.0 | Self::SIGMA_LOWER.0);

    pub fn from_bits(bits: u16) -> Result<Self> {
        if bits & !Self::ALL.0 != 0 {
            return Err(Error::Config(format!("feature mask {bits:#06x} has bits beyond column 11")));
        }
        if bits == 0 {
            return Err(Error::Config("feature mask selects no columns".into()));
        }
        Ok(FeatureMask(bits))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn keeps(self, column: usize) -> bool {
        self.0 & (1 << column) != 0
    }

    pub fn union(self, other: FeatureMask) -> FeatureMask {
        FeatureMask(self.0 | other.0)
    }

    /// Parses a preset name, a `+`-joined group list such as `sigma+s+c`, or
    /// a hex bitfield such as `0x0fc0`.
    ///
    /// Presets: `full`, `no-sigma` (d,s,c), `sigma` (sigma_upper, sigma_lower),
    /// `sigma-s`, `sigma-d-s`, `sigma-d-c`, `sigma-s-c`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim().to_ascii_lowercase();
        if let Some(hex) = spec.strip_prefix("0x") {
            let bits = u16::from_str_radix(hex, 16)
                .map_err(|_| Error::Config(format!("bad hex feature mask '{spec}'")))?;
            return Self::from_bits(bits);
        }
        let groups: Vec<&str> = match spec.as_str() {
            "full" | "all" => vec!["sigma", "d", "s", "c"],
            "no-sigma" => vec!["d", "s", "c"],
            "sigma-s" => vec!["sigma", "s"],
            "sigma-d-s" => vec!["sigma", "d", "s"],
            "sigma-d-c" => vec!["sigma", "d", "c"],
            "sigma-s-c" => vec!["sigma", "s", "c"],
            other => other.split('+').collect(),
        };
        let mut bits = 0u16;
        for g in groups {
            bits |= match g.trim() {
                "sigma" => Self::SIGMA.0,
                "sigma_upper" | "sigma-upper" => Self::SIGMA_UPPER.0,
                "sigma_lower" | "sigma-lower" => Self::SIGMA_LOWER.0,
                "d" => Self::D.0,
                "s" => Self::S.0,
                "c" => Self::C.0,
                other => return Err(Error::Config(format!("unknown feature group '{other}'"))),
            };
        }
        Self::from_bits(bits)
    }
}

impl Default for FeatureMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Neighborhood sizes (largest first) and the column mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleConfig {
    pub scales: Vec<usize>,
    pub mask: FeatureMask,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            scales: DEFAULT_SCALES.to_vec(),
            mask: FeatureMask::ALL,
        }
    }
}

impl ScaleConfig {
    pub fn new(scales: Vec<usize>, mask: FeatureMask) -> Result<Self> {
        let c = ScaleConfig { scales, mask };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if let Some(&s) = self.scales.iter().find(|&&s| s < MIN_SCALE) {
            return Err(Error::Config(format!("scale {s} is below the minimum of {MIN_SCALE}")));
        }
        if self.scales.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Config(format!(
                "scales must be strictly descending, got {:?}",
                self.scales
            )));
        }
        FeatureMask::from_bits(self.mask.bits())?;
        Ok(())
    }

    pub fn largest(&self) -> usize {
        self.scales[0]
    }

    pub fn scale_count(&self) -> usize {
        self.scales.len()
    }

    /// Parses a comma separated scale list such as `128,64,32,16`.
    pub fn parse_scales(s: &str) -> Result<Vec<usize>> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("'{t}' is not a valid scale")))
            })
            .collect()
    }
}

/// Least-squares plane of one neighborhood plus its normalization factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborhoodFrame {
    pub centroid: Vec3,
    /// Covariance eigenvalues, descending.
    pub sigma: [f64; 3],
    pub normal: Vec3,
    pub scale_factor: f64,
}

impl NeighborhoodFrame {
    /// Maps a raw position into this frame's normalized coordinates.
    #[inline]
    pub fn normalize(&self, p: Vec3) -> Vec3 {
        (p - self.centroid) * self.scale_factor
    }
}

/// The twelve per-scale values of one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScaleStats {
    pub sigma_upper: [f64; 3],
    pub sigma_lower: [f64; 3],
    pub d_perp: f64,
    pub d_par: f64,
    pub s_perp: f64,
    pub s_par: f64,
    pub c_perp: f64,
    pub c_par: f64,
}

impl ScaleStats {
    pub fn to_array(&self) -> [f64; FEATURE_COLUMNS] {
        let [u1, u2, u3] = self.sigma_upper;
        let [l1, l2, l3] = self.sigma_lower;
        [
            u1,
            u2,
            u3,
            l1,
            l2,
            l3,
            self.d_perp,
            self.d_par,
            self.s_perp,
            self.s_par,
            self.c_perp,
            self.c_par,
        ]
    }

    pub fn from_array(a: &[f64; FEATURE_COLUMNS]) -> Self {
        ScaleStats {
            sigma_upper: [a[0], a[1], a[2]],
            sigma_lower: [a[3], a[4], a[5]],
            d_perp: a[6],
            d_par: a[7],
            s_perp: a[8],
            s_par: a[9],
            c_perp: a[10],
            c_par: a[11],
        }
    }

    fn masked(&self, mask: FeatureMask) -> Self {
        let mut a = self.to_array();
        for (i, v) in a.iter_mut().enumerate() {
            if !mask.keeps(i) {
                *v = 0.0;
            }
        }
        Self::from_array(&a)
    }
}

/// Per-point stack of [`ScaleStats`], largest scale first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<ScaleStats>,
}

impl FeatureMatrix {
    pub fn scale_count(&self) -> usize {
        self.rows.len()
    }

    /// Row-major flattening, `12 * scale_count` values.
    pub fn flatten(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.to_array()).collect()
    }

    pub fn from_flat(values: &[f64]) -> Result<Self> {
        if !values.len().is_multiple_of(FEATURE_COLUMNS) {
            return Err(Error::Shape(format!(
                "{} values is not a multiple of {FEATURE_COLUMNS}",
                values.len()
            )));
        }
        Ok(FeatureMatrix {
            rows: values
                .chunks_exact(FEATURE_COLUMNS)
                .map(|c| ScaleStats::from_array(c.try_into().unwrap()))
                .collect(),
        })
    }
}

/// Features of many points, stored compactly as `f32` in the same layout
/// as the on-disk feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub scales: Vec<usize>,
    pub mask: FeatureMask,
    data: Vec<f32>,
}

impl FeatureSet {
    pub fn from_raw(scales: Vec<usize>, mask: FeatureMask, data: Vec<f32>) -> Result<Self> {
        let width = scales.len() * FEATURE_COLUMNS;
        if width == 0 || !data.len().is_multiple_of(width) {
            return Err(Error::Shape(format!(
                "{} values do not form rows of {width}",
                data.len()
            )));
        }
        Ok(FeatureSet { scales, mask, data })
    }

    pub fn from_matrices(scales: Vec<usize>, mask: FeatureMask, matrices: &[FeatureMatrix]) -> Result<Self> {
        let m = scales.len();
        let mut data = Vec::with_capacity(matrices.len() * m * FEATURE_COLUMNS);
        for (i, fm) in matrices.iter().enumerate() {
            if fm.scale_count() != m {
                return Err(Error::Shape(format!(
                    "matrix {i} has {} rows, expected {m}",
                    fm.scale_count()
                )));
            }
            data.extend(fm.flatten().into_iter().map(|v| v as f32));
        }
        Self::from_raw(scales, mask, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Values per point (`12 * scale_count`).
    pub fn width(&self) -> usize {
        self.scales.len() * FEATURE_COLUMNS
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn matrix(&self, i: usize) -> FeatureMatrix {
        let flat: Vec<f64> = self.row(i).iter().map(|&v| v as f64).collect();
        FeatureMatrix::from_flat(&flat).expect("row width is a multiple of 12")
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    /// Keeps only the listed points, in the listed order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        let mut data = Vec::with_capacity(indices.len() * self.width());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureSet {
            scales: self.scales.clone(),
            mask: self.mask,
            data,
        }
    }

    /// The same points with the columns outside `mask` zeroed, as if the
    /// features had been extracted with `mask` in the first place.
    pub fn with_mask(&self, mask: FeatureMask) -> FeatureSet {
        let mut data = self.data.clone();
        for chunk in data.chunks_exact_mut(FEATURE_COLUMNS) {
            for (c, v) in chunk.iter_mut().enumerate() {
                if !mask.keeps(c) {
                    *v = 0.0;
                }
            }
        }
        FeatureSet {
            scales: self.scales.clone(),
            mask: FeatureMask(self.mask.0 & mask.0),
            data,
        }
    }

    /// Keeps a subset of the scales. The largest scale must stay, since the
    /// cross-scale columns are measured against it.
    pub fn select_scales(&self, scales: &[usize]) -> Result<FeatureSet> {
        let positions: Vec<usize> = scales
            .iter()
            .map(|k| {
                self.scales
                    .iter()
                    .position(|s| s == k)
                    .ok_or_else(|| Error::Config(format!("scale {k} not present in the feature set")))
            })
            .collect::<Result<_>>()?;
        if positions.first() != Some(&0) || positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "selected scales must start with the largest and stay in descending order".into(),
            ));
        }
        let mut data = Vec::with_capacity(self.len() * positions.len() * FEATURE_COLUMNS);
        for i in 0..self.len() {
            let row = self.row(i);
            for &p in &positions {
                data.extend_from_slice(&row[p * FEATURE_COLUMNS..(p + 1) * FEATURE_COLUMNS]);
            }
        }
        FeatureSet::from_raw(scales.to_vec(), self.mask, data)
    }

    /// Concatenates point rows of sets with identical configuration.
    pub fn concat(sets: &[&FeatureSet]) -> Result<FeatureSet> {
        let first = sets.first().ok_or_else(|| Error::Empty("no feature sets".into()))?;
        let mut data = Vec::new();
        for s in sets {
            if s.scales != first.scales || s.mask != first.mask {
                return Err(Error::Shape("feature sets use different configurations".into()));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(FeatureSet {
            scales: first.scales.clone(),
            mask: first.mask,
            data,
        })
    }
}

// ---------------------------------------------------------------------------
// Per-neighborhood operations
// ---------------------------------------------------------------------------

/// Threshold for treating `s_perp`-style dot products as zero when choosing
/// the normal's sign.
const SIGN_EPS: f64 = 1e-12;

fn is_degenerate(sigma: &[f64; 3], neighborhood: &[Vec3]) -> bool {
    let magnitude = neighborhood.iter().fold(0.0_f64, |m, p| m.max(p.max_abs()));
    sigma[0].sqrt() + sigma[1].sqrt() <= 1e-12 * magnitude
}

/// Picks the normal orientation so the query point lies on the
/// non-negative side; falls back to making the largest-magnitude component
/// positive when the point sits on the plane.
fn canonical_normal(normal: Vec3, offset_dot: f64, scale_factor: f64) -> Vec3 {
    if (offset_dot * scale_factor).abs() <= SIGN_EPS {
        let largest = (0..3)
            .max_by(|&a, &b| normal[a].abs().total_cmp(&normal[b].abs()).then(b.cmp(&a)))
            .unwrap();
        if normal[largest] < 0.0 {
            -normal
        } else {
            normal
        }
    } else if offset_dot < 0.0 {
        -normal
    } else {
        normal
    }
}

/// Fits the local frame of `neighborhood` (which contains `query`).
///
/// The centroid, spectrum and scale factor come from the full
/// neighborhood; the normal is the smallest-eigenvalue direction of the
/// `floor(k/2)` points closest to the centroid.
pub fn neighborhood_frame(neighborhood: &[Vec3], query: Vec3) -> Result<NeighborhoodFrame> {
    let mut buf = Vec::new();
    frame_with_buffer(neighborhood, query, &mut buf)
}

fn frame_with_buffer(
    neighborhood: &[Vec3],
    query: Vec3,
    buf: &mut Vec<(f64, u32)>,
) -> Result<NeighborhoodFrame> {
    let k = neighborhood.len();
    if k < MIN_SCALE {
        return Err(Error::Config(format!(
            "a neighborhood needs at least {MIN_SCALE} points, got {k}"
        )));
    }
    let (center, cov) = mean_and_covariance(neighborhood);
    let sigma = spectrum(&cov);
    if is_degenerate(&sigma, neighborhood) {
        return Err(Error::Degenerate);
    }
    let scale_factor = 2.0 / (sigma[0].sqrt() + sigma[1].sqrt());

    let half = k / 2;
    buf.clear();
    buf.extend(
        neighborhood
            .iter()
            .enumerate()
            .map(|(i, p)| (p.distance_squared(&center), i as u32)),
    );
    let by_distance = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if half < k {
        buf.select_nth_unstable_by(half, by_distance);
    }
    let inner = &mut buf[..half];
    inner.sort_unstable_by(by_distance);
    let mut inner_center = Vec3::ZERO;
    for &(_, i) in inner.iter() {
        inner_center += neighborhood[i as usize];
    }
    inner_center = inner_center / half as f64;
    let mut inner_cov = crate::geom::Sym3::default();
    for &(_, i) in inner.iter() {
        let d = neighborhood[i as usize] - inner_center;
        inner_cov.xx += d.0[0] * d.0[0];
        inner_cov.xy += d.0[0] * d.0[1];
        inner_cov.xz += d.0[0] * d.0[2];
        inner_cov.yy += d.0[1] * d.0[1];
        inner_cov.yz += d.0[1] * d.0[2];
        inner_cov.zz += d.0[2] * d.0[2];
    }
    let raw_normal = inner_cov.eigen().vectors[2].normalized();
    let normal = canonical_normal(raw_normal, (query - center).dot(&raw_normal), scale_factor);

    Ok(NeighborhoodFrame {
        centroid: center,
        sigma,
        normal,
        scale_factor,
    })
}

/// Centers and rescales a neighborhood into the frame's normalized coordinates.
pub fn normalize_neighborhood(points: &[Vec3], frame: &NeighborhoodFrame) -> Vec<Vec3> {
    points.iter().map(|&p| frame.normalize(p)).collect()
}

/// Splits normalized points by the side of the tangent plane they lie on;
/// points exactly on the plane go to the upper set.
pub fn partition_by_plane(points: &[Vec3], normal: Vec3) -> (Vec<Vec3>, Vec<Vec3>) {
    points.iter().partition(|p| p.dot(&normal) >= 0.0)
}

/// Statistics of the two half-neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetStats {
    pub sigma_upper: [f64; 3],
    pub sigma_lower: [f64; 3],
    pub d_perp: f64,
    pub d_par: f64,
}

/// Spectrum and centroid of one half; halves with fewer than two points
/// contribute a zero spectrum and the frame origin as centroid.
fn half_stats(points: &[Vec3]) -> ([f64; 3], Vec3) {
    if points.len() < 2 {
        return ([0.0; 3], Vec3::ZERO);
    }
    let c = centroid(points);
    (spectrum(&covariance_about(points, c)), c)
}

pub fn subset_stats(upper: &[Vec3], lower: &[Vec3], normal: Vec3) -> SubsetStats {
    let (sigma_upper, cu) = half_stats(upper);
    let (sigma_lower, cl) = half_stats(lower);
    let (d_perp, d_par) = (cu - cl).decompose(&normal);
    SubsetStats {
        sigma_upper,
        sigma_lower,
        d_perp,
        d_par,
    }
}

/// Offset of `point` from its neighborhood centroid in normalized units,
/// split into the signed normal part and the tangential length.
pub fn self_offset(point: Vec3, frame: &NeighborhoodFrame) -> (f64, f64) {
    frame.normalize(point).decompose(&frame.normal)
}

/// Offset between the centroid of the first `k` points of the largest-scale
/// neighborhood and the centroid of the remaining points, scaled by the
/// largest frame's factor and split against its normal. Returns `(0, 0)`
/// when nothing remains.
pub fn cross_scale_offset(largest_neighborhood: &[Vec3], k: usize, largest_frame: &NeighborhoodFrame) -> (f64, f64) {
    if k >= largest_neighborhood.len() {
        return (0.0, 0.0);
    }
    let inner = centroid(&largest_neighborhood[..k]);
    let outer = centroid(&largest_neighborhood[k..]);
    ((inner - outer) * largest_frame.scale_factor).decompose(&largest_frame.normal)
}

// ---------------------------------------------------------------------------
// Whole-cloud extraction
// ---------------------------------------------------------------------------

/// Reusable buffers for computing one point's features.
#[derive(Debug, Default)]
pub struct FeatureScratch {
    knn: KnnScratch,
    ids: Vec<usize>,
    positions: Vec<Vec3>,
    upper: Vec<Vec3>,
    lower: Vec<Vec3>,
    order: Vec<(f64, u32)>,
}

/// Features of point `i` at every configured scale, in `f64`.
pub fn point_features(index: &KnnIndex<'_>, i: usize, config: &ScaleConfig) -> Result<FeatureMatrix> {
    let mut scratch = FeatureScratch::default();
    let mut rows = vec![ScaleStats::default(); config.scale_count()];
    point_features_into(index, i, config, &mut scratch, &mut rows)?;
    Ok(FeatureMatrix { rows })
}

fn point_features_into(
    index: &KnnIndex<'_>,
    i: usize,
    config: &ScaleConfig,
    scratch: &mut FeatureScratch,
    rows: &mut [ScaleStats],
) -> Result<()> {
    let points = index.points();
    let query = points[i];
    index.query_into(query, config.largest(), &mut scratch.knn, &mut scratch.ids)?;
    scratch.positions.clear();
    scratch.positions.extend(scratch.ids.iter().map(|&j| points[j]));
    let neighborhood = &scratch.positions;

    let largest_frame = match frame_with_buffer(neighborhood, query, &mut scratch.order) {
        Ok(f) => Some(f),
        Err(Error::Degenerate) => None,
        Err(e) => return Err(e),
    };

    for (row, &k) in rows.iter_mut().zip(&config.scales) {
        *row = ScaleStats::default();
        let hood = &neighborhood[..k];
        let frame = if k == neighborhood.len() {
            match largest_frame {
                Some(f) => f,
                None => continue,
            }
        } else {
            match frame_with_buffer(hood, query, &mut scratch.order) {
                Ok(f) => f,
                Err(Error::Degenerate) => continue,
                Err(e) => return Err(e),
            }
        };
        scratch.upper.clear();
        scratch.lower.clear();
        for &p in hood {
            let q = frame.normalize(p);
            if q.dot(&frame.normal) >= 0.0 {
                scratch.upper.push(q);
            } else {
                scratch.lower.push(q);
            }
        }
        let halves = subset_stats(&scratch.upper, &scratch.lower, frame.normal);
        let (s_perp, s_par) = self_offset(query, &frame);
        let (c_perp, c_par) = match &largest_frame {
            Some(lf) => cross_scale_offset(neighborhood, k, lf),
            None => (0.0, 0.0),
        };
        *row = ScaleStats {
            sigma_upper: halves.sigma_upper,
            sigma_lower: halves.sigma_lower,
            d_perp: halves.d_perp,
            d_par: halves.d_par,
            s_perp,
            s_par,
            c_perp,
            c_par,
        }
        .masked(config.mask);
    }
    Ok(())
}

/// Features of every point of the cloud.
pub fn extract_features(cloud: &PointCloud, config: &ScaleConfig) -> Result<FeatureSet> {
    let index = KnnIndex::build(&cloud.points)?;
    let all: Vec<usize> = (0..cloud.len()).collect();
    extract_features_for(&index, &all, config)
}

/// Features of the listed points only. Output order follows `indices`;
/// results do not depend on the rayon thread count.
pub fn extract_features_for(index: &KnnIndex<'_>, indices: &[usize], config: &ScaleConfig) -> Result<FeatureSet> {
    config.validate()?;
    if index.len() < config.largest() {
        return Err(Error::TooFewPoints {
            k: config.largest(),
            n: index.len(),
        });
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= index.len()) {
        return Err(Error::Config(format!("point index {bad} out of range")));
    }
    let m = config.scale_count();
    let width = m * FEATURE_COLUMNS;
    let mut data = vec![0f32; indices.len() * width];

    data.par_chunks_mut(width)
        .zip(indices.par_iter())
        .try_for_each_init(
            || (FeatureScratch::default(), vec![ScaleStats::default(); m]),
            |(scratch, rows), (out, &i)| -> Result<()> {
                point_features_into(index, i, config, scratch, rows)?;
                for (chunk, row) in out.chunks_exact_mut(FEATURE_COLUMNS).zip(rows.iter()) {
                    for (o, v) in chunk.iter_mut().zip(row.to_array()) {
                        *o = v as f32;
                    }
                }
                Ok(())
            },
        )?;
    FeatureSet::from_raw(config.scales.clone(), config.mask, data)
}
