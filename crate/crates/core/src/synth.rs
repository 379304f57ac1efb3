//! Labeled synthetic scenes.
//!
//! Every primitive is sampled by jittered stratified sampling (one sample
//! per cell) on grids whose cell rows start at its creases and rims. Labels
//! come from the clean sample positions: within `label_tolerance` spacings
//! of a crease is sharp-edge, otherwise within tolerance of an annotated rim
//! is boundary.
//! Gaussian noise and outliers are applied afterwards; outliers are always
//! non-edge.
//!
//! Scenes place several randomly rotated primitives side by side, with gaps
//! wide enough that no neighborhood spans two of them.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::io::{ClassCode, PointCloud};
use crate::seed::{derive_seed, rng_for};

/// Minimum empty space between two primitives of a scene, in spacings.
pub const SCENE_GAP: f64 = 30.0;
pub const VALIDATION_PER_CLASS: usize = 1000;
pub const VALIDATION_BOUNDARY: usize = 100;

const STREAM_SAMPLES: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_OUTLIERS: u64 = 2;
const STREAM_POSE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Primitive {
    /// A rectangular crop of a plane; its borders are not annotated.
    Plane { width: f64, height: f64 },
    /// A rectangle whose edge along `y = 0` is an annotated rim; the other
    /// borders are crops.
    HalfPlane { width: f64, height: f64 },
    /// Two rectangles meeting at a crease with the given dihedral angle
    /// (180 is flat). The three outer edges of each face are rims.
    Wedge { angle_deg: f64, length: f64, width: f64 },
    /// A closed cuboid with twelve creases.
    Box { size: [f64; 3] },
    /// A flat disk whose circumference is a rim.
    OpenDisk { radius: f64 },
    /// A cylindrical sheet spanning `arc_deg` degrees; both curved ends and
    /// both straight sides are rims.
    CurvedSheet { radius: f64, length: f64, arc_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitive: Primitive,
    /// Samples per unit area; the spacing is `1 / sqrt(density)`.
    pub density: f64,
    /// Standard deviation of the Gaussian displacement, in spacings.
    pub noise: f64,
    pub outlier_fraction: f64,
    /// Labeling distance, in spacings.
    pub label_tolerance: f64,
    /// Width of the uniform jitter inside each sampling cell, as a fraction
    /// of the cell (0 is a regular grid, 1 spans the whole cell).
    pub jitter: f64,
    /// Whether rims are labeled boundary; otherwise rim points are non-edge.
    pub annotate_boundaries: bool,
}

impl SceneSpec {
    pub fn new(primitive: Primitive) -> Self {
        SceneSpec {
            primitive,
            density: 1.0,
            noise: 0.0,
            outlier_fraction: 0.0,
            label_tolerance: 1.0,
            jitter: 1.0,
            annotate_boundaries: true,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_outliers(mut self, fraction: f64) -> Self {
        self.outlier_fraction = fraction;
        self
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.density.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be nonnegative");
        }
        if !(0.0..0.1).contains(&self.outlier_fraction) {
            return bad("outlier fraction must lie in [0, 0.1)");
        }
        if !(self.label_tolerance > 0.0 && self.label_tolerance.is_finite()) {
            return bad("label tolerance must be positive");
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return bad("jitter must lie in [0, 1]");
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let ok = match self.primitive {
            Primitive::Plane { width, height } | Primitive::HalfPlane { width, height } => {
                positive(width) && positive(height)
            }
            Primitive::Wedge {
                angle_deg,
                length,
                width,
            } => angle_deg > 0.0 && angle_deg <= 180.0 && positive(length) && positive(width),
            Primitive::Box { size } => size.iter().all(|&s| positive(s)),
            Primitive::OpenDisk { radius } => positive(radius),
            Primitive::CurvedSheet {
                radius,
                length,
                arc_deg,
            } => positive(radius) && positive(length) && arc_deg > 0.0 && arc_deg < 360.0,
        };
        if !ok {
            return bad("primitive dimensions out of range");
        }
        Ok(())
    }
}

/// A feature line: a straight segment or a circular arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Segment {
        a: Vec3,
        b: Vec3,
    },
    /// Points `center + radius (cos t e1 + sin t e2)` for `t` in
    /// `[start, end]`; `e1`, `e2` orthonormal.
    Arc {
        center: Vec3,
        e1: Vec3,
        e2: Vec3,
        radius: f64,
        start: f64,
        end: f64,
    },
}

impl Curve {
    pub fn distance(&self, p: Vec3) -> f64 {
        match *self {
            Curve::Segment { a, b } => {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (p - (a + ab * t)).norm()
            }
            Curve::Arc {
                center,
                e1,
                e2,
                radius,
                start,
                end,
            } => {
                let d = p - center;
                let (x, y) = (d.dot(&e1), d.dot(&e2));
                let mut phi = y.atan2(x);
                while phi < start {
                    phi += 2.0 * PI;
                }
                let at = |t: f64| center + (e1 * t.cos() + e2 * t.sin()) * radius;
                if phi <= end {
                    (p - at(phi)).norm()
                } else {
                    (p - at(start)).norm().min((p - at(end)).norm())
                }
            }
        }
    }
}

/// Clean samples of a primitive in its own frame with its feature lines.
#[derive(Debug, Clone, Default)]
pub struct Geometry {
    pub samples: Vec<Vec3>,
    pub creases: Vec<Curve>,
    pub rims: Vec<Curve>,
}

/// Jitter offset inside a cell, in cell units around the cell centre.
fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> f64 {
    if amount == 0.0 {
        0.0
    } else {
        rng.random_range(-0.5..0.5) * amount
    }
}

fn cells(extent: f64, h: f64) -> usize {
    ((extent / h).round() as usize).max(1)
}

/// Samples the rectangle `origin + s u + t v`, `s` in `[0, a]`, `t` in `[0, b]`.
#[allow(clippy::too_many_arguments)]
fn sample_rectangle(origin: Vec3, u: Vec3, v: Vec3, a: f64, b: f64, h: f64, amount: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Vec3>) {
    let (na, nb) = (cells(a, h), cells(b, h));
    let (ca, cb) = (a / na as f64, b / nb as f64);
    for i in 0..na {
        for j in 0..nb {
            let s = (i as f64 + 0.5 + jitter(rng, amount)) * ca;
            let t = (j as f64 + 0.5 + jitter(rng, amount)) * cb;
            out.push(origin + u * s + v * t);
        }
    }
}

fn sample_disk(radius: f64, h: f64, amount: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Vec3>) {
    let rings = cells(radius, h);
    let dr = radius / rings as f64;
    for i in 0..rings {
        let nominal = (i as f64 + 0.5) * dr;
        let count = ((2.0 * PI * nominal / h).round() as usize).max(1);
        let phase = rng.random_range(0.0..2.0 * PI);
        for m in 0..count {
            let t = phase + (m as f64 + 0.5 + jitter(rng, amount)) * 2.0 * PI / count as f64;
            let r = (i as f64 + 0.5 + jitter(rng, amount)) * dr;
            out.push(Vec3::new(r * t.cos(), r * t.sin(), 0.0));
        }
    }
}

fn seg(a: Vec3, b: Vec3) -> Curve {
    Curve::Segment { a, b }
}

/// Builds the clean samples and feature lines of a primitive.
pub fn build_geometry(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Geometry {
    let h = spec.spacing();
    let jit = spec.jitter;
    let x = Vec3::new(1.0, 0.0, 0.0);
    let y = Vec3::new(0.0, 1.0, 0.0);
    let z = Vec3::new(0.0, 0.0, 1.0);
    let o = Vec3::ZERO;
    let mut g = Geometry::default();
    match spec.primitive {
        Primitive::Plane { width, height } => {
            sample_rectangle(o, x, y, width, height, h, jit, rng, &mut g.samples);
        }
        Primitive::HalfPlane { width, height } => {
            sample_rectangle(o, x, y, width, height, h, jit, rng, &mut g.samples);
            g.rims.push(seg(o, x * width));
        }
        Primitive::Wedge {
            angle_deg,
            length,
            width,
        } => {
            let a = angle_deg.to_radians();
            let vb = Vec3::new(0.0, a.cos(), a.sin());
            for v in [y, vb] {
                sample_rectangle(o, x, v, length, width, h, jit, rng, &mut g.samples);
                g.rims.push(seg(v * width, v * width + x * length));
                g.rims.push(seg(o, v * width));
                g.rims.push(seg(x * length, x * length + v * width));
            }
            g.creases.push(seg(o, x * length));
        }
        Primitive::Box { size: [a, b, c] } => {
            let faces = [
                (o, x, y, a, b),
                (z * c, x, y, a, b),
                (o, x, z, a, c),
                (y * b, x, z, a, c),
                (o, y, z, b, c),
                (x * a, y, z, b, c),
            ];
            for (origin, u, v, ea, eb) in faces {
                sample_rectangle(origin, u, v, ea, eb, h, jit, rng, &mut g.samples);
            }
            let corner = |i: f64, j: f64, k: f64| Vec3::new(i * a, j * b, k * c);
            for (p, q) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                g.creases.push(seg(corner(0.0, p, q), corner(1.0, p, q)));
                g.creases.push(seg(corner(p, 0.0, q), corner(p, 1.0, q)));
                g.creases.push(seg(corner(p, q, 0.0), corner(p, q, 1.0)));
            }
        }
        Primitive::OpenDisk { radius } => {
            sample_disk(radius, h, jit, rng, &mut g.samples);
            g.rims.push(Curve::Arc {
                center: o,
                e1: x,
                e2: y,
                radius,
                start: 0.0,
                end: 2.0 * PI,
            });
        }
        Primitive::CurvedSheet {
            radius,
            length,
            arc_deg,
        } => {
            let arc = arc_deg.to_radians();
            let span = arc * radius;
            let (ns, nz) = (cells(span, h), cells(length, h));
            let (cs, cz) = (span / ns as f64, length / nz as f64);
            for i in 0..ns {
                for j in 0..nz {
                    let t = (i as f64 + 0.5 + jitter(rng, jit)) * cs / radius;
                    let zz = (j as f64 + 0.5 + jitter(rng, jit)) * cz;
                    g.samples.push(Vec3::new(radius * t.cos(), radius * t.sin(), zz));
                }
            }
            for zz in [0.0, length] {
                g.rims.push(Curve::Arc {
                    center: z * zz,
                    e1: x,
                    e2: y,
                    radius,
                    start: 0.0,
                    end: arc,
                });
            }
            for t in [0.0, arc] {
                let p = Vec3::new(radius * t.cos(), radius * t.sin(), 0.0);
                g.rims.push(seg(p, p + z * length));
            }
        }
    }
    g
}

/// Labels clean positions by their distance to the feature lines.
pub fn label_points(g: &Geometry, tolerance: f64, annotate_boundaries: bool) -> Vec<ClassCode> {
    let near = |curves: &[Curve], p: Vec3| curves.iter().any(|c| c.distance(p) <= tolerance);
    g.samples
        .iter()
        .map(|&p| {
            if near(&g.creases, p) {
                ClassCode::SharpEdge
            } else if annotate_boundaries && near(&g.rims, p) {
                ClassCode::Boundary
            } else {
                ClassCode::NonEdge
            }
        })
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// One primitive in its own frame, labeled, with noise and outliers.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<PointCloud> {
    spec.validate()?;
    let h = spec.spacing();
    let geometry = build_geometry(spec, &mut rng_for(seed, &[STREAM_SAMPLES]));
    let mut labels = label_points(&geometry, spec.label_tolerance * h, spec.annotate_boundaries);
    let mut points = geometry.samples;

    if spec.noise > 0.0 {
        let mut rng = rng_for(seed, &[STREAM_NOISE]);
        let sigma = spec.noise * h;
        for p in &mut points {
            for c in &mut p.0 {
                let e: f64 = StandardNormal.sample(&mut rng);
                *c += sigma * e;
            }
        }
    }

    let outliers = (spec.outlier_fraction * points.len() as f64).round() as usize;
    if outliers > 0 {
        let mut rng = rng_for(seed, &[STREAM_OUTLIERS]);
        let mut chosen = sample(&mut rng, points.len(), outliers).into_vec();
        chosen.sort_unstable();
        for i in chosen {
            let offset = random_unit(&mut rng) * (rng.random_range(3.0..8.0) * h);
            points[i] += offset;
            labels[i] = ClassCode::NonEdge;
        }
    }
    PointCloud::new(points, Some(labels))
}

/// A uniformly distributed rotation, as the columns of its matrix.
fn random_rotation(rng: &mut ChaCha8Rng) -> [Vec3; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    [
        Vec3::new(1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y)),
        Vec3::new(2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z + w * x)),
        Vec3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), 1.0 - 2.0 * (x * x + y * y)),
    ]
}

/// Places each part, randomly rotated, along the x axis with at least
/// [`SCENE_GAP`] spacings of empty space between neighbors.
pub fn generate_scene(parts: &[SceneSpec], seed: u64) -> Result<PointCloud> {
    if parts.is_empty() {
        return Err(Error::Config("a scene needs at least one part".into()));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut cursor = 0.0;
    for (i, spec) in parts.iter().enumerate() {
        let part_seed = derive_seed(seed, i as u64);
        let part = generate(spec, part_seed)?;
        if part.is_empty() {
            continue;
        }
        let centre = crate::geom::centroid(&part.points);
        let radius = part
            .points
            .iter()
            .map(|p| (*p - centre).norm())
            .fold(0.0, f64::max);
        let r = random_rotation(&mut rng_for(part_seed, &[STREAM_POSE]));
        if i > 0 {
            cursor += SCENE_GAP * spec.spacing();
        }
        cursor += radius;
        let offset = Vec3::new(cursor, 0.0, 0.0);
        cursor += radius;
        points.extend(part.points.iter().map(|&p| {
            let d = p - centre;
            r[0] * d[0] + r[1] * d[1] + r[2] * d[2] + offset
        }));
        labels.extend(part.labels.into_iter().flatten());
    }
    PointCloud::new(points, Some(labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Sharp edges only; rims exist but stay labeled non-edge.
    DefaultLike,
    /// Sharp edges plus annotated clean and noisy rims of varying radii.
    DefaultppLike,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "default" | "default-like" | "defaultlike" => Ok(Profile::DefaultLike),
            "defaultpp" | "defaultpp-like" | "default++" | "defaultpplike" => Ok(Profile::DefaultppLike),
            other => Err(Error::Config(format!(
                "unknown profile {other:?} (expected default-like or defaultpp-like)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::DefaultLike => "default-like",
            Profile::DefaultppLike => "defaultpp-like",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Validation,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCloud {
    pub name: String,
    pub split: Split,
    pub seed: u64,
    pub parts: Vec<SceneSpec>,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub profile: Profile,
    pub seed: u64,
    pub clouds: Vec<SuiteCloud>,
    /// For each validation cloud (in order), the sampled point indices.
    pub validation_samples: Vec<Vec<usize>>,
}

impl Suite {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SuiteCloud> {
        self.clouds.iter().filter(move |c| c.split == split)
    }

    /// Class counts pooled over the clouds of one split.
    pub fn class_counts(&self, split: Split) -> [usize; 3] {
        let mut total = [0; 3];
        for c in self.split(split) {
            for (t, n) in total.iter_mut().zip(c.cloud.class_counts()) {
                *t += n;
            }
        }
        total
    }

    pub fn manifest(&self) -> SuiteManifest {
        let validation: Vec<&SuiteCloud> = self.split(Split::Validation).collect();
        SuiteManifest {
            profile: self.profile,
            seed: self.seed,
            clouds: self
                .clouds
                .iter()
                .map(|c| CloudManifest {
                    name: c.name.clone(),
                    split: c.split,
                    seed: c.seed,
                    points: c.cloud.len(),
                    class_counts: c.cloud.class_counts(),
                    parts: c.parts.clone(),
                })
                .collect(),
            validation_samples: validation
                .iter()
                .zip(&self.validation_samples)
                .map(|(c, s)| (c.name.clone(), s.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudManifest {
    pub name: String,
    pub split: Split,
    pub seed: u64,
    pub points: usize,
    pub class_counts: [usize; 3],
    pub parts: Vec<SceneSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub profile: Profile,
    pub seed: u64,
    pub clouds: Vec<CloudManifest>,
    pub validation_samples: Vec<(String, Vec<usize>)>,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, options: &[T]) -> T {
    options[rng.random_range(0..options.len())]
}

const NOISE_LEVELS: [f64; 4] = [0.0, 0.02, 0.05, 0.1];

fn random_wedge(rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::Wedge {
        angle_deg: rng.random_range(60.0..135.0),
        length: rng.random_range(40.0..60.0),
        width: rng.random_range(25.0..35.0),
    }
}

fn random_box(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Primitive {
    Primitive::Box {
        size: [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)],
    }
}

fn random_disk(rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::OpenDisk {
        radius: rng.random_range(15.0..30.0),
    }
}

fn random_sheet(rng: &mut ChaCha8Rng) -> Primitive {
    Primitive::CurvedSheet {
        radius: rng.random_range(6.0..20.0),
        length: rng.random_range(30.0..50.0),
        arc_deg: rng.random_range(120.0..240.0),
    }
}

fn part(rng: &mut ChaCha8Rng, primitive: Primitive, annotate: bool) -> SceneSpec {
    let mut s = SceneSpec::new(primitive).with_noise(pick(rng, &NOISE_LEVELS));
    if rng.random_bool(0.25) {
        s.outlier_fraction = 0.002;
    }
    s.annotate_boundaries = annotate;
    s
}

/// Scene recipes of one split: the first and second cloud carry a large
/// box and a wedge, the third a box and a disk, the fourth a box and a
/// curved sheet.
fn training_parts(rng: &mut ChaCha8Rng, index: usize, annotate: bool) -> Vec<SceneSpec> {
    let main = random_box(rng, 70.0, 110.0);
    let mut parts = vec![part(rng, main, annotate)];
    let extra = match index % 4 {
        0 | 1 => random_wedge(rng),
        2 => random_disk(rng),
        _ => random_sheet(rng),
    };
    parts.push(part(rng, extra, annotate));
    parts
}

fn evaluation_parts(rng: &mut ChaCha8Rng, annotate: bool) -> Vec<SceneSpec> {
    let noise = pick(rng, &[0.0, 0.02, 0.05]);
    [
        random_box(rng, 40.0, 70.0),
        random_wedge(rng),
        random_disk(rng),
        random_sheet(rng),
    ]
    .into_iter()
    .map(|p| {
        let mut s = SceneSpec::new(p).with_noise(noise);
        s.annotate_boundaries = annotate;
        s
    })
    .collect()
}

/// Draws up to `VALIDATION_PER_CLASS` non-edge and sharp-edge points and
/// up to `VALIDATION_BOUNDARY` boundary points, uniformly without
/// replacement from the pooled validation clouds.
pub fn sample_validation(clouds: &[&PointCloud], seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng_for(seed, &[0x7a1]);
    let mut out = vec![Vec::new(); clouds.len()];
    for (class, want) in [
        (ClassCode::NonEdge, VALIDATION_PER_CLASS),
        (ClassCode::SharpEdge, VALIDATION_PER_CLASS),
        (ClassCode::Boundary, VALIDATION_BOUNDARY),
    ] {
        let pool: Vec<(usize, usize)> = clouds
            .iter()
            .enumerate()
            .flat_map(|(c, cloud)| {
                cloud
                    .labels
                    .iter()
                    .flatten()
                    .enumerate()
                    .filter(move |(_, &l)| l == class)
                    .map(move |(i, _)| (c, i))
            })
            .collect();
        let take = want.min(pool.len());
        for k in sample(&mut rng, pool.len(), take) {
            let (c, i) = pool[k];
            out[c].push(i);
        }
    }
    for v in &mut out {
        v.sort_unstable();
    }
    out
}

/// Training, validation and evaluation clouds for a profile. The same seed
/// always yields the same suite.
pub fn generate_suite(profile: Profile, seed: u64) -> Result<Suite> {
    let annotate = profile == Profile::DefaultppLike;
    let mut recipe_rng = rng_for(seed, &[0x5c3e]);
    let mut plan: Vec<(String, Split, Vec<SceneSpec>)> = Vec::new();
    for i in 0..4 {
        plan.push((format!("train_{i:02}"), Split::Training, training_parts(&mut recipe_rng, i, annotate)));
    }
    for i in 0..2 {
        let r = &mut recipe_rng;
        let primitives = [random_box(r, 70.0, 110.0), random_wedge(r), random_disk(r), random_sheet(r)];
        let parts = primitives.into_iter().map(|p| part(r, p, annotate)).collect();
        plan.push((format!("val_{i:02}"), Split::Validation, parts));
    }
    for i in 0..6 {
        plan.push((format!("eval_{i:02}"), Split::Evaluation, evaluation_parts(&mut recipe_rng, annotate)));
    }

    let clouds = plan
        .into_iter()
        .enumerate()
        .map(|(k, (name, split, parts))| {
            let cloud_seed = derive_seed(seed, 1000 + k as u64);
            let cloud = generate_scene(&parts, cloud_seed)?;
            Ok(SuiteCloud {
                name,
                split,
                seed: cloud_seed,
                parts,
                cloud,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let validation: Vec<&PointCloud> = clouds
        .iter()
        .filter(|c| c.split == Split::Validation)
        .map(|c| &c.cloud)
        .collect();
    let validation_samples = sample_validation(&validation, seed);
    Ok(Suite {
        profile,
        seed,
        clouds,
        validation_samples,
    })
}
