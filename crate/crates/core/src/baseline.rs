//! Covariance-analysis baseline: threshold the surface-variation ratio
//! `σ3 / (σ1 + σ2 + σ3)` of each point's k-nearest-neighbor covariance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{mean_and_covariance, spectrum, Vec3};
use crate::io::{ClassCode, PointCloud};
use crate::knn::{KnnIndex, KnnScratch};

pub const DEFAULT_CA_K: usize = 64;
/// Threshold tuned for clean, hand-modeled scenes.
pub const CA_THRESHOLD_DEFAULT: f64 = 0.025;
/// Threshold tuned for CAD-derived scenes.
pub const CA_THRESHOLD_ABC: f64 = 0.08;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaConfig {
    pub k: usize,
    pub threshold: f64,
}

impl Default for CaConfig {
    fn default() -> Self {
        CaConfig {
            k: DEFAULT_CA_K,
            threshold: CA_THRESHOLD_DEFAULT,
        }
    }
}

impl CaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 4 {
            return Err(Error::Config(format!("CA neighborhood size {} below 4", self.k)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("CA threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// Surface variation of a point set; 0 when every eigenvalue is 0.
pub fn surface_variation(points: &[Vec3]) -> f64 {
    let (_, cov) = mean_and_covariance(points);
    let s = spectrum(&cov);
    let total = s[0] + s[1] + s[2];
    if total > 0.0 {
        s[2] / total
    } else {
        0.0
    }
}

/// Surface variation of every point's `k`-neighborhood.
pub fn ca_ratios(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    if k < 4 {
        return Err(Error::Config(format!("CA neighborhood size {k} below 4")));
    }
    if cloud.len() < k {
        return Err(Error::TooFewPoints { k, n: cloud.len() });
    }
    let index = KnnIndex::build(&cloud.points)?;
    let mut out = vec![0.0; cloud.len()];
    out.par_iter_mut().enumerate().try_for_each_init(
        || (KnnScratch::default(), Vec::new(), Vec::new()),
        |(scratch, ids, hood), (i, r)| -> Result<()> {
            index.query_into(cloud.points[i], k, scratch, ids)?;
            hood.clear();
            hood.extend(ids.iter().map(|&j| cloud.points[j]));
            *r = surface_variation(hood);
            Ok(())
        },
    )?;
    Ok(out)
}

/// Binary prediction: sharp-edge where the ratio exceeds the threshold.
pub fn ca_classify(cloud: &PointCloud, config: &CaConfig) -> Result<Vec<ClassCode>> {
    config.validate()?;
    Ok(threshold_ratios(&ca_ratios(cloud, config.k)?, config.threshold))
}

pub fn threshold_ratios(ratios: &[f64], threshold: f64) -> Vec<ClassCode> {
    ratios
        .iter()
        .map(|&r| if r > threshold { ClassCode::SharpEdge } else { ClassCode::NonEdge })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_has_zero_ratio() {
        let pts: Vec<Vec3> = (0..100).map(|i| Vec3::new((i % 10) as f64, (i / 10) as f64, 0.0)).collect();
        assert_eq!(surface_variation(&pts), 0.0);
        let cloud = PointCloud::unlabeled(pts).unwrap();
        let pred = ca_classify(&cloud, &CaConfig { k: 16, threshold: 0.025 }).unwrap();
        assert!(pred.iter().all(|&c| c == ClassCode::NonEdge));
    }

    #[test]
    fn coincident_points_ratio_zero() {
        assert_eq!(surface_variation(&[Vec3::new(1.0, 2.0, 3.0); 8]), 0.0);
    }

    #[test]
    fn too_few_points() {
        let cloud = PointCloud::unlabeled(vec![Vec3::ZERO; 10]).unwrap();
        assert!(matches!(ca_ratios(&cloud, 64), Err(Error::TooFewPoints { k: 64, n: 10 })));
    }

    #[test]
    fn bad_threshold() {
        assert!(CaConfig { k: 64, threshold: 1.0 }.validate().is_err());
        assert!(CaConfig { k: 3, threshold: 0.5 }.validate().is_err());
    }
}
