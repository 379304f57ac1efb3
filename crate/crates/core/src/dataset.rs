//! Labeled feature sets built from clouds, shared by training and
//! evaluation.

use crate::error::{Error, Result};
use crate::features::{extract_features_for, FeatureSet, ScaleConfig};
use crate::io::PointCloud;
use crate::knn::KnnIndex;
use crate::net::TrainingSet;

fn labels_of(cloud: &PointCloud) -> Result<&[crate::io::ClassCode]> {
    cloud
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidCloud("cloud carries no labels".into()))
}

/// Features and labels of every point.
pub fn labeled_features(cloud: &PointCloud, config: &ScaleConfig) -> Result<TrainingSet> {
    let all: Vec<usize> = (0..cloud.len()).collect();
    sampled_features(cloud, &all, config)
}

/// Features and labels of the listed points, computed with neighborhoods
/// from the whole cloud.
pub fn sampled_features(cloud: &PointCloud, indices: &[usize], config: &ScaleConfig) -> Result<TrainingSet> {
    let labels = labels_of(cloud)?;
    let index = KnnIndex::build(&cloud.points)?;
    let features = extract_features_for(&index, indices, config)?;
    TrainingSet::new(features, indices.iter().map(|&i| labels[i]).collect())
}

/// Concatenates sets built with the same configuration.
pub fn concat(sets: &[TrainingSet]) -> Result<TrainingSet> {
    let features: Vec<&FeatureSet> = sets.iter().map(|s| &s.features).collect();
    let labels = sets.iter().flat_map(|s| s.labels.iter().copied()).collect();
    TrainingSet::new(FeatureSet::concat(&features)?, labels)
}

/// Applies a feature mask and scale subset to an already extracted set.
pub fn restrict(set: &TrainingSet, config: &ScaleConfig) -> Result<TrainingSet> {
    let features = set.features.select_scales(&config.scales)?.with_mask(config.mask);
    TrainingSet::new(features, set.labels.clone())
}
