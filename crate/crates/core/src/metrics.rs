//! One-vs-rest confusion counts, the six scores, and medians over clouds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ClassCode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// False positives among actual negatives, `fp / (fp + tn)`.
    pub fn false_positive_rate(&self) -> f64 {
        ratio(self.fp as f64, (self.fp + self.tn) as f64)
    }
}

/// Counts treating `positive` as the positive class and every other class
/// as negative.
pub fn confusion(predictions: &[ClassCode], labels: &[ClassCode], positive: ClassCode) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p == positive, l == positive) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub iou: f64,
}

impl Scores {
    pub const NAMES: [&'static str; 6] = ["precision", "recall", "mcc", "f1", "accuracy", "iou"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.precision, self.recall, self.mcc, self.f1, self.accuracy, self.iou]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Scores {
            precision: a[0],
            recall: a[1],
            mcc: a[2],
            f1: a[3],
            accuracy: a[4],
            iou: a[5],
        }
    }
}

/// `num / den`, with any zero denominator giving 0.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn scores(cm: &ConfusionMatrix) -> Scores {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    Scores {
        precision,
        recall,
        mcc: ratio(tp * tn - fp * fn_, denom),
        f1: ratio(2.0 * precision * recall, precision + recall),
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        iou: ratio(tp, tp + fp + fn_),
    }
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("median of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Metric-wise median across clouds.
pub fn median_report(per_cloud: &[Scores]) -> Result<Scores> {
    if per_cloud.is_empty() {
        return Err(Error::Empty("no clouds to aggregate".into()));
    }
    let mut out = [0.0; 6];
    for (m, o) in out.iter_mut().enumerate() {
        let column: Vec<f64> = per_cloud.iter().map(|s| s.to_array()[m]).collect();
        *o = median(&column)?;
    }
    Ok(Scores::from_array(out))
}

/// Scores of one cloud for the sharp-edge class and, for three-class
/// predictions, the boundary class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEvaluation {
    pub name: String,
    pub points: usize,
    pub sharp: ConfusionMatrix,
    pub sharp_scores: Scores,
    pub boundary: Option<ConfusionMatrix>,
    pub boundary_scores: Option<Scores>,
}

impl CloudEvaluation {
    pub fn new(name: impl Into<String>, predictions: &[ClassCode], labels: &[ClassCode], with_boundary: bool) -> Result<Self> {
        let sharp = confusion(predictions, labels, ClassCode::SharpEdge)?;
        let boundary = if with_boundary {
            Some(confusion(predictions, labels, ClassCode::Boundary)?)
        } else {
            None
        };
        Ok(CloudEvaluation {
            name: name.into(),
            points: labels.len(),
            sharp,
            sharp_scores: scores(&sharp),
            boundary,
            boundary_scores: boundary.as_ref().map(scores),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub clouds: Vec<CloudEvaluation>,
    pub sharp_median: Scores,
    pub boundary_median: Option<Scores>,
}

impl EvaluationReport {
    pub fn new(clouds: Vec<CloudEvaluation>) -> Result<Self> {
        let sharp: Vec<Scores> = clouds.iter().map(|c| c.sharp_scores).collect();
        let sharp_median = median_report(&sharp)?;
        let boundary: Vec<Scores> = clouds.iter().filter_map(|c| c.boundary_scores).collect();
        let boundary_median = if boundary.len() == clouds.len() {
            Some(median_report(&boundary)?)
        } else {
            None
        };
        Ok(EvaluationReport {
            clouds,
            sharp_median,
            boundary_median,
        })
    }

    /// Per-cloud precision and recall, one row per cloud and class.
    pub fn precision_recall_csv(&self) -> String {
        let mut s = String::from("cloud,class,precision,recall\n");
        for c in &self.clouds {
            s.push_str(&format!(
                "{},sharp-edge,{},{}\n",
                c.name, c.sharp_scores.precision, c.sharp_scores.recall
            ));
            if let Some(b) = &c.boundary_scores {
                s.push_str(&format!("{},boundary,{},{}\n", c.name, b.precision, b.recall));
            }
        }
        s
    }
}
