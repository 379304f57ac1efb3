mod common;

use bounded::io::ClassCode::{self, *};
use bounded::metrics::{confusion, median, median_report, scores, CloudEvaluation, ConfusionMatrix, EvaluationReport, Scores};
use common::{naive_scores, rng};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn cm(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
    ConfusionMatrix { tp, fp, fn_, tn }
}

#[test]
fn random_matrices_match_naive_recomputation() {
    let mut r = rng(31);
    for i in 0..1000 {
        let hi = [3u64, 50, 10_000][i % 3];
        let m = cm(
            r.random_range(0..=hi),
            r.random_range(0..=hi),
            r.random_range(0..=hi),
            r.random_range(0..=hi),
        );
        let got = scores(&m).to_array();
        let want = naive_scores(m.tp, m.fp, m.fn_, m.tn);
        for (j, (g, w)) in got.iter().zip(want).enumerate() {
            assert!((g - w).abs() < 1e-12, "{m:?} {}: {g} vs {w}", Scores::NAMES[j]);
        }
    }
}

#[test]
fn anchored_example() {
    let s = scores(&cm(248, 752, 173, 8827));
    assert_eq!(s.precision, 0.248);
    assert_eq!(s.recall, 248.0 / 421.0);
    assert!((s.recall - 0.589).abs() < 5e-4);
    assert_eq!(s.iou, 248.0 / 1173.0);
    assert_eq!(s.accuracy, 9075.0 / 10_000.0);
    assert!((s.f1 - 496.0 / 1421.0).abs() < 1e-15);
}

#[test]
fn declared_conventions() {
    assert_eq!(scores(&cm(7, 0, 0, 3)).to_array(), [1.0; 6]);
    assert_eq!(scores(&cm(0, 0, 0, 40)).to_array(), [0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    // All predicted positive without a single true positive.
    let c = confusion(&[SharpEdge; 4], &[NonEdge, Boundary, NonEdge, NonEdge], SharpEdge).unwrap();
    assert_eq!((c.tp, c.tn), (0, 0));
    let c = confusion(&[SharpEdge, NonEdge], &[NonEdge, Boundary], Boundary).unwrap();
    assert_eq!(c, cm(0, 0, 1, 1));
    assert_eq!(scores(&cm(0, 5, 5, 0)).mcc, -1.0);
}

#[test]
fn median_examples() {
    let one = scores(&cm(3, 1, 2, 9));
    assert_eq!(median_report(&[one]).unwrap(), one);
    let f1 = |v: f64| Scores { f1: v, ..Scores::default() };
    assert_eq!(median_report(&[f1(0.2), f1(0.9), f1(0.5)]).unwrap().f1, 0.5);
    assert!((median(&[0.2, 0.4]).unwrap() - 0.3).abs() < 1e-15);
    assert!(median(&[]).is_err());
}

#[test]
fn reports_carry_boundary_only_for_three_classes() {
    let labels = [NonEdge, SharpEdge, Boundary, NonEdge];
    let a = CloudEvaluation::new("a", &labels, &labels, true).unwrap();
    let b = CloudEvaluation::new("b", &[NonEdge; 4], &labels, false).unwrap();
    let report = EvaluationReport::new(vec![a.clone()]).unwrap();
    assert_eq!(report.sharp_median.to_array(), [1.0; 6]);
    assert_eq!(report.boundary_median.unwrap().to_array(), [1.0; 6]);
    assert!(EvaluationReport::new(vec![a, b]).unwrap().boundary_median.is_none());
    let csv = report.precision_recall_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("cloud,class,precision,recall\n"));
}

fn class() -> impl Strategy<Value = ClassCode> {
    prop_oneof![Just(NonEdge), Just(SharpEdge), Just(Boundary)]
}

proptest! {
    #[test]
    fn scores_stay_in_range(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000) {
        let s = scores(&cm(tp, fp, fn_, tn));
        for (v, name) in s.to_array().iter().zip(Scores::NAMES) {
            let lo = if name == "mcc" { -1.0 } else { 0.0 };
            prop_assert!(*v >= lo - 1e-12 && *v <= 1.0 + 1e-12, "{name} = {v}");
        }
        let perfect = fp == 0 && fn_ == 0 && tp > 0 && tn > 0;
        prop_assert_eq!((s.mcc - 1.0).abs() < 1e-12, perfect);
    }

    #[test]
    fn permutation_changes_nothing(
        pairs in prop::collection::vec((class(), class()), 1..300),
        seed in any::<u64>(),
    ) {
        let (p, l): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng(seed));
        let (p2, l2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
        for positive in [SharpEdge, Boundary] {
            let a = confusion(&p, &l, positive).unwrap();
            prop_assert_eq!(a.total(), pairs.len() as u64);
            prop_assert_eq!(a, confusion(&p2, &l2, positive).unwrap());
        }
    }
}
