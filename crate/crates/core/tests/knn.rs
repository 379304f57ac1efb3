mod common;

use bounded::knn::KnnIndex;
use bounded::Vec3;
use common::{knn_oracle, random_cloud, rng};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_brute_force(seed in any::<u64>(), n in 1usize..1500) {
        let mut r = rng(seed);
        let pts = random_cloud(&mut r, n);
        let index = KnnIndex::build(&pts).unwrap();
        for _ in 0..20 {
            let i = r.random_range(0..n);
            let k = r.random_range(1..=n.min(200));
            prop_assert_eq!(index.query(i, k).unwrap(), knn_oracle(&pts, pts[i], k));
        }
        let q = Vec3::new(r.random_range(-12.0..12.0), r.random_range(-12.0..12.0), r.random_range(-12.0..12.0));
        let k = r.random_range(1..=n);
        prop_assert_eq!(index.query_point(q, k).unwrap(), knn_oracle(&pts, q, k));
    }

    #[test]
    fn smaller_k_is_a_prefix(seed in any::<u64>(), n in 2usize..600) {
        let mut r = rng(seed);
        let pts = random_cloud(&mut r, n);
        let index = KnnIndex::build(&pts).unwrap();
        let i = r.random_range(0..n);
        let big = index.query(i, n).unwrap();
        let k = r.random_range(1..=n);
        prop_assert_eq!(&index.query(i, k).unwrap()[..], &big[..k]);
        prop_assert!(index.query(i, n + 1).is_err());
    }
}

#[test]
fn every_query_of_a_uniform_cloud_matches() {
    let mut r = rng(17);
    let pts: Vec<Vec3> = (0..1000)
        .map(|_| Vec3::new(r.random(), r.random(), r.random()))
        .collect();
    let index = KnnIndex::build(&pts).unwrap();
    for i in 0..pts.len() {
        assert_eq!(index.query(i, 128).unwrap(), knn_oracle(&pts, pts[i], 128), "query {i}");
    }
}

#[test]
fn coincident_cloud_orders_by_index() {
    let pts = vec![Vec3::new(1.0, 1.0, 1.0); 40];
    let index = KnnIndex::build(&pts).unwrap();
    assert_eq!(index.query(25, 5).unwrap(), vec![0, 1, 2, 3, 4]);
}
