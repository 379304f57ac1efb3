//! Exact k-nearest-neighbor search over a static point set.
//!
//! The index is a balanced kd-tree with median splits on the axis of largest
//! extent and small leaf buckets. Results are ordered by squared Euclidean
//! distance, ties broken by ascending point index, which makes every
//! neighborhood deterministic and makes the k-set a prefix of the k'-set for
//! k < k'.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::Vec3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
enum Node {
    Split {
        axis: u8,
        value: f64,
        right: u32,
    },
    Leaf {
        start: u32,
        end: u32,
    },
}

/// Immutable kd-tree over a borrowed slice of points.
#[derive(Debug, Clone)]
pub struct KnnIndex<'a> {
    points: &'a [Vec3],
    nodes: Vec<Node>,
    /// Points reordered so every leaf is a contiguous range.
    leaf_points: Vec<Vec3>,
    leaf_ids: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    id: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.id.cmp(&other.id))
    }
}

/// Reusable per-thread search buffers.
#[derive(Debug, Default)]
pub struct KnnScratch {
    heap: BinaryHeap<Candidate>,
}

impl<'a> KnnIndex<'a> {
    pub fn build(points: &'a [Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("cannot index an empty cloud".into()));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::InvalidCloud("too many points for the index".into()));
        }
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build_node(points, &mut ids, 0, &mut nodes);
        let leaf_points = ids.iter().map(|&i| points[i as usize]).collect();
        Ok(KnnIndex {
            points,
            nodes,
            leaf_points,
            leaf_ids: ids,
        })
    }

    pub fn points(&self) -> &'a [Vec3] {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest neighbors of point `index`, the point itself included.
    pub fn query(&self, index: usize, k: usize) -> Result<Vec<usize>> {
        let q = *self.points.get(index).ok_or_else(|| {
            Error::Config(format!("query index {index} out of range for {} points", self.len()))
        })?;
        self.query_point(q, k)
    }

    pub fn query_point(&self, q: Vec3, k: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(k);
        self.query_into(q, k, &mut KnnScratch::default(), &mut out)?;
        Ok(out)
    }

    /// Allocation-free variant of [`query_point`](Self::query_point).
    pub fn query_into(&self, q: Vec3, k: usize, scratch: &mut KnnScratch, out: &mut Vec<usize>) -> Result<()> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if k > self.len() {
            return Err(Error::TooFewPoints { k, n: self.len() });
        }
        let heap = &mut scratch.heap;
        heap.clear();
        self.search(0, q, [0.0; 3], k, heap);
        out.clear();
        // `into_sorted_vec` would consume the buffer; drain in descending order.
        out.resize(k, 0);
        for slot in out.iter_mut().rev() {
            *slot = heap.pop().expect("heap holds k candidates").id as usize;
        }
        Ok(())
    }

    fn search(&self, node: usize, q: Vec3, offsets: [f64; 3], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                let (start, end) = (start as usize, end as usize);
                for (p, &id) in self.leaf_points[start..end].iter().zip(&self.leaf_ids[start..end]) {
                    let cand = Candidate {
                        dist: q.distance_squared(p),
                        id,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if let Some(mut top) = heap.peek_mut() {
                        if cand < *top {
                            *top = cand;
                        }
                    }
                }
            }
            Node::Split { axis, value, right } => {
                let axis = axis as usize;
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (node + 1, right as usize)
                } else {
                    (right as usize, node + 1)
                };
                self.search(near, q, offsets, k, heap);

                let mut far_offsets = offsets;
                far_offsets[axis] = diff;
                // Same evaluation order as `Vec3::distance_squared`, so the
                // bound never exceeds the computed distance of any point
                // inside the far cell.
                let bound = far_offsets[0] * far_offsets[0]
                    + far_offsets[1] * far_offsets[1]
                    + far_offsets[2] * far_offsets[2];
                let visit = heap.len() < k || heap.peek().is_some_and(|top| bound <= top.dist);
                if visit {
                    self.search(far, q, far_offsets, k, heap);
                }
            }
        }
    }
}

fn build_node(points: &[Vec3], ids: &mut [u32], offset: usize, nodes: &mut Vec<Node>) {
    let here = nodes.len();
    if ids.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + ids.len()) as u32,
        });
        return;
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in ids.iter() {
        let p = points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();

    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis]
            .total_cmp(&points[b as usize][axis])
            .then(a.cmp(&b))
    });
    let value = points[ids[mid] as usize][axis];

    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        right: 0,
    });
    let (left_ids, right_ids) = ids.split_at_mut(mid);
    build_node(points, left_ids, offset, nodes);
    let right = nodes.len() as u32;
    build_node(points, right_ids, offset + mid, nodes);
    if let Node::Split { right: r, .. } = &mut nodes[here] {
        *r = right;
    }
}

/// Exhaustive reference search: sorts every point by (squared distance, index).
pub fn brute_force_knn(points: &[Vec3], q: Vec3, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (q.distance_squared(p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}
