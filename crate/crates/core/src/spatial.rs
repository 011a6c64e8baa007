//! Static k-d tree for nearest-neighbor queries over 3D points.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::Vector3;

use crate::error::{invalid, Result};

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable k-d tree. Indices returned by queries refer to the slice the
/// tree was built from.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(points: &[Vector3<f64>]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            // all coincident
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points, ascending by distance, ties broken by lower index.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
        if k > self.len() {
            return Err(invalid("k exceeds the number of points"));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|c| (c.index, libm::sqrt(c.dist2))).collect())
    }

    fn search(&self, node: usize, q: &Vector3<f64>, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate {
                        dist2: (self.points[i] - q).norm_squared(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                // ties must be visited so that lower indices can win
                if heap.len() < k || diff * diff <= heap.peek().unwrap().dist2 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }

    /// Indices of all points within `radius` of `query`, ascending by index.
    pub fn within_radius(&self, query: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.is_empty() {
            self.collect_radius(0, query, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn collect_radius(&self, node: usize, q: &Vector3<f64>, r2: f64, out: &mut Vec<usize>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => out.extend(
                self.order[start..end]
                    .iter()
                    .copied()
                    .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
            ),
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.collect_radius(left, q, r2, out);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.collect_radius(right, q, r2, out);
                }
            }
        }
    }
}

/// One-shot k-nearest-neighbor query over `points`.
pub fn knn(points: &[Vector3<f64>], query: &Vector3<f64>, k: usize) -> Result<Vec<(usize, f64)>> {
    if k > points.len() {
        return Err(invalid("k exceeds the number of points"));
    }
    KdTree::new(points).knn(query, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::seeded_rng;
    use rand::Rng;

    fn brute(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - q).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all.into_iter().map(|(d, i)| (i, libm::sqrt(d))).collect()
    }

    #[test]
    fn single_nearest() {
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(3.0, 0.0, 0.0),
        ];
        let r = knn(&pts, &Vector3::new(0.9, 0.0, 0.0), 1).unwrap();
        assert_eq!(r[0].0, 1);
        assert!((r[0].1 - 0.1).abs() < 1e-12);
        let all = knn(&pts, &Vector3::new(0.9, 0.0, 0.0), 3).unwrap();
        assert_eq!(all.iter().map(|x| x.0).collect::<Vec<_>>(), [1, 0, 2]);
        assert!(knn(&pts, &Vector3::zeros(), 4).is_err());
    }

    #[test]
    fn matches_exhaustive_scan() {
        let mut rng = seeded_rng(42);
        let pts: Vec<_> = (0..1000)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = Vector3::new(rng.random(), rng.random(), rng.random());
            assert_eq!(tree.knn(&q, 10).unwrap(), brute(&pts, &q, 10));
        }
    }

    #[test]
    fn ties_prefer_lower_index() {
        // integer grid with many equal distances, plus duplicates
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push(Vector3::new(i as f64, j as f64, 0.0));
            }
        }
        pts.extend_from_slice(&pts.clone()[..10]);
        let tree = KdTree::new(&pts);
        for q in [Vector3::new(2.5, 2.5, 0.0), Vector3::new(1.0, 1.0, 0.0)] {
            for k in [1, 4, 9, 20] {
                assert_eq!(tree.knn(&q, k).unwrap(), brute(&pts, &q, k));
            }
        }
    }

    #[test]
    fn radius_query() {
        let mut rng = seeded_rng(1);
        let pts: Vec<_> = (0..500)
            .map(|_| Vector3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let tree = KdTree::new(&pts);
        let q = Vector3::new(0.5, 0.5, 0.5);
        let expect: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= 0.3).collect();
        assert_eq!(tree.within_radius(&q, 0.3), expect);
    }
}
