use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{GeomError, PointCloud};
use crate::Vec3;

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// Squared Euclidean distance. Every query and every brute-force oracle goes
/// through this one function so accelerated and exhaustive searches agree bit for bit.
#[inline]
pub fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

impl Node {
    fn box_dist2(&self, q: &Vec3) -> f64 {
        let mut d = 0.0;
        for a in 0..3 {
            let v = if q[a] < self.lo[a] {
                self.lo[a] - q[a]
            } else if q[a] > self.hi[a] {
                q[a] - self.hi[a]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Immutable kd-tree over a snapshot of a point cloud.
///
/// Radius queries are strict (`d < r`) and return indices in ascending order;
/// k-NN queries order by distance with ties broken by the smaller index.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    perm: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, GeomError> {
        Self::from_points(cloud.points(), DEFAULT_LEAF_SIZE)
    }

    pub fn from_points(points: &[Vec3], leaf_size: usize) -> Result<Self, GeomError> {
        if points.is_empty() {
            return Err(GeomError::EmptyCloud);
        }
        let leaf_size = leaf_size.max(1);
        let mut index = Self {
            points: points.to_vec(),
            perm: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / leaf_size + 1),
            leaf_size,
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let first = self.points[self.perm[start]];
        let (lo, hi) = self.perm[start..end]
            .iter()
            .fold((first, first), |(lo, hi), &i| {
                (lo.inf(&self.points[i]), hi.sup(&self.points[i]))
            });
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start <= self.leaf_size {
            return id;
        }
        let extent = hi - lo;
        let axis = extent.imax();
        if extent[axis] == 0.0 {
            // all points coincide
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    /// Indices with `|p - center| < r`, ascending.
    pub fn radius_query(&self, center: &Vec3, r: f64) -> Result<Vec<usize>, GeomError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(GeomError::BadRadius(r));
        }
        let r2 = r * r;
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.box_dist2(center) >= r2 {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    out.extend(
                        self.perm[start..end]
                            .iter()
                            .copied()
                            .filter(|&i| dist2(&self.points[i], center) < r2),
                    );
                }
                NodeKind::Inner { left, right } => {
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// The `k` nearest indices, nearest first; equal distances resolve to the smaller index.
    pub fn knn_query(&self, center: &Vec3, k: usize) -> Result<Vec<usize>, GeomError> {
        Ok(self
            .knn_with_dist2(center, k)?
            .into_iter()
            .map(|(i, _)| i)
            .collect())
    }

    /// Like [`knn_query`](Self::knn_query) but also returns squared distances.
    pub fn knn_with_dist2(&self, center: &Vec3, k: usize) -> Result<Vec<(usize, f64)>, GeomError> {
        if k == 0 {
            return Err(GeomError::ZeroK);
        }
        if k > self.points.len() {
            return Err(GeomError::KTooLarge {
                k,
                size: self.points.len(),
            });
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, center, k, &mut heap);
        let mut found = heap.into_vec();
        found.sort_unstable();
        Ok(found.into_iter().map(|c| (c.index, c.d2)).collect())
    }

    fn knn_visit(&self, id: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[id];
        if heap.len() == k && node.box_dist2(q) > heap.peek().map_or(f64::INFINITY, |c| c.d2) {
            return;
        }
        match node.kind {
            NodeKind::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    let cand = Candidate {
                        d2: dist2(&self.points[i], q),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                let (near, far) = if self.nodes[left].box_dist2(q) <= self.nodes[right].box_dist2(q) {
                    (left, right)
                } else {
                    (right, left)
                };
                self.knn_visit(near, q, k, heap);
                self.knn_visit(far, q, k, heap);
            }
        }
    }

    /// Nearest point index and its squared distance.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        self.knn_with_dist2(q, 1).expect("index is non-empty")[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn brute_radius(points: &[Vec3], c: &Vec3, r: f64) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| dist2(&points[i], c) < r * r)
            .collect()
    }

    fn brute_knn(points: &[Vec3], c: &Vec3, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (dist2(p, c), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    fn random_points(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = rng::stream(seed, &[]);
        (0..n)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect()
    }

    fn axis_points() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(3.0, 0.0, 0.0),
        ]
    }

    #[test]
    fn small_examples() {
        let idx = SpatialIndex::from_points(&axis_points(), 1).unwrap();
        assert_eq!(idx.len(), 3);
        assert_eq!(idx.radius_query(&Vec3::zeros(), 2.0).unwrap(), vec![0, 1]);
        assert_eq!(idx.radius_query(&Vec3::zeros(), 0.5).unwrap(), vec![0]);
        // strict inequality: the point at distance exactly 1 is excluded
        assert_eq!(idx.radius_query(&Vec3::zeros(), 1.0).unwrap(), vec![0]);
        assert_eq!(idx.knn_query(&Vec3::zeros(), 2).unwrap(), vec![0, 1]);
        assert_eq!(idx.knn_query(&Vec3::zeros(), 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            SpatialIndex::from_points(&[], 4),
            Err(GeomError::EmptyCloud)
        ));
        let idx = SpatialIndex::from_points(&axis_points(), 4).unwrap();
        assert!(matches!(idx.radius_query(&Vec3::zeros(), 0.0), Err(GeomError::BadRadius(_))));
        assert!(matches!(idx.radius_query(&Vec3::zeros(), -1.0), Err(GeomError::BadRadius(_))));
        assert!(matches!(idx.knn_query(&Vec3::zeros(), 4), Err(GeomError::KTooLarge { .. })));
    }

    #[test]
    fn single_point_cloud() {
        let idx = SpatialIndex::from_points(&[Vec3::new(1.0, 2.0, 3.0)], 16).unwrap();
        assert_eq!(idx.radius_query(&Vec3::new(1.0, 2.0, 3.0), 0.1).unwrap(), vec![0]);
        assert!(idx.radius_query(&Vec3::zeros(), 0.1).unwrap().is_empty());
        assert_eq!(idx.knn_query(&Vec3::zeros(), 1).unwrap(), vec![0]);
    }

    #[test]
    fn ties_resolve_to_smaller_index() {
        let pts = vec![
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        let idx = SpatialIndex::from_points(&pts, 1).unwrap();
        assert_eq!(idx.knn_query(&Vec3::zeros(), 2).unwrap(), vec![0, 1]);
        // duplicated points
        let dup = vec![Vec3::zeros(); 20];
        let idx = SpatialIndex::from_points(&dup, 2).unwrap();
        assert_eq!(idx.knn_query(&Vec3::zeros(), 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        for seed in 0..20u64 {
            let n = 1 + (seed as usize * 97) % 2000;
            let pts = random_points(n, seed);
            let idx = SpatialIndex::from_points(&pts, 1 + seed as usize % 20).unwrap();
            let mut rng = rng::stream(seed, &[99]);
            for _ in 0..10 {
                let c = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                let r = rng.gen_range(0.01..0.4);
                assert_eq!(idx.radius_query(&c, r).unwrap(), brute_radius(&pts, &c, r));
                let k = rng.gen_range(1..=n.min(50));
                assert_eq!(idx.knn_query(&c, k).unwrap(), brute_knn(&pts, &c, k));
            }
        }
    }

    #[test]
    fn ten_thousand_points() {
        let pts = random_points(10_000, 42);
        let idx = SpatialIndex::from_points(&pts, DEFAULT_LEAF_SIZE).unwrap();
        let mut rng = rng::stream(42, &[1]);
        for _ in 0..100 {
            let c = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            assert_eq!(idx.radius_query(&c, 0.05).unwrap(), brute_radius(&pts, &c, 0.05));
            assert_eq!(idx.knn_query(&c, 10).unwrap(), brute_knn(&pts, &c, 10));
        }
    }
}
