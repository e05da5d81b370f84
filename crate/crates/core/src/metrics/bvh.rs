use super::triangle::point_triangle_distance2;
use super::MetricError;
use crate::shapes::TriMesh;
use crate::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range into `order`. Inner: children indices.
    kind: NodeKind,
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

/// Bounding-volume hierarchy over a mesh's triangles for nearest-triangle queries.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn box_dist2(p: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    (0..3)
        .map(|a| {
            let d = (lo[a] - p[a]).max(0.0).max(p[a] - hi[a]);
            d * d
        })
        .sum()
}

impl TriangleBvh {
    pub fn build(mesh: &TriMesh) -> Result<Self, MetricError> {
        if mesh.is_empty() {
            return Err(MetricError::EmptyMesh);
        }
        let triangles: Vec<[Vec3; 3]> = (0..mesh.triangles().len()).map(|t| mesh.triangle(t)).collect();
        let centroids: Vec<Vec3> = triangles.iter().map(|[a, b, c]| (a + b + c) / 3.0).collect();
        let mut bvh = Self {
            order: (0..triangles.len()).collect(),
            triangles,
            nodes: Vec::new(),
        };
        let n = bvh.order.len();
        bvh.build_node(&centroids, 0, n);
        Ok(bvh)
    }

    fn build_node(&mut self, centroids: &[Vec3], start: usize, end: usize) -> usize {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &t in &self.order[start..end] {
            for v in &self.triangles[t] {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            kind: NodeKind::Leaf { start, end },
        });
        if end - start > LEAF_SIZE {
            let ext = hi - lo;
            let axis = ext.imax();
            let mid = (start + end) / 2;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
            });
            let left = self.build_node(centroids, start, mid);
            let right = self.build_node(centroids, mid, end);
            self.nodes[id].kind = NodeKind::Inner { left, right };
        }
        id
    }

    /// Squared distance from `p` to the nearest triangle.
    pub fn nearest_distance2(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if box_dist2(p, &node.lo, &node.hi) > best {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, end } => {
                    for &t in &self.order[start..end] {
                        best = best.min(point_triangle_distance2(p, &self.triangles[t]));
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = box_dist2(p, &self.nodes[left].lo, &self.nodes[left].hi);
                    let dr = box_dist2(p, &self.nodes[right].lo, &self.nodes[right].hi);
                    // nearer child popped first
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}
