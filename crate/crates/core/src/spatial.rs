//! Exact k-d tree for neighbour queries on point clouds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::geometry::Vec3;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Index over a borrowed point slice. Results are exact; ties in distance
/// are broken by point index so queries are fully deterministic.
#[derive(Debug)]
pub struct KdTree<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbour {
    dist2: f64,
    index: usize,
}

impl Eq for Neighbour {}

impl Ord for Neighbour {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbour {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::build(points, &mut order, 0);
        Self {
            points,
            order,
            root,
        }
    }

    fn build(points: &[Vec3], idx: &mut [usize], offset: usize) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf {
                start: offset,
                end: offset + idx.len(),
            };
        }
        // split the widest axis at the median
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&points[i]);
            hi = hi.sup(&points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][axis]
                .total_cmp(&points[b][axis])
                .then(a.cmp(&b))
        });
        let value = points[idx[mid]][axis];
        let (l, r) = idx.split_at_mut(mid);
        Node::Split {
            axis,
            value,
            left: Box::new(Self::build(points, l, offset)),
            right: Box::new(Self::build(points, r, offset + mid)),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points, closest first (the query point itself is
    /// included when it belongs to the cloud).
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.nearest_rec(&self.root, query, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort();
        out.into_iter().map(|n| n.index).collect()
    }

    fn nearest_rec(&self, node: &Node, q: &Vec3, k: usize, heap: &mut BinaryHeap<Neighbour>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let cand = Neighbour {
                        dist2: (self.points[i] - q).norm_squared(),
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
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, k, heap);
                let bound = heap.peek().map_or(f64::INFINITY, |n| n.dist2);
                // `<=` keeps equal-distance candidates with smaller indices reachable
                if heap.len() < k || diff * diff <= bound {
                    self.nearest_rec(far, q, k, heap);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), in ascending index order.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_rec(&self.root, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: &Node, q: &Vec3, r2: f64, out: &mut Vec<usize>) {
        match node {
            Node::Leaf { start, end } => out.extend(
                self.order[*start..*end]
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
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }
}
