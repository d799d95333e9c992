use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::{self, Point3};

const LEAF_SIZE: usize = 8;

/// Exact k-nearest-neighbour index over a snapshot of 3D points.
///
/// Implicit balanced k-d tree: the permutation `order` is arranged so that each
/// range `[lo, hi)` larger than a leaf is split at `mid = (lo + hi) / 2` along
/// `axis[mid]`, with smaller coordinates left of `mid`.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    index: u32,
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
        self.d2
            .total_cmp(&other.d2)
            .then(self.index.cmp(&other.index))
    }
}

impl PointIndex {
    pub fn new(points: Vec<Point3>) -> Self {
        let n = points.len();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut axis = vec![0u8; n];
        build(&points, &mut order, &mut axis, 0, n);
        PointIndex {
            points,
            order,
            axis,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` nearest points to `p` as `(index, distance)`, ascending by
    /// distance, ties broken by the lower point index.
    pub fn knn(&self, p: &Point3, k: usize) -> Result<Vec<(usize, f64)>> {
        if k == 0 {
            return Err(Error::validation("knn: k must be at least 1"));
        }
        if k > self.points.len() {
            return Err(Error::validation(format!(
                "knn: requested {k} neighbours but only {} points are available",
                self.points.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(p, k, 0, self.points.len(), &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok(out
            .into_iter()
            .map(|c| (c.index as usize, c.d2.sqrt()))
            .collect())
    }

    fn offer(&self, p: &Point3, k: usize, i: u32, heap: &mut BinaryHeap<Candidate>) {
        let c = Candidate {
            d2: geom::dist2(p, &self.points[i as usize]),
            index: i,
        };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().unwrap() {
            heap.pop();
            heap.push(c);
        }
    }

    fn search(&self, p: &Point3, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<Candidate>) {
        if hi - lo <= LEAF_SIZE {
            for &i in &self.order[lo..hi] {
                self.offer(p, k, i, heap);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let ax = self.axis[mid] as usize;
        let pivot = self.order[mid];
        let diff = p[ax] - self.points[pivot as usize][ax];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(p, k, near.0, near.1, heap);
        self.offer(p, k, pivot, heap);
        // `<=` keeps equal-distance candidates with lower indices reachable
        if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
            self.search(p, k, far.0, far.1, heap);
        }
    }
}

fn build(points: &[Point3], order: &mut [u32], axis: &mut [u8], lo: usize, hi: usize) {
    if hi - lo <= LEAF_SIZE {
        return;
    }
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for &i in &order[lo..hi] {
        let q = &points[i as usize];
        for k in 0..3 {
            min[k] = min[k].min(q[k]);
            max[k] = max[k].max(q[k]);
        }
    }
    let ax = (0..3)
        .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
        .unwrap();
    let mid = (lo + hi) / 2;
    order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
        points[a as usize][ax]
            .total_cmp(&points[b as usize][ax])
            .then(a.cmp(&b))
    });
    axis[mid] = ax as u8;
    build(points, order, axis, lo, mid);
    build(points, order, axis, mid + 1, hi);
}
