use crate::geom::{Aabb, Point3};

/// Uniform-grid bucketing of axis-aligned boxes.
///
/// Each box is registered in every grid cell it overlaps (after inflating by
/// `pad`), so point and box queries return a superset of the true hits.
#[derive(Debug, Clone)]
pub struct BoxIndex {
    boxes: Vec<Aabb>,
    bounds: Aabb,
    dims: [usize; 3],
    cell: [f64; 3],
    /// CSR buckets: `start[c]..start[c + 1]` indexes into `items`.
    start: Vec<u32>,
    items: Vec<u32>,
    pad: f64,
}

impl BoxIndex {
    pub fn new(boxes: Vec<Aabb>) -> Self {
        let mut bounds = Aabb::empty();
        for b in &boxes {
            if !b.is_empty() {
                bounds.grow(&b.min);
                bounds.grow(&b.max);
            }
        }
        let pad = 1e-8 * bounds.diagonal().max(f64::MIN_POSITIVE);
        if boxes.is_empty() || bounds.is_empty() {
            return BoxIndex {
                boxes,
                bounds,
                dims: [1; 3],
                cell: [1.0; 3],
                start: vec![0, 0],
                items: Vec::new(),
                pad,
            };
        }
        for k in 0..3 {
            bounds.min[k] -= pad;
            bounds.max[k] += pad;
        }
        let ext: Vec<f64> = (0..3).map(|k| bounds.max[k] - bounds.min[k]).collect();
        let per_axis = (boxes.len() as f64).cbrt().ceil().max(1.0);
        let h = ext.iter().cloned().fold(0.0, f64::max) / per_axis;
        let mut dims = [1usize; 3];
        let mut cell = [1.0; 3];
        for k in 0..3 {
            dims[k] = ((ext[k] / h).ceil() as usize).clamp(1, 256);
            cell[k] = ext[k] / dims[k] as f64;
        }
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncells + 1];
        let mut idx = BoxIndex {
            boxes,
            bounds,
            dims,
            cell,
            start: Vec::new(),
            items: Vec::new(),
            pad,
        };
        for b in &idx.boxes {
            idx.for_cells(b, |c| counts[c + 1] += 1);
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[ncells] as usize];
        for (i, b) in idx.boxes.iter().enumerate() {
            idx.for_cells(b, |c| {
                items[fill[c] as usize] = i as u32;
                fill[c] += 1;
            });
        }
        idx.start = counts;
        idx.items = items;
        idx
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn boxes(&self) -> &[Aabb] {
        &self.boxes
    }

    fn cell_range(&self, lo: f64, hi: f64, k: usize) -> (usize, usize) {
        let a = ((lo - self.bounds.min[k]) / self.cell[k]).floor();
        let b = ((hi - self.bounds.min[k]) / self.cell[k]).floor();
        let clamp = |v: f64| (v.max(0.0) as usize).min(self.dims[k] - 1);
        (clamp(a), clamp(b))
    }

    fn for_cells(&self, b: &Aabb, mut f: impl FnMut(usize)) {
        if b.is_empty() {
            return;
        }
        let r: Vec<(usize, usize)> = (0..3)
            .map(|k| self.cell_range(b.min[k] - self.pad, b.max[k] + self.pad, k))
            .collect();
        for i in r[0].0..=r[0].1 {
            for j in r[1].0..=r[1].1 {
                for l in r[2].0..=r[2].1 {
                    f((l * self.dims[1] + j) * self.dims[0] + i);
                }
            }
        }
    }

    /// Boxes possibly containing `p`, ascending by box index.
    pub fn candidates(&self, p: &Point3) -> Vec<usize> {
        if self.items.is_empty() || !self.bounds.contains(p, 0.0) {
            return Vec::new();
        }
        let mut c = 0;
        for k in (0..3).rev() {
            let (i, _) = self.cell_range(p[k], p[k], k);
            c = c * self.dims[k] + i;
        }
        let mut out: Vec<usize> = self.items[self.start[c] as usize..self.start[c + 1] as usize]
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| self.boxes[i].contains(p, self.pad))
            .collect();
        out.sort_unstable();
        out
    }

    /// Boxes overlapping `query` (touching within the padding counts), ascending.
    pub fn overlapping(&self, query: &Aabb) -> Vec<usize> {
        if self.items.is_empty() || query.is_empty() {
            return Vec::new();
        }
        let Some(clipped) = query.intersection(&self.bounds) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        self.for_cells(&clipped, |c| {
            for &i in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
                out.push(i as usize);
            }
        });
        out.sort_unstable();
        out.dedup();
        out.retain(|&i| {
            let b = &self.boxes[i];
            (0..3).all(|k| b.min[k] <= query.max[k] + self.pad && b.max[k] >= query.min[k] - self.pad)
        });
        out
    }
}
