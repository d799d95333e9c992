use crate::geom::Point3;

/// Sparse linear weights mapping source samples to one target value.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl Stencil {
    pub fn copy(index: usize) -> Self {
        Stencil {
            indices: vec![index],
            weights: vec![1.0],
        }
    }

    /// Applies the weights to `width` interleaved lanes of `values`.
    pub fn apply_into(&self, values: &[f64], width: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&i, &w) in self.indices.iter().zip(&self.weights) {
            let src = &values[i * width..(i + 1) * width];
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }
}

/// Applies one stencil per target and scales the result.
pub fn apply_stencils(stencils: &[Stencil], values: &[f64], width: usize, factor: f64) -> Vec<f64> {
    let mut out = vec![0.0; stencils.len() * width];
    for (s, chunk) in stencils.iter().zip(out.chunks_mut(width.max(1))) {
        s.apply_into(values, width, chunk);
        if factor != 1.0 {
            chunk.iter_mut().for_each(|v| *v *= factor);
        }
    }
    out
}

/// Bounding-box diagonal of a point cloud.
pub fn cloud_diameter(points: &[Point3]) -> f64 {
    crate::geom::Aabb::from_points(points).diagonal()
}
