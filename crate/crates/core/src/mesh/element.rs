//! First-order Lagrange elements: reference shapes, shape functions and
//! inverse isoparametric mapping.
//!
//! Reference spaces:
//! - `Tria3`: (r, s) with r, s >= 0, r + s <= 1
//! - `Quad4`: (xi, eta) in [-1, 1]^2
//! - `Tetra4`: (r, s, t) with all >= 0, r + s + t <= 1
//! - `Hexa8`: [-1, 1]^3
//! - `Penta6`: triangle (r, s) times zeta in [-1, 1]
//! - `Pyramid5`: collapsed hexahedron on [-1, 1]^3, apex at zeta = 1

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point3};

pub const MAX_NODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ElementType {
    Tria3,
    Quad4,
    Tetra4,
    Hexa8,
    Penta6,
    Pyramid5,
}

impl ElementType {
    pub const ALL: [ElementType; 6] = [
        ElementType::Tria3,
        ElementType::Quad4,
        ElementType::Tetra4,
        ElementType::Hexa8,
        ElementType::Penta6,
        ElementType::Pyramid5,
    ];

    pub fn num_nodes(self) -> usize {
        match self {
            ElementType::Tria3 => 3,
            ElementType::Quad4 => 4,
            ElementType::Tetra4 => 4,
            ElementType::Hexa8 => 8,
            ElementType::Penta6 => 6,
            ElementType::Pyramid5 => 5,
        }
    }

    pub fn dimension(self) -> usize {
        match self {
            ElementType::Tria3 | ElementType::Quad4 => 2,
            _ => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementType::Tria3 => "TRIA3",
            ElementType::Quad4 => "QUAD4",
            ElementType::Tetra4 => "TETRA4",
            ElementType::Hexa8 => "HEXA8",
            ElementType::Penta6 => "PENTA6",
            ElementType::Pyramid5 => "PYRAMID5",
        }
    }

    /// Reference coordinates of the element's vertices.
    pub fn reference_nodes(self) -> &'static [Point3] {
        match self {
            ElementType::Tria3 => &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            ElementType::Quad4 => &[
                [-1.0, -1.0, 0.0],
                [1.0, -1.0, 0.0],
                [1.0, 1.0, 0.0],
                [-1.0, 1.0, 0.0],
            ],
            ElementType::Tetra4 => &[
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
            ],
            ElementType::Hexa8 => &HEX_CORNERS,
            ElementType::Penta6 => &[
                [0.0, 0.0, -1.0],
                [1.0, 0.0, -1.0],
                [0.0, 1.0, -1.0],
                [0.0, 0.0, 1.0],
                [1.0, 0.0, 1.0],
                [0.0, 1.0, 1.0],
            ],
            ElementType::Pyramid5 => &[
                [-1.0, -1.0, -1.0],
                [1.0, -1.0, -1.0],
                [1.0, 1.0, -1.0],
                [-1.0, 1.0, -1.0],
                [0.0, 0.0, 1.0],
            ],
        }
    }

    /// Reference-space point at the element's barycenter.
    pub fn reference_center(self) -> Point3 {
        match self {
            ElementType::Tria3 => [1.0 / 3.0, 1.0 / 3.0, 0.0],
            ElementType::Tetra4 => [0.25, 0.25, 0.25],
            ElementType::Penta6 => [1.0 / 3.0, 1.0 / 3.0, 0.0],
            ElementType::Quad4 | ElementType::Hexa8 => [0.0; 3],
            // mean of the five vertices
            ElementType::Pyramid5 => [0.0, 0.0, -0.6],
        }
    }

    /// Whether `xi` lies inside the reference element, up to `tol`.
    pub fn contains_reference(self, xi: &Point3, tol: f64) -> bool {
        let box1 = |v: f64| v.abs() <= 1.0 + tol;
        match self {
            ElementType::Tria3 => xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol,
            ElementType::Tetra4 => {
                xi[0] >= -tol && xi[1] >= -tol && xi[2] >= -tol && xi[0] + xi[1] + xi[2] <= 1.0 + tol
            }
            ElementType::Quad4 => box1(xi[0]) && box1(xi[1]),
            ElementType::Hexa8 | ElementType::Pyramid5 => box1(xi[0]) && box1(xi[1]) && box1(xi[2]),
            ElementType::Penta6 => {
                xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1.0 + tol && box1(xi[2])
            }
        }
    }

    /// Local node tuples splitting the element into positively oriented tetrahedra.
    /// Empty for surface elements.
    pub fn tet_split(self) -> &'static [[usize; 4]] {
        match self {
            ElementType::Tetra4 => &[[0, 1, 2, 3]],
            ElementType::Hexa8 => &[
                [0, 1, 2, 6],
                [0, 2, 3, 6],
                [0, 3, 7, 6],
                [0, 7, 4, 6],
                [0, 4, 5, 6],
                [0, 5, 1, 6],
            ],
            ElementType::Penta6 => &[[0, 1, 2, 5], [0, 1, 5, 4], [0, 4, 5, 3]],
            ElementType::Pyramid5 => &[[0, 1, 2, 4], [0, 2, 3, 4]],
            ElementType::Tria3 | ElementType::Quad4 => &[],
        }
    }
}

const HEX_CORNERS: [Point3; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unsupported element type '{s}'"))
    }
}

/// Writes the shape function values at `xi` into `out[..n]`.
pub fn shape_values_into(etype: ElementType, xi: &Point3, out: &mut [f64]) {
    let [a, b, c] = *xi;
    match etype {
        ElementType::Tria3 => {
            out[0] = 1.0 - a - b;
            out[1] = a;
            out[2] = b;
        }
        ElementType::Tetra4 => {
            out[0] = 1.0 - a - b - c;
            out[1] = a;
            out[2] = b;
            out[3] = c;
        }
        ElementType::Quad4 => {
            for (i, r) in etype.reference_nodes().iter().enumerate() {
                out[i] = 0.25 * (1.0 + a * r[0]) * (1.0 + b * r[1]);
            }
        }
        ElementType::Hexa8 => {
            for (i, r) in HEX_CORNERS.iter().enumerate() {
                out[i] = 0.125 * (1.0 + a * r[0]) * (1.0 + b * r[1]) * (1.0 + c * r[2]);
            }
        }
        ElementType::Penta6 => {
            let tri = [1.0 - a - b, a, b];
            for i in 0..3 {
                out[i] = tri[i] * 0.5 * (1.0 - c);
                out[i + 3] = tri[i] * 0.5 * (1.0 + c);
            }
        }
        ElementType::Pyramid5 => {
            for (i, r) in etype.reference_nodes()[..4].iter().enumerate() {
                out[i] = 0.125 * (1.0 + a * r[0]) * (1.0 + b * r[1]) * (1.0 - c);
            }
            out[4] = 0.5 * (1.0 + c);
        }
    }
}

/// First-order Lagrange shape function values at reference point `xi`.
pub fn shape_values(etype: ElementType, xi: &Point3) -> Vec<f64> {
    let mut out = [0.0; MAX_NODES];
    shape_values_into(etype, xi, &mut out);
    out[..etype.num_nodes()].to_vec()
}

/// Reference-space gradients of the shape functions.
fn shape_gradients(etype: ElementType, xi: &Point3, out: &mut [Point3; MAX_NODES]) {
    let [a, b, c] = *xi;
    match etype {
        ElementType::Tria3 => {
            out[0] = [-1.0, -1.0, 0.0];
            out[1] = [1.0, 0.0, 0.0];
            out[2] = [0.0, 1.0, 0.0];
        }
        ElementType::Tetra4 => {
            out[0] = [-1.0, -1.0, -1.0];
            out[1] = [1.0, 0.0, 0.0];
            out[2] = [0.0, 1.0, 0.0];
            out[3] = [0.0, 0.0, 1.0];
        }
        ElementType::Quad4 => {
            for (i, r) in etype.reference_nodes().iter().enumerate() {
                out[i] = [
                    0.25 * r[0] * (1.0 + b * r[1]),
                    0.25 * r[1] * (1.0 + a * r[0]),
                    0.0,
                ];
            }
        }
        ElementType::Hexa8 => {
            for (i, r) in HEX_CORNERS.iter().enumerate() {
                let (fa, fb, fc) = (1.0 + a * r[0], 1.0 + b * r[1], 1.0 + c * r[2]);
                out[i] = [
                    0.125 * r[0] * fb * fc,
                    0.125 * r[1] * fa * fc,
                    0.125 * r[2] * fa * fb,
                ];
            }
        }
        ElementType::Penta6 => {
            let tri = [1.0 - a - b, a, b];
            let dtri = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            for i in 0..3 {
                let lo = 0.5 * (1.0 - c);
                let hi = 0.5 * (1.0 + c);
                out[i] = [dtri[i][0] * lo, dtri[i][1] * lo, -0.5 * tri[i]];
                out[i + 3] = [dtri[i][0] * hi, dtri[i][1] * hi, 0.5 * tri[i]];
            }
        }
        ElementType::Pyramid5 => {
            for (i, r) in etype.reference_nodes()[..4].iter().enumerate() {
                let (fa, fb, fc) = (1.0 + a * r[0], 1.0 + b * r[1], 1.0 - c);
                out[i] = [
                    0.125 * r[0] * fb * fc,
                    0.125 * r[1] * fa * fc,
                    -0.125 * fa * fb,
                ];
            }
            out[4] = [0.0, 0.0, 0.5];
        }
    }
}

/// Maps a reference point to physical space.
pub fn map_to_physical(etype: ElementType, coords: &[Point3], xi: &Point3) -> Point3 {
    let mut n = [0.0; MAX_NODES];
    shape_values_into(etype, xi, &mut n);
    let mut x = [0.0; 3];
    for (ni, c) in n.iter().zip(coords) {
        for k in 0..3 {
            x[k] += ni * c[k];
        }
    }
    x
}

/// Signed measure: volume for solids (negative when inverted), area for
/// surface elements (negative for a self-intersecting quad).
pub fn signed_measure(etype: ElementType, coords: &[Point3]) -> f64 {
    match etype {
        ElementType::Tria3 => {
            0.5 * geom::norm(&geom::cross(
                &geom::sub(&coords[1], &coords[0]),
                &geom::sub(&coords[2], &coords[0]),
            ))
        }
        ElementType::Quad4 => {
            let n1 = geom::cross(
                &geom::sub(&coords[1], &coords[0]),
                &geom::sub(&coords[2], &coords[0]),
            );
            let n2 = geom::cross(
                &geom::sub(&coords[2], &coords[0]),
                &geom::sub(&coords[3], &coords[0]),
            );
            let area = 0.5 * (geom::norm(&n1) + geom::norm(&n2));
            if geom::dot(&n1, &n2) < 0.0 {
                -area
            } else {
                area
            }
        }
        _ => etype
            .tet_split()
            .iter()
            .map(|t| geom::tet_volume(&coords[t[0]], &coords[t[1]], &coords[t[2]], &coords[t[3]]))
            .sum(),
    }
}

/// Barycentric coordinates of `p` in tetrahedron `t`, or None when degenerate.
pub fn tet_barycentric(t: [&Point3; 4], p: &Point3) -> Option<[f64; 4]> {
    let v = geom::tet_volume(t[0], t[1], t[2], t[3]);
    if v.abs() <= f64::MIN_POSITIVE {
        return None;
    }
    let l1 = geom::tet_volume(t[0], p, t[2], t[3]) / v;
    let l2 = geom::tet_volume(t[0], t[1], p, t[3]) / v;
    let l3 = geom::tet_volume(t[0], t[1], t[2], p) / v;
    Some([1.0 - l1 - l2 - l3, l1, l2, l3])
}

/// Barycentric coordinates of the projection of `p` onto triangle `t`, and the
/// distance from `p` to the triangle's plane.
fn tri_barycentric(t: [&Point3; 3], p: &Point3) -> Option<([f64; 3], f64)> {
    let e1 = geom::sub(t[1], t[0]);
    let e2 = geom::sub(t[2], t[0]);
    let d = geom::sub(p, t[0]);
    let (a11, a12, a22) = (geom::dot(&e1, &e1), geom::dot(&e1, &e2), geom::dot(&e2, &e2));
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= f64::MIN_POSITIVE || det <= 1e-14 * a11 * a22 {
        return None;
    }
    let (b1, b2) = (geom::dot(&d, &e1), geom::dot(&d, &e2));
    let r = (a22 * b1 - a12 * b2) / det;
    let s = (a11 * b2 - a12 * b1) / det;
    let proj = geom::add(t[0], &geom::add(&geom::scale(&e1, r), &geom::scale(&e2, s)));
    Some(([1.0 - r - s, r, s], geom::dist(&proj, p)))
}

/// Newton inversion limits.
pub const NEWTON_MAX_ITER: usize = 30;
pub const NEWTON_TOL: f64 = 1e-12;

/// Damped Newton (Gauss-Newton for surface elements) inversion of the
/// isoparametric map. Returns the reference point and the physical residual.
pub fn newton_invert(
    etype: ElementType,
    coords: &[Point3],
    p: &Point3,
    start: Point3,
) -> Option<(Point3, f64)> {
    let dim = etype.dimension();
    let mut xi = start;
    let residual = |xi: &Point3| geom::sub(p, &map_to_physical(etype, coords, xi));
    let mut r = residual(&xi);
    let mut rnorm = geom::norm(&r);
    let mut grads = [[0.0; 3]; MAX_NODES];
    for _ in 0..NEWTON_MAX_ITER {
        shape_gradients(etype, &xi, &mut grads);
        // jac[k][j] = d x_k / d xi_j
        let mut jac = nalgebra::Matrix3::<f64>::zeros();
        for (g, c) in grads.iter().zip(coords) {
            for k in 0..3 {
                for j in 0..dim {
                    jac[(k, j)] += c[k] * g[j];
                }
            }
        }
        let rv = nalgebra::Vector3::new(r[0], r[1], r[2]);
        let step = if dim == 3 {
            jac.lu().solve(&rv)?
        } else {
            let j2 = jac.fixed_view::<3, 2>(0, 0).into_owned();
            let normal = j2.transpose() * j2;
            let s = normal.lu().solve(&(j2.transpose() * rv))?;
            nalgebra::Vector3::new(s[0], s[1], 0.0)
        };
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let trial = [
                xi[0] + lambda * step[0],
                xi[1] + lambda * step[1],
                xi[2] + lambda * step[2],
            ];
            let rt = residual(&trial);
            let rtn = geom::norm(&rt);
            if rtn <= rnorm || lambda < 0.01 {
                xi = trial;
                r = rt;
                rnorm = rtn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return None;
        }
        if lambda * step.norm() < NEWTON_TOL {
            return Some((xi, rnorm));
        }
    }
    None
}

/// Reference coordinates of `p` if it lies inside the element (tolerance
/// `tol` in reference space); `size` scales the off-surface check.
pub fn locate_in_element(
    etype: ElementType,
    coords: &[Point3],
    p: &Point3,
    tol: f64,
    size: f64,
) -> Option<Point3> {
    match etype {
        ElementType::Tetra4 => {
            let l = tet_barycentric([&coords[0], &coords[1], &coords[2], &coords[3]], p)?;
            if l.iter().all(|&v| v >= -tol) {
                Some([l[1], l[2], l[3]])
            } else {
                None
            }
        }
        ElementType::Tria3 => {
            let (l, off) = tri_barycentric([&coords[0], &coords[1], &coords[2]], p)?;
            if off <= tol * size.max(f64::MIN_POSITIVE) && l.iter().all(|&v| v >= -tol) {
                Some([l[1], l[2], 0.0])
            } else {
                None
            }
        }
        ElementType::Hexa8 | ElementType::Quad4 => {
            let (xi, res) = newton_invert(etype, coords, p, etype.reference_center())?;
            if res <= tol * size.max(f64::MIN_POSITIVE) && etype.contains_reference(&xi, tol) {
                Some(xi)
            } else {
                None
            }
        }
        ElementType::Penta6 | ElementType::Pyramid5 => {
            let refs = etype.reference_nodes();
            for t in etype.tet_split() {
                let Some(l) = tet_barycentric(
                    [&coords[t[0]], &coords[t[1]], &coords[t[2]], &coords[t[3]]],
                    p,
                ) else {
                    continue;
                };
                if l.iter().all(|&v| v >= -tol) {
                    let mut guess = [0.0; 3];
                    for (lk, &node) in l.iter().zip(t) {
                        for k in 0..3 {
                            guess[k] += lk * refs[node][k];
                        }
                    }
                    // refine to the exact isoparametric preimage; keep the guess
                    // when Newton stalls near the collapsed apex
                    return Some(match newton_invert(etype, coords, p, guess) {
                        Some((xi, res))
                            if res <= 1e-10 * size.max(f64::MIN_POSITIVE)
                                && etype.contains_reference(&xi, 1e-6) =>
                        {
                            xi
                        }
                        _ => guess,
                    });
                }
            }
            None
        }
    }
}
