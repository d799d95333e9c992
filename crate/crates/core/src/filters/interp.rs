//! Node2Cell, Cell2Node, nearest-neighbour (Shepard) and RBF interpolation.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::stencil::{apply_stencils, cloud_diameter, Stencil};
use super::{
    find_step, find_stream, make_step, require_kind, resolve_source_regions,
    resolve_target_regions, target_points, Binding, Filter, PlanContext, SourceSet, Stream,
};
use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::linalg::solve_regularized;
use crate::mesh::{EntityKind, FieldQuantity, FieldStep, Mesh};
use crate::spatial::PointIndex;

/// Relative distance (to the source cloud diameter) below which a target is
/// treated as coinciding with a source point.
pub const COINCIDENT_TOL: f64 = 1e-12;

/// Geometry tolerance for the same-mesh requirement of Node2Cell / Cell2Node.
pub const SAME_GEOMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ShepardParams {
    pub exponent: f64,
    pub num_neighbours: usize,
    pub global_factor: f64,
}

impl Default for ShepardParams {
    fn default() -> Self {
        ShepardParams {
            exponent: 2.0,
            num_neighbours: 8,
            global_factor: 1.0,
        }
    }
}

impl ShepardParams {
    pub fn check(&self, id: &str) -> Result<()> {
        if self.num_neighbours == 0 {
            return Err(Error::validation(format!("filter '{id}': numNeighbours must be at least 1")));
        }
        if !self.exponent.is_finite() || !self.global_factor.is_finite() {
            return Err(Error::validation(format!(
                "filter '{id}': interpolationExponent and globalFactor must be finite"
            )));
        }
        if !(1.0..=3.0).contains(&self.exponent) {
            log::warn!(
                "filter '{id}': interpolationExponent {} is outside the usual range 1..3",
                self.exponent
            );
        }
        Ok(())
    }
}

/// Inverse-distance weight `((R - r) / (R r))^p`.
pub fn shepard_weight(r: f64, r_big: f64, p: f64) -> f64 {
    ((r_big - r) / (r_big * r)).powf(p)
}

/// Normalized Shepard weights for one target from its sorted neighbour list.
pub fn shepard_stencil(neighbours: &[(usize, f64)], p: f64, coincident: f64) -> Stencil {
    let (nearest, d0) = neighbours[0];
    if d0 < coincident {
        return Stencil::copy(nearest);
    }
    let r_max = neighbours.last().expect("non-empty").1;
    let r_big = 1.01 * r_max;
    let raw: Vec<f64> = neighbours.iter().map(|&(_, r)| shepard_weight(r, r_big, p)).collect();
    debug_assert!(raw.iter().all(|&w| w > 0.0));
    let sum: f64 = raw.iter().sum();
    Stencil {
        indices: neighbours.iter().map(|&(i, _)| i).collect(),
        weights: raw.iter().map(|w| w / sum).collect(),
    }
}

pub fn shepard_stencils(index: &PointIndex, targets: &[Point3], params: &ShepardParams) -> Result<Vec<Stencil>> {
    if index.is_empty() {
        return Err(Error::Numeric("Shepard interpolation: empty source region".into()));
    }
    let n = params.num_neighbours.min(index.len());
    let tol = COINCIDENT_TOL * cloud_diameter(index.points());
    targets
        .par_iter()
        .map(|t| Ok(shepard_stencil(&index.knn(t, n)?, params.exponent, tol)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbfParams {
    pub num_neighbours: usize,
    pub num_neighbours_weight: usize,
    pub exponent: f64,
    pub global_factor: f64,
    pub use_elem_as_target: bool,
    pub no_slip_wall: Option<String>,
}

impl Default for RbfParams {
    fn default() -> Self {
        RbfParams {
            num_neighbours: 18,
            num_neighbours_weight: 13,
            exponent: 2.0,
            global_factor: 1.0,
            use_elem_as_target: false,
            no_slip_wall: None,
        }
    }
}

impl RbfParams {
    pub fn check(&self, id: &str) -> Result<()> {
        if self.num_neighbours == 0 || self.num_neighbours_weight == 0 {
            return Err(Error::validation(format!(
                "filter '{id}': numNeighbours and numNeighbours_weight must be at least 1"
            )));
        }
        if self.num_neighbours_weight > self.num_neighbours {
            return Err(Error::validation(format!(
                "filter '{id}': numNeighbours_weight ({}) exceeds numNeighbours ({})",
                self.num_neighbours_weight, self.num_neighbours
            )));
        }
        if !self.exponent.is_finite() || !self.global_factor.is_finite() {
            return Err(Error::validation(format!(
                "filter '{id}': interpolation exponent and globalFactor must be finite"
            )));
        }
        Ok(())
    }
}

/// Wendland C2 kernel on the normalized distance `r / delta`.
pub fn wendland_c2(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let a = 1.0 - s;
        a * a * a * a * (4.0 * s + 1.0)
    }
}

/// Axes along which a point set has extent, relative to `scale`.
pub(crate) fn active_axes(points: &[Point3], center: &Point3, scale: f64) -> Vec<usize> {
    (0..3)
        .filter(|&k| {
            points
                .iter()
                .any(|p| ((p[k] - center[k]) / scale).abs() > 1e-9)
        })
        .collect()
}

/// Weights of the local Wendland interpolant around `center` evaluated at `t`.
fn local_rbf_weights(
    points: &[Point3],
    center: &Point3,
    stencil: &[(usize, f64)],
    t: &Point3,
) -> Option<Vec<f64>> {
    let n = stencil.len();
    let delta = 1.05 * stencil.last().expect("non-empty").1;
    if !(delta > 0.0) {
        return Some((0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect());
    }
    let xs: Vec<Point3> = stencil.iter().map(|&(i, _)| points[i]).collect();
    let axes = active_axes(&xs, center, delta);
    let m = 1 + axes.len();
    let size = n + m;
    let mut a = DMatrix::zeros(size, size);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = wendland_c2(geom::dist(&xs[i], &xs[j]) / delta);
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        for (c, &k) in axes.iter().enumerate() {
            let v = (xs[i][k] - center[k]) / delta;
            a[(i, n + 1 + c)] = v;
            a[(n + 1 + c, i)] = v;
        }
    }
    let mut rhs = DMatrix::zeros(size, 1);
    for j in 0..n {
        rhs[(j, 0)] = wendland_c2(geom::dist(t, &xs[j]) / delta);
    }
    rhs[(n, 0)] = 1.0;
    for (c, &k) in axes.iter().enumerate() {
        rhs[(n + 1 + c, 0)] = (t[k] - center[k]) / delta;
    }
    let y = solve_regularized(&a, n, &rhs)?;
    Some((0..n).map(|j| y[(j, 0)]).collect())
}

/// Modified-Shepard blend of local Wendland interpolants for one target.
pub fn rbf_stencil(index: &PointIndex, t: &Point3, params: &RbfParams, coincident: f64) -> Result<Stencil> {
    let points = index.points();
    let nq = params.num_neighbours.min(points.len());
    let nw = params.num_neighbours_weight.min(nq);
    let centers = index.knn(t, nw)?;
    if centers[0].1 < coincident {
        return Ok(Stencil::copy(centers[0].0));
    }
    let r_big = 1.01 * centers.last().expect("non-empty").1;
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    let mut wsum = 0.0;
    for &(c, d) in &centers {
        let w = shepard_weight(d, r_big, params.exponent);
        let local = index.knn(&points[c], nq)?;
        let lw = local_rbf_weights(points, &points[c], &local, t).ok_or_else(|| {
            Error::Numeric(format!(
                "RBF interpolation: singular local system for target ({}, {}, {})",
                t[0], t[1], t[2]
            ))
        })?;
        for (&(i, _), v) in local.iter().zip(lw) {
            *acc.entry(i).or_insert(0.0) += w * v;
        }
        wsum += w;
    }
    let (indices, weights) = acc.into_iter().map(|(i, v)| (i, v / wsum)).unzip();
    Ok(Stencil { indices, weights })
}

pub fn rbf_stencils(index: &PointIndex, targets: &[Point3], params: &RbfParams) -> Result<Vec<Stencil>> {
    if index.is_empty() {
        return Err(Error::Numeric("RBF interpolation: empty source region".into()));
    }
    let tol = COINCIDENT_TOL * cloud_diameter(index.points());
    targets
        .par_iter()
        .map(|t| rbf_stencil(index, t, params, tol))
        .collect()
}

/// Global node values over `regions` (`width` lanes) and a coverage mask.
fn global_node_values(mesh: &Mesh, regions: &[String], step: &FieldStep) -> Result<(Vec<f64>, Vec<bool>)> {
    let width = step.quantity.width();
    let mut values = vec![0.0; mesh.num_nodes() * width];
    let mut covered = vec![false; mesh.num_nodes()];
    for name in regions {
        let data = step
            .region(name)
            .ok_or_else(|| Error::Numeric(format!("no values on region '{name}'")))?;
        for (local, &g) in mesh.region(name)?.nodes().iter().enumerate() {
            let g = g as usize;
            if !covered[g] {
                values[g * width..(g + 1) * width].copy_from_slice(&data[local * width..(local + 1) * width]);
                covered[g] = true;
            }
        }
    }
    Ok((values, covered))
}

/// Sums nodal values onto cells: `e = sum_i v_i` (per lane).
pub fn node_to_cell(
    source: &Mesh,
    source_regions: &[String],
    step: &FieldStep,
    target: &Mesh,
    target_regions: &[String],
) -> Result<Vec<Vec<f64>>> {
    let width = step.quantity.width();
    let (values, covered) = global_node_values(source, source_regions, step)?;
    target_regions
        .iter()
        .map(|name| {
            let region = target.region(name)?;
            let mut out = vec![0.0; region.num_elements() * width];
            for (e, (_, conn)) in region.elements().enumerate() {
                let cell = &mut out[e * width..(e + 1) * width];
                for &n in conn {
                    let n = n as usize;
                    if !covered[n] {
                        return Err(Error::Numeric(format!(
                            "node {n} of element {e} in target region '{name}' is not part of the source regions"
                        )));
                    }
                    for (c, v) in cell.iter_mut().zip(&values[n * width..(n + 1) * width]) {
                        *c += v;
                    }
                }
            }
            Ok(out)
        })
        .collect()
}

/// Distributes cell loads onto nodes: each node accumulates `e_c / n_c` over
/// the source cells containing it, in ascending (region, element) order.
pub fn cell_to_node(
    source: &Mesh,
    source_regions: &[String],
    step: &FieldStep,
    target: &Mesh,
    target_regions: &[String],
) -> Result<Vec<Vec<f64>>> {
    let width = step.quantity.width();
    let mut acc = vec![0.0; source.num_nodes() * width];
    for name in source_regions {
        let region = source.region(name)?;
        let data = step
            .region(name)
            .ok_or_else(|| Error::Numeric(format!("no values on region '{name}'")))?;
        for (e, (etype, conn)) in region.elements().enumerate() {
            let n_c = etype.num_nodes() as f64;
            let cell = &data[e * width..(e + 1) * width];
            for &n in conn {
                let n = n as usize;
                for (a, v) in acc[n * width..(n + 1) * width].iter_mut().zip(cell) {
                    *a += v / n_c;
                }
            }
        }
    }
    target_regions
        .iter()
        .map(|name| {
            let region = target.region(name)?;
            let mut out = Vec::with_capacity(region.nodes().len() * width);
            for &g in region.nodes() {
                let g = g as usize;
                out.extend_from_slice(&acc[g * width..(g + 1) * width]);
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InterpMethod {
    Node2Cell,
    Cell2Node,
    NearestNeighbour(ShepardParams),
    Rbf(RbfParams),
}

impl InterpMethod {
    pub fn type_name(&self) -> &'static str {
        match self {
            InterpMethod::Node2Cell => "FieldInterpolation_Node2Cell",
            InterpMethod::Cell2Node => "FieldInterpolation_Cell2Node",
            InterpMethod::NearestNeighbour(_) => "FieldInterpolation_NearestNeighbour",
            InterpMethod::Rbf(_) => "FieldInterpolation_RBF",
        }
    }
}

#[derive(Debug)]
struct Planned {
    source_mesh: Arc<Mesh>,
    target_mesh: Arc<Mesh>,
    source_regions: Vec<String>,
    output: FieldQuantity,
}

/// Pipeline node for the four interpolation methods.
#[derive(Debug)]
pub struct InterpFilter {
    id: String,
    method: InterpMethod,
    binding: Binding,
    planned: Option<Planned>,
    /// Per target region: one stencil per target entity (point-based methods).
    stencils: Option<(SourceSet, Vec<Vec<Stencil>>)>,
    /// Per target region: local entity positions forced to zero.
    wall_mask: Vec<Vec<usize>>,
}

impl InterpFilter {
    pub fn new(id: impl Into<String>, method: InterpMethod, binding: Binding) -> Self {
        InterpFilter {
            id: id.into(),
            method,
            binding,
            planned: None,
            stencils: None,
            wall_mask: Vec::new(),
        }
    }

    fn output_kind(&self, input: EntityKind) -> EntityKind {
        match &self.method {
            InterpMethod::Node2Cell => EntityKind::Cell,
            InterpMethod::Cell2Node => EntityKind::Node,
            InterpMethod::NearestNeighbour(_) => input,
            InterpMethod::Rbf(p) => {
                if p.use_elem_as_target {
                    EntityKind::Cell
                } else {
                    EntityKind::Node
                }
            }
        }
    }

    fn build_stencils(&self, p: &Planned, input_kind: EntityKind) -> Result<(SourceSet, Vec<Vec<Stencil>>)> {
        let sources = SourceSet::new(&p.source_mesh, &p.source_regions, input_kind)?;
        if sources.is_empty() {
            return Err(Error::filter(&self.id, "empty source region"));
        }
        let index = PointIndex::new(sources.points.clone());
        let targets = target_points(&p.target_mesh, &p.output.regions, p.output.defined_on)?;
        let stencils = targets
            .iter()
            .map(|t| match &self.method {
                InterpMethod::NearestNeighbour(params) => shepard_stencils(&index, t, params),
                InterpMethod::Rbf(params) => rbf_stencils(&index, t, params),
                _ => unreachable!("mesh-based methods use no stencils"),
            })
            .collect::<Result<_>>()?;
        Ok((sources, stencils))
    }
}

impl Filter for InterpFilter {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, _ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        let id = self.id.clone();
        let src = find_stream(inputs, &self.binding.input)?;
        let q = &src.quantity;
        match &self.method {
            InterpMethod::Node2Cell => require_kind(&id, q, EntityKind::Node)?,
            InterpMethod::Cell2Node => require_kind(&id, q, EntityKind::Cell)?,
            InterpMethod::NearestNeighbour(p) => p.check(&id)?,
            InterpMethod::Rbf(p) => {
                p.check(&id)?;
                if q.defined_on == EntityKind::Cell && !p.use_elem_as_target {
                    return Err(Error::validation(format!(
                        "filter '{id}': element-based data can only be interpolated to cell centroids (set useElemAsTarget)"
                    )));
                }
            }
        }
        let source_regions = resolve_source_regions(&id, q, &self.binding.source_regions)?;
        let target_mesh = self.binding.target_or(&src.mesh).clone();
        if matches!(self.method, InterpMethod::Node2Cell | InterpMethod::Cell2Node) {
            if let Some(t) = &self.binding.target_mesh {
                if Arc::ptr_eq(t, &src.mesh) {
                    return Err(Error::validation(format!(
                        "filter '{id}': the target mesh must be a separate file from the source data"
                    )));
                }
                if !t.same_geometry(&src.mesh, SAME_GEOMETRY_TOL) {
                    return Err(Error::validation(format!(
                        "filter '{id}': target mesh geometry differs from the source mesh"
                    )));
                }
            }
        }
        let target_regions = resolve_target_regions(&id, &target_mesh, &self.binding.target_regions)?;
        self.wall_mask.clear();
        if let InterpMethod::Rbf(p) = &self.method {
            if let Some(wall) = &p.no_slip_wall {
                let wall_nodes: HashSet<u32> = target_mesh
                    .region(wall)
                    .map_err(|e| Error::validation(format!("filter '{id}': noSlipWall {e}")))?
                    .nodes()
                    .iter()
                    .copied()
                    .collect();
                if p.use_elem_as_target {
                    log::warn!("filter '{id}': noSlipWall ignored for element targets");
                } else {
                    for r in &target_regions {
                        let region = target_mesh.region(r)?;
                        self.wall_mask.push(
                            region
                                .nodes()
                                .iter()
                                .enumerate()
                                .filter(|(_, g)| wall_nodes.contains(g))
                                .map(|(i, _)| i)
                                .collect(),
                        );
                    }
                }
            }
        }
        let mut output = q.with_name(&self.binding.output);
        output.defined_on = self.output_kind(q.defined_on);
        output.regions = target_regions;
        self.planned = Some(Planned {
            source_mesh: src.mesh.clone(),
            target_mesh: target_mesh.clone(),
            source_regions,
            output: output.clone(),
        });
        self.stencils = None;
        Ok(vec![Stream {
            quantity: output,
            mesh: target_mesh,
        }])
    }

    fn consumes(&self) -> Vec<String> {
        vec![self.binding.input.clone()]
    }

    fn process(&mut self, _entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let Some(step) = find_step(inputs, &self.binding.input) else {
            return Ok(Vec::new());
        };
        let p = self.planned.as_ref().expect("planned");
        let width = step.quantity.width();
        let arrays = match &self.method {
            InterpMethod::Node2Cell => {
                node_to_cell(&p.source_mesh, &p.source_regions, step, &p.target_mesh, &p.output.regions)?
            }
            InterpMethod::Cell2Node => {
                cell_to_node(&p.source_mesh, &p.source_regions, step, &p.target_mesh, &p.output.regions)?
            }
            InterpMethod::NearestNeighbour(_) | InterpMethod::Rbf(_) => {
                if self.stencils.is_none() {
                    let built = self
                        .build_stencils(p, step.quantity.defined_on)
                        .map_err(|e| e.in_filter(&self.id))?;
                    self.stencils = Some(built);
                }
                let factor = match &self.method {
                    InterpMethod::NearestNeighbour(s) => s.global_factor,
                    InterpMethod::Rbf(r) => r.global_factor,
                    _ => 1.0,
                };
                let (sources, stencils) = self.stencils.as_ref().expect("built");
                let values = sources.gather(step)?;
                let mut arrays: Vec<Vec<f64>> = stencils
                    .iter()
                    .map(|s| apply_stencils(s, &values, width, factor))
                    .collect();
                for (arr, mask) in arrays.iter_mut().zip(&self.wall_mask) {
                    for &i in mask {
                        arr[i * width..(i + 1) * width].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
                arrays
            }
        };
        Ok(vec![make_step(&p.output, step, arrays)])
    }
}
