//! Conservative source integration onto first-order nodal FEM loads.
//!
//! Both variants reduce to per-source-cell coefficient lists
//! `(target node, V * N_i)`, so a step is one sparse accumulation.

use std::sync::Arc;

use rayon::prelude::*;

use super::{
    find_step, find_stream, make_step, require_kind, resolve_source_regions,
    resolve_target_regions, Binding, Filter, PlanContext, Stream,
};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Point3};
use crate::mesh::element::{locate_in_element, shape_values};
use crate::mesh::{ElementType, EntityKind, FieldQuantity, FieldStep, Locator, Mesh};
use crate::spatial::BoxIndex;

/// Relative tolerance of the axis-alignment check.
pub const AXIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConservativeMethod {
    CellCentroid,
    CutCell,
}

impl ConservativeMethod {
    pub fn type_name(self) -> &'static str {
        match self {
            ConservativeMethod::CellCentroid => "FieldInterpolation_Conservative_CellCentroid",
            ConservativeMethod::CutCell => "FieldInterpolation_Conservative_CutCell",
        }
    }
}

/// Per source cell: its measure, the captured measure and its load coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellCoefficients {
    pub measure: f64,
    pub captured: f64,
    pub entries: Vec<(u32, f64)>,
}

/// Assembled loads over all target mesh nodes plus the uncaptured part.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsLoad {
    pub width: usize,
    pub loads: Vec<f64>,
    pub source_integral: Vec<f64>,
    pub lost_integral: Vec<f64>,
    pub lost_cells: usize,
}

/// Source cells over `regions` in (region, element) order.
fn source_cells(mesh: &Mesh, regions: &[String]) -> Result<Vec<(ElementType, Vec<Point3>)>> {
    let mut out = Vec::new();
    for name in regions {
        for (etype, conn) in mesh.region(name)?.elements() {
            out.push((etype, mesh.element_coords(conn)));
        }
    }
    Ok(out)
}

fn checked_measure(etype: ElementType, coords: &[Point3], what: &str) -> Result<f64> {
    let v = crate::mesh::element::signed_measure(etype, coords);
    if v <= 0.0 {
        return Err(Error::Mesh(format!("{what} is inverted or degenerate (measure {v:e})")));
    }
    Ok(v)
}

pub fn centroid_coefficients(
    source: &Mesh,
    source_regions: &[String],
    target: &Mesh,
    target_regions: &[String],
) -> Result<Vec<CellCoefficients>> {
    let locator = Locator::new(target, target_regions)?;
    let cells = source_cells(source, source_regions)?;
    cells
        .par_iter()
        .enumerate()
        .map(|(c, (etype, coords))| {
            let measure = checked_measure(*etype, coords, &format!("source cell {c}"))?;
            let n = coords.len() as f64;
            let mut x = [0.0; 3];
            for p in coords {
                for k in 0..3 {
                    x[k] += p[k] / n;
                }
            }
            let Some(loc) = locator.locate(&x) else {
                return Ok(CellCoefficients {
                    measure,
                    ..Default::default()
                });
            };
            let region = &target.regions()[locator.region_index(loc.region)];
            let (tt, conn) = region.element(loc.elem).expect("located element");
            let n_i = shape_values(tt, &loc.local);
            Ok(CellCoefficients {
                measure,
                captured: measure,
                entries: conn.iter().zip(n_i).map(|(&g, w)| (g, measure * w)).collect(),
            })
        })
        .collect()
}

/// Bounding box of an axis-aligned HEXA8 element, or `None` if it is not one.
pub fn axis_aligned_box(etype: ElementType, coords: &[Point3]) -> Option<Aabb> {
    if etype != ElementType::Hexa8 {
        return None;
    }
    let b = Aabb::from_points(coords);
    let tol = AXIS_TOL * b.diagonal();
    if (0..3).any(|k| b.max[k] - b.min[k] <= tol) {
        return None;
    }
    let mut corners = Vec::with_capacity(8);
    for p in coords {
        let mut bits = 0u8;
        for k in 0..3 {
            if (p[k] - b.max[k]).abs() <= tol {
                bits |= 1 << k;
            } else if (p[k] - b.min[k]).abs() > tol {
                return None;
            }
        }
        if corners.contains(&bits) {
            return None;
        }
        corners.push(bits);
    }
    Some(b)
}

/// Axis-aligned hexahedron: bounding box, corner coordinates, connectivity.
type BoxCell = (Aabb, Vec<Point3>, Vec<u32>);

fn require_boxes(mesh: &Mesh, regions: &[String], side: &str) -> Result<Vec<BoxCell>> {
    let mut out = Vec::new();
    for name in regions {
        for (e, (etype, conn)) in mesh.region(name)?.elements().enumerate() {
            let coords = mesh.element_coords(conn);
            let b = axis_aligned_box(etype, &coords).ok_or_else(|| {
                Error::Numeric(format!(
                    "cut-cell supports axis-aligned hexahedral meshes ({side} region '{name}', element {e})"
                ))
            })?;
            out.push((b, coords, conn.to_vec()));
        }
    }
    Ok(out)
}

pub fn cutcell_coefficients(
    source: &Mesh,
    source_regions: &[String],
    target: &Mesh,
    target_regions: &[String],
) -> Result<Vec<CellCoefficients>> {
    let sources = require_boxes(source, source_regions, "source")?;
    let targets = require_boxes(target, target_regions, "target")?;
    let index = BoxIndex::new(targets.iter().map(|t| t.0).collect());
    sources
        .par_iter()
        .map(|(sb, _, _)| {
            let measure = sb.volume();
            let mut coef = CellCoefficients {
                measure,
                ..Default::default()
            };
            for e in index.overlapping(sb) {
                let (tb, tcoords, tconn) = &targets[e];
                let Some(cut) = sb.intersection(tb) else { continue };
                let v = cut.volume();
                if !(v > 0.0) {
                    continue;
                }
                let xi = locate_in_element(ElementType::Hexa8, tcoords, &cut.center(), 1e-8, tb.diagonal())
                    .ok_or_else(|| Error::Numeric("cut-cell: intersection center not inside its target element".into()))?;
                coef.captured += v;
                for (&g, w) in tconn.iter().zip(shape_values(ElementType::Hexa8, &xi)) {
                    coef.entries.push((g, v * w));
                }
            }
            Ok(coef)
        })
        .collect()
}

/// Applies coefficient lists to per-cell values (`width` lanes, cell order).
pub fn assemble(coefs: &[CellCoefficients], values: &[f64], width: usize, num_nodes: usize) -> RhsLoad {
    let mut loads = vec![0.0; num_nodes * width];
    let mut source_integral = vec![0.0; width];
    let mut lost_integral = vec![0.0; width];
    let mut lost_cells = 0;
    for (c, coef) in coefs.iter().enumerate() {
        let f = &values[c * width..(c + 1) * width];
        for &(g, w) in &coef.entries {
            let g = g as usize;
            for (l, fv) in loads[g * width..(g + 1) * width].iter_mut().zip(f) {
                *l += fv * w;
            }
        }
        let missing = coef.measure - coef.captured;
        if missing > 1e-12 * coef.measure {
            lost_cells += 1;
        }
        for k in 0..width {
            source_integral[k] += f[k] * coef.measure;
            lost_integral[k] += f[k] * missing;
        }
    }
    RhsLoad {
        width,
        loads,
        source_integral,
        lost_integral,
        lost_cells,
    }
}

/// Cell values over `regions` concatenated in region order.
fn gather_cells(step: &FieldStep, regions: &[String]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in regions {
        out.extend_from_slice(step.region(r).ok_or_else(|| {
            Error::Numeric(format!("quantity '{}' has no values on region '{r}'", step.quantity.name))
        })?);
    }
    Ok(out)
}

#[derive(Debug)]
struct Planned {
    source_mesh: Arc<Mesh>,
    source_regions: Vec<String>,
    target_mesh: Arc<Mesh>,
    output: FieldQuantity,
}

/// Pipeline node for both conservative variants.
#[derive(Debug)]
pub struct ConservativeFilter {
    id: String,
    method: ConservativeMethod,
    binding: Binding,
    planned: Option<Planned>,
    coefs: Option<Vec<CellCoefficients>>,
}

impl ConservativeFilter {
    pub fn new(id: impl Into<String>, method: ConservativeMethod, binding: Binding) -> Self {
        ConservativeFilter {
            id: id.into(),
            method,
            binding,
            planned: None,
            coefs: None,
        }
    }
}

impl Filter for ConservativeFilter {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, _ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        let src = find_stream(inputs, &self.binding.input)?;
        require_kind(&self.id, &src.quantity, EntityKind::Cell)?;
        let source_regions = resolve_source_regions(&self.id, &src.quantity, &self.binding.source_regions)?;
        let target_mesh = self.binding.target_or(&src.mesh).clone();
        let target_regions = resolve_target_regions(&self.id, &target_mesh, &self.binding.target_regions)?;
        for r in &target_regions {
            if target_mesh.region(r)?.num_elements() == 0 {
                return Err(Error::validation(format!("filter '{}': target region '{r}' is empty", self.id)));
            }
        }
        let mut output = src.quantity.with_name(&self.binding.output);
        output.defined_on = EntityKind::Node;
        output.regions = target_regions;
        self.planned = Some(Planned {
            source_mesh: src.mesh.clone(),
            source_regions,
            target_mesh: target_mesh.clone(),
            output: output.clone(),
        });
        self.coefs = None;
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
        if self.coefs.is_none() {
            let built = match self.method {
                ConservativeMethod::CellCentroid => {
                    centroid_coefficients(&p.source_mesh, &p.source_regions, &p.target_mesh, &p.output.regions)
                }
                ConservativeMethod::CutCell => {
                    cutcell_coefficients(&p.source_mesh, &p.source_regions, &p.target_mesh, &p.output.regions)
                }
            }
            .map_err(|e| e.in_filter(&self.id))?;
            self.coefs = Some(built);
        }
        let width = step.quantity.width();
        let values = gather_cells(step, &p.source_regions)?;
        let rhs = assemble(self.coefs.as_ref().expect("built"), &values, width, p.target_mesh.num_nodes());
        if rhs.lost_cells > 0 {
            let total: f64 = rhs.source_integral.iter().map(|v| v.abs()).sum();
            let lost: f64 = rhs.lost_integral.iter().map(|v| v.abs()).sum();
            let pct = if total > 0.0 { 100.0 * lost / total } else { 100.0 };
            log::warn!(
                "filter '{}': step {}: {} source cells not fully inside the target, lost integral {:?} ({pct:.3}% of source integral outside target)",
                self.id,
                step.step_index,
                rhs.lost_cells,
                rhs.lost_integral
            );
        }
        let arrays = p
            .output
            .regions
            .iter()
            .map(|r| {
                let region = p.target_mesh.region(r)?;
                let mut out = Vec::with_capacity(region.nodes().len() * width);
                for &g in region.nodes() {
                    let g = g as usize;
                    out.extend_from_slice(&rhs.loads[g * width..(g + 1) * width]);
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(vec![make_step(&p.output, step, arrays)])
    }
}
