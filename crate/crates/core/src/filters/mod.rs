//! Filters and the numerical kernels behind them.
//!
//! Every pipeline node implements [`Filter`]. Planning runs once, in
//! topological order, and fixes the shape of every produced quantity; after
//! that `process` is called once per schedule entry.

pub mod aero;
pub mod conservative;
pub mod derivative;
pub mod interp;
pub mod stencil;
pub mod time_deriv;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::mesh::{Domain, EntityKind, FieldQuantity, FieldStep, Mesh, RegionValues};

pub use stencil::Stencil;

/// A quantity produced by a node together with the mesh it lives on.
#[derive(Debug, Clone)]
pub struct Stream {
    pub quantity: FieldQuantity,
    pub mesh: Arc<Mesh>,
}

/// Facts about the run that filters may check while planning.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext {
    pub num_entries: usize,
    pub domain: Domain,
}

pub trait Filter: Send {
    fn id(&self) -> &str;

    /// Schedule entries between consuming an input and emitting the matching output.
    fn latency(&self) -> usize {
        0
    }

    /// Checks the incoming streams and declares the produced ones.
    fn plan(&mut self, ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>>;

    /// Names of the input quantities this filter reads (valid after `plan`).
    fn consumes(&self) -> Vec<String>;

    /// Restricts produced quantities to those some consumer reads.
    fn set_demand(&mut self, _names: &[String]) {}

    /// Called once before the first entry.
    fn start(&mut self) -> Result<()> {
        Ok(())
    }

    /// Processes schedule entry `entry`. Quantities missing from `inputs`
    /// were not produced upstream for this entry; filters then emit nothing.
    fn process(&mut self, entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>>;
}

pub fn find_stream<'a>(inputs: &'a [Stream], name: &str) -> Result<&'a Stream> {
    inputs.iter().find(|s| s.quantity.name == name).ok_or_else(|| {
        let avail: Vec<&str> = inputs.iter().map(|s| s.quantity.name.as_str()).collect();
        Error::validation(format!(
            "input quantity '{name}' is not produced by the input filters (available: {})",
            if avail.is_empty() { "none".to_string() } else { avail.join(", ") }
        ))
    })
}

pub fn find_step<'a>(inputs: &'a [Arc<FieldStep>], name: &str) -> Option<&'a FieldStep> {
    inputs.iter().find(|s| s.quantity.name == name).map(|s| s.as_ref())
}

pub fn require_time_domain(id: &str, q: &FieldQuantity) -> Result<()> {
    if q.domain == Domain::Frequency {
        return Err(Error::validation(format!(
            "filter '{id}': quantity '{}' is frequency-domain data, which this filter does not support",
            q.name
        )));
    }
    Ok(())
}

pub fn require_kind(id: &str, q: &FieldQuantity, kind: EntityKind) -> Result<()> {
    if q.defined_on != kind {
        return Err(Error::validation(format!(
            "filter '{id}': quantity '{}' is defined on {:?} entities, expected {:?}",
            q.name, q.defined_on, kind
        )));
    }
    Ok(())
}

pub fn require_components(id: &str, q: &FieldQuantity, components: usize) -> Result<()> {
    if q.components != components {
        return Err(Error::validation(format!(
            "filter '{id}': quantity '{}' has {} components, expected {components}",
            q.name, q.components
        )));
    }
    Ok(())
}

/// Source regions: the requested ones (which the quantity must cover) or all
/// regions of the quantity.
pub fn resolve_source_regions(id: &str, q: &FieldQuantity, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(q.regions.clone());
    }
    for r in requested {
        if !q.regions.contains(r) {
            return Err(Error::validation(format!(
                "filter '{id}': source region '{r}' is not covered by quantity '{}' (regions: {})",
                q.name,
                q.regions.join(", ")
            )));
        }
    }
    Ok(requested.to_vec())
}

/// Target regions: the requested ones (which must exist) or all mesh regions.
pub fn resolve_target_regions(id: &str, mesh: &Mesh, requested: &[String]) -> Result<Vec<String>> {
    if requested.is_empty() {
        return Ok(mesh.region_names());
    }
    for r in requested {
        mesh.region_index(r)
            .map_err(|e| Error::validation(format!("filter '{id}': target {e}")))?;
    }
    Ok(requested.to_vec())
}

/// Source entities of a quantity over a set of regions, with nodes shared by
/// several regions taken once.
#[derive(Debug, Clone)]
pub struct SourceSet {
    pub points: Vec<Point3>,
    /// Per point: (position in `regions`, entity index in that region).
    picks: Vec<(usize, usize)>,
    regions: Vec<String>,
}

impl SourceSet {
    pub fn new(mesh: &Mesh, regions: &[String], kind: EntityKind) -> Result<Self> {
        let mut points = Vec::new();
        let mut picks = Vec::new();
        match kind {
            EntityKind::Node => {
                let mut first: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
                for (pos, name) in regions.iter().enumerate() {
                    for (local, &g) in mesh.region(name)?.nodes().iter().enumerate() {
                        first.entry(g).or_insert((pos, local));
                    }
                }
                for (g, pick) in first {
                    points.push(mesh.nodes()[g as usize]);
                    picks.push(pick);
                }
            }
            EntityKind::Cell => {
                for (pos, name) in regions.iter().enumerate() {
                    let region = mesh.region(name)?;
                    for (local, c) in mesh.region_centroids(region).into_iter().enumerate() {
                        points.push(c);
                        picks.push((pos, local));
                    }
                }
            }
        }
        Ok(SourceSet {
            points,
            picks,
            regions: regions.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Flattened values (`width` lanes per point) in point order.
    pub fn gather(&self, step: &FieldStep) -> Result<Vec<f64>> {
        let width = step.quantity.width();
        let arrays: Vec<&[f64]> = self
            .regions
            .iter()
            .map(|r| {
                step.region(r).ok_or_else(|| {
                    Error::Numeric(format!(
                        "quantity '{}' has no values on region '{r}'",
                        step.quantity.name
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.picks.len() * width);
        for &(pos, local) in &self.picks {
            out.extend_from_slice(&arrays[pos][local * width..(local + 1) * width]);
        }
        Ok(out)
    }
}

/// Target points per region.
pub fn target_points(mesh: &Mesh, regions: &[String], kind: EntityKind) -> Result<Vec<Vec<Point3>>> {
    regions
        .iter()
        .map(|r| Ok(mesh.entity_points(mesh.region(r)?, kind)))
        .collect()
}

/// Builds an output step from per-region arrays in `quantity.regions` order.
pub fn make_step(quantity: &FieldQuantity, like: &FieldStep, arrays: Vec<Vec<f64>>) -> FieldStep {
    FieldStep {
        quantity: quantity.clone(),
        step_index: like.step_index,
        step_value: like.step_value,
        values: quantity
            .regions
            .iter()
            .cloned()
            .zip(arrays)
            .map(|(region, data)| RegionValues { region, data })
            .collect(),
    }
}

/// Splits a flat per-point array into per-region arrays of the given lengths.
pub fn split_regions(flat: Vec<f64>, counts: &[usize], width: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(counts.len());
    let mut start = 0;
    for &c in counts {
        out.push(flat[start..start + c * width].to_vec());
        start += c * width;
    }
    out
}

/// Shared `singleResult` / `regions` / `targetMesh` configuration.
#[derive(Debug, Clone, Default)]
pub struct Binding {
    pub input: String,
    pub output: String,
    pub source_regions: Vec<String>,
    pub target_regions: Vec<String>,
    pub target_mesh: Option<Arc<Mesh>>,
}

impl Binding {
    pub fn target_or<'a>(&'a self, source: &'a Arc<Mesh>) -> &'a Arc<Mesh> {
        self.target_mesh.as_ref().unwrap_or(source)
    }
}

/// Unique target points over several regions plus, per region, the position
/// of each region entity in the unique list.
#[derive(Debug, Clone)]
pub struct TargetSet {
    pub points: Vec<Point3>,
    pub per_region: Vec<Vec<usize>>,
}

impl TargetSet {
    pub fn new(mesh: &Mesh, regions: &[String], kind: EntityKind) -> Result<Self> {
        let mut points = Vec::new();
        let mut per_region = Vec::with_capacity(regions.len());
        match kind {
            EntityKind::Node => {
                let mut all: Vec<u32> = Vec::new();
                for r in regions {
                    all.extend_from_slice(mesh.region(r)?.nodes());
                }
                all.sort_unstable();
                all.dedup();
                points = all.iter().map(|&g| mesh.nodes()[g as usize]).collect();
                for r in regions {
                    per_region.push(
                        mesh.region(r)?
                            .nodes()
                            .iter()
                            .map(|g| all.binary_search(g).expect("collected"))
                            .collect(),
                    );
                }
            }
            EntityKind::Cell => {
                for r in regions {
                    let c = mesh.region_centroids(mesh.region(r)?);
                    per_region.push((points.len()..points.len() + c.len()).collect());
                    points.extend(c);
                }
            }
        }
        Ok(TargetSet { points, per_region })
    }

    /// Scatters a per-point array (`width` lanes) into per-region arrays.
    pub fn scatter(&self, flat: &[f64], width: usize) -> Vec<Vec<f64>> {
        self.per_region
            .iter()
            .map(|idx| {
                let mut out = Vec::with_capacity(idx.len() * width);
                for &i in idx {
                    out.extend_from_slice(&flat[i * width..(i + 1) * width]);
                }
                out
            })
            .collect()
    }
}
