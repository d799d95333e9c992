//! Aeroacoustic source terms for incompressible flow: Lamb vector
//! `L = w x u`, Lighthill source vector `grad(u.u / 2) + L` and its divergence.

use std::sync::Arc;

use super::derivative::{DerivativeOperator, PointGeometry, RbfFdSettings};
use super::{
    find_step, find_stream, make_step, require_components, require_time_domain, Binding, Filter,
    PlanContext, SourceSet, Stream, TargetSet,
};
use crate::error::{Error, Result};
use crate::geom;
use crate::mesh::{FieldQuantity, FieldStep};
use crate::spatial::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeroKind {
    LambVector,
    LighthillSourceTerm,
    LighthillSourceTermVector,
}

impl AeroKind {
    pub fn type_name(self) -> &'static str {
        match self {
            AeroKind::LambVector => "AeroacousticSource_LambVector",
            AeroKind::LighthillSourceTerm => "AeroacousticSource_LighthillSourceTerm",
            AeroKind::LighthillSourceTermVector => "AeroacousticSource_LighthillSourceTermVector",
        }
    }
}

/// `ResultList` bindings of an aeroacoustic filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowInputs {
    pub velocity: String,
    pub vorticity: Option<String>,
    pub density: Option<String>,
    pub output: String,
}

fn cross_rows(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.chunks_exact(3)
        .zip(b.chunks_exact(3))
        .flat_map(|(w, u)| geom::cross(&[w[0], w[1], w[2]], &[u[0], u[1], u[2]]))
        .collect()
}

/// Lamb vector at the operator's targets from source samples of `u` and,
/// optionally, of the vorticity.
pub fn lamb_vector(op: &DerivativeOperator, u: &[f64], omega: Option<&[f64]>) -> Vec<f64> {
    let u_t = op.value(u, 3);
    let w_t = match omega {
        Some(w) => op.value(w, 3),
        None => op.curl(u),
    };
    cross_rows(&w_t, &u_t)
}

/// `grad(u.u / 2) + L` at the operator's targets.
pub fn lighthill_vector(op: &DerivativeOperator, u: &[f64], omega: Option<&[f64]>) -> Vec<f64> {
    let ke: Vec<f64> = u.chunks_exact(3).map(|v| 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).collect();
    let grad = op.gradient(&ke);
    let lamb = lamb_vector(op, u, omega);
    grad.iter().zip(&lamb).map(|(g, l)| g + l).collect()
}

struct Cache {
    sources: SourceSet,
    targets: TargetSet,
    op: DerivativeOperator,
    /// Divergence over the target points themselves (scalar source term only).
    second: Option<DerivativeOperator>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cache").field("targets", &self.targets.points.len()).finish()
    }
}

/// Pipeline node for the three aeroacoustic source terms.
#[derive(Debug)]
pub struct AeroFilter {
    id: String,
    kind: AeroKind,
    settings: RbfFdSettings,
    flow: FlowInputs,
    binding: Binding,
    geometry: Option<PointGeometry>,
    output: Option<FieldQuantity>,
    cache: Option<Cache>,
}

impl AeroFilter {
    /// `binding.input` / `binding.output` are ignored in favour of `flow`.
    pub fn new(id: impl Into<String>, kind: AeroKind, settings: RbfFdSettings, flow: FlowInputs, binding: Binding) -> Self {
        AeroFilter {
            id: id.into(),
            kind,
            settings,
            flow,
            binding,
            geometry: None,
            output: None,
            cache: None,
        }
    }

    fn build_cache(&self) -> Result<Cache> {
        let g = self.geometry.as_ref().expect("planned");
        let sources = g.sources()?;
        let targets = g.targets()?;
        let index = PointIndex::new(sources.points.clone());
        let dim = g.dimension();
        let op = DerivativeOperator::new(&index, &targets.points, &self.settings, dim)?;
        let second = if self.kind == AeroKind::LighthillSourceTerm {
            let tindex = PointIndex::new(targets.points.clone());
            Some(DerivativeOperator::new(&tindex, &targets.points, &self.settings, dim)?)
        } else {
            None
        };
        Ok(Cache {
            sources,
            targets,
            op,
            second,
        })
    }
}

impl Filter for AeroFilter {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, _ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        let id = self.id.clone();
        self.settings.check(&id)?;
        let u = find_stream(inputs, &self.flow.velocity)?;
        require_time_domain(&id, &u.quantity)?;
        require_components(&id, &u.quantity, 3)?;
        if let Some(w) = &self.flow.vorticity {
            let w = find_stream(inputs, w)?;
            require_time_domain(&id, &w.quantity)?;
            require_components(&id, &w.quantity, 3)?;
            if w.quantity.defined_on != u.quantity.defined_on || !Arc::ptr_eq(&w.mesh, &u.mesh) {
                return Err(Error::validation(format!(
                    "filter '{id}': vorticity must live on the same mesh entities as the velocity"
                )));
            }
        }
        if self.flow.density.is_some() {
            log::warn!("filter '{id}': density is not used by the incompressible source terms");
        }
        let geometry = PointGeometry::plan(&id, &self.binding, u)?;
        if let Some(w) = &self.flow.vorticity {
            let wq = &find_stream(inputs, w)?.quantity;
            super::resolve_source_regions(&id, wq, &geometry.source_regions)?;
        }
        let mut output = u.quantity.with_name(&self.flow.output);
        output.components = if self.kind == AeroKind::LighthillSourceTerm { 1 } else { 3 };
        output.regions = geometry.target_regions.clone();
        let mesh = geometry.target_mesh.clone();
        self.geometry = Some(geometry);
        self.output = Some(output.clone());
        self.cache = None;
        Ok(vec![Stream { quantity: output, mesh }])
    }

    fn consumes(&self) -> Vec<String> {
        let mut v = vec![self.flow.velocity.clone()];
        v.extend(self.flow.vorticity.clone());
        v
    }

    fn process(&mut self, _entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let Some(u_step) = find_step(inputs, &self.flow.velocity) else {
            return Ok(Vec::new());
        };
        let w_step = match &self.flow.vorticity {
            Some(name) => match find_step(inputs, name) {
                Some(s) => Some(s),
                None => return Ok(Vec::new()),
            },
            None => None,
        };
        if self.cache.is_none() {
            self.cache = Some(self.build_cache().map_err(|e| e.in_filter(&self.id))?);
        }
        let c = self.cache.as_ref().expect("built");
        let u = c.sources.gather(u_step)?;
        let w = w_step.map(|s| c.sources.gather(s)).transpose()?;
        let (flat, width) = match self.kind {
            AeroKind::LambVector => (lamb_vector(&c.op, &u, w.as_deref()), 3),
            AeroKind::LighthillSourceTermVector => (lighthill_vector(&c.op, &u, w.as_deref()), 3),
            AeroKind::LighthillSourceTerm => {
                let v = lighthill_vector(&c.op, &u, w.as_deref());
                (c.second.as_ref().expect("scalar operator").divergence(&v), 1)
            }
        };
        let output = self.output.as_ref().expect("planned");
        Ok(vec![make_step(output, u_step, c.targets.scatter(&flat, width))])
    }
}
