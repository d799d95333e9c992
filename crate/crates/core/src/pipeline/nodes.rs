//! `meshInput` and `meshOutput` pipeline nodes.

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use super::schedule::ScheduleEntry;
use super::xml::OutputSpec;
use crate::error::{Error, Result};
use crate::filters::{find_stream, Filter, PlanContext, Stream};
use crate::io::{InputData, NativeWriter};
use crate::mesh::{Domain, EntityKind, FieldQuantity, FieldStep, Mesh};

const GEOMETRY_TOL: f64 = 1e-12;

/// Reads the scheduled steps of one dataset.
#[derive(Debug)]
pub struct MeshInput {
    id: String,
    data: InputData,
    mesh: Arc<Mesh>,
    schedule: Vec<ScheduleEntry>,
    quantities: Vec<FieldQuantity>,
}

impl MeshInput {
    pub fn new(id: impl Into<String>, data: InputData, mesh: Arc<Mesh>, schedule: Vec<ScheduleEntry>) -> Self {
        let quantities = data.manifest.field_quantities();
        MeshInput {
            id: id.into(),
            data,
            mesh,
            schedule,
            quantities,
        }
    }
}

impl Filter for MeshInput {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, _ctx: &PlanContext, _inputs: &[Stream]) -> Result<Vec<Stream>> {
        Ok(self
            .quantities
            .iter()
            .map(|q| Stream {
                quantity: q.clone(),
                mesh: self.mesh.clone(),
            })
            .collect())
    }

    fn consumes(&self) -> Vec<String> {
        Vec::new()
    }

    fn set_demand(&mut self, names: &[String]) {
        self.quantities.retain(|q| names.contains(&q.name));
    }

    fn process(&mut self, entry: usize, _inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let sched = self.schedule[entry];
        let manifest = &self.data.manifest;
        let step_index = manifest.steps[sched.position].index;
        let source = &self.data.steps;
        let present: Vec<&FieldQuantity> = self
            .quantities
            .iter()
            .filter(|q| {
                let has = manifest.quantity(&q.name).is_some_and(|e| e.steps.contains(&step_index));
                if !has {
                    log::debug!("input '{}': '{}' has no step {step_index}", self.id, q.name);
                }
                has
            })
            .collect();
        present
            .par_iter()
            .map(|q| {
                let mut step = source.read_step(&q.name, step_index)?;
                step.step_index = entry;
                step.step_value = sched.output_value;
                Ok(step)
            })
            .collect()
    }
}

/// One resolved `<result>` of a `meshOutput`.
#[derive(Debug, Clone)]
struct Selected {
    quantity: FieldQuantity,
    /// Positions of the written regions inside the incoming step.
    region_pos: Vec<usize>,
}

/// Expected component count and entity kind for reserved result names.
pub fn reserved_shape(name: &str) -> Option<(usize, Option<EntityKind>)> {
    Some(match name {
        "acouPressure" | "acouPotential" | "fluidMechPressure" | "fluidMechDensity" => (1, None),
        "acouVelocity" | "acoutIntensity" | "fluidMechVelocity" | "meanFluidMechVelocity" | "fluidMechVorticity"
        | "fluidMechGradPressure" => (3, None),
        "acouRhsLoad" | "acouRhsLoadP" | "vortexRhsLoad" | "acouDivLighthillTensor" => (1, Some(EntityKind::Node)),
        _ => return None,
    })
}

fn check_reserved(id: &str, q: &FieldQuantity) {
    if let Some((comps, kind)) = reserved_shape(&q.name) {
        if q.components != comps {
            log::warn!(
                "meshOutput '{id}': '{}' is expected to have {comps} component(s) but has {}",
                q.name,
                q.components
            );
        }
        if let Some(k) = kind {
            if q.defined_on != k {
                log::warn!(
                    "meshOutput '{id}': '{}' is expected on {k:?} entities but is defined on {:?}",
                    q.name,
                    q.defined_on
                );
            }
        }
    }
}

/// Writes selected results to a native container.
#[derive(Debug)]
pub struct MeshOutput {
    id: String,
    spec: OutputSpec,
    domain: Domain,
    num_entries: usize,
    selected: Vec<Selected>,
    mesh: Option<Arc<Mesh>>,
    writer: Option<NativeWriter>,
    last_entry: Option<usize>,
}

impl MeshOutput {
    pub fn new(id: impl Into<String>, spec: OutputSpec) -> Self {
        MeshOutput {
            id: id.into(),
            spec,
            domain: Domain::Time,
            num_entries: 0,
            selected: Vec::new(),
            mesh: None,
            writer: None,
            last_entry: None,
        }
    }

    pub fn path(&self) -> &PathBuf {
        &self.spec.path
    }
}

impl Filter for MeshOutput {
    fn id(&self) -> &str {
        &self.id
    }

    fn plan(&mut self, ctx: &PlanContext, inputs: &[Stream]) -> Result<Vec<Stream>> {
        let id = self.id.clone();
        self.domain = ctx.domain;
        self.num_entries = ctx.num_entries;
        let requests: Vec<(String, Option<Vec<String>>)> = match &self.spec.results {
            None => inputs.iter().map(|s| (s.quantity.name.clone(), None)).collect(),
            Some(list) => list.iter().map(|r| (r.name.clone(), r.regions.clone())).collect(),
        };
        if requests.is_empty() {
            return Err(Error::validation(format!("meshOutput '{id}': nothing to save")));
        }
        let mut seen = HashSet::new();
        let mut selected = Vec::new();
        let mut mesh: Option<Arc<Mesh>> = None;
        for (name, regions) in requests {
            if !seen.insert(name.clone()) {
                return Err(Error::validation(format!("meshOutput '{id}': result '{name}' is listed twice")));
            }
            let stream = find_stream(inputs, &name).map_err(|e| match e {
                Error::Validation(m) => Error::validation(format!("meshOutput '{id}': {m}")),
                other => other,
            })?;
            let q = &stream.quantity;
            let regions = regions.unwrap_or_else(|| q.regions.clone());
            let mut region_pos = Vec::with_capacity(regions.len());
            for r in &regions {
                let p = q.regions.iter().position(|x| x == r).ok_or_else(|| {
                    Error::validation(format!(
                        "meshOutput '{id}': result '{name}' is not defined on region '{r}' (regions: {})",
                        q.regions.join(", ")
                    ))
                })?;
                region_pos.push(p);
            }
            match &mesh {
                None => mesh = Some(stream.mesh.clone()),
                Some(m) => {
                    let same = Arc::ptr_eq(m, &stream.mesh)
                        || (m.same_geometry(&stream.mesh, GEOMETRY_TOL) && m.region_names() == stream.mesh.region_names());
                    if !same {
                        return Err(Error::validation(format!(
                            "meshOutput '{id}': result '{name}' lives on a different mesh than the other saved results"
                        )));
                    }
                }
            }
            let mut out = q.clone();
            out.regions = regions;
            check_reserved(&id, &out);
            selected.push(Selected {
                quantity: out,
                region_pos,
            });
        }
        self.selected = selected;
        self.mesh = mesh;
        Ok(Vec::new())
    }

    fn consumes(&self) -> Vec<String> {
        self.selected.iter().map(|s| s.quantity.name.clone()).collect()
    }

    fn start(&mut self) -> Result<()> {
        let mesh = self.mesh.as_ref().expect("planned");
        let mut w = NativeWriter::create(&self.spec.path, mesh, self.domain)?;
        for s in &self.selected {
            w.add_quantity(&s.quantity, mesh)?;
        }
        self.writer = Some(w);
        self.last_entry = None;
        Ok(())
    }

    fn process(&mut self, entry: usize, inputs: &[Arc<FieldStep>]) -> Result<Vec<FieldStep>> {
        let writer = self.writer.as_mut().expect("started");
        let mut written = 0;
        for s in &self.selected {
            let Some(step) = inputs.iter().find(|x| x.quantity.name == s.quantity.name) else {
                continue;
            };
            if self.last_entry != Some(entry) {
                writer.add_step(entry, step.step_value)?;
                self.last_entry = Some(entry);
            }
            let out = FieldStep {
                quantity: s.quantity.clone(),
                step_index: entry,
                step_value: step.step_value,
                values: s.region_pos.iter().map(|&p| step.values[p].clone()).collect(),
            };
            writer.write_step(&out)?;
            written += 1;
        }
        if written > 0 {
            log::info!(
                "meshOutput '{}': step {}/{} written ({written} result(s))",
                self.id,
                entry + 1,
                self.num_entries
            );
        }
        Ok(Vec::new())
    }
}
