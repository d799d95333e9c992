//! Pipeline construction and execution.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::graph::{build_graph, Graph};
use super::nodes::{MeshInput, MeshOutput};
use super::schedule::{resolve_schedule, ScheduleEntry};
use super::xml::{parse_pipeline, BindingSpec, InputSource, NodeKind, PipelineDoc};
use crate::error::{Error, Result};
use crate::filters::aero::AeroFilter;
use crate::filters::conservative::ConservativeFilter;
use crate::filters::derivative::DiffFilter;
use crate::filters::interp::InterpFilter;
use crate::filters::time_deriv::TimeDerivFilter;
use crate::filters::{Binding, Filter, PlanContext, Stream};
use crate::io::{self, InputData};
use crate::mesh::{Domain, FieldStep, Mesh};

/// One `process` call of the executor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub tick: usize,
    pub node: String,
    pub entry: usize,
    /// Number of steps the node emitted.
    pub emitted: usize,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub entries: usize,
    pub ticks: usize,
    pub outputs: Vec<PathBuf>,
    /// Names of the saved quantities, over all outputs.
    pub quantities: Vec<String>,
    pub trace: Vec<TraceEvent>,
    pub elapsed: Duration,
}

/// Meshes shared between nodes, keyed by file path.
#[derive(Default)]
struct MeshCache {
    meshes: HashMap<PathBuf, Arc<Mesh>>,
}

fn path_key(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

impl MeshCache {
    fn insert(&mut self, path: &Path, mesh: Mesh) -> Arc<Mesh> {
        self.meshes.entry(path_key(path)).or_insert_with(|| Arc::new(mesh)).clone()
    }

    fn get(&mut self, path: &Path) -> Result<Arc<Mesh>> {
        let key = path_key(path);
        if let Some(m) = self.meshes.get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(io::load_mesh(path)?);
        self.meshes.insert(key, m.clone());
        Ok(m)
    }
}

/// A checked pipeline ready to run.
pub struct Pipeline {
    ids: Vec<String>,
    graph: Graph,
    filters: Vec<Box<dyn Filter>>,
    is_input: Vec<bool>,
    pred_lag: Vec<usize>,
    lag: Vec<usize>,
    num_entries: usize,
    schedule: Vec<ScheduleEntry>,
    outputs: Vec<PathBuf>,
    streams: Vec<Vec<Stream>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("nodes", &self.ids)
            .field("entries", &self.num_entries)
            .field("outputs", &self.outputs)
            .finish()
    }
}

fn open_input(src: &InputSource) -> Result<InputData> {
    match src {
        InputSource::Native(p) => io::read_native(p),
        InputSource::Ensight {
            path,
            variables,
            fix_fv_pyramids,
        } => io::read_ensight(path, variables, *fix_fv_pyramids),
    }
}

fn binding(spec: &BindingSpec, cache: &mut MeshCache) -> Result<Binding> {
    Ok(Binding {
        input: spec.input.clone(),
        output: spec.output.clone(),
        source_regions: spec.source_regions.clone(),
        target_regions: spec.target_regions.clone(),
        target_mesh: spec.target_mesh.as_deref().map(|p| cache.get(p)).transpose()?,
    })
}

fn with_id(e: Error, id: &str) -> Error {
    match e {
        Error::Validation(m) if !m.contains(&format!("'{id}'")) => Error::validation(format!("filter '{id}': {m}")),
        other => other.in_filter(id),
    }
}

impl Pipeline {
    /// Reads and plans the pipeline document at `path`.
    pub fn load(path: &Path) -> Result<Pipeline> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Pipeline::from_str(&text, &base)
    }

    /// Plans a pipeline given as text; relative paths resolve against `base_dir`.
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Pipeline> {
        let doc = parse_pipeline(text, base_dir)?;
        Pipeline::from_doc(doc)
    }

    pub fn from_doc(doc: PipelineDoc) -> Result<Pipeline> {
        let graph = build_graph(&doc.nodes)?;
        let n = doc.nodes.len();
        let num_entries = doc.steps.num_steps;
        let mut cache = MeshCache::default();

        // Inputs first so target meshes naming an input file share its mesh.
        let mut filters: Vec<Option<Box<dyn Filter>>> = (0..n).map(|_| None).collect();
        let mut domain: Option<Domain> = None;
        let mut schedule = Vec::new();
        let mut input_paths = Vec::new();
        for (i, node) in doc.nodes.iter().enumerate() {
            let NodeKind::Input(src) = &node.kind else { continue };
            let data = open_input(src)?;
            let sched = resolve_schedule(&doc.steps, &data.manifest.steps.iter().map(|s| s.value).collect::<Vec<_>>())
                .map_err(|e| with_id(e, &node.id))?;
            match domain {
                None => domain = Some(data.manifest.analysis),
                Some(d) if d != data.manifest.analysis => {
                    return Err(Error::validation(format!(
                        "meshInput '{}' holds {:?} data while another input holds {d:?} data",
                        node.id, data.manifest.analysis
                    )))
                }
                Some(_) => {}
            }
            if schedule.is_empty() {
                schedule = sched.clone();
            }
            let mesh = cache.insert(src.path(), data.mesh.clone());
            input_paths.push(path_key(src.path()));
            filters[i] = Some(Box::new(MeshInput::new(&node.id, data, mesh, sched)));
        }
        let domain = domain.expect("graph has an input");

        let mut outputs: Vec<PathBuf> = Vec::new();
        for (i, node) in doc.nodes.iter().enumerate() {
            let id = node.id.as_str();
            let f: Box<dyn Filter> = match &node.kind {
                NodeKind::Input(_) => continue,
                NodeKind::Output(spec) => {
                    let key = path_key(&spec.path);
                    if input_paths.contains(&key) {
                        return Err(Error::validation(format!(
                            "meshOutput '{id}' would overwrite the input {}",
                            spec.path.display()
                        )));
                    }
                    if outputs.iter().any(|o| path_key(o) == key) {
                        return Err(Error::validation(format!(
                            "meshOutput '{id}' writes to {} which another meshOutput also writes",
                            spec.path.display()
                        )));
                    }
                    outputs.push(spec.path.clone());
                    Box::new(MeshOutput::new(id, spec.clone()))
                }
                NodeKind::Interp(m, b) => Box::new(InterpFilter::new(id, m.clone(), binding(b, &mut cache)?)),
                NodeKind::Conservative(m, b) => Box::new(ConservativeFilter::new(id, *m, binding(b, &mut cache)?)),
                NodeKind::Diff(op, s, b) => Box::new(DiffFilter::new(id, *op, s.clone(), binding(b, &mut cache)?)),
                NodeKind::Aero(kind, s, flow, b) => {
                    Box::new(AeroFilter::new(id, *kind, s.clone(), flow.clone(), binding(b, &mut cache)?))
                }
                NodeKind::TimeDeriv { input, output } => Box::new(TimeDerivFilter::new(id, input, output)),
            };
            filters[i] = Some(f);
        }
        let mut filters: Vec<Box<dyn Filter>> = filters.into_iter().map(|f| f.expect("every node built")).collect();
        let ids: Vec<String> = doc.nodes.iter().map(|n| n.id.clone()).collect();

        // Plan in topological order.
        let ctx = PlanContext { num_entries, domain };
        let mut streams: Vec<Vec<Stream>> = vec![Vec::new(); n];
        for &i in &graph.order {
            let mut inputs: Vec<Stream> = Vec::new();
            let mut owner: HashMap<String, usize> = HashMap::new();
            for &p in &graph.preds[i] {
                for s in &streams[p] {
                    if let Some(&other) = owner.get(&s.quantity.name) {
                        return Err(Error::validation(format!(
                            "filter '{}': quantity '{}' is produced by both '{}' and '{}'",
                            ids[i], s.quantity.name, ids[other], ids[p]
                        )));
                    }
                    owner.insert(s.quantity.name.clone(), p);
                    inputs.push(s.clone());
                }
            }
            streams[i] = filters[i].plan(&ctx, &inputs).map_err(|e| with_id(e, &ids[i]))?;
            let mut seen = std::collections::HashSet::new();
            for s in &streams[i] {
                if !seen.insert(s.quantity.name.clone()) {
                    return Err(Error::validation(format!(
                        "filter '{}' produces '{}' twice",
                        ids[i], s.quantity.name
                    )));
                }
            }
        }

        // Restrict every node to what its consumers read.
        for &i in graph.order.iter().rev() {
            let mut wanted: Vec<String> = Vec::new();
            for &s in &graph.succs[i] {
                for name in filters[s].consumes() {
                    if streams[i].iter().any(|st| st.quantity.name == name) && !wanted.contains(&name) {
                        wanted.push(name);
                    }
                }
            }
            if !graph.succs[i].is_empty() && wanted.is_empty() {
                log::warn!("no consumer reads any result of filter '{}'", ids[i]);
            }
            filters[i].set_demand(&wanted);
        }

        let mut pred_lag = vec![0; n];
        let mut lag = vec![0; n];
        for &i in &graph.order {
            pred_lag[i] = graph.preds[i].iter().map(|&p| lag[p]).max().unwrap_or(0);
            lag[i] = pred_lag[i] + filters[i].latency();
        }
        let is_input = doc.nodes.iter().map(|n| n.kind.is_input()).collect();
        Ok(Pipeline {
            ids,
            graph,
            filters,
            is_input,
            pred_lag,
            lag,
            num_entries,
            schedule,
            outputs,
            streams,
        })
    }

    pub fn num_entries(&self) -> usize {
        self.num_entries
    }

    pub fn schedule(&self) -> &[ScheduleEntry] {
        &self.schedule
    }

    pub fn outputs(&self) -> &[PathBuf] {
        &self.outputs
    }

    /// Node ids in execution order.
    pub fn execution_order(&self) -> Vec<&str> {
        self.graph.order.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    /// Entry lag of the node's outputs relative to the input.
    pub fn lag(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id).map(|i| self.lag[i])
    }

    /// Quantities produced by node `id` as planned.
    pub fn produced(&self, id: &str) -> Option<&[Stream]> {
        self.ids.iter().position(|x| x == id).map(|i| self.streams[i].as_slice())
    }

    /// Runs the pipeline on a pool of `threads` workers (`None`: all cores).
    pub fn run(&mut self, threads: Option<usize>) -> Result<RunSummary> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?;
        pool.install(|| self.execute())
    }

    fn execute(&mut self) -> Result<RunSummary> {
        let started = Instant::now();
        let n = self.ids.len();
        for i in 0..n {
            self.filters[i].start().map_err(|e| with_id(e, &self.ids[i]))?;
        }
        let max_lag = self.lag.iter().copied().max().unwrap_or(0);
        let ticks = self.num_entries + max_lag;
        let mut history: Vec<BTreeMap<usize, Vec<Arc<FieldStep>>>> = vec![BTreeMap::new(); n];
        let mut trace = Vec::new();
        for tick in 0..ticks {
            for &i in &self.graph.order {
                let Some(entry) = tick.checked_sub(self.pred_lag[i]) else { continue };
                if entry >= self.num_entries {
                    continue;
                }
                let inputs: Vec<Arc<FieldStep>> = self.graph.preds[i]
                    .iter()
                    .filter_map(|&p| history[p].get(&entry))
                    .flatten()
                    .cloned()
                    .collect();
                let id = &self.ids[i];
                let out = self.filters[i].process(entry, &inputs).map_err(|e| with_id(e, id))?;
                trace.push(TraceEvent {
                    tick,
                    node: id.clone(),
                    entry,
                    emitted: out.len(),
                });
                for step in out {
                    if !self.is_input[i] && !step.all_finite() {
                        return Err(Error::filter(
                            id,
                            format!(
                                "non-finite value in '{}' at step {} (value {:e})",
                                step.quantity.name, step.step_index, step.step_value
                            ),
                        ));
                    }
                    history[i].entry(step.step_index).or_default().push(Arc::new(step));
                }
            }
            // An entry e of any node is read no later than tick e + max_lag.
            if let Some(keep_from) = (tick + 1).checked_sub(max_lag) {
                for h in history.iter_mut() {
                    *h = h.split_off(&keep_from);
                }
            }
        }
        let mut quantities: Vec<String> = Vec::new();
        for i in (0..n).filter(|&i| self.graph.succs[i].is_empty()) {
            for q in self.filters[i].consumes() {
                if !quantities.contains(&q) {
                    quantities.push(q);
                }
            }
        }
        Ok(RunSummary {
            entries: self.num_entries,
            ticks,
            outputs: self.outputs.clone(),
            quantities,
            trace,
            elapsed: started.elapsed(),
        })
    }
}
