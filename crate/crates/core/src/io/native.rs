//! Native container: a directory holding JSON descriptors and little-endian
//! binary arrays.
//!
//! ```text
//! <name>.cfsd/
//!   manifest.json                  format version, analysis, steps, quantities
//!   mesh.json                      regions and element blocks
//!   nodes.bin                      f64 LE, xyz interleaved
//!   conn_<region>_<block>.bin      u32 LE node indices, element-major
//!   results/<quantity>/step_<k>.bin  f64 LE, entity-major, components contiguous,
//!                                  (re, im) per component for complex data
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{InputData, StepSource};
use crate::error::{Error, Result};
use crate::mesh::{
    Domain, ElementBlock, ElementType, EntityKind, FieldQuantity, FieldStep, Mesh, RegionValues,
    ValueKind,
};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MESH_FILE: &str = "mesh.json";
pub const NODES_FILE: &str = "nodes.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEntry {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCount {
    pub name: String,
    pub entity_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityEntry {
    pub name: String,
    pub defined_on: EntityKind,
    pub components: usize,
    pub value_kind: ValueKind,
    pub regions: Vec<RegionCount>,
    /// Step indices for which a result file exists.
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub analysis: Domain,
    pub steps: Vec<StepEntry>,
    pub quantities: Vec<QuantityEntry>,
}

impl Manifest {
    pub fn new(analysis: Domain) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            analysis,
            steps: Vec::new(),
            quantities: Vec::new(),
        }
    }

    pub fn quantity(&self, name: &str) -> Option<&QuantityEntry> {
        self.quantities.iter().find(|q| q.name == name)
    }

    pub fn field_quantity(&self, name: &str) -> Option<FieldQuantity> {
        let q = self.quantity(name)?;
        Some(FieldQuantity {
            name: q.name.clone(),
            defined_on: q.defined_on,
            components: q.components,
            domain: self.analysis,
            regions: q.regions.iter().map(|r| r.name.clone()).collect(),
        })
    }

    pub fn field_quantities(&self) -> Vec<FieldQuantity> {
        self.quantities
            .iter()
            .filter_map(|q| self.field_quantity(&q.name))
            .collect()
    }

    pub fn step_position(&self, index: usize) -> Option<usize> {
        self.steps.iter().position(|s| s.index == index)
    }

    /// Structural checks that do not need the mesh.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.format_version != FORMAT_VERSION {
            return Err(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        for w in self.steps.windows(2) {
            if w[1].value <= w[0].value {
                return Err(format!(
                    "step values must be strictly increasing ({} then {})",
                    w[0].value, w[1].value
                ));
            }
            if w[1].index == w[0].index {
                return Err(format!("duplicate step index {}", w[0].index));
            }
        }
        let mut names = std::collections::HashSet::new();
        for q in &self.quantities {
            check_name("quantity", &q.name)?;
            if !names.insert(q.name.as_str()) {
                return Err(format!("duplicate quantity name '{}'", q.name));
            }
            if q.components != 1 && q.components != 3 {
                return Err(format!("quantity '{}': components must be 1 or 3", q.name));
            }
            if q.value_kind != self.analysis.value_kind() {
                return Err(format!(
                    "quantity '{}': value_kind {:?} does not match analysis {:?}",
                    q.name, q.value_kind, self.analysis
                ));
            }
            if let Some(s) = q.steps.iter().find(|s| self.step_position(**s).is_none()) {
                return Err(format!("quantity '{}' references unknown step {s}", q.name));
            }
        }
        Ok(())
    }
}

fn check_name(what: &str, name: &str) -> std::result::Result<(), String> {
    if name.is_empty() || name == "." || name == ".." || name.contains(['/', '\\', '\0']) {
        Err(format!("{what} name '{name}' cannot be used as a file name"))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshBlockJson {
    etype: ElementType,
    num_elements: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshRegionJson {
    name: String,
    blocks: Vec<MeshBlockJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MeshJson {
    dimension: usize,
    num_nodes: usize,
    regions: Vec<MeshRegionJson>,
}

fn conn_file(region: &str, block: usize) -> String {
    format!("conn_{region}_{block}.bin")
}

fn step_file(root: &Path, quantity: &str, index: usize) -> PathBuf {
    root.join("results")
        .join(quantity)
        .join(format!("step_{index}.bin"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, format!("malformed JSON: {e}")))
}

fn expect_len(path: &Path, bytes: &[u8], expected: usize, what: &str) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("expected {what} = {expected} bytes, found {}", bytes.len()),
        ));
    }
    Ok(())
}

fn f64s_from_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn f64s_to_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Write via a temporary file and rename so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads only the geometry of a native container.
pub fn read_target_mesh(root: &Path) -> Result<Mesh> {
    let mesh_path = root.join(MESH_FILE);
    let desc: MeshJson = read_json(&mesh_path)?;
    let nodes_path = root.join(NODES_FILE);
    let bytes = read_bytes(&nodes_path)?;
    expect_len(
        &nodes_path,
        &bytes,
        3 * desc.num_nodes * 8,
        &format!("3·N·8 with N = {}", desc.num_nodes),
    )?;
    let flat = f64s_from_le(&bytes);
    let nodes = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let mut regions = Vec::with_capacity(desc.regions.len());
    for r in desc.regions {
        check_name("region", &r.name).map_err(|m| Error::format(&mesh_path, m))?;
        let mut blocks = Vec::with_capacity(r.blocks.len());
        for (bi, b) in r.blocks.iter().enumerate() {
            let path = root.join(conn_file(&r.name, bi));
            let bytes = read_bytes(&path)?;
            let n = b.etype.num_nodes();
            expect_len(
                &path,
                &bytes,
                b.num_elements * n * 4,
                &format!("{} elements × {n} nodes × 4", b.num_elements),
            )?;
            let conn = bytes
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(ElementBlock::new(b.etype, conn));
        }
        regions.push((r.name, blocks));
    }
    let mesh = Mesh::new(nodes, regions).map_err(|e| Error::format(&mesh_path, e.to_string()))?;
    if mesh.dimension() != desc.dimension && mesh.num_elements() > 0 {
        return Err(Error::format(
            &mesh_path,
            format!(
                "declared dimension {} but elements imply {}",
                desc.dimension,
                mesh.dimension()
            ),
        ));
    }
    Ok(mesh)
}

/// Lazily reads steps from a native container.
#[derive(Debug, Clone)]
pub struct NativeReader {
    root: PathBuf,
    manifest: Manifest,
}

impl NativeReader {
    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl StepSource for NativeReader {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn read_step(&self, quantity: &str, step_index: usize) -> Result<FieldStep> {
        let q = self.manifest.quantity(quantity).ok_or_else(|| {
            Error::format(
                self.root.join(MANIFEST_FILE),
                format!("no quantity '{quantity}'"),
            )
        })?;
        if !q.steps.contains(&step_index) {
            return Err(Error::format(
                self.root.join(MANIFEST_FILE),
                format!("quantity '{quantity}' has no step {step_index}"),
            ));
        }
        let pos = self.manifest.step_position(step_index).expect("validated");
        let fq = self.manifest.field_quantity(quantity).expect("present");
        let width = fq.width();
        let path = step_file(&self.root, quantity, step_index);
        let bytes = read_bytes(&path)?;
        let total: usize = q.regions.iter().map(|r| r.entity_count).sum();
        expect_len(
            &path,
            &bytes,
            total * width * 8,
            &format!("{total} entities × {width} values × 8"),
        )?;
        let flat = f64s_from_le(&bytes);
        let mut values = Vec::with_capacity(q.regions.len());
        let mut at = 0;
        for r in &q.regions {
            let n = r.entity_count * width;
            values.push(RegionValues {
                region: r.name.clone(),
                data: flat[at..at + n].to_vec(),
            });
            at += n;
        }
        Ok(FieldStep {
            quantity: fq,
            step_index,
            step_value: self.manifest.steps[pos].value,
            values,
        })
    }
}

/// Opens a native container with lazy step access.
pub fn read_native(root: &Path) -> Result<InputData> {
    let mesh = read_target_mesh(root)?;
    let manifest_path = root.join(MANIFEST_FILE);
    let manifest: Manifest = read_json(&manifest_path)?;
    manifest
        .validate()
        .map_err(|m| Error::format(&manifest_path, m))?;
    for q in &manifest.quantities {
        let width = q.components * if q.value_kind == ValueKind::Complex { 2 } else { 1 };
        for r in &q.regions {
            let region = mesh
                .region(&r.name)
                .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
            let n = region.num_entities(q.defined_on);
            if n != r.entity_count {
                return Err(Error::format(
                    &manifest_path,
                    format!(
                        "quantity '{}' region '{}': entity_count {} but mesh has {n}",
                        q.name, r.name, r.entity_count
                    ),
                ));
            }
        }
        let total: usize = q.regions.iter().map(|r| r.entity_count).sum();
        for &s in &q.steps {
            let path = step_file(root, &q.name, s);
            let len = fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len() as usize;
            if len != total * width * 8 {
                return Err(Error::format(
                    &path,
                    format!("expected {} bytes, found {len}", total * width * 8),
                ));
            }
        }
    }
    Ok(InputData {
        mesh,
        manifest: manifest.clone(),
        steps: Box::new(NativeReader {
            root: root.to_path_buf(),
            manifest,
        }),
    })
}

/// Incremental writer; the manifest on disk is kept consistent after each call.
#[derive(Debug)]
pub struct NativeWriter {
    root: PathBuf,
    manifest: Manifest,
}

impl NativeWriter {
    /// Creates the container directory with mesh files and an empty manifest.
    /// An existing container at `root` is replaced; any other existing
    /// non-empty directory is refused.
    pub fn create(root: &Path, mesh: &Mesh, analysis: Domain) -> Result<Self> {
        if root.exists() {
            let looks_like_container = root.join(MANIFEST_FILE).exists() || root.join(MESH_FILE).exists();
            let empty = fs::read_dir(root)
                .map_err(|e| Error::io(root, e))?
                .next()
                .is_none();
            if !looks_like_container && !empty {
                return Err(Error::format(
                    root,
                    "refusing to overwrite a directory that is not a container",
                ));
            }
            fs::remove_dir_all(root).map_err(|e| Error::io(root, e))?;
        }
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

        let desc = MeshJson {
            dimension: mesh.dimension(),
            num_nodes: mesh.num_nodes(),
            regions: mesh
                .regions()
                .iter()
                .map(|r| MeshRegionJson {
                    name: r.name().to_string(),
                    blocks: r
                        .blocks()
                        .iter()
                        .map(|b| MeshBlockJson {
                            etype: b.etype,
                            num_elements: b.num_elements(),
                        })
                        .collect(),
                })
                .collect(),
        };
        for r in &desc.regions {
            check_name("region", &r.name).map_err(|m| Error::format(root, m))?;
        }
        let flat: Vec<f64> = mesh.nodes().iter().flatten().copied().collect();
        write_atomic(&root.join(NODES_FILE), &f64s_to_le(&flat))?;
        for r in mesh.regions() {
            for (bi, b) in r.blocks().iter().enumerate() {
                let bytes: Vec<u8> = b.connectivity.iter().flat_map(|v| v.to_le_bytes()).collect();
                write_atomic(&root.join(conn_file(r.name(), bi)), &bytes)?;
            }
        }
        write_atomic(&root.join(MESH_FILE), &to_json(&desc))?;
        let writer = NativeWriter {
            root: root.to_path_buf(),
            manifest: Manifest::new(analysis),
        };
        writer.flush()?;
        Ok(writer)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn flush(&self) -> Result<()> {
        write_atomic(&self.root.join(MANIFEST_FILE), &to_json(&self.manifest))
    }

    /// Declares a quantity with its per-region entity counts.
    pub fn add_quantity(&mut self, q: &FieldQuantity, mesh: &Mesh) -> Result<()> {
        check_name("quantity", &q.name).map_err(|m| Error::format(&self.root, m))?;
        if self.manifest.quantity(&q.name).is_some() {
            return Err(Error::format(
                &self.root,
                format!("duplicate quantity name '{}'", q.name),
            ));
        }
        if q.domain != self.manifest.analysis {
            return Err(Error::format(
                &self.root,
                format!("quantity '{}' domain does not match container analysis", q.name),
            ));
        }
        let regions = q
            .regions
            .iter()
            .map(|name| {
                Ok(RegionCount {
                    name: name.clone(),
                    entity_count: mesh.region(name)?.num_entities(q.defined_on),
                })
            })
            .collect::<Result<_>>()?;
        self.manifest.quantities.push(QuantityEntry {
            name: q.name.clone(),
            defined_on: q.defined_on,
            components: q.components,
            value_kind: q.value_kind(),
            regions,
            steps: Vec::new(),
        });
        let dir = self.root.join("results").join(&q.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        self.flush()
    }

    /// Appends a step entry; values must increase.
    pub fn add_step(&mut self, index: usize, value: f64) -> Result<()> {
        if let Some(last) = self.manifest.steps.last() {
            if value <= last.value || index == last.index {
                return Err(Error::format(
                    &self.root,
                    format!("step {index} (value {value}) does not follow step {} (value {})", last.index, last.value),
                ));
            }
        }
        self.manifest.steps.push(StepEntry { index, value });
        self.flush()
    }

    /// Writes one result file (atomically) and records it in the manifest.
    pub fn write_step(&mut self, step: &FieldStep) -> Result<()> {
        let name = &step.quantity.name;
        let pos = self
            .manifest
            .quantities
            .iter()
            .position(|q| &q.name == name)
            .ok_or_else(|| Error::format(&self.root, format!("quantity '{name}' was not declared")))?;
        if self.manifest.step_position(step.step_index).is_none() {
            return Err(Error::format(
                &self.root,
                format!("step {} was not declared", step.step_index),
            ));
        }
        let entry = &self.manifest.quantities[pos];
        let width = step.quantity.width();
        if step.values.len() != entry.regions.len() {
            return Err(Error::format(
                &self.root,
                format!("quantity '{name}': region arrays do not match the declaration"),
            ));
        }
        let mut flat = Vec::new();
        for (rv, rc) in step.values.iter().zip(&entry.regions) {
            if rv.region != rc.name || rv.data.len() != rc.entity_count * width {
                return Err(Error::format(
                    &self.root,
                    format!(
                        "quantity '{name}' region '{}': {} values, expected {} for region '{}'",
                        rv.region,
                        rv.data.len(),
                        rc.entity_count * width,
                        rc.name
                    ),
                ));
            }
            flat.extend_from_slice(&rv.data);
        }
        write_atomic(&step_file(&self.root, name, step.step_index), &f64s_to_le(&flat))?;
        let steps = &mut self.manifest.quantities[pos].steps;
        if !steps.contains(&step.step_index) {
            steps.push(step.step_index);
        }
        self.flush()
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

/// Writes a complete container in one call.
pub fn write_native(root: &Path, mesh: &Mesh, manifest: &Manifest, steps: &[FieldStep]) -> Result<()> {
    manifest.validate().map_err(|m| Error::format(root, m))?;
    let mut w = NativeWriter::create(root, mesh, manifest.analysis)?;
    for q in &manifest.quantities {
        let fq = manifest.field_quantity(&q.name).expect("present");
        w.add_quantity(&fq, mesh)?;
    }
    for s in &manifest.steps {
        w.add_step(s.index, s.value)?;
    }
    for step in steps {
        step.check_against(mesh)?;
        w.write_step(step)?;
    }
    Ok(())
}

/// Copies the geometry of `mesh` into a container with no quantities.
pub fn write_mesh_only(root: &Path, mesh: &Mesh, analysis: Domain) -> Result<()> {
    NativeWriter::create(root, mesh, analysis).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region_mesh() -> Mesh {
        Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [0.0, 0.0, 1.0],
                [1.0, 1.0, 1.0],
            ],
            vec![
                ("a".into(), vec![ElementBlock::new(ElementType::Tetra4, vec![0, 1, 2, 3])]),
                ("b".into(), vec![ElementBlock::new(ElementType::Tria3, vec![1, 2, 4])]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn truncated_nodes_file() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("m.cfsd");
        write_mesh_only(&root, &two_region_mesh(), Domain::Time).unwrap();
        let nodes = root.join(NODES_FILE);
        let bytes = fs::read(&nodes).unwrap();
        fs::write(&nodes, &bytes[..bytes.len() - 3]).unwrap();
        let err = read_native(&root).unwrap_err().to_string();
        assert!(err.contains("expected 3·N·8"), "{err}");
        assert!(err.contains("nodes.bin"), "{err}");
    }

    #[test]
    fn duplicate_quantity_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("m.cfsd");
        let mesh = two_region_mesh();
        write_mesh_only(&root, &mesh, Domain::Time).unwrap();
        let q = QuantityEntry {
            name: "p".into(),
            defined_on: EntityKind::Node,
            components: 1,
            value_kind: ValueKind::Real,
            regions: vec![],
            steps: vec![],
        };
        let mut m = Manifest::new(Domain::Time);
        m.quantities = vec![q.clone(), q];
        fs::write(root.join(MANIFEST_FILE), to_json(&m)).unwrap();
        let err = read_native(&root).unwrap_err().to_string();
        assert!(err.contains("duplicate quantity"), "{err}");
    }

    #[test]
    fn bad_version_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("m.cfsd");
        write_mesh_only(&root, &two_region_mesh(), Domain::Time).unwrap();
        let mut m = Manifest::new(Domain::Time);
        m.format_version = 2;
        fs::write(root.join(MANIFEST_FILE), to_json(&m)).unwrap();
        assert!(read_native(&root).unwrap_err().to_string().contains("format_version"));
        fs::write(root.join(MANIFEST_FILE), b"{ not json").unwrap();
        let err = read_native(&root).unwrap_err().to_string();
        assert!(err.contains("manifest.json") && err.contains("malformed"), "{err}");
    }

    #[test]
    fn target_mesh_ignores_data_and_needs_mesh_json() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("m.cfsd");
        let mesh = two_region_mesh();
        write_mesh_only(&root, &mesh, Domain::Time).unwrap();
        assert_eq!(read_target_mesh(&root).unwrap(), mesh);
        fs::remove_file(root.join(MESH_FILE)).unwrap();
        assert!(read_target_mesh(&root).unwrap_err().to_string().contains("mesh.json"));
    }

    #[test]
    fn refuses_foreign_directory() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("precious.txt"), b"keep").unwrap();
        assert!(NativeWriter::create(dir.path(), &two_region_mesh(), Domain::Time).is_err());
        assert!(dir.path().join("precious.txt").exists());
    }
}
