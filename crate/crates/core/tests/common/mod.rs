#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fieldpipe::io::native::StepEntry;
use fieldpipe::io::{write_native, Manifest};
use fieldpipe::mesh::{Domain, ElementBlock, ElementType, EntityKind, FieldQuantity, FieldStep, Mesh, RegionValues};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dst = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dst);
        } else {
            fs::copy(e.path(), dst).unwrap();
        }
    }
}

/// A scratch copy of the fixtures with `target.cfsd` generated from the Ensight case.
pub fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    fieldpipe::io::strip_mesh(&dir.path().join("ensight/fixture.case"), &dir.path().join("target.cfsd")).unwrap();
    dir
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fieldpipe")
}

/// Runs the binary; returns exit code and captured stderr.
pub fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(bin()).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Every file below `root` keyed by relative path.
pub fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Structured HEXA8 mesh over the tensor grid `xs x ys zs` in one region.
pub fn hex_mesh(name: &str, xs: &[f64], ys: &[f64], zs: &[f64]) -> Mesh {
    let (nx, ny, nz) = (xs.len(), ys.len(), zs.len());
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    for &z in zs {
        for &y in ys {
            for &x in xs {
                nodes.push([x, y, z]);
            }
        }
    }
    let id = |i: usize, j: usize, k: usize| (i + nx * (j + ny * k)) as u32;
    let mut conn = Vec::new();
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                conn.extend_from_slice(&[
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ]);
            }
        }
    }
    Mesh::new(nodes, vec![(name.to_string(), vec![ElementBlock::new(ElementType::Hexa8, conn)])]).unwrap()
}

/// Each hexahedron of `hex_mesh` split into six positively oriented tetrahedra.
pub fn tet_mesh(name: &str, xs: &[f64], ys: &[f64], zs: &[f64]) -> Mesh {
    let hex = hex_mesh(name, xs, ys, zs);
    let mut conn = Vec::new();
    for (_, h) in hex.regions()[0].elements() {
        // Kuhn subdivision along the 0-6 diagonal.
        for t in [[0, 1, 2, 6], [0, 2, 3, 6], [0, 3, 7, 6], [0, 7, 4, 6], [0, 4, 5, 6], [0, 5, 1, 6]] {
            let mut tet = t.map(|i| h[i]);
            let c: Vec<[f64; 3]> = tet.iter().map(|&g| hex.nodes()[g as usize]).collect();
            let v = fieldpipe::mesh::element::signed_measure(ElementType::Tetra4, &c);
            if v < 0.0 {
                tet.swap(0, 1);
            }
            conn.extend_from_slice(&tet);
        }
    }
    Mesh::new(
        hex.nodes().to_vec(),
        vec![(name.to_string(), vec![ElementBlock::new(ElementType::Tetra4, conn)])],
    )
    .unwrap()
}

pub fn lin(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Writes a container with one quantity whose values at step `k` come from `f(k, entity_point)`.
pub fn write_field_container(
    root: &Path,
    mesh: &Mesh,
    name: &str,
    kind: EntityKind,
    components: usize,
    step_values: &[f64],
    f: impl Fn(usize, &[f64; 3]) -> Vec<f64>,
) {
    let regions = mesh.region_names();
    let q = FieldQuantity::new(name, kind, components, Domain::Time, regions.clone()).unwrap();
    let mut manifest = Manifest::new(Domain::Time);
    manifest.steps = step_values.iter().enumerate().map(|(i, &v)| StepEntry { index: i, value: v }).collect();
    let mut steps = Vec::new();
    for (k, &v) in step_values.iter().enumerate() {
        let values = mesh
            .regions()
            .iter()
            .map(|r| RegionValues {
                region: r.name().to_string(),
                data: mesh.entity_points(r, kind).iter().flat_map(|p| f(k, p)).collect(),
            })
            .collect();
        steps.push(FieldStep {
            quantity: q.clone(),
            step_index: k,
            step_value: v,
            values,
        });
    }
    manifest.quantities.push(fieldpipe::io::native::QuantityEntry {
        name: name.to_string(),
        defined_on: kind,
        components,
        value_kind: q.value_kind(),
        regions: mesh
            .regions()
            .iter()
            .map(|r| fieldpipe::io::native::RegionCount {
                name: r.name().to_string(),
                entity_count: r.num_entities(kind),
            })
            .collect(),
        steps: (0..step_values.len()).collect(),
    });
    write_native(root, mesh, &manifest, &steps).unwrap();
}

pub const SVD_FIXTURE: &str = r#"<stepValueDefinition><startStop><startStep value="0"/><numSteps value="10"/><startTime value="1e-05"/><delta value="1e-05"/><deleteOffset value="no"/></startStop></stepValueDefinition>"#;

pub fn svd(start_step: usize, num_steps: usize, start_time: f64, delta: f64, delete_offset: bool) -> String {
    format!(
        r#"<stepValueDefinition><startStop><startStep value="{start_step}"/><numSteps value="{num_steps}"/><startTime value="{start_time:e}"/><delta value="{delta:e}"/><deleteOffset value="{}"/></startStop></stepValueDefinition>"#,
        if delete_offset { "yes" } else { "no" }
    )
}

pub fn pipeline_doc(body: &str) -> String {
    format!("<?xml version=\"1.0\"?>\n<cfsdat>\n<pipeline>\n{body}\n</pipeline>\n</cfsdat>\n")
}

pub fn native_input(id: &str, file: &str) -> String {
    format!(r#"<meshInput id="{id}"><inputFile><hdf5 fileName="{file}"/></inputFile></meshInput>"#)
}

pub fn ensight_input(id: &str) -> String {
    format!(
        r#"<meshInput id="{id}"><inputFile><ensight fileName="ensight/fixture.case"><variableList>
<variable CFSVarName="fluidMechPressure" EnsightVarName="pressure"/>
<variable CFSVarName="fluidMechVelocity" EnsightVarName="velocity"/>
<variable CFSVarName="cellLoad" EnsightVarName="load"/>
</variableList></ensight></inputFile></meshInput>"#
    )
}

pub fn output(id: &str, inputs: &str, results: &[&str]) -> String {
    let saves: String = results
        .iter()
        .map(|r| format!(r#"<result resultName="{r}"><allRegions/></result>"#))
        .collect();
    let save = if results.is_empty() { String::new() } else { format!("<saveResults>{saves}</saveResults>") };
    format!(r#"<meshOutput id="{id}" inputFilterIds="{inputs}"><outputFile><hdf5/></outputFile>{save}</meshOutput>"#)
}

/// Writes `xml` into `dir/name` and returns the path.
pub fn write_doc(dir: &Path, name: &str, xml: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, xml).unwrap();
    p
}

/// A single time step of a quantity on every region of `mesh`.
pub fn field_step(mesh: &Mesh, name: &str, kind: EntityKind, components: usize, f: impl Fn(&[f64; 3]) -> Vec<f64>) -> FieldStep {
    let q = FieldQuantity::new(name, kind, components, Domain::Time, mesh.region_names()).unwrap();
    let values = mesh
        .regions()
        .iter()
        .map(|r| RegionValues {
            region: r.name().to_string(),
            data: mesh.entity_points(r, kind).iter().flat_map(&f).collect(),
        })
        .collect();
    FieldStep {
        quantity: q,
        step_index: 0,
        step_value: 1.0,
        values,
    }
}

/// Strictly increasing coordinates starting at `start` with the given positive increments.
pub fn grid(start: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = vec![start];
    for d in increments {
        out.push(out.last().unwrap() + d);
    }
    out
}

/// `|a - b| / |b|`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
