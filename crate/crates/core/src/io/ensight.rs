//! Ensight Gold ASCII reader (case, geometry and per-node / per-element variables).
//!
//! Each geometry part becomes one region named after the part description
//! (trimmed, spaces replaced by underscores). Parts carry their own node
//! lists, so nodes are numbered part by part; connectivity is converted from
//! 1-based part-local indices to 0-based global indices.

use std::fs;
use std::path::{Path, PathBuf};

use super::native::{Manifest, QuantityEntry, RegionCount, StepEntry, FORMAT_VERSION};
use super::{InputData, StepSource};
use crate::error::{Error, Result};
use crate::mesh::{
    Domain, ElementBlock, ElementType, EntityKind, FieldStep, Mesh, RegionValues, ValueKind,
};

/// `(cfs_name, ensight_name)` pairs selecting and renaming variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VariableMap {
    entries: Vec<(String, String)>,
}

impl VariableMap {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (cfs, _) in &entries {
            if !seen.insert(cfs.as_str()) {
                return Err(Error::validation(format!(
                    "variable map: CFSVarName '{cfs}' used more than once"
                )));
            }
        }
        Ok(VariableMap { entries })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsightVariable {
    pub name: String,
    pub defined_on: EntityKind,
    pub components: usize,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSet {
    pub num_steps: usize,
    pub filename_numbers: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsightCase {
    pub geometry: String,
    pub variables: Vec<EnsightVariable>,
    pub time: TimeSet,
}

fn numbers<T: std::str::FromStr>(path: &Path, text: &str) -> Result<Vec<T>> {
    text.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::format(path, format!("cannot parse number '{t}'")))
        })
        .collect()
}

/// Parses the case file text.
pub fn parse_case(path: &Path, text: &str) -> Result<EnsightCase> {
    let mut section = String::new();
    let mut geometry = None;
    let mut variables = Vec::new();
    let mut num_steps = None;
    let mut start = 0usize;
    let mut incr = 1usize;
    let mut explicit_numbers: Option<Vec<usize>> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut time_sets = 0;
    // key whose values continue on following lines
    let mut pending: Option<&'static str> = None;

    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !line.contains(':') && line.chars().all(|c| c.is_ascii_uppercase() || c == ' ') {
            section = line.to_string();
            pending = None;
            continue;
        }
        if let Some(key) = pending {
            if !line.contains(':') {
                match key {
                    "values" => values.extend(numbers::<f64>(path, line)?),
                    _ => explicit_numbers
                        .get_or_insert_with(Vec::new)
                        .extend(numbers::<usize>(path, line)?),
                }
                continue;
            }
            pending = None;
        }
        let (key, rest) = line.split_once(':').unwrap_or((line, ""));
        let key = key.trim().to_ascii_lowercase();
        let rest = rest.trim();
        match section.as_str() {
            "FORMAT" => {
                if key == "type" && !rest.to_ascii_lowercase().contains("gold") {
                    return Err(Error::format(path, format!("unsupported case type '{rest}'")));
                }
            }
            "GEOMETRY" if key == "model" => {
                let toks: Vec<&str> = rest.split_whitespace().collect();
                let file = toks
                    .iter()
                    .find(|t| t.parse::<i64>().is_err())
                    .ok_or_else(|| Error::format(path, "model line without file name"))?;
                if file.contains('*') {
                    return Err(Error::format(path, "transient geometry is not supported"));
                }
                geometry = Some(file.to_string());
            }
            "VARIABLE" => {
                let (defined_on, components) = match key.as_str() {
                    "scalar per node" => (EntityKind::Node, 1),
                    "vector per node" => (EntityKind::Node, 3),
                    "scalar per element" => (EntityKind::Cell, 1),
                    "vector per element" => (EntityKind::Cell, 3),
                    // other kinds are not exposed
                    _ => continue,
                };
                let toks: Vec<&str> = rest.split_whitespace().collect();
                if toks.len() < 2 {
                    return Err(Error::format(path, format!("malformed variable line '{line}'")));
                }
                variables.push(EnsightVariable {
                    name: toks[toks.len() - 2].to_string(),
                    defined_on,
                    components,
                    pattern: toks[toks.len() - 1].to_string(),
                });
            }
            "TIME" => match key.as_str() {
                "time set" => {
                    time_sets += 1;
                    if time_sets > 1 {
                        return Err(Error::format(path, "only one time set is supported"));
                    }
                }
                "number of steps" => num_steps = Some(rest.parse::<usize>().map_err(|_| {
                    Error::format(path, format!("bad number of steps '{rest}'"))
                })?),
                "filename start number" => {
                    start = rest.parse().map_err(|_| Error::format(path, "bad filename start number"))?
                }
                "filename increment" => {
                    incr = rest.parse().map_err(|_| Error::format(path, "bad filename increment"))?
                }
                "filename numbers" => {
                    explicit_numbers = Some(numbers(path, rest)?);
                    pending = Some("numbers");
                }
                "time values" => {
                    values.extend(numbers::<f64>(path, rest)?);
                    pending = Some("values");
                }
                _ => {}
            },
            _ => {}
        }
    }

    let geometry = geometry.ok_or_else(|| Error::format(path, "no GEOMETRY model entry"))?;
    let num_steps = num_steps.unwrap_or(values.len().max(1));
    if values.is_empty() && num_steps == 1 {
        values.push(0.0);
    }
    if values.len() != num_steps {
        return Err(Error::format(
            path,
            format!("{} time values for {num_steps} steps", values.len()),
        ));
    }
    let filename_numbers =
        explicit_numbers.unwrap_or_else(|| (0..num_steps).map(|i| start + i * incr).collect());
    if filename_numbers.len() != num_steps {
        return Err(Error::format(
            path,
            format!("{} filename numbers for {num_steps} steps", filename_numbers.len()),
        ));
    }
    let time = TimeSet {
        num_steps,
        filename_numbers,
        values,
    };
    for v in &variables {
        check_pattern(path, &v.pattern, &time)?;
    }
    Ok(EnsightCase {
        geometry,
        variables,
        time,
    })
}

fn check_pattern(path: &Path, pattern: &str, time: &TimeSet) -> Result<()> {
    let width = pattern.matches('*').count();
    if width == 0 {
        return Ok(());
    }
    if let Some(n) = time
        .filename_numbers
        .iter()
        .find(|n| n.to_string().len() > width)
    {
        return Err(Error::format(
            path,
            format!("filename number {n} does not fit wildcard width {width} in '{pattern}'"),
        ));
    }
    Ok(())
}

fn expand_pattern(pattern: &str, number: usize) -> String {
    let width = pattern.matches('*').count();
    if width == 0 {
        return pattern.to_string();
    }
    let stars = "*".repeat(width);
    pattern.replacen(&stars, &format!("{number:0width$}"), 1)
}

fn sanitize_part_name(desc: &str) -> String {
    let s: String = desc
        .trim()
        .chars()
        .map(|c| if c.is_whitespace() || c == '/' || c == '\\' { '_' } else { c })
        .collect();
    if s.is_empty() {
        "part".into()
    } else {
        s
    }
}

fn read_ascii(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let head = &bytes[..bytes.len().min(80)];
    let head_text = String::from_utf8_lossy(head).to_ascii_lowercase();
    if head_text.contains("binary") || bytes.contains(&0) {
        return Err(Error::format(
            path,
            "binary Ensight files are not supported (ASCII only)",
        ));
    }
    String::from_utf8(bytes).map_err(|_| Error::format(path, "not valid UTF-8 text (ASCII only)"))
}

/// Line cursor with whole-line numeric reads.
struct Cursor<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Cursor {
            path,
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::format(self.path, format!("line {}: {msg}", self.pos.max(1)))
    }

    fn peek(&self) -> Option<&'a str> {
        self.lines[self.pos..]
            .iter()
            .find(|l| !l.trim().is_empty())
            .map(|l| l.trim())
    }

    /// Next line, including blank ones (descriptions may be empty).
    fn raw_line(&mut self) -> Result<&'a str> {
        let l = self
            .lines
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(l)
    }

    fn line(&mut self) -> Result<&'a str> {
        loop {
            let l = self.raw_line()?.trim();
            if !l.is_empty() {
                return Ok(l);
            }
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let l = self.line()?;
        if l.to_ascii_lowercase().starts_with(keyword) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{keyword}', found '{l}'")))
        }
    }

    fn values<T: std::str::FromStr>(&mut self, count: usize) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let l = self.line()?;
            for t in l.split_whitespace() {
                out.push(t.parse().map_err(|_| self.err(format!("cannot parse '{t}'")))?);
            }
        }
        if out.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", out.len())));
        }
        Ok(out)
    }

    fn single<T: std::str::FromStr>(&mut self) -> Result<T> {
        Ok(self.values::<T>(1)?.remove(0))
    }
}

#[derive(Debug, Clone)]
struct PartLayout {
    number: i64,
    node_offset: usize,
    node_count: usize,
    blocks: Vec<(ElementType, usize)>,
}

fn id_mode_present(line: &str) -> bool {
    let l = line.to_ascii_lowercase();
    l.contains("given") || l.contains("ignore")
}

fn parse_geometry(path: &Path, text: &str) -> Result<(Mesh, Vec<PartLayout>)> {
    let mut c = Cursor::new(path, text);
    c.raw_line()?;
    c.raw_line()?;
    let node_ids = {
        let l = c.line()?;
        if !l.to_ascii_lowercase().starts_with("node id") {
            return Err(c.err(format!("expected 'node id', found '{l}'")));
        }
        id_mode_present(l)
    };
    let elem_ids = {
        let l = c.line()?;
        if !l.to_ascii_lowercase().starts_with("element id") {
            return Err(c.err(format!("expected 'element id', found '{l}'")));
        }
        id_mode_present(l)
    };
    if c.peek().is_some_and(|l| l.eq_ignore_ascii_case("extents")) {
        c.line()?;
        c.values::<f64>(6)?;
    }

    let mut nodes = Vec::new();
    let mut regions: Vec<(String, Vec<ElementBlock>)> = Vec::new();
    let mut layout = Vec::new();
    while c.peek().is_some() {
        c.expect("part")?;
        let number: i64 = c.single()?;
        let desc = c.raw_line()?;
        let kind = c.line()?;
        if !kind.eq_ignore_ascii_case("coordinates") {
            return Err(c.err(format!("part {number}: unsupported part kind '{kind}'")));
        }
        let nn: usize = c.single()?;
        if node_ids {
            c.values::<i64>(nn)?;
        }
        let x: Vec<f64> = c.values(nn)?;
        let y: Vec<f64> = c.values(nn)?;
        let z: Vec<f64> = c.values(nn)?;
        let offset = nodes.len();
        nodes.extend((0..nn).map(|i| [x[i], y[i], z[i]]));

        let mut blocks = Vec::new();
        let mut counts = Vec::new();
        while let Some(l) = c.peek() {
            if l.eq_ignore_ascii_case("part") {
                break;
            }
            let tname = c.line()?;
            let etype: ElementType = tname
                .parse()
                .map_err(|e: String| c.err(format!("part {number}: {e}")))?;
            let ne: usize = c.single()?;
            if elem_ids {
                c.values::<i64>(ne)?;
            }
            let n = etype.num_nodes();
            let local: Vec<usize> = c.values(ne * n)?;
            let mut conn = Vec::with_capacity(local.len());
            for v in local {
                if v == 0 || v > nn {
                    return Err(c.err(format!(
                        "part {number}: node index {v} outside 1..={nn}"
                    )));
                }
                conn.push((offset + v - 1) as u32);
            }
            blocks.push(ElementBlock::new(etype, conn));
            counts.push((etype, ne));
        }
        let mut name = sanitize_part_name(desc);
        if regions.iter().any(|(r, _)| *r == name) {
            name = format!("{name}_{number}");
        }
        regions.push((name, blocks));
        layout.push(PartLayout {
            number,
            node_offset: offset,
            node_count: nn,
            blocks: counts,
        });
    }
    let mesh = Mesh::new(nodes, regions).map_err(|e| Error::format(path, e.to_string()))?;
    Ok((mesh, layout))
}

/// Reads only the geometry referenced by a case file.
pub fn read_ensight_mesh(case_path: &Path) -> Result<Mesh> {
    let text = read_ascii(case_path)?;
    let case = parse_case(case_path, &text)?;
    let geo = case_dir(case_path).join(&case.geometry);
    let (mesh, _) = parse_geometry(&geo, &read_ascii(&geo)?)?;
    Ok(mesh)
}

fn case_dir(case_path: &Path) -> PathBuf {
    case_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Lazy per-step reader of mapped Ensight variables.
#[derive(Debug)]
pub struct EnsightSteps {
    dir: PathBuf,
    case: EnsightCase,
    /// cfs_name -> index into case.variables
    mapped: Vec<(String, usize)>,
    parts: Vec<PartLayout>,
    mesh: Mesh,
    manifest: Manifest,
}

impl EnsightSteps {
    fn parse_variable(&self, var: &EnsightVariable, path: &Path, text: &str) -> Result<Vec<Vec<f64>>> {
        let mut c = Cursor::new(path, text);
        c.raw_line()?;
        let nc = var.components;
        let mut per_region: Vec<Option<Vec<f64>>> = vec![None; self.parts.len()];
        while c.peek().is_some() {
            c.expect("part")?;
            let number: i64 = c.single()?;
            let pi = self
                .parts
                .iter()
                .position(|p| p.number == number)
                .ok_or_else(|| c.err(format!("part {number} not in geometry")))?;
            let part = &self.parts[pi];
            let region = &self.mesh.regions()[pi];
            match var.defined_on {
                EntityKind::Node => {
                    let kind = c.line()?;
                    if !kind.eq_ignore_ascii_case("coordinates") {
                        return Err(c.err(format!("expected 'coordinates', found '{kind}'")));
                    }
                    let raw: Vec<f64> = c.values(part.node_count * nc)?;
                    let mut data = Vec::with_capacity(region.nodes().len() * nc);
                    for &g in region.nodes() {
                        let local = g as usize - part.node_offset;
                        for k in 0..nc {
                            data.push(raw[k * part.node_count + local]);
                        }
                    }
                    per_region[pi] = Some(data);
                }
                EntityKind::Cell => {
                    let mut data = Vec::with_capacity(region.num_elements() * nc);
                    for &(etype, ne) in &part.blocks {
                        let tname = c.line()?;
                        if tname.parse::<ElementType>().ok() != Some(etype) {
                            return Err(c.err(format!(
                                "part {number}: expected block '{}', found '{tname}'",
                                etype.name().to_ascii_lowercase()
                            )));
                        }
                        let raw: Vec<f64> = c.values(ne * nc)?;
                        for e in 0..ne {
                            for k in 0..nc {
                                data.push(raw[k * ne + e]);
                            }
                        }
                    }
                    per_region[pi] = Some(data);
                }
            }
        }
        per_region
            .into_iter()
            .zip(&self.parts)
            .map(|(d, p)| {
                d.ok_or_else(|| {
                    Error::format(path, format!("variable '{}' has no values for part {}", var.name, p.number))
                })
            })
            .collect()
    }
}

impl StepSource for EnsightSteps {
    fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn read_step(&self, quantity: &str, step_index: usize) -> Result<FieldStep> {
        let &(_, vi) = self
            .mapped
            .iter()
            .find(|(n, _)| n == quantity)
            .ok_or_else(|| Error::validation(format!("no mapped Ensight variable '{quantity}'")))?;
        if step_index >= self.case.time.num_steps {
            return Err(Error::validation(format!(
                "step {step_index} out of range ({} steps)",
                self.case.time.num_steps
            )));
        }
        let var = &self.case.variables[vi];
        let file = expand_pattern(&var.pattern, self.case.time.filename_numbers[step_index]);
        let path = self.dir.join(file);
        let text = read_ascii(&path)?;
        let arrays = self.parse_variable(var, &path, &text)?;
        let fq = self.manifest.field_quantity(quantity).expect("mapped");
        Ok(FieldStep {
            values: fq
                .regions
                .iter()
                .cloned()
                .zip(arrays)
                .map(|(region, data)| RegionValues { region, data })
                .collect(),
            quantity: fq,
            step_index,
            step_value: self.case.time.values[step_index],
        })
    }
}

/// Opens an Ensight Gold ASCII dataset exposing only the mapped variables.
pub fn read_ensight(case_path: &Path, map: &VariableMap, fix_fv_pyramids_requested: bool) -> Result<InputData> {
    if fix_fv_pyramids_requested {
        log::warn!("ensight: fixFVPyramids option ignored");
    }
    let text = read_ascii(case_path)?;
    let case = parse_case(case_path, &text)?;
    let dir = case_dir(case_path);
    let geo = dir.join(&case.geometry);
    let (mesh, parts) = parse_geometry(&geo, &read_ascii(&geo)?)?;

    let mut mapped = Vec::new();
    for (cfs, ens) in map.entries() {
        let vi = case.variables.iter().position(|v| &v.name == ens).ok_or_else(|| {
            let avail: Vec<&str> = case.variables.iter().map(|v| v.name.as_str()).collect();
            Error::format(
                case_path,
                format!(
                    "Ensight variable '{ens}' not found (available: {})",
                    avail.join(", ")
                ),
            )
        })?;
        mapped.push((cfs.clone(), vi));
    }

    let steps = case
        .time
        .values
        .iter()
        .enumerate()
        .map(|(index, &value)| StepEntry { index, value })
        .collect::<Vec<_>>();
    let quantities = mapped
        .iter()
        .map(|(cfs, vi)| {
            let v = &case.variables[*vi];
            QuantityEntry {
                name: cfs.clone(),
                defined_on: v.defined_on,
                components: v.components,
                value_kind: ValueKind::Real,
                regions: mesh
                    .regions()
                    .iter()
                    .map(|r| RegionCount {
                        name: r.name().to_string(),
                        entity_count: r.num_entities(v.defined_on),
                    })
                    .collect(),
                steps: (0..steps.len()).collect(),
            }
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        analysis: Domain::Time,
        steps,
        quantities,
    };
    manifest
        .validate()
        .map_err(|m| Error::format(case_path, m))?;
    Ok(InputData {
        mesh: mesh.clone(),
        manifest: manifest.clone(),
        steps: Box::new(EnsightSteps {
            dir,
            case,
            mapped,
            parts,
            mesh,
            manifest,
        }),
    })
}
