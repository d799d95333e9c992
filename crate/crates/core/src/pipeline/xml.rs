//! Pipeline document parser.
//!
//! The document root is `<cfsdat>` holding one `<pipeline>` (a bare
//! `<pipeline>` root is accepted too). Element and attribute names follow the
//! published listings.

use std::path::{Path, PathBuf};

use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::filters::aero::{AeroKind, FlowInputs};
use crate::filters::conservative::ConservativeMethod;
use crate::filters::derivative::{DiffOp, RbfFdSettings, DEFAULT_EPSILON_SCALING};
use crate::filters::interp::{InterpMethod, RbfParams, ShepardParams};
use crate::io::VariableMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepValueDefinition {
    pub start_step: usize,
    pub num_steps: usize,
    pub start_time: f64,
    pub delta: f64,
    pub delete_offset: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    Native(PathBuf),
    Ensight {
        path: PathBuf,
        variables: VariableMap,
        fix_fv_pyramids: bool,
    },
}

impl InputSource {
    pub fn path(&self) -> &Path {
        match self {
            InputSource::Native(p) => p,
            InputSource::Ensight { path, .. } => path,
        }
    }
}

/// One `<result>` of `<saveResults>`; `regions == None` means `<allRegions/>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSelection {
    pub name: String,
    pub regions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub path: PathBuf,
    /// `None` when `<saveResults>` is absent: every input result on all regions.
    pub results: Option<Vec<ResultSelection>>,
}

/// `singleResult` / `regions` / `targetMesh` as written in the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BindingSpec {
    pub input: String,
    pub output: String,
    pub source_regions: Vec<String>,
    pub target_regions: Vec<String>,
    pub target_mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input(InputSource),
    Output(OutputSpec),
    Interp(InterpMethod, BindingSpec),
    Conservative(ConservativeMethod, BindingSpec),
    Diff(DiffOp, RbfFdSettings, BindingSpec),
    Aero(AeroKind, RbfFdSettings, FlowInputs, BindingSpec),
    TimeDeriv { input: String, output: String },
}

impl NodeKind {
    pub fn is_input(&self) -> bool {
        matches!(self, NodeKind::Input(_))
    }

    pub fn is_output(&self) -> bool {
        matches!(self, NodeKind::Output(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub element: String,
    pub line: u32,
    pub inputs: Vec<String>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineDoc {
    pub base_dir: PathBuf,
    pub steps: StepValueDefinition,
    pub nodes: Vec<NodeSpec>,
}

/// Quotes attribute values written without quotes (`logEps=false`), keeping
/// line positions. Returns the number of values fixed.
pub fn quote_bare_attributes(text: &str) -> (String, usize) {
    let b = text.as_bytes();
    let mut out = String::with_capacity(text.len() + 16);
    let mut fixed = 0;
    let mut i = 0;
    let mut in_tag = false;
    let mut quote: Option<u8> = None;
    while i < b.len() {
        let c = b[i];
        if !in_tag {
            if text[i..].starts_with("<!--") {
                let end = text[i..].find("-->").map(|e| i + e + 3).unwrap_or(b.len());
                out.push_str(&text[i..end]);
                i = end;
                continue;
            }
            if text[i..].starts_with("<![CDATA[") {
                let end = text[i..].find("]]>").map(|e| i + e + 3).unwrap_or(b.len());
                out.push_str(&text[i..end]);
                i = end;
                continue;
            }
            if c == b'<' {
                in_tag = true;
            }
            let ch = text[i..].chars().next().expect("in bounds");
            out.push(ch);
            i += ch.len_utf8();
            continue;
        }
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            let ch = text[i..].chars().next().expect("in bounds");
            out.push(ch);
            i += ch.len_utf8();
            continue;
        }
        match c {
            b'"' | b'\'' => {
                quote = Some(c);
                out.push(c as char);
                i += 1;
            }
            b'>' => {
                in_tag = false;
                out.push('>');
                i += 1;
            }
            b'=' => {
                out.push('=');
                i += 1;
                while i < b.len() && (b[i] == b' ' || b[i] == b'\t') {
                    out.push(b[i] as char);
                    i += 1;
                }
                if i < b.len() && b[i] != b'"' && b[i] != b'\'' {
                    let start = i;
                    while i < b.len() && !b[i].is_ascii_whitespace() && b[i] != b'>' && !(b[i] == b'/' && b.get(i + 1) == Some(&b'>')) {
                        i += 1;
                    }
                    out.push('"');
                    out.push_str(&text[start..i]);
                    out.push('"');
                    fixed += 1;
                }
            }
            _ => {
                let ch = text[i..].chars().next().expect("in bounds");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    (out, fixed)
}

struct Ctx<'a> {
    doc: &'a Document<'a>,
    base: &'a Path,
}

impl<'a> Ctx<'a> {
    fn line(&self, n: Node) -> u32 {
        self.doc.text_pos_at(n.range().start).row
    }

    fn err(&self, n: Node, msg: impl Into<String>) -> Error {
        Error::Xml {
            line: self.line(n),
            msg: msg.into(),
        }
    }

    fn children<'b>(&self, n: Node<'b, 'b>) -> impl Iterator<Item = Node<'b, 'b>> {
        n.children().filter(|c| c.is_element())
    }

    fn child<'b>(&self, n: Node<'b, 'b>, name: &str) -> Option<Node<'b, 'b>> {
        n.children().find(|c| c.is_element() && c.tag_name().name() == name)
    }

    fn req_child<'b>(&self, n: Node<'b, 'b>, name: &str) -> Result<Node<'b, 'b>> {
        self.child(n, name)
            .ok_or_else(|| self.err(n, format!("<{}> requires a <{name}> element", n.tag_name().name())))
    }

    fn req_attr(&self, n: Node, name: &str) -> Result<String> {
        n.attribute(name)
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| self.err(n, format!("<{}> requires attribute '{name}'", n.tag_name().name())))
    }

    fn parse_num<T: std::str::FromStr>(&self, n: Node, what: &str, s: &str) -> Result<T> {
        s.trim()
            .parse()
            .map_err(|_| self.err(n, format!("{what}: cannot parse '{s}'")))
    }

    /// Optional numeric attribute; an empty value counts as absent.
    fn opt_num<T: std::str::FromStr>(&self, n: Node, name: &str) -> Result<Option<T>> {
        match n.attribute(name).map(str::trim) {
            None | Some("") => Ok(None),
            Some(s) => self.parse_num(n, name, s).map(Some),
        }
    }

    fn parse_bool(&self, n: Node, what: &str, s: &str) -> Result<bool> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" | "1" => Ok(true),
            "no" | "false" | "0" => Ok(false),
            other => Err(self.err(n, format!("{what}: expected yes/no or true/false, found '{other}'"))),
        }
    }

    fn opt_bool(&self, n: Node, name: &str) -> Result<Option<bool>> {
        match n.attribute(name).map(str::trim) {
            None | Some("") => Ok(None),
            Some(s) => self.parse_bool(n, name, s).map(Some),
        }
    }

    fn text_bool(&self, n: Node) -> Result<bool> {
        self.parse_bool(n, n.tag_name().name(), n.text().unwrap_or(""))
    }

    fn value_of(&self, parent: Node, name: &str) -> Result<String> {
        let c = self.req_child(parent, name)?;
        self.req_attr(c, "value")
    }

    fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn warn_ignored(&self, n: Node, attrs: &[&str]) {
        for a in attrs {
            if let Some(v) = n.attribute(*a) {
                log::warn!(
                    "line {}: <{}> attribute {a}=\"{v}\" is not supported and ignored",
                    self.line(n),
                    n.tag_name().name()
                );
            }
        }
    }
}

fn parse_steps(cx: &Ctx, svd: Node) -> Result<StepValueDefinition> {
    let ss = cx.req_child(svd, "startStop")?;
    let start_step: i64 = cx.parse_num(ss, "startStep", &cx.value_of(ss, "startStep")?)?;
    let num_steps: i64 = cx.parse_num(ss, "numSteps", &cx.value_of(ss, "numSteps")?)?;
    let start_time: f64 = cx.parse_num(ss, "startTime", &cx.value_of(ss, "startTime")?)?;
    let delta: f64 = cx.parse_num(ss, "delta", &cx.value_of(ss, "delta")?)?;
    let delete_offset = match cx.child(ss, "deleteOffset") {
        Some(d) => cx.parse_bool(d, "deleteOffset", &cx.req_attr(d, "value")?)?,
        None => false,
    };
    if start_step < 0 {
        return Err(cx.err(ss, "startStep must be >= 0"));
    }
    if num_steps < 1 {
        return Err(cx.err(ss, "numSteps must be >= 1"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(cx.err(ss, "delta must be > 0"));
    }
    if !start_time.is_finite() {
        return Err(cx.err(ss, "startTime must be finite"));
    }
    Ok(StepValueDefinition {
        start_step: start_step as usize,
        num_steps: num_steps as usize,
        start_time,
        delta,
        delete_offset,
    })
}

fn split_ids(s: &str) -> Vec<String> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn region_list(cx: &Ctx, n: Option<Node>) -> Result<Vec<String>> {
    let Some(n) = n else { return Ok(Vec::new()) };
    cx.children(n)
        .filter(|c| c.tag_name().name() == "region")
        .map(|c| cx.req_attr(c, "name"))
        .collect()
}

/// Path of a `<hdf5 fileName>` / `<native fileName>` style file element.
fn file_element(cx: &Ctx, parent: Node) -> Result<PathBuf> {
    let f = cx
        .children(parent)
        .next()
        .ok_or_else(|| cx.err(parent, format!("<{}> requires a file element", parent.tag_name().name())))?;
    Ok(cx.path(&cx.req_attr(f, "fileName")?))
}

fn parse_binding(cx: &Ctx, n: Node, single: bool) -> Result<BindingSpec> {
    let mut b = BindingSpec::default();
    if single {
        let sr = cx.req_child(n, "singleResult")?;
        b.input = cx.req_attr(cx.req_child(sr, "inputQuantity")?, "resultName")?;
        b.output = cx.req_attr(cx.req_child(sr, "outputQuantity")?, "resultName")?;
    }
    if let Some(r) = cx.child(n, "regions") {
        b.source_regions = region_list(cx, cx.child(r, "sourceRegions"))?;
        b.target_regions = region_list(cx, cx.child(r, "targetRegions"))?;
    }
    if let Some(t) = cx.child(n, "targetMesh") {
        b.target_mesh = Some(file_element(cx, t)?);
    }
    Ok(b)
}

fn parse_rbf_settings(cx: &Ctx, n: Node) -> Result<RbfFdSettings> {
    let mut s = RbfFdSettings::default();
    if let Some(r) = cx.child(n, "RBF_Settings") {
        s.epsilon_scaling = cx.opt_num(r, "epsilonScaling")?.unwrap_or(DEFAULT_EPSILON_SCALING);
        s.beta_scaling = cx.opt_num(r, "betaScaling")?;
        s.k_scaling = cx.opt_num(r, "kScaling")?;
        s.log_eps = cx.opt_bool(r, "logEps")?.unwrap_or(false);
        s.stencil_size = cx.opt_num(r, "stencilSize")?;
    }
    Ok(s)
}

fn parse_input(cx: &Ctx, n: Node) -> Result<InputSource> {
    cx.warn_ignored(n, &["gridType"]);
    let f = cx.req_child(n, "inputFile")?;
    let file = cx
        .children(f)
        .next()
        .ok_or_else(|| cx.err(f, "<inputFile> requires an <hdf5>, <native> or <ensight> element"))?;
    match file.tag_name().name() {
        "hdf5" | "native" => Ok(InputSource::Native(cx.path(&cx.req_attr(file, "fileName")?))),
        "ensight" => {
            cx.warn_ignored(file, &["readFVMesh"]);
            let fix_fv_pyramids = cx.opt_bool(file, "fixFVPyramids")?.unwrap_or(false);
            let mut entries = Vec::new();
            if let Some(vl) = cx.child(file, "variableList") {
                for v in cx.children(vl).filter(|c| c.tag_name().name() == "variable") {
                    entries.push((cx.req_attr(v, "CFSVarName")?, cx.req_attr(v, "EnsightVarName")?));
                }
            }
            let variables = VariableMap::new(entries).map_err(|e| cx.err(file, e.to_string()))?;
            Ok(InputSource::Ensight {
                path: cx.path(&cx.req_attr(file, "fileName")?),
                variables,
                fix_fv_pyramids,
            })
        }
        other => Err(cx.err(file, format!("unsupported input file element <{other}>"))),
    }
}

fn parse_output(cx: &Ctx, n: Node, id: &str) -> Result<OutputSpec> {
    let mut path = cx.base.join(format!("{id}.cfsd"));
    if let Some(of) = cx.child(n, "outputFile") {
        if let Some(f) = cx.children(of).next() {
            cx.warn_ignored(f, &["extension", "compressionLevel", "externalFiles"]);
            if let Some(name) = f.attribute("fileName").map(str::trim).filter(|s| !s.is_empty()) {
                path = cx.path(name);
            }
        }
    }
    let results = match cx.child(n, "saveResults") {
        None => None,
        Some(sr) => Some(
            cx.children(sr)
                .filter(|c| c.tag_name().name() == "result")
                .map(|r| {
                    let name = cx.req_attr(r, "resultName")?;
                    let regions = match cx.child(r, "regionList") {
                        Some(rl) => Some(region_list(cx, Some(rl))?),
                        None => None,
                    };
                    Ok(ResultSelection { name, regions })
                })
                .collect::<Result<_>>()?,
        ),
    };
    Ok(OutputSpec { path, results })
}

fn parse_interp(cx: &Ctx, n: Node, ty: &str) -> Result<NodeKind> {
    let binding = parse_binding(cx, n, true)?;
    let method = match ty {
        "FieldInterpolation_Cell2Node" => InterpMethod::Cell2Node,
        "FieldInterpolation_Node2Cell" => InterpMethod::Node2Cell,
        "FieldInterpolation_NearestNeighbour" => {
            let mut p = ShepardParams::default();
            if let Some(s) = cx.child(n, "IntSchemeNN") {
                p.exponent = cx.opt_num(s, "interpolationExponent")?.unwrap_or(p.exponent);
                p.num_neighbours = cx.opt_num(s, "numNeighbours")?.unwrap_or(p.num_neighbours);
                p.global_factor = cx.opt_num(s, "globalFactor")?.unwrap_or(p.global_factor);
            }
            InterpMethod::NearestNeighbour(p)
        }
        "FieldInterpolation_RBF" => {
            let mut p = RbfParams::default();
            if let Some(s) = cx.child(n, "IntSchemeRBF") {
                cx.warn_ignored(s, &["useCGAL4RBF"]);
                p.num_neighbours = cx.opt_num(s, "numNeighbours")?.unwrap_or(p.num_neighbours);
                p.num_neighbours_weight = cx.opt_num(s, "numNeighbours_weight")?.unwrap_or(p.num_neighbours_weight);
                p.global_factor = cx.opt_num(s, "globalFactor")?.unwrap_or(p.global_factor);
                p.exponent = cx.opt_num(s, "interpolationExponent")?.unwrap_or(p.exponent);
            }
            if let Some(u) = cx.child(n, "useElemAsTarget") {
                p.use_elem_as_target = cx.text_bool(u)?;
            }
            if let Some(w) = cx.child(n, "noSlipWall") {
                p.no_slip_wall = Some(cx.req_attr(w, "name")?);
            }
            InterpMethod::Rbf(p)
        }
        "FieldInterpolation_Conservative_CellCentroid" => {
            return Ok(NodeKind::Conservative(ConservativeMethod::CellCentroid, binding))
        }
        "FieldInterpolation_Conservative_CutCell" => {
            return Ok(NodeKind::Conservative(ConservativeMethod::CutCell, binding))
        }
        other => return Err(cx.err(n, format!("unknown interpolation type '{other}'"))),
    };
    Ok(NodeKind::Interp(method, binding))
}

fn parse_aero(cx: &Ctx, n: Node, ty: &str) -> Result<NodeKind> {
    let kind = match ty {
        "AeroacousticSource_LambVector" => AeroKind::LambVector,
        "AeroacousticSource_LighthillSourceTerm" => AeroKind::LighthillSourceTerm,
        "AeroacousticSource_LighthillSourceTermVector" => AeroKind::LighthillSourceTermVector,
        other => return Err(cx.err(n, format!("unknown aeroacoustic type '{other}'"))),
    };
    if let Some(s) = cx.child(n, "sourceSum") {
        if !cx.text_bool(s)? {
            return Err(cx.err(s, "sourceSum=false is unsupported"));
        }
    }
    let rl = cx.req_child(n, "ResultList")?;
    let named = |name: &str| -> Option<String> {
        cx.child(rl, name)
            .and_then(|c| c.attribute("resultName"))
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    };
    let flow = FlowInputs {
        velocity: cx.req_attr(cx.req_child(rl, "velocity")?, "resultName")?,
        vorticity: named("vorticity"),
        density: named("density"),
        output: cx.req_attr(cx.req_child(rl, "outputQuantity")?, "resultName")?,
    };
    Ok(NodeKind::Aero(kind, parse_rbf_settings(cx, n)?, flow, parse_binding(cx, n, false)?))
}

fn parse_filter(cx: &Ctx, n: Node) -> Result<Option<NodeSpec>> {
    let element = n.tag_name().name().to_string();
    if element == "stepValueDefinition" {
        return Ok(None);
    }
    let id = cx.req_attr(n, "id")?;
    let inputs = n.attribute("inputFilterIds").map(split_ids).unwrap_or_default();
    let ty = || cx.req_attr(n, "type");
    let kind = match element.as_str() {
        "meshInput" => NodeKind::Input(parse_input(cx, n)?),
        "meshOutput" => NodeKind::Output(parse_output(cx, n, &id)?),
        "interpolation" => parse_interp(cx, n, &ty()?)?,
        "differentiation" => {
            let op = match ty()?.as_str() {
                "SpaceDifferentiation_Gradient" => DiffOp::Gradient,
                "SpaceDifferentiation_Divergence" => DiffOp::Divergence,
                "SpaceDifferentiation_Curl" => DiffOp::Curl,
                other => return Err(cx.err(n, format!("unknown differentiation type '{other}'"))),
            };
            NodeKind::Diff(op, parse_rbf_settings(cx, n)?, parse_binding(cx, n, true)?)
        }
        "aeroacoustic" => parse_aero(cx, n, &ty()?)?,
        "timeDeriv1" => {
            let b = parse_binding(cx, n, true)?;
            NodeKind::TimeDeriv {
                input: b.input,
                output: b.output,
            }
        }
        other => return Err(cx.err(n, format!("unknown filter element <{other}>"))),
    };
    Ok(Some(NodeSpec {
        id,
        element,
        line: cx.line(n),
        inputs,
        kind,
    }))
}

/// Parses a pipeline document; relative paths resolve against `base_dir`.
pub fn parse_pipeline(text: &str, base_dir: &Path) -> Result<PipelineDoc> {
    let (fixed, count) = quote_bare_attributes(text);
    if count > 0 {
        log::warn!("{count} unquoted attribute value(s) were quoted while reading the document");
    }
    let doc = Document::parse(&fixed).map_err(|e| Error::Xml {
        line: e.pos().row,
        msg: e.to_string(),
    })?;
    let cx = Ctx { doc: &doc, base: base_dir };
    let root = doc.root_element();
    let pipeline = match root.tag_name().name() {
        "pipeline" => root,
        "cfsdat" => {
            let mut ps = cx.children(root).filter(|c| c.tag_name().name() == "pipeline");
            let p = ps.next().ok_or_else(|| cx.err(root, "<cfsdat> requires a <pipeline> element"))?;
            if let Some(extra) = ps.next() {
                return Err(cx.err(extra, "only one <pipeline> is allowed"));
            }
            p
        }
        other => return Err(cx.err(root, format!("unexpected root element <{other}>, expected <cfsdat>"))),
    };
    let svds: Vec<Node> = cx
        .children(pipeline)
        .filter(|c| c.tag_name().name() == "stepValueDefinition")
        .collect();
    let steps = match svds.as_slice() {
        [] => return Err(cx.err(pipeline, "missing <stepValueDefinition>")),
        [one] => parse_steps(&cx, *one)?,
        [_, second, ..] => return Err(cx.err(*second, "more than one <stepValueDefinition>")),
    };
    if let Some(first) = cx.children(pipeline).next() {
        if first.tag_name().name() != "stepValueDefinition" {
            return Err(cx.err(first, "the pipeline must start with <stepValueDefinition>"));
        }
    }
    let mut nodes = Vec::new();
    for c in cx.children(pipeline) {
        if let Some(spec) = parse_filter(&cx, c)? {
            nodes.push(spec);
        }
    }
    Ok(PipelineDoc {
        base_dir: base_dir.to_path_buf(),
        steps,
        nodes,
    })
}
