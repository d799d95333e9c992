//! Structural validation of the filter DAG and its execution order.

use std::collections::{BTreeSet, HashMap};

use super::xml::NodeSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Graph {
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    /// Topological order; ties are broken by document order.
    pub order: Vec<usize>,
}

fn xml_err(node: &NodeSpec, msg: impl Into<String>) -> Error {
    Error::Xml {
        line: node.line,
        msg: msg.into(),
    }
}

fn find_cycle(nodes: &[NodeSpec], succs: &[Vec<usize>], remaining: &BTreeSet<usize>) -> String {
    // Walk successors inside the unresolved set until a node repeats.
    let start = *remaining.iter().next().expect("non-empty");
    let mut path = vec![start];
    let mut seen: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut cur = start;
    loop {
        let next = *succs[cur]
            .iter()
            .find(|s| remaining.contains(s))
            .expect("every unresolved node has an unresolved successor");
        if let Some(&pos) = seen.get(&next) {
            let mut names: Vec<&str> = path[pos..].iter().map(|&i| nodes[i].id.as_str()).collect();
            names.push(&nodes[next].id);
            return names.join(" -> ");
        }
        seen.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}

/// Validates the filter graph and orders it for execution.
pub fn build_graph(nodes: &[NodeSpec]) -> Result<Graph> {
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if let Some(&first) = by_id.get(n.id.as_str()) {
            return Err(xml_err(
                n,
                format!("duplicate filter id '{}' (first declared on line {})", n.id, nodes[first].line),
            ));
        }
        by_id.insert(&n.id, i);
    }
    if !nodes.iter().any(|n| n.kind.is_input()) {
        return Err(Error::validation("the pipeline has no <meshInput>"));
    }
    if !nodes.iter().any(|n| n.kind.is_output()) {
        return Err(Error::validation("the pipeline has no <meshOutput>"));
    }

    let mut preds = vec![Vec::new(); nodes.len()];
    let mut succs = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if n.kind.is_input() {
            if !n.inputs.is_empty() {
                return Err(xml_err(n, format!("meshInput '{}' must not have inputFilterIds", n.id)));
            }
            continue;
        }
        if n.inputs.is_empty() {
            return Err(xml_err(n, format!("filter '{}' has no inputFilterIds", n.id)));
        }
        for r in &n.inputs {
            let &p = by_id
                .get(r.as_str())
                .ok_or_else(|| xml_err(n, format!("filter '{}' references unknown filter '{r}'", n.id)))?;
            if preds[i].contains(&p) {
                continue;
            }
            if nodes[p].kind.is_output() {
                return Err(xml_err(
                    n,
                    format!("filter '{}' reads from meshOutput '{r}'; outputs must be terminal", n.id),
                ));
            }
            preds[i].push(p);
            succs[p].push(i);
        }
    }

    let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(nodes.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &s in &succs[i] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() < nodes.len() {
        let done: BTreeSet<usize> = order.iter().copied().collect();
        let remaining: BTreeSet<usize> = (0..nodes.len()).filter(|i| !done.contains(i)).collect();
        return Err(Error::validation(format!(
            "the pipeline contains a cycle: {}",
            find_cycle(nodes, &succs, &remaining)
        )));
    }

    // Every source node is a meshInput, so everything is reachable from one.
    for (i, n) in nodes.iter().enumerate() {
        if !n.kind.is_output() && succs[i].is_empty() {
            log::warn!("filter '{}' feeds no other filter; its results are never written", n.id);
        }
    }
    Ok(Graph { preds, succs, order })
}
