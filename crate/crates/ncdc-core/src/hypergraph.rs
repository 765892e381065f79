//! Terms as hypergraphs: nodes are lone arrays, edges carry root payloads,
//! copies and deletions are explicit edges. Comes with an interface-anchored
//! canonical form for isomorphism checking and a layered extraction back to
//! terms.

use std::collections::HashMap;

use crate::arraybr::{ArrayObject, RootOp};
use crate::error::{Error, Result};
use crate::remapping::Remapping;
use crate::tensor::TensorValue;
use crate::term::Term;
use crate::uid::Uid;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub enum EdgeLabel {
    Op { uid: Uid, op: RootOp },
    Copy,
    Delete,
    Element { values: Vec<TensorValue> },
}

impl EdgeLabel {
    pub fn is_deterministic(&self) -> bool {
        match self {
            EdgeLabel::Op { op, .. } => op.is_deterministic(),
            EdgeLabel::Copy | EdgeLabel::Delete | EdgeLabel::Element { .. } => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub label: EdgeLabel,
    /// Block annotations, outermost first, with optional repeat counts.
    pub tags: Vec<(String, Option<u64>)>,
    pub sources: Vec<NodeId>,
    pub targets: Vec<NodeId>,
}

/// Removed nodes and edges stay as tombstones; canonicalization compacts.
#[derive(Clone, Debug, Default)]
pub struct Hypergraph {
    pub nodes: Vec<Option<ArrayObject>>,
    pub edges: Vec<Option<Edge>>,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

impl Hypergraph {
    pub fn add_node(&mut self, obj: ArrayObject) -> NodeId {
        self.nodes.push(Some(obj));
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, edge: Edge) -> EdgeId {
        self.edges.push(Some(edge));
        self.edges.len() - 1
    }

    pub fn node(&self, n: NodeId) -> &ArrayObject {
        self.nodes[n].as_ref().expect("live node")
    }

    pub fn live_edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|e| (i, e)))
    }

    pub fn producer(&self, n: NodeId) -> Option<EdgeId> {
        self.live_edges().find(|(_, e)| e.targets.contains(&n)).map(|(i, _)| i)
    }

    pub fn consumer(&self, n: NodeId) -> Option<EdgeId> {
        self.live_edges().find(|(_, e)| e.sources.contains(&n)).map(|(i, _)| i)
    }

    pub fn remove_edge(&mut self, e: EdgeId) -> Edge {
        self.edges[e].take().expect("live edge")
    }

    pub fn remove_node(&mut self, n: NodeId) {
        self.nodes[n] = None;
    }

    /// Redirects every occurrence of `from` (edge ports and interface) to
    /// `to` and drops `from`.
    pub fn alias(&mut self, from: NodeId, to: NodeId) {
        for e in self.edges.iter_mut().flatten() {
            for s in e.sources.iter_mut().chain(e.targets.iter_mut()) {
                if *s == from {
                    *s = to;
                }
            }
        }
        for s in self.inputs.iter_mut().chain(self.outputs.iter_mut()) {
            if *s == from {
                *s = to;
            }
        }
        self.remove_node(from);
    }

    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, e) in self.live_edges() {
            for &n in e.sources.iter().chain(&e.targets) {
                if self.nodes.get(n).map(|o| o.is_none()).unwrap_or(true) {
                    out.push(format!("edge {i} touches a removed node {n}"));
                }
            }
        }
        for n in 0..self.nodes.len() {
            if self.nodes[n].is_none() {
                continue;
            }
            let producers = self
                .live_edges()
                .map(|(_, e)| e.targets.iter().filter(|&&t| t == n).count())
                .sum::<usize>()
                + self.inputs.iter().filter(|&&t| t == n).count();
            let consumers = self
                .live_edges()
                .map(|(_, e)| e.sources.iter().filter(|&&t| t == n).count())
                .sum::<usize>()
                + self.outputs.iter().filter(|&&t| t == n).count();
            if producers != 1 {
                out.push(format!("node {n} has {producers} producing ports"));
            }
            if consumers != 1 {
                out.push(format!("node {n} has {consumers} consuming ports"));
            }
        }
        out
    }
}

pub fn to_hypergraph(t: &Term) -> Result<Hypergraph> {
    let mut g = Hypergraph::default();
    let inputs: Vec<NodeId> = t.dom()?.into_iter().map(|o| g.add_node(o)).collect();
    g.inputs = inputs.clone();
    let mut tags = Vec::new();
    g.outputs = convert(&mut g, t, inputs, &mut tags)?;
    Ok(g)
}

fn convert(
    g: &mut Hypergraph,
    t: &Term,
    frontier: Vec<NodeId>,
    tags: &mut Vec<(String, Option<u64>)>,
) -> Result<Vec<NodeId>> {
    match t {
        Term::Composed(parts) => {
            let mut cur = frontier;
            for p in parts {
                cur = convert(g, p, cur, tags)?;
            }
            Ok(cur)
        }
        Term::Product(parts) => {
            let mut out = Vec::new();
            let mut off = 0;
            for p in parts {
                let n = p.dom()?.len();
                out.extend(convert(g, p, frontier[off..off + n].to_vec(), tags)?);
                off += n;
            }
            Ok(out)
        }
        Term::Block { tag, repeat, body } => {
            tags.push((tag.clone(), *repeat));
            let out = convert(g, body, frontier, tags);
            tags.pop();
            out
        }
        Term::Element { values, cod } => {
            let targets: Vec<NodeId> = cod.iter().map(|o| g.add_node(o.clone())).collect();
            g.add_edge(Edge {
                label: EdgeLabel::Element { values: values.clone() },
                tags: tags.clone(),
                sources: Vec::new(),
                targets: targets.clone(),
            });
            Ok(targets)
        }
        Term::Root { uid, op } => {
            let targets: Vec<NodeId> = op.cod()?.into_iter().map(|o| g.add_node(o)).collect();
            g.add_edge(Edge {
                label: EdgeLabel::Op { uid: *uid, op: op.clone() },
                tags: tags.clone(),
                sources: frontier,
                targets: targets.clone(),
            });
            Ok(targets)
        }
        Term::Rearrangement { mapping, dom_family } => {
            let mut out: Vec<Option<NodeId>> = vec![None; mapping.dom_size()];
            for (i, &node) in frontier.iter().enumerate() {
                let uses: Vec<usize> = mapping
                    .targets()
                    .iter()
                    .enumerate()
                    .filter(|(_, &src)| src == i)
                    .map(|(j, _)| j)
                    .collect();
                match uses.len() {
                    0 => {
                        g.add_edge(Edge {
                            label: EdgeLabel::Delete,
                            tags: tags.clone(),
                            sources: vec![node],
                            targets: Vec::new(),
                        });
                    }
                    1 => out[uses[0]] = Some(node),
                    _ => {
                        let fresh: Vec<NodeId> =
                            uses.iter().map(|_| g.add_node(dom_family[i].clone())).collect();
                        g.add_edge(Edge {
                            label: EdgeLabel::Copy,
                            tags: tags.clone(),
                            sources: vec![node],
                            targets: fresh.clone(),
                        });
                        for (j, n) in uses.into_iter().zip(fresh) {
                            out[j] = Some(n);
                        }
                    }
                }
            }
            Ok(out.into_iter().map(|n| n.expect("every slot wired")).collect())
        }
    }
}

/// Interface-anchored traversal: nodes numbered from inputs then outputs,
/// following consumer then producer edges; edges numbered on first contact.
/// Returns (node order, edge order).
fn discovery_order(g: &Hypergraph) -> (Vec<NodeId>, Vec<EdgeId>) {
    let mut node_no: HashMap<NodeId, usize> = HashMap::new();
    let mut node_order = Vec::new();
    let mut edge_order = Vec::new();
    let mut edge_seen = vec![false; g.edges.len()];
    let mut queue = std::collections::VecDeque::new();

    let push_node = |n: NodeId,
                         node_no: &mut HashMap<NodeId, usize>,
                         node_order: &mut Vec<NodeId>,
                         queue: &mut std::collections::VecDeque<NodeId>| {
        if !node_no.contains_key(&n) {
            node_no.insert(n, node_order.len());
            node_order.push(n);
            queue.push_back(n);
        }
    };

    for &n in g.inputs.iter().chain(&g.outputs) {
        push_node(n, &mut node_no, &mut node_order, &mut queue);
    }
    while let Some(n) = queue.pop_front() {
        let incident = [g.consumer(n), g.producer(n)];
        for e in incident.into_iter().flatten() {
            if edge_seen[e] {
                continue;
            }
            edge_seen[e] = true;
            edge_order.push(e);
            let edge = g.edges[e].as_ref().unwrap();
            for &m in edge.sources.iter().chain(&edge.targets) {
                push_node(m, &mut node_no, &mut node_order, &mut queue);
            }
        }
    }
    (node_order, edge_order)
}

/// Serializes the canonicalized graph with axis uids replaced by
/// first-appearance numbers and display names dropped, so two graphs are
/// isomorphic exactly when their keys are equal. Sizes, dtypes, stride
/// matrices, weave masks and parameter uids all stay significant.
pub fn canonical_key(g: &Hypergraph) -> String {
    let (node_order, edge_order) = discovery_order(g);
    let node_no: HashMap<NodeId, usize> =
        node_order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut axis_no: HashMap<Uid, usize> = HashMap::new();
    let mut out = String::new();
    let push_axis = |a: &crate::stride::Axis, out: &mut String, axis_no: &mut HashMap<Uid, usize>| {
        let next = axis_no.len();
        let no = *axis_no.entry(a.uid).or_insert(next);
        match a.size {
            Some(s) => out.push_str(&format!("a{no}:{s};")),
            None => out.push_str(&format!("a{no}:free;")),
        }
    };
    let push_obj = |o: &ArrayObject, out: &mut String, axis_no: &mut HashMap<Uid, usize>| {
        out.push_str(&format!("[{}|", o.dtype.describe()));
        for a in &o.shape.0 {
            push_axis(a, out, axis_no);
        }
        out.push(']');
    };
    let push_map = |m: &crate::stride::AffineStrideMap, out: &mut String, axis_no: &mut HashMap<Uid, usize>| {
        out.push_str("map(");
        for a in &m.dom.0 {
            push_axis(a, out, axis_no);
        }
        out.push_str("->");
        for a in &m.cod.0 {
            push_axis(a, out, axis_no);
        }
        out.push_str(&format!("L{:?}v{:?})", m.lambda, m.offset));
    };

    for &n in &node_order {
        push_obj(g.node(n), &mut out, &mut axis_no);
    }
    out.push('/');
    for &e in &edge_order {
        let edge = g.edges[e].as_ref().unwrap();
        match &edge.label {
            EdgeLabel::Copy => out.push_str("copy"),
            EdgeLabel::Delete => out.push_str("del"),
            EdgeLabel::Element { values } => out.push_str(&format!("elem{values:?}")),
            EdgeLabel::Op { op, .. } => match op {
                RootOp::Reindexing { dtype, map } => {
                    out.push_str(&format!("re({}", dtype.describe()));
                    push_map(map, &mut out, &mut axis_no);
                    out.push(')');
                }
                RootOp::Broadcast(b) => {
                    out.push_str(&format!("bc({:?}|deg", b.base));
                    for a in &b.degree.0 {
                        push_axis(a, &mut out, &mut axis_no);
                    }
                    for r in &b.reindexings {
                        push_map(r, &mut out, &mut axis_no);
                    }
                    for w in b.input_weaves.iter().chain(&b.output_weaves) {
                        out.push_str(&format!("w{:?}|{}|", w.mask, w.dtype.describe()));
                        for a in &w.targets {
                            push_axis(a, &mut out, &mut axis_no);
                        }
                    }
                    out.push(')');
                }
            },
        }
        out.push_str(&format!("{:?}", edge.tags));
        out.push('<');
        for &s in &edge.sources {
            out.push_str(&format!("{},", node_no[&s]));
        }
        out.push('>');
        for &t in &edge.targets {
            out.push_str(&format!("{},", node_no[&t]));
        }
        out.push(';');
    }
    out.push('/');
    for &n in &g.inputs {
        out.push_str(&format!("i{},", node_no[&n]));
    }
    for &n in &g.outputs {
        out.push_str(&format!("o{},", node_no[&n]));
    }
    out
}

pub fn iso_check(a: &Hypergraph, b: &Hypergraph) -> bool {
    canonical_key(a) == canonical_key(b)
}

fn edge_term(edge: &Edge, sources: &[ArrayObject]) -> Result<Term> {
    let mut t = match &edge.label {
        EdgeLabel::Op { uid, op } => Term::Root { uid: *uid, op: op.clone() },
        EdgeLabel::Copy => Term::rearrangement(
            Remapping::new(vec![0; edge.targets.len()], 1)?,
            sources.to_vec(),
        )?,
        EdgeLabel::Delete => {
            Term::rearrangement(Remapping::new(Vec::new(), 1)?, sources.to_vec())?
        }
        EdgeLabel::Element { .. } => {
            // codomain objects are reconstructed by the caller
            return Err(Error::Extraction("element edges handled separately".into()));
        }
    };
    for (tag, repeat) in edge.tags.iter().rev() {
        t = Term::block(tag, *repeat, t);
    }
    Ok(t)
}

/// Layered extraction: fires every ready edge per round, with a permutation
/// rearrangement routing frontier nodes to edge inputs and an identity
/// passthrough for the rest.
pub fn extract(g: &Hypergraph) -> Result<Term> {
    let mut frontier: Vec<NodeId> = g.inputs.clone();
    let mut fired = vec![false; g.edges.len()];
    let mut layers: Vec<Term> = Vec::new();

    loop {
        let remaining: Vec<EdgeId> = g
            .live_edges()
            .filter(|(i, _)| !fired[*i])
            .map(|(i, _)| i)
            .collect();
        if remaining.is_empty() {
            break;
        }
        let ready: Vec<EdgeId> = remaining
            .iter()
            .copied()
            .filter(|&i| {
                g.edges[i].as_ref().unwrap().sources.iter().all(|s| frontier.contains(s))
            })
            .collect();
        if ready.is_empty() {
            return Err(Error::Extraction(
                "graph has a cycle: no edge is ready".into(),
            ));
        }

        let mut used = vec![false; frontier.len()];
        let mut perm_targets: Vec<usize> = Vec::new();
        for &e in &ready {
            for s in &g.edges[e].as_ref().unwrap().sources {
                let pos = frontier
                    .iter()
                    .enumerate()
                    .position(|(k, n)| n == s && !used[k])
                    .ok_or_else(|| Error::Extraction("source consumed twice".into()))?;
                used[pos] = true;
                perm_targets.push(pos);
            }
        }
        let passthrough: Vec<usize> =
            (0..frontier.len()).filter(|&k| !used[k]).collect();
        perm_targets.extend(&passthrough);
        let frontier_objs: Vec<ArrayObject> =
            frontier.iter().map(|&n| g.node(n).clone()).collect();
        let perm = Term::rearrangement(
            Remapping::new(perm_targets, frontier.len())?,
            frontier_objs.clone(),
        )?;

        let mut parts: Vec<Term> = Vec::new();
        let mut next_frontier: Vec<NodeId> = Vec::new();
        for &e in &ready {
            fired[e] = true;
            let edge = g.edges[e].as_ref().unwrap();
            let srcs: Vec<ArrayObject> =
                edge.sources.iter().map(|&n| g.node(n).clone()).collect();
            let t = if let EdgeLabel::Element { values } = &edge.label {
                let cod: Vec<ArrayObject> =
                    edge.targets.iter().map(|&n| g.node(n).clone()).collect();
                let mut t = Term::element(values.clone(), cod)?;
                for (tag, repeat) in edge.tags.iter().rev() {
                    t = Term::block(tag, *repeat, t);
                }
                t
            } else {
                edge_term(edge, &srcs)?
            };
            parts.push(t);
            next_frontier.extend(&edge.targets);
        }
        if !passthrough.is_empty() {
            let objs: Vec<ArrayObject> =
                passthrough.iter().map(|&k| g.node(frontier[k]).clone()).collect();
            parts.push(Term::identity(objs));
            next_frontier.extend(passthrough.iter().map(|&k| frontier[k]));
        }
        layers.push(if perm.is_identity() {
            Term::product(parts)
        } else {
            Term::compose(perm, Term::product(parts))?
        });
        frontier = next_frontier;
    }

    // route the final frontier onto the output order
    let mut used = vec![false; frontier.len()];
    let mut final_targets = Vec::new();
    for out in &g.outputs {
        let pos = frontier
            .iter()
            .enumerate()
            .position(|(k, n)| n == out && !used[k])
            .ok_or_else(|| Error::Extraction("an output node was never produced".into()))?;
        used[pos] = true;
        final_targets.push(pos);
    }
    if used.iter().any(|u| !u) {
        return Err(Error::Extraction("a produced node is neither consumed nor output".into()));
    }
    let frontier_objs: Vec<ArrayObject> = frontier.iter().map(|&n| g.node(n).clone()).collect();
    layers.push(Term::rearrangement(
        Remapping::new(final_targets, frontier.len())?,
        frontier_objs,
    )?);
    Term::compose_all(layers)
}

pub fn to_json(g: &Hypergraph) -> serde_json::Value {
    use serde_json::{json, Value};
    let (node_order, edge_order) = discovery_order(g);
    let node_no: HashMap<NodeId, usize> =
        node_order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let nodes: Vec<Value> = node_order
        .iter()
        .map(|&n| {
            let o = g.node(n);
            json!({
                "dtype": o.dtype.describe(),
                "axes": o.shape.0.iter().map(|a| json!({
                    "uid": a.uid.to_hex(),
                    "display": a.name,
                    "size": a.size,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let edges: Vec<Value> = edge_order
        .iter()
        .map(|&e| {
            let edge = g.edges[e].as_ref().unwrap();
            let label = match &edge.label {
                EdgeLabel::Op { uid, op } => json!({"kind": "op", "uid": uid.to_hex(), "name": op.name()}),
                EdgeLabel::Copy => json!({"kind": "copy"}),
                EdgeLabel::Delete => json!({"kind": "delete"}),
                EdgeLabel::Element { .. } => json!({"kind": "element"}),
            };
            json!({
                "label": label,
                "tags": edge.tags.iter().map(|(t, r)| json!({"tag": t, "repeat": r})).collect::<Vec<_>>(),
                "sources": edge.sources.iter().map(|n| node_no[n]).collect::<Vec<_>>(),
                "targets": edge.targets.iter().map(|n| node_no[n]).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "nodes": nodes,
        "edges": edges,
        "inputs": g.inputs.iter().map(|n| node_no[n]).collect::<Vec<_>>(),
        "outputs": g.outputs.iter().map(|n| node_no[n]).collect::<Vec<_>>(),
    })
}
