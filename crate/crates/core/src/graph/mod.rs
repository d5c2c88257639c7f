//! Pragma-augmented program graphs: instruction, variable, constant and
//! pragma nodes joined by control, data, call and pragma edges.

mod encode;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::frontend::{InstructionProgram, KernelIr, PragmaKind, ValueKind};
use crate::space::{DesignConfig, PragmaCandidate};

pub use encode::{encode, option_scalar, EncodedGraph, Vocab, BLOCK_BUCKETS, FLOWS, NODE_TYPES, POSITION_BUCKETS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("pragma candidate `{slot}` refers to unknown loop {loop_id}")]
    UnknownLoop { slot: String, loop_id: usize },
    #[error("config has no value for pragma slot `{0}`")]
    MissingSlot(String),
    #[error("malformed graph JSON: {0}")]
    Json(String),
}

pub const NODE_INSTRUCTION: u8 = 0;
pub const NODE_VARIABLE: u8 = 1;
pub const NODE_CONSTANT: u8 = 2;
pub const NODE_PRAGMA: u8 = 3;

pub const FLOW_CONTROL: u8 = 0;
pub const FLOW_DATA: u8 = 1;
pub const FLOW_CALL: u8 = 2;
pub const FLOW_PRAGMA: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub block: usize,
    pub full_text: String,
    pub key_text: String,
    pub function: usize,
    #[serde(rename = "type")]
    pub node_type: u8,
    /// Placeholder name, pragma nodes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub flow: u8,
    pub position: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgGraph {
    pub kernel: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphAttrs {
    kernel: String,
}

/// networkx-style node-link document.
#[derive(Serialize, Deserialize)]
struct NodeLink {
    directed: bool,
    multigraph: bool,
    graph: GraphAttrs,
    nodes: Vec<Node>,
    links: Vec<Edge>,
}

impl ProgGraph {
    pub fn to_json(&self) -> String {
        let doc = NodeLink {
            directed: true,
            multigraph: true,
            graph: GraphAttrs { kernel: self.kernel.clone() },
            nodes: self.nodes.clone(),
            links: self.edges.clone(),
        };
        serde_json::to_string(&doc).expect("graph serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: NodeLink = serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        let g = ProgGraph { kernel: doc.graph.kernel, nodes: doc.nodes, edges: doc.links };
        for (i, n) in g.nodes.iter().enumerate() {
            if n.id != i {
                return Err(GraphError::Json(format!("node {i} has id {}", n.id)));
            }
        }
        if let Some(e) = g.edges.iter().find(|e| e.source >= g.nodes.len() || e.target >= g.nodes.len()) {
            return Err(GraphError::Json(format!("edge {} -> {} out of range", e.source, e.target)));
        }
        Ok(g)
    }

    /// SHA-256 of the JSON serialisation, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn pragma_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.node_type == NODE_PRAGMA)
    }
}

fn placeholder_text(kind: PragmaKind, slot: &str) -> String {
    match kind {
        PragmaKind::Pipeline => format!("#pragma ACCEL PIPELINE auto{{{slot}}}"),
        k => format!("#pragma ACCEL {} factor=auto{{{slot}}}", k.keyword()),
    }
}

/// Builds the graph of a lowered kernel with one pragma node per candidate,
/// each wired to the `icmp` of its loop.
pub fn build_graph(
    ir: &KernelIr,
    prog: &InstructionProgram,
    candidates: &[PragmaCandidate],
) -> Result<ProgGraph, GraphError> {
    let mut nodes = Vec::new();
    for inst in &prog.instructions {
        nodes.push(Node {
            id: nodes.len(),
            block: inst.block,
            full_text: inst.text.clone(),
            key_text: inst.opcode.name().to_string(),
            function: inst.function,
            node_type: NODE_INSTRUCTION,
            slot: None,
        });
    }
    let value_base = nodes.len();
    for v in &prog.values {
        nodes.push(Node {
            id: nodes.len(),
            block: v.block,
            full_text: v.text.clone(),
            key_text: v.key.clone(),
            function: v.function,
            node_type: match v.kind {
                ValueKind::Variable => NODE_VARIABLE,
                ValueKind::Constant => NODE_CONSTANT,
            },
            slot: None,
        });
    }

    let mut edges: Vec<(usize, usize, u8)> = Vec::new();
    edges.extend(prog.control.iter().map(|&(a, b)| (a, b, FLOW_CONTROL)));
    for inst in &prog.instructions {
        for &v in &inst.operands {
            edges.push((value_base + v, inst.id, FLOW_DATA));
        }
        if let Some(r) = inst.result {
            edges.push((inst.id, value_base + r, FLOW_DATA));
        }
    }
    edges.extend(prog.calls.iter().map(|&(a, b)| (a, b, FLOW_CALL)));

    let mut incoming = vec![[0u32; 3]; nodes.len() + candidates.len()];
    let mut out: Vec<Edge> = edges
        .into_iter()
        .map(|(source, target, flow)| {
            let slot = &mut incoming[target][flow as usize];
            let position = *slot;
            *slot += 1;
            Edge { source, target, flow, position }
        })
        .collect();

    for c in candidates {
        let icmp = *prog
            .loop_icmp
            .get(c.loop_id)
            .filter(|_| c.loop_id < ir.loops.len())
            .ok_or(GraphError::UnknownLoop { slot: c.slot.clone(), loop_id: c.loop_id })?;
        let id = nodes.len();
        nodes.push(Node {
            id,
            block: prog.instructions[icmp].block,
            full_text: placeholder_text(c.kind, &c.slot),
            key_text: c.kind.keyword().to_string(),
            function: prog.instructions[icmp].function,
            node_type: NODE_PRAGMA,
            slot: Some(c.slot.clone()),
        });
        out.push(Edge { source: id, target: icmp, flow: FLOW_PRAGMA, position: c.kind.edge_position() });
    }
    Ok(ProgGraph { kernel: ir.name.clone(), nodes, edges: out })
}

/// Replaces every `auto{NAME}` of a pragma node by the configured option.
pub fn instantiate_config(g: &ProgGraph, cfg: &DesignConfig) -> Result<ProgGraph, GraphError> {
    let mut out = g.clone();
    for n in out.nodes.iter_mut().filter(|n| n.node_type == NODE_PRAGMA) {
        let Some(slot) = &n.slot else { continue };
        let v = cfg.get(slot).ok_or_else(|| GraphError::MissingSlot(slot.clone()))?;
        n.full_text = n.full_text.replace(&format!("auto{{{slot}}}"), &v.to_string());
    }
    Ok(out)
}

/// Option text of a pragma node (`cg`, `4`), or `None` while it still holds a
/// placeholder.
pub fn pragma_option(node: &Node) -> Option<&str> {
    if node.node_type != NODE_PRAGMA {
        return None;
    }
    let last = node.full_text.split_whitespace().last()?;
    let opt = last.strip_prefix("factor=").unwrap_or(last);
    (!opt.starts_with("auto{")).then_some(opt)
}
