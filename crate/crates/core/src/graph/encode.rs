use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{pragma_option, ProgGraph, NODE_PRAGMA};
use crate::autodiff::Tensor;
use crate::frontend::PragmaKind;

pub const NODE_TYPES: usize = 4;
pub const BLOCK_BUCKETS: usize = 32;
pub const FLOWS: usize = 4;
pub const POSITION_BUCKETS: usize = 8;

/// One-hot dictionaries for node and edge attributes. Every dictionary is
/// sorted, so the vocabulary depends only on the set of observed values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub key_text: Vec<String>,
    pub functions: Vec<usize>,
    pub pipeline_options: Vec<String>,
    pub parallel_options: Vec<String>,
    pub tile_options: Vec<String>,
    /// Adds one numeric column holding the pragma value (factor / 32, or
    /// 0 / 0.5 / 1 for off / cg / fg).
    #[serde(default)]
    pub scalar_channel: bool,
}

fn insert_sorted<T: Ord + Clone>(v: &mut Vec<T>, x: &T) {
    if let Err(i) = v.binary_search(x) {
        v.insert(i, x.clone());
    }
}

impl Vocab {
    pub fn build(graphs: &[&ProgGraph]) -> Self {
        let mut v = Vocab::default();
        for g in graphs {
            v.observe(g);
        }
        v
    }

    pub fn observe(&mut self, g: &ProgGraph) {
        for n in &g.nodes {
            insert_sorted(&mut self.key_text, &n.key_text);
            insert_sorted(&mut self.functions, &n.function);
            if let (Some(kind), Some(opt)) = (PragmaKind::from_keyword(&n.key_text), pragma_option(n)) {
                self.observe_option(kind, opt);
            }
        }
    }

    pub fn observe_option(&mut self, kind: PragmaKind, opt: &str) {
        let dict = match kind {
            PragmaKind::Pipeline => &mut self.pipeline_options,
            PragmaKind::Parallel => &mut self.parallel_options,
            PragmaKind::Tile => &mut self.tile_options,
        };
        insert_sorted(dict, &opt.to_string());
    }

    fn option_offset(&self, kind: PragmaKind) -> usize {
        let base = NODE_TYPES + self.key_text.len() + BLOCK_BUCKETS + self.functions.len();
        match kind {
            PragmaKind::Pipeline => base,
            PragmaKind::Parallel => base + self.pipeline_options.len(),
            PragmaKind::Tile => base + self.pipeline_options.len() + self.parallel_options.len(),
        }
    }

    fn options(&self, kind: PragmaKind) -> &[String] {
        match kind {
            PragmaKind::Pipeline => &self.pipeline_options,
            PragmaKind::Parallel => &self.parallel_options,
            PragmaKind::Tile => &self.tile_options,
        }
    }

    /// Node feature width F₀.
    pub fn node_dim(&self) -> usize {
        NODE_TYPES
            + self.key_text.len()
            + BLOCK_BUCKETS
            + self.functions.len()
            + self.pipeline_options.len()
            + self.parallel_options.len()
            + self.tile_options.len()
            + usize::from(self.scalar_channel)
    }

    /// Edge feature width E₀.
    pub fn edge_dim(&self) -> usize {
        FLOWS + POSITION_BUCKETS
    }

    /// Column of a pragma option, `None` when out of vocabulary.
    pub fn option_column(&self, kind: PragmaKind, opt: &str) -> Option<usize> {
        let i = self.options(kind).binary_search_by(|o| o.as_str().cmp(opt)).ok()?;
        Some(self.option_offset(kind) + i)
    }

    /// Columns holding pragma options (and the scalar channel, if any).
    pub fn option_columns(&self) -> std::ops::Range<usize> {
        self.option_offset(PragmaKind::Pipeline)..self.node_dim()
    }
}

/// Numeric value of a pragma option used by the scalar channel and by the
/// pragma-only baseline.
pub fn option_scalar(kind: PragmaKind, opt: &str) -> f64 {
    match kind {
        PragmaKind::Pipeline => match opt {
            "cg" => 0.5,
            "fg" => 1.0,
            _ => 0.0,
        },
        _ => opt.parse::<f64>().map_or(0.0, |f| f / 32.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedGraph {
    pub kernel: String,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
    /// Rows of pragma nodes, in node order.
    pub pragma_rows: Vec<usize>,
    /// Per pragma node: its option as a number (see [`option_scalar`]).
    pub pragma_values: Vec<f64>,
}

impl EncodedGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_features.rows
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// One-hot encodes a graph; values outside the vocabulary give zero blocks.
pub fn encode(g: &ProgGraph, v: &Vocab) -> EncodedGraph {
    let f0 = v.node_dim();
    let mut x = Tensor::zeros(g.nodes.len(), f0);
    let mut pragma_rows = Vec::new();
    let mut pragma_values = Vec::new();
    let key_off = NODE_TYPES;
    let block_off = key_off + v.key_text.len();
    let fn_off = block_off + BLOCK_BUCKETS;
    for (i, n) in g.nodes.iter().enumerate() {
        let row = x.row_mut(i);
        if (n.node_type as usize) < NODE_TYPES {
            row[n.node_type as usize] = 1.0;
        }
        if let Ok(k) = v.key_text.binary_search(&n.key_text) {
            row[key_off + k] = 1.0;
        }
        row[block_off + n.block.min(BLOCK_BUCKETS - 1)] = 1.0;
        if let Ok(k) = v.functions.binary_search(&n.function) {
            row[fn_off + k] = 1.0;
        }
        if n.node_type == NODE_PRAGMA {
            pragma_rows.push(i);
            let kind = PragmaKind::from_keyword(&n.key_text);
            let opt = pragma_option(n);
            let mut value = 0.0;
            if let (Some(kind), Some(opt)) = (kind, opt) {
                if let Some(c) = v.option_column(kind, opt) {
                    row[c] = 1.0;
                }
                value = option_scalar(kind, opt);
            }
            if v.scalar_channel {
                row[f0 - 1] = value;
            }
            pragma_values.push(value);
        }
    }
    let mut e = Tensor::zeros(g.edges.len(), v.edge_dim());
    for (k, ed) in g.edges.iter().enumerate() {
        let row = e.row_mut(k);
        if (ed.flow as usize) < FLOWS {
            row[ed.flow as usize] = 1.0;
        }
        row[FLOWS + (ed.position as usize).min(POSITION_BUCKETS - 1)] = 1.0;
    }
    EncodedGraph {
        kernel: g.kernel.clone(),
        node_features: x,
        edge_features: e,
        src: Arc::new(g.edges.iter().map(|e| e.source).collect()),
        dst: Arc::new(g.edges.iter().map(|e| e.target).collect()),
        pragma_rows,
        pragma_values,
    }
}
