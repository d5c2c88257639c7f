//! Everything derived from one kernel source that the pipeline stages share.

use crate::frontend::{lower_kernel, parse_kernel, InstructionProgram, KernelIr, KernelSource, ParseError};
use crate::graph::{self, encode, option_scalar, EncodedGraph, GraphError, ProgGraph, Vocab};
use crate::oracle::{Oracle, OracleConfig};
use crate::space::{DesignConfig, DesignSpace, Point};

#[derive(Debug, Clone)]
pub struct KernelContext {
    pub source: KernelSource,
    pub ir: KernelIr,
    pub program: InstructionProgram,
    pub space: DesignSpace,
    pub oracle: Oracle,
    /// Graph with placeholder pragma nodes.
    pub graph: ProgGraph,
}

impl KernelContext {
    pub fn new(source: KernelSource, factor_cap: u64, oc: OracleConfig) -> Result<Self, ParseError> {
        let ir = parse_kernel(&source)?;
        let program = lower_kernel(&ir);
        let space = DesignSpace::new(&ir, factor_cap);
        let graph = graph::build_graph(&ir, &program, &space.candidates).expect("candidates come from this kernel");
        let oracle = Oracle::new(&ir, space.clone(), oc);
        Ok(KernelContext { source, ir, program, space, oracle, graph })
    }

    pub fn name(&self) -> &str {
        &self.ir.name
    }

    pub fn instantiate(&self, cfg: &DesignConfig) -> Result<ProgGraph, GraphError> {
        graph::instantiate_config(&self.graph, cfg)
    }

    pub fn instantiate_point(&self, p: &[u8]) -> ProgGraph {
        self.instantiate(&self.space.to_config(p)).expect("point covers every slot")
    }

    /// Encoded placeholder graph; pragma option columns are empty.
    pub fn encode_template(&self, vocab: &Vocab) -> EncodedGraph {
        encode(&self.graph, vocab)
    }

    /// Fills a template's pragma rows for `p`. Equal to encoding the
    /// instantiated graph from scratch.
    pub fn encode_point(&self, template: &EncodedGraph, vocab: &Vocab, p: &[u8]) -> EncodedGraph {
        let mut g = template.clone();
        let cols = vocab.option_columns();
        for (k, &row) in template.pragma_rows.iter().enumerate() {
            let cand = &self.space.candidates[k];
            let opt = cand.options[p[k] as usize].to_string();
            let r = g.node_features.row_mut(row);
            r[cols.clone()].iter_mut().for_each(|x| *x = 0.0);
            if let Some(c) = vocab.option_column(cand.kind, &opt) {
                r[c] = 1.0;
            }
            let value = option_scalar(cand.kind, &opt);
            if vocab.scalar_channel {
                let last = r.len() - 1;
                r[last] = value;
            }
            g.pragma_values[k] = value;
        }
        g
    }

    /// Adds this kernel's structure and every option value to `vocab`.
    pub fn observe(&self, vocab: &mut Vocab) {
        vocab.observe(&self.graph);
        for c in &self.space.candidates {
            for o in &c.options {
                vocab.observe_option(c.kind, &o.to_string());
            }
        }
    }

    pub fn default_point(&self) -> Point {
        self.space.default_point()
    }
}
