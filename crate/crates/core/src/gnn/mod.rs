//! GNN surrogate: input projection, stacked message passing, optional
//! jumping-knowledge max, graph readout and per-objective MLP heads.
//!
//! Two non-graph baselines share the same interface: `Mlp` (node features
//! without edges) and `Pragma` (pragma values only, one input layer per
//! kernel).

pub mod layers;

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::graph::{EncodedGraph, Vocab};
use layers::{AttentionReadoutWeights, GatWeights, Structure, TransformerWeights};

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("graph encoded with {got} node features, model expects {expected}")]
    VocabMismatch { expected: usize, got: usize },
    #[error("attention readout needs at least one node")]
    EmptyGraph,
    #[error("pragma-only model has no input layer for kernel `{0}`")]
    UnknownKernel(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Gcn,
    Gat,
    Transformer,
    /// Per-node MLP; ignores edges.
    Mlp,
    /// Pragma values only; ignores the graph.
    Pragma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Sum,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// latency_t, dsp, lut, ff
    Main,
    Bram,
    /// validity probability
    Classify,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Main, Task::Bram, Task::Classify];

    pub fn targets(self) -> &'static [&'static str] {
        match self {
            Task::Main => &["latency_t", "dsp", "lut", "ff"],
            Task::Bram => &["bram"],
            Task::Classify => &["valid"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Main => "main",
            Task::Bram => "bram",
            Task::Classify => "classify",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "main" => Ok(Task::Main),
            "bram" => Ok(Task::Bram),
            "classify" => Ok(Task::Classify),
            _ => Err(format!("unknown task `{s}` (main, bram, classify)")),
        }
    }
}

/// Model rows of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl Variant {
    pub const ALL: [Variant; 7] =
        [Variant::M1, Variant::M2, Variant::M3, Variant::M4, Variant::M5, Variant::M6, Variant::M7];

    pub fn describe(self) -> &'static str {
        match self {
            Variant::M1 => "MLP over pragma values",
            Variant::M2 => "MLP over node features",
            Variant::M3 => "GCN, sum readout",
            Variant::M4 => "GAT, sum readout",
            Variant::M5 => "TransformerConv, sum readout",
            Variant::M6 => "TransformerConv + JKN, sum readout",
            Variant::M7 => "TransformerConv + JKN, attention readout",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| format!("{v:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant `{s}` (m1..m7)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layer_kind: LayerKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub jkn: bool,
    pub readout: Readout,
    pub leaky_slope: f64,
    pub task: Task,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::variant(Variant::M7, Task::Main)
    }
}

impl ModelConfig {
    pub fn variant(v: Variant, task: Task) -> Self {
        let (layer_kind, jkn, readout) = match v {
            Variant::M1 => (LayerKind::Pragma, false, Readout::Sum),
            Variant::M2 => (LayerKind::Mlp, false, Readout::Sum),
            Variant::M3 => (LayerKind::Gcn, false, Readout::Sum),
            Variant::M4 => (LayerKind::Gat, false, Readout::Sum),
            Variant::M5 => (LayerKind::Transformer, false, Readout::Sum),
            Variant::M6 => (LayerKind::Transformer, true, Readout::Sum),
            Variant::M7 => (LayerKind::Transformer, true, Readout::Attention),
        };
        ModelConfig { layer_kind, num_layers: 4, hidden_dim: 64, heads: 1, jkn, readout, leaky_slope: 0.2, task }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        let err = |m: &str| Err(GnnError::Config(m.to_string()));
        if self.num_layers == 0 {
            return err("num_layers must be at least 1");
        }
        if self.hidden_dim < 4 {
            return err("hidden_dim must be at least 4");
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return err("hidden_dim must be divisible by heads");
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return err("leaky_slope must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
enum LayerIds {
    Gcn { w: ParamId },
    Gat { w: ParamId, a_src: ParamId, a_dst: ParamId },
    Transformer { w1: ParamId, w2: ParamId, w3: ParamId, res: Linear, gate: Linear },
    Mlp(Linear),
}

#[derive(Debug, Clone)]
struct Layout {
    input: Option<Linear>,
    pragma_inputs: BTreeMap<String, Linear>,
    layers: Vec<LayerIds>,
    attention: Option<(Linear, Linear, Linear)>,
    heads: Vec<[Linear; 3]>,
}

fn linear(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize) -> Linear {
    let w = store.add_glorot(format!("{name}.w"), i, o, rng);
    let b = store.add(format!("{name}.b"), Tensor::zeros(1, o));
    Linear { w, b }
}

impl Layout {
    fn build(
        c: &ModelConfig,
        f0: usize,
        e0: usize,
        pragma_kernels: &BTreeMap<String, usize>,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Layout {
        let d = c.hidden_dim;
        let mut layout =
            Layout { input: None, pragma_inputs: BTreeMap::new(), layers: Vec::new(), attention: None, heads: Vec::new() };
        if c.layer_kind == LayerKind::Pragma {
            for (k, &slots) in pragma_kernels {
                layout.pragma_inputs.insert(k.clone(), linear(store, rng, &format!("pragma_in.{k}"), slots.max(1), d));
            }
            for l in 1..c.num_layers.max(2) {
                layout.layers.push(LayerIds::Mlp(linear(store, rng, &format!("shared{l}"), d, d)));
            }
        } else {
            layout.input = Some(linear(store, rng, "input", f0, d));
            for l in 0..c.num_layers {
                let p = format!("layer{l}");
                let ids = match c.layer_kind {
                    LayerKind::Gcn => LayerIds::Gcn { w: store.add_glorot(format!("{p}.w"), d, d, rng) },
                    LayerKind::Gat => LayerIds::Gat {
                        w: store.add_glorot(format!("{p}.w"), d, d, rng),
                        a_src: store.add_glorot(format!("{p}.a_src"), d, c.heads, rng),
                        a_dst: store.add_glorot(format!("{p}.a_dst"), d, c.heads, rng),
                    },
                    LayerKind::Transformer => LayerIds::Transformer {
                        w1: store.add_glorot(format!("{p}.w1"), d, d, rng),
                        w2: store.add_glorot(format!("{p}.w2"), d, d, rng),
                        w3: store.add_glorot(format!("{p}.w3"), e0, d, rng),
                        res: linear(store, rng, &format!("{p}.res"), d, d),
                        gate: linear(store, rng, &format!("{p}.gate"), 3 * d, 1),
                    },
                    LayerKind::Mlp => LayerIds::Mlp(linear(store, rng, &p, d, d)),
                    LayerKind::Pragma => unreachable!("handled above"),
                };
                layout.layers.push(ids);
            }
            if c.readout == Readout::Attention {
                layout.attention = Some((
                    linear(store, rng, "readout.score1", d, d / 2),
                    linear(store, rng, "readout.score2", d / 2, 1),
                    linear(store, rng, "readout.value", d, d),
                ));
            }
        }
        for t in c.task.targets() {
            layout.heads.push([
                linear(store, rng, &format!("head.{t}.0"), d, d / 2),
                linear(store, rng, &format!("head.{t}.1"), d / 2, d / 4),
                linear(store, rng, &format!("head.{t}.2"), d / 4, 1),
            ]);
        }
        layout
    }
}

/// Several encoded graphs merged into one disjoint graph.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub e: Tensor,
    pub structure: Structure,
    pub graph_of: Arc<Vec<usize>>,
    pub graphs: usize,
    pub node_offsets: Vec<usize>,
    pub kernels: Vec<String>,
    pub pragma_values: Vec<Vec<f64>>,
}

impl Batch {
    pub fn new(graphs: &[&EncodedGraph]) -> Batch {
        let f0 = graphs.first().map_or(0, |g| g.node_features.cols);
        let e0 = graphs.first().map_or(0, |g| g.edge_features.cols);
        let n: usize = graphs.iter().map(|g| g.num_nodes()).sum();
        let m: usize = graphs.iter().map(|g| g.num_edges()).sum();
        let mut x = Vec::with_capacity(n * f0);
        let mut e = Vec::with_capacity(m * e0);
        let (mut src, mut dst, mut graph_of) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(n));
        let mut node_offsets = Vec::with_capacity(graphs.len());
        let mut off = 0;
        for (gi, g) in graphs.iter().enumerate() {
            node_offsets.push(off);
            x.extend_from_slice(&g.node_features.data);
            e.extend_from_slice(&g.edge_features.data);
            src.extend(g.src.iter().map(|s| s + off));
            dst.extend(g.dst.iter().map(|d| d + off));
            graph_of.extend(std::iter::repeat_n(gi, g.num_nodes()));
            off += g.num_nodes();
        }
        Batch {
            x: Tensor::from_vec(n, f0, x),
            e: Tensor::from_vec(m, e0, e),
            structure: Structure::new(n, src, dst),
            graph_of: Arc::new(graph_of),
            graphs: graphs.len(),
            node_offsets,
            kernels: graphs.iter().map(|g| g.kernel.clone()).collect(),
            pragma_values: graphs.iter().map(|g| g.pragma_values.clone()).collect(),
        }
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `graphs × targets`: regression values, or classifier logits.
    pub out: Var,
    /// Per-node readout attention, when the readout has one.
    pub node_scores: Option<Var>,
    pub graph_embedding: Var,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    /// Slot count per kernel (pragma-only model).
    pub pragma_kernels: BTreeMap<String, usize>,
    /// Latency normalisation factor the targets were transformed with.
    pub nf: u64,
    layout: Layout,
}

impl Model {
    pub fn new(
        config: ModelConfig,
        vocab: Vocab,
        pragma_kernels: BTreeMap<String, usize>,
        seed: u64,
    ) -> Result<Model, GnnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layout = Layout::build(&config, vocab.node_dim(), vocab.edge_dim(), &pragma_kernels, &mut store, &mut rng);
        Ok(Model { config, vocab, store, pragma_kernels, nf: 1, layout })
    }

    pub fn num_outputs(&self) -> usize {
        self.config.task.targets().len()
    }

    /// Sets the bias of output head `k`, e.g. to the mean training target.
    pub fn set_output_bias(&mut self, k: usize, v: f64) {
        let b = self.layout.heads[k][2].b;
        self.store.value_mut(b).data[0] = v;
    }

    pub fn forward(&self, tape: &mut Tape, batch: &Batch) -> Result<Forward, GnnError> {
        let c = &self.config;
        let params: Vec<Var> = (0..self.store.len()).map(|i| tape.param(&self.store, i)).collect();
        let p = |id: ParamId| params[id];
        let lin = |tape: &mut Tape, x: Var, l: Linear| -> Result<Var, AutodiffError> {
            let y = tape.matmul(x, p(l.w))?;
            tape.add_row(y, p(l.b))
        };

        let mut node_scores = None;
        let hg = if c.layer_kind == LayerKind::Pragma {
            let mut rows = Vec::with_capacity(batch.graphs);
            for (k, vals) in batch.kernels.iter().zip(&batch.pragma_values) {
                let l = *self.layout.pragma_inputs.get(k).ok_or_else(|| GnnError::UnknownKernel(k.clone()))?;
                let mut v = vals.clone();
                if v.is_empty() {
                    v.push(0.0);
                }
                let expected = self.store.value(l.w).rows;
                if v.len() != expected {
                    return Err(GnnError::Config(format!("kernel `{k}` has {} pragma values, expected {expected}", v.len())));
                }
                let x = tape.constant(Tensor::from_vec(1, v.len(), v));
                let y = lin(tape, x, l)?;
                rows.push(tape.elu(y));
            }
            let mut h = tape.concat_rows(&rows)?;
            for ids in &self.layout.layers {
                if let LayerIds::Mlp(l) = ids {
                    let y = lin(tape, h, *l)?;
                    h = tape.elu(y);
                }
            }
            h
        } else {
            let f0 = self.vocab.node_dim();
            if batch.x.cols != f0 && batch.x.rows > 0 {
                return Err(GnnError::VocabMismatch { expected: f0, got: batch.x.cols });
            }
            let x = tape.constant(if batch.x.rows == 0 { Tensor::zeros(0, f0) } else { batch.x.clone() });
            let e = tape.constant(if batch.e.rows == 0 { Tensor::zeros(0, self.vocab.edge_dim()) } else { batch.e.clone() });
            let input = self.layout.input.expect("graph models have an input layer");
            let y = lin(tape, x, input)?;
            let mut h = tape.elu(y);
            let mut outs = Vec::with_capacity(self.layout.layers.len());
            for ids in &self.layout.layers {
                let pre = match *ids {
                    LayerIds::Gcn { w } => layers::gcn_layer(tape, h, &batch.structure, p(w))?,
                    LayerIds::Gat { w, a_src, a_dst } => {
                        let wts = GatWeights { w: p(w), a_src: p(a_src), a_dst: p(a_dst) };
                        layers::gat_layer(tape, h, &batch.structure, wts, c.leaky_slope, c.heads)?.0
                    }
                    LayerIds::Transformer { w1, w2, w3, res, gate } => {
                        let wts = TransformerWeights {
                            w1: p(w1),
                            w2: p(w2),
                            w3: p(w3),
                            wr: p(res.w),
                            br: p(res.b),
                            wg: p(gate.w),
                            bg: p(gate.b),
                        };
                        layers::transformer_layer(tape, h, &batch.structure, e, wts, c.heads)?.0
                    }
                    LayerIds::Mlp(l) => lin(tape, h, l)?,
                };
                h = tape.elu(pre);
                outs.push(h);
            }
            if c.jkn {
                h = layers::jkn_combine(tape, &outs)?;
            }
            match self.layout.attention {
                Some((s1, s2, v)) => {
                    let mut counts = vec![0usize; batch.graphs];
                    batch.graph_of.iter().for_each(|&g| counts[g] += 1);
                    if counts.contains(&0) {
                        return Err(GnnError::EmptyGraph);
                    }
                    let wts = AttentionReadoutWeights {
                        w1: p(s1.w),
                        b1: p(s1.b),
                        w2: p(s2.w),
                        b2: p(s2.b),
                        wv: p(v.w),
                        bv: p(v.b),
                    };
                    let (hg, scores) =
                        layers::readout_attention(tape, h, batch.graph_of.clone(), batch.graphs, wts)?;
                    node_scores = Some(scores);
                    hg
                }
                None => layers::readout_sum(tape, h, batch.graph_of.clone(), batch.graphs)?,
            }
        };

        let mut cols = Vec::with_capacity(self.layout.heads.len());
        for head in &self.layout.heads {
            let a = lin(tape, hg, head[0])?;
            let a = tape.elu(a);
            let b = lin(tape, a, head[1])?;
            let b = tape.elu(b);
            cols.push(lin(tape, b, head[2])?);
        }
        let out = tape.concat_cols(&cols)?;
        Ok(Forward { out, node_scores, graph_embedding: hg })
    }

    /// Outputs per graph: regression targets, or the validity probability for
    /// the classifier.
    pub fn predict(&self, graphs: &[&EncodedGraph]) -> Result<Vec<Vec<f64>>, GnnError> {
        Ok(self.predict_detailed(graphs)?.0)
    }

    /// Predictions plus per-node readout attention of each graph.
    #[allow(clippy::type_complexity)]
    pub fn predict_detailed(&self, graphs: &[&EncodedGraph]) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>), GnnError> {
        let batch = Batch::new(graphs);
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, &batch)?;
        let out = tape.value(fwd.out);
        let classify = self.config.task == Task::Classify;
        let preds = (0..out.rows)
            .map(|r| {
                out.row(r).iter().map(|&v| if classify { crate::autodiff::sigmoid(v) } else { v }).collect()
            })
            .collect();
        let scores = fwd.node_scores.map(|s| {
            let t = tape.value(s);
            (0..batch.graphs)
                .map(|g| {
                    let start = batch.node_offsets[g];
                    let end = batch.node_offsets.get(g + 1).copied().unwrap_or(t.rows);
                    t.data[start..end].to_vec()
                })
                .collect()
        });
        Ok((preds, scores))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            pragma_kernels: self.pragma_kernels.clone(),
            nf: self.nf,
            params: self.store.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Model, GnnError> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(GnnError::Checkpoint(format!("unsupported format {} v{}", ck.format, ck.version)));
        }
        let mut model = Model::new(ck.config, ck.vocab, ck.pragma_kernels, 0)?;
        if model.store.len() != ck.params.len() {
            return Err(GnnError::Checkpoint("parameter count does not match the config".into()));
        }
        for (mine, theirs) in model.store.params.iter().zip(&ck.params.params) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(GnnError::Checkpoint(format!("parameter `{}` does not match `{}`", theirs.name, mine.name)));
            }
        }
        model.store = ck.params;
        model.nf = ck.nf;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GnnError> {
        let text = serde_json::to_string(&self.to_checkpoint()).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
        let io = |source| GnnError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        std::fs::write(path, text).map_err(io)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model, GnnError> {
        let text = std::fs::read_to_string(path).map_err(|source| GnnError::Io { path: path.display().to_string(), source })?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| GnnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Model::from_checkpoint(ck)
    }
}

pub const CHECKPOINT_FORMAT: &str = "pragma-dse-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialised model: config, vocabulary and every parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub pragma_kernels: BTreeMap<String, usize>,
    pub nf: u64,
    pub params: ParamStore,
}
