//! Message-passing layers and readouts on a [`Tape`]. Layers return their
//! pre-activation output; the model applies ELU.

use std::sync::Arc;

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

/// Directed edges `src[k] → dst[k]` over `n` nodes.
#[derive(Debug, Clone)]
pub struct Structure {
    pub n: usize,
    pub src: Arc<Vec<usize>>,
    pub dst: Arc<Vec<usize>>,
}

impl Structure {
    pub fn new(n: usize, src: Vec<usize>, dst: Vec<usize>) -> Self {
        Structure { n, src: Arc::new(src), dst: Arc::new(dst) }
    }

    /// Same edges plus one self-loop per node (appended).
    pub fn with_self_loops(&self) -> Structure {
        let mut src = self.src.as_ref().clone();
        let mut dst = self.dst.as_ref().clone();
        src.extend(0..self.n);
        dst.extend(0..self.n);
        Structure { n: self.n, src: Arc::new(src), dst: Arc::new(dst) }
    }

    pub fn in_degree(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &t in self.dst.iter() {
            d[t] += 1;
        }
        d
    }
}

/// `D × H` indicator: column `h` sums the channels of head `h`.
pub fn head_indicator(dim: usize, heads: usize) -> Tensor {
    let per = dim / heads;
    let mut t = Tensor::zeros(dim, heads);
    for d in 0..dim {
        t.set(d, d / per, 1.0);
    }
    t
}

/// `h'_i = W Σ_{j ∈ N(i) ∪ {i}} h_j / √(d_i d_j)` with in-degrees counted
/// after adding self-loops.
pub fn gcn_layer(tape: &mut Tape, h: Var, s: &Structure, w: Var) -> Result<Var, AutodiffError> {
    let sl = s.with_self_loops();
    let deg = sl.in_degree();
    let norm: Vec<f64> =
        sl.src.iter().zip(sl.dst.iter()).map(|(&j, &i)| 1.0 / ((deg[i] * deg[j]) as f64).sqrt()).collect();
    let norm = tape.constant(Tensor::from_vec(norm.len(), 1, norm));
    let hw = tape.matmul(h, w)?;
    let msg = tape.gather_rows(hw, sl.src.clone())?;
    let msg = tape.mul_col(msg, norm)?;
    tape.segment_sum(msg, sl.dst.clone(), s.n)
}

#[derive(Debug, Clone, Copy)]
pub struct GatWeights {
    pub w: Var,
    pub a_src: Var,
    pub a_dst: Var,
}

/// Graph attention with self-loops. `a_src`, `a_dst` are `D × heads`; each
/// column only reads the channels of its own head. Returns the output and
/// the attention weights (one row per edge, self-loops last).
pub fn gat_layer(
    tape: &mut Tape,
    h: Var,
    s: &Structure,
    p: GatWeights,
    beta: f64,
    heads: usize,
) -> Result<(Var, Var), AutodiffError> {
    let sl = s.with_self_loops();
    let z = tape.matmul(h, p.w)?;
    let dim = tape.shape(z).1;
    let ind = head_indicator(dim, heads);
    let mask = tape.constant(ind.clone());
    let a_src = tape.mul(p.a_src, mask)?;
    let a_dst = tape.mul(p.a_dst, mask)?;
    let s_src = tape.matmul(z, a_src)?;
    let s_dst = tape.matmul(z, a_dst)?;
    let e_src = tape.gather_rows(s_src, sl.src.clone())?;
    let e_dst = tape.gather_rows(s_dst, sl.dst.clone())?;
    let e = tape.add(e_src, e_dst)?;
    let e = tape.leaky_relu(e, beta);
    let alpha = tape.segment_softmax(e, sl.dst.clone(), s.n)?;
    let expand = tape.constant(ind.transpose());
    let alpha_full = tape.matmul(alpha, expand)?;
    let zj = tape.gather_rows(z, sl.src.clone())?;
    let msg = tape.mul(alpha_full, zj)?;
    let out = tape.segment_sum(msg, sl.dst.clone(), s.n)?;
    Ok((out, alpha))
}

/// Weights of one transformer convolution.
#[derive(Debug, Clone, Copy)]
pub struct TransformerWeights {
    pub w1: Var,
    pub w2: Var,
    pub w3: Var,
    pub wr: Var,
    pub br: Var,
    pub wg: Var,
    pub bg: Var,
}

/// Dot-product attention over incoming edges with edge features, followed
/// by a gated residual `g·(W_r h + b_r) + (1 − g)·m`, where
/// `g = σ([res ∥ m ∥ res − m] W_g + b_g)` is one scalar per node.
/// Returns the output and the attention weights per edge.
pub fn transformer_layer(
    tape: &mut Tape,
    h: Var,
    s: &Structure,
    e: Var,
    p: TransformerWeights,
    heads: usize,
) -> Result<(Var, Var), AutodiffError> {
    let q = tape.matmul(h, p.w1)?;
    let k = tape.matmul(h, p.w2)?;
    let ew = tape.matmul(e, p.w3)?;
    let dim = tape.shape(q).1;
    let qi = tape.gather_rows(q, s.dst.clone())?;
    let kj = tape.gather_rows(k, s.src.clone())?;
    let kv = tape.add(kj, ew)?;
    let prod = tape.mul(qi, kv)?;
    // one head needs no indicator products
    let scores = if heads == 1 {
        tape.sum_cols(prod)
    } else {
        let sum_heads = tape.constant(head_indicator(dim, heads));
        tape.matmul(prod, sum_heads)?
    };
    let scores = tape.scalar_div(scores, ((dim / heads) as f64).sqrt());
    let alpha = tape.segment_softmax(scores, s.dst.clone(), s.n)?;
    let weighted = if heads == 1 {
        tape.mul_col(kv, alpha)?
    } else {
        let expand = tape.constant(head_indicator(dim, heads).transpose());
        let alpha_full = tape.matmul(alpha, expand)?;
        tape.mul(alpha_full, kv)?
    };
    let m = tape.segment_sum(weighted, s.dst.clone(), s.n)?;

    let res = tape.matmul(h, p.wr)?;
    let res = tape.add_row(res, p.br)?;
    let diff = tape.sub(res, m)?;
    let gate_in = tape.concat_cols(&[res, m, diff])?;
    let g = tape.matmul(gate_in, p.wg)?;
    let g = tape.add_row(g, p.bg)?;
    let g = tape.sigmoid(g);
    let one_minus = tape.affine(g, -1.0, 1.0);
    let a = tape.mul_col(res, g)?;
    let b = tape.mul_col(m, one_minus)?;
    Ok((tape.add(a, b)?, alpha))
}

/// Elementwise maximum over layer outputs.
pub fn jkn_combine(tape: &mut Tape, outputs: &[Var]) -> Result<Var, AutodiffError> {
    let (first, rest) = outputs
        .split_first()
        .ok_or_else(|| AutodiffError::Shape { op: "jkn_combine".into(), lhs: (0, 0), rhs: (0, 0) })?;
    let mut acc = *first;
    for v in rest {
        acc = tape.maximum(acc, *v)?;
    }
    Ok(acc)
}

/// Sum of node embeddings per graph; `graph_of[i]` is node `i`'s graph.
pub fn readout_sum(tape: &mut Tape, h: Var, graph_of: Arc<Vec<usize>>, graphs: usize) -> Result<Var, AutodiffError> {
    tape.segment_sum(h, graph_of, graphs)
}

/// Small two-layer perceptron `D → D/2 → 1` (ELU between) and a linear map.
#[derive(Debug, Clone, Copy)]
pub struct AttentionReadoutWeights {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub wv: Var,
    pub bv: Var,
}

/// Node-attention readout: per-graph softmax over the score MLP, weighted
/// sum of the transformed embeddings. Returns graph embeddings and the
/// per-node scores.
pub fn readout_attention(
    tape: &mut Tape,
    h: Var,
    graph_of: Arc<Vec<usize>>,
    graphs: usize,
    p: AttentionReadoutWeights,
) -> Result<(Var, Var), AutodiffError> {
    let s = tape.matmul(h, p.w1)?;
    let s = tape.add_row(s, p.b1)?;
    let s = tape.elu(s);
    let s = tape.matmul(s, p.w2)?;
    let s = tape.add_row(s, p.b2)?;
    let scores = tape.segment_softmax(s, graph_of.clone(), graphs)?;
    let v = tape.matmul(h, p.wv)?;
    let v = tape.add_row(v, p.bv)?;
    let weighted = tape.mul_col(v, scores)?;
    Ok((tape.segment_sum(weighted, graph_of, graphs)?, scores))
}
