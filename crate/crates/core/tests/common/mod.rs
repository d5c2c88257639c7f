//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use pragma_dse::autodiff::{Tape, Tensor, Var};
use pragma_dse::gnn::{Batch, Model, ModelConfig, Task, Variant};
use pragma_dse::graph::{EncodedGraph, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Worst relative error between tape gradients and central differences of
/// `Σ R ⊙ f(inputs)` with a fixed random `R`.
pub fn check_op<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let weights = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let (r, c) = tape.shape(out);
        random_tensor(&mut ChaCha8Rng::seed_from_u64(99), r, c)
    };
    let eval = |ins: &[Tensor]| -> (Tape, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum_all(prod);
        (tape, vars, loss)
    };
    let (tape, vars, loss) = eval(inputs);
    let grads = tape.gradients(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(t.rows, t.cols));
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data[i] -= H;
            let (tp, _, lp) = eval(&plus);
            let (tm, _, lm) = eval(&minus);
            let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * H);
            worst = worst.max(rel_err(analytic.data[i], numeric));
        }
    }
    worst
}

/// Random graph with `n` nodes encoded against `vocab`.
pub fn random_graph(rng: &mut ChaCha8Rng, vocab: &Vocab, n: usize, edges: usize, kernel: &str, slots: usize) -> EncodedGraph {
    let f0 = vocab.node_dim();
    let mut x = Tensor::zeros(n, f0);
    for r in 0..n {
        for _ in 0..3 {
            let c = rng.gen_range(0..f0);
            x.set(r, c, 1.0);
        }
    }
    let e0 = vocab.edge_dim();
    let mut e = Tensor::zeros(edges, e0);
    let (mut src, mut dst) = (Vec::new(), Vec::new());
    for k in 0..edges {
        src.push(rng.gen_range(0..n));
        dst.push(rng.gen_range(0..n));
        e.set(k, rng.gen_range(0..4), 1.0);
        e.set(k, 4 + rng.gen_range(0..8), 1.0);
    }
    EncodedGraph {
        kernel: kernel.into(),
        node_features: x,
        edge_features: e,
        src: Arc::new(src),
        dst: Arc::new(dst),
        pragma_rows: (0..slots).collect(),
        pragma_values: (0..slots).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

/// Small model of `variant` with every bias randomised, so no unit sits at
/// a kink of ELU or max.
pub fn small_model(variant: Variant, task: Task, dim: usize, slots: usize) -> Model {
    let mut mc = ModelConfig::variant(variant, task);
    mc.hidden_dim = dim;
    let kernels: BTreeMap<String, usize> = [("g".to_string(), slots)].into_iter().collect();
    let mut m = Model::new(mc, Vocab::default(), kernels, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for p in &mut m.store.params {
        if p.name.ends_with(".b") {
            p.value.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    m
}

/// Worst relative error over every model parameter of the gradient of
/// `Σ R ⊙ out`.
pub fn check_model(model: &Model, graphs: &[&EncodedGraph]) -> f64 {
    let batch = Batch::new(graphs);
    let weights = random_tensor(&mut ChaCha8Rng::seed_from_u64(17), graphs.len(), model.num_outputs());
    let loss_of = |m: &Model, store_grads: bool| -> (f64, Option<pragma_dse::autodiff::ParamStore>) {
        let mut tape = Tape::new();
        let fwd = m.forward(&mut tape, &batch).unwrap();
        let w = tape.constant(weights.clone());
        let prod = tape.mul(fwd.out, w).unwrap();
        let loss = tape.sum_all(prod);
        let value = tape.value(loss).item();
        if store_grads {
            let mut store = m.store.clone();
            store.zero_grads();
            tape.backward(loss, &mut store).unwrap();
            (value, Some(store))
        } else {
            (value, None)
        }
    };
    let (_, store) = loss_of(model, true);
    let store = store.unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for id in 0..model.store.len() {
        let analytic = store.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(1, model.store.value(id).len()));
        for i in 0..model.store.value(id).len() {
            let orig = model.store.value(id).data[i];
            probe.store.value_mut(id).data[i] = orig + H;
            let (lp, _) = loss_of(&probe, false);
            probe.store.value_mut(id).data[i] = orig - H;
            let (lm, _) = loss_of(&probe, false);
            probe.store.value_mut(id).data[i] = orig;
            let numeric = (lp - lm) / (2.0 * H);
            let e = rel_err(analytic.data[i], numeric);
            assert!(e.is_finite());
            worst = worst.max(e);
        }
    }
    worst
}

pub fn corpus_contexts(names: &[&str]) -> Vec<pragma_dse::context::KernelContext> {
    names
        .iter()
        .map(|n| {
            let src = pragma_dse::corpus::source(n).unwrap();
            pragma_dse::context::KernelContext::new(src, 32, pragma_dse::oracle::OracleConfig::default()).unwrap()
        })
        .collect()
}

pub fn context_map(
    ctxs: &[pragma_dse::context::KernelContext],
) -> BTreeMap<String, pragma_dse::context::KernelContext> {
    ctxs.iter().map(|c| (c.name().to_string(), c.clone())).collect()
}

/// Database over a few small kernels with reduced explorer budgets.
pub fn small_db(names: &[&str], budget: usize, seed: u64) -> pragma_dse::trainer::Database {
    let mut cfg = pragma_dse::dbgen::DbGenConfig::new(seed);
    cfg.bottleneck.budget = budget;
    cfg.hybrid.budget = budget;
    cfg.random.budget = budget;
    pragma_dse::dbgen::build_database(&corpus_contexts(names), &cfg).unwrap()
}
