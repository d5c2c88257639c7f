//! Target transforms, dataset splits, training loops and metrics for the
//! three surrogate models (main objectives, BRAM, validity).

mod database;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use database::{Database, DbError, DbMeta, DbSettings, DesignRecord, Provenance, DB_FORMAT, DB_VERSION};

use crate::autodiff::{Optimizer, OptimizerState, Tape, Tensor};
use crate::context::KernelContext;
use crate::gnn::{Batch, GnnError, Model, ModelConfig, Task};
use crate::graph::{EncodedGraph, Vocab};
use crate::oracle::Objectives;

/// Validity probability at or above which a design counts as valid.
pub const CLASSIFY_THRESHOLD: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("latency {latency} exceeds the normalisation factor {nf}")]
    LatencyAboveNf { latency: u64, nf: u64 },
    #[error("training split is empty")]
    EmptySplit,
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("no kernel context for `{0}`")]
    UnknownKernel(String),
    #[error("record config does not fit kernel `{kernel}`: {msg}")]
    BadRecord { kernel: String, msg: String },
    #[error(transparent)]
    Model(#[from] GnnError),
}

/// Smallest power of two not below `max_latency`.
pub fn default_nf(max_latency: u64) -> u64 {
    max_latency.max(1).next_power_of_two()
}

/// `log2(NF / latency)`.
pub fn transform_latency(latency: u64, nf: u64) -> Result<f64, TrainError> {
    if latency > nf {
        return Err(TrainError::LatencyAboveNf { latency, nf });
    }
    Ok((nf as f64).log2() - (latency.max(1) as f64).log2())
}

/// Inverse of [`transform_latency`], rounded to whole cycles.
pub fn inverse_latency(t: f64, nf: u64) -> f64 {
    ((nf as f64) * (-t).exp2()).round()
}

/// Transformed targets of a valid design for `task`.
pub fn transform_targets(o: &Objectives, nf: u64, task: Task) -> Result<Vec<f64>, TrainError> {
    Ok(match task {
        Task::Main => vec![transform_latency(o.latency, nf)?, o.util.dsp, o.util.lut, o.util.ff],
        Task::Bram => vec![o.util.bram],
        Task::Classify => vec![1.0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub split_fraction: f64,
    /// Latency normalisation factor; derived from the data when `None`.
    pub nf: Option<u64>,
    pub optimizer: OptimizerKind,
    /// Momentum for plain gradient descent.
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            split_fraction: 0.8,
            nf: None,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
        }
    }
}

/// One encoded design with its targets.
#[derive(Debug, Clone)]
pub struct Sample {
    pub kernel: String,
    pub record: usize,
    pub graph: EncodedGraph,
    pub targets: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    /// RMSE per target in transformed space.
    pub rmse: BTreeMap<String, f64>,
    /// Unweighted sum of the per-target RMSEs.
    pub total_rmse: f64,
    pub misclassification: Option<f64>,
    /// Mean training loss (MSE or binary cross-entropy).
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub train_metrics: Metrics,
    pub val_metrics: Metrics,
}

/// Metrics history as CSV, one row per epoch.
pub fn history_csv(task: Task, history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_total_rmse,val_misclassification");
    for t in task.targets() {
        out.push_str(&format!(",val_rmse_{t}"));
    }
    out.push('\n');
    for h in history {
        let mis = h.val.misclassification.map_or(String::new(), |m| format!("{m}"));
        out.push_str(&format!("{},{},{},{},{}", h.epoch, h.train_loss, h.val.loss, h.val.total_rmse, mis));
        for t in task.targets() {
            out.push_str(&format!(",{}", h.val.rmse.get(*t).copied().unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

/// Deterministic split of `db` record indices into (train, validation).
/// Every kernel with at least 5 records lands on both sides; the overall
/// train share is within one record of `fraction`.
pub fn split(db: &Database, seed: u64, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..db.records.len()).collect();
    split_indices(db, &all, seed, fraction)
}

/// [`split`] restricted to the records at `pool`.
pub fn split_indices(db: &Database, pool: &[usize], seed: u64, fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let mut by_kernel: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in pool {
        by_kernel.entry(&db.records[i].kernel).or_default().push(i);
    }
    let total = pool.len();
    let target = (fraction * total as f64).round() as usize;
    // largest-remainder apportionment of the train quota over kernels
    let mut quota: Vec<(usize, f64, &str)> = by_kernel
        .iter()
        .map(|(k, v)| {
            let exact = fraction * v.len() as f64;
            (exact.floor() as usize, exact - exact.floor(), *k)
        })
        .collect();
    let mut assigned: usize = quota.iter().map(|q| q.0).sum();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].1.total_cmp(&quota[a].1).then(quota[a].2.cmp(quota[b].2)));
    for &i in &order {
        if assigned >= target {
            break;
        }
        let n = by_kernel[quota[i].2].len();
        if quota[i].0 < n && !(n >= 5 && quota[i].0 + 1 >= n) {
            quota[i].0 += 1;
            assigned += 1;
        }
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (q, _, k) in quota {
        let mut idx = by_kernel[k].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(k));
        idx.shuffle(&mut rng);
        let q = if idx.len() >= 5 { q.clamp(1, idx.len() - 1) } else { q };
        train.extend_from_slice(&idx[..q]);
        val.extend_from_slice(&idx[q..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Records of `holdout` kernels versus all others: (others, held out).
pub fn split_holdout(db: &Database, holdout: &[String]) -> (Vec<usize>, Vec<usize>) {
    let (held, rest): (Vec<usize>, Vec<usize>) =
        (0..db.records.len()).partition(|&i| holdout.contains(&db.records[i].kernel));
    (rest, held)
}

/// 64-bit FNV-1a, used to derive per-kernel seeds.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Vocabulary over the given kernels, including every option value of their
/// pragma candidates.
pub fn build_vocab<'a>(contexts: impl IntoIterator<Item = &'a KernelContext>) -> Vocab {
    let mut v = Vocab::default();
    for c in contexts {
        c.observe(&mut v);
    }
    v
}

/// Encodes the records at `idx` for `task`; regression tasks skip invalid
/// designs.
pub fn prepare_samples(
    db: &Database,
    idx: &[usize],
    contexts: &BTreeMap<String, KernelContext>,
    vocab: &Vocab,
    nf: u64,
    task: Task,
) -> Result<Vec<Sample>, TrainError> {
    let mut templates: BTreeMap<&str, EncodedGraph> = BTreeMap::new();
    let mut out = Vec::with_capacity(idx.len());
    for &i in idx {
        let r = &db.records[i];
        let ctx = contexts.get(&r.kernel).ok_or_else(|| TrainError::UnknownKernel(r.kernel.clone()))?;
        let targets = match (task, r.result.objectives) {
            (Task::Classify, _) => vec![if r.result.valid { 1.0 } else { 0.0 }],
            (_, Some(o)) => transform_targets(&o, nf, task)?,
            (_, None) => continue,
        };
        let point = ctx
            .space
            .to_point(&r.config)
            .map_err(|e| TrainError::BadRecord { kernel: r.kernel.clone(), msg: e.to_string() })?;
        let template = templates.entry(ctx.name()).or_insert_with(|| ctx.encode_template(vocab));
        out.push(Sample {
            kernel: r.kernel.clone(),
            record: i,
            graph: ctx.encode_point(template, vocab, &point),
            targets,
            valid: r.result.valid,
        });
    }
    Ok(out)
}

fn batch_loss(tape: &mut Tape, out: crate::autodiff::Var, targets: &Tensor, task: Task) -> Result<crate::autodiff::Var, GnnError> {
    let y = tape.constant(targets.clone());
    let n = targets.len().max(1) as f64;
    let loss = if task == Task::Classify {
        // softplus(z) - y z
        let sp = tape.softplus(out);
        let yz = tape.mul(y, out)?;
        tape.sub(sp, yz)?
    } else {
        let d = tape.sub(out, y)?;
        tape.mul(d, d)?
    };
    let s = tape.sum_all(loss);
    Ok(tape.scalar_div(s, n))
}

fn targets_tensor(samples: &[&Sample]) -> Tensor {
    let k = samples.first().map_or(0, |s| s.targets.len());
    Tensor::from_vec(samples.len(), k, samples.iter().flat_map(|s| s.targets.iter().copied()).collect())
}

const EVAL_CHUNK: usize = 128;

/// Predictions (probabilities for the classifier) for every sample.
pub fn predict_samples(model: &Model, samples: &[Sample]) -> Result<Vec<Vec<f64>>, GnnError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let graphs: Vec<&EncodedGraph> = chunk.iter().map(|s| &s.graph).collect();
        out.extend(model.predict(&graphs)?);
    }
    Ok(out)
}

/// Metrics of `model` on `samples`.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Metrics, GnnError> {
    let preds = predict_samples(model, samples)?;
    Ok(metrics_from(model.config.task, samples, &preds))
}

pub fn metrics_from(task: Task, samples: &[Sample], preds: &[Vec<f64>]) -> Metrics {
    let names = task.targets();
    let n = samples.len();
    let mut m = Metrics { count: n, ..Metrics::default() };
    if n == 0 {
        for t in names {
            m.rmse.insert(t.to_string(), 0.0);
        }
        if task == Task::Classify {
            m.misclassification = Some(0.0);
        }
        return m;
    }
    let mut sq = vec![0.0; names.len()];
    let mut loss = 0.0;
    let mut wrong = 0usize;
    for (s, p) in samples.iter().zip(preds) {
        for k in 0..names.len() {
            let d = p[k] - s.targets[k];
            sq[k] += d * d;
        }
        if task == Task::Classify {
            let prob = p[0].clamp(1e-12, 1.0 - 1e-12);
            let y = s.targets[0];
            loss -= y * prob.ln() + (1.0 - y) * (1.0 - prob).ln();
            if (p[0] >= CLASSIFY_THRESHOLD) != (y >= 0.5) {
                wrong += 1;
            }
        } else {
            loss += (0..names.len()).map(|k| (p[k] - s.targets[k]).powi(2)).sum::<f64>() / names.len() as f64;
        }
    }
    for (k, t) in names.iter().enumerate() {
        let r = (sq[k] / n as f64).sqrt();
        m.rmse.insert(t.to_string(), r);
        m.total_rmse += r;
    }
    m.loss = loss / n as f64;
    if task == Task::Classify {
        m.misclassification = Some(wrong as f64 / n as f64);
    }
    m
}

/// Trains one model. Deterministic for a fixed seed; returns the parameters
/// of the epoch with the best validation score (total RMSE for regression,
/// cross-entropy for the classifier).
pub fn train(
    train_set: &[Sample],
    val_set: &[Sample],
    tc: &TrainConfig,
    mc: &ModelConfig,
    vocab: &Vocab,
    pragma_kernels: &BTreeMap<String, usize>,
    nf: u64,
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let mut model = Model::new(mc.clone(), vocab.clone(), pragma_kernels.clone(), tc.seed)?;
    model.nf = nf;
    let k = model.num_outputs();
    for j in 0..k {
        let mean = train_set.iter().map(|s| s.targets[j]).sum::<f64>() / train_set.len() as f64;
        let bias = if mc.task == Task::Classify {
            let p = mean.clamp(1e-3, 1.0 - 1e-3);
            (p / (1.0 - p)).ln()
        } else {
            mean
        };
        model.set_output_bias(j, bias);
    }
    let opt = match tc.optimizer {
        OptimizerKind::Adam => Optimizer::adam(tc.learning_rate),
        OptimizerKind::Sgd => Optimizer::Sgd { lr: tc.learning_rate, momentum: tc.momentum },
    };
    let mut state = OptimizerState::new(opt, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(tc.epochs);
    let select = |m: &Metrics| if mc.task == Task::Classify { m.loss } else { m.total_rmse };
    let eval_set = if val_set.is_empty() { train_set } else { val_set };
    let mut best = (f64::INFINITY, 0usize, model.store.clone());

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(tc.batch_size.max(1)).enumerate() {
            let samples: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let graphs: Vec<&EncodedGraph> = samples.iter().map(|s| &s.graph).collect();
            let batch = Batch::new(&graphs);
            let mut tape = Tape::new();
            let fwd = model.forward(&mut tape, &batch)?;
            let loss = batch_loss(&mut tape, fwd.out, &targets_tensor(&samples), mc.task)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi, loss: lv });
            }
            total += lv * samples.len() as f64;
            tape.backward(loss, &mut model.store).map_err(GnnError::from)?;
            state.step(&mut model.store);
        }
        let val = evaluate(&model, eval_set)?;
        let score = select(&val);
        if score < best.0 {
            best = (score, epoch, model.store.clone());
        }
        log::debug!("{} epoch {epoch}: train {:.5} val {:.5}", mc.task.name(), total / train_set.len() as f64, score);
        history.push(EpochMetrics { epoch, train_loss: total / train_set.len() as f64, val });
    }
    if tc.epochs > 0 {
        model.store = best.2;
    }
    let train_metrics = evaluate(&model, train_set)?;
    let val_metrics = evaluate(&model, val_set)?;
    Ok(TrainOutcome { model, history, best_epoch: best.1, train_metrics, val_metrics })
}

/// Trains `mc` on the records at `pool`, split by `tc`. The vocabulary and
/// pragma-only input layers cover exactly the kernels present in `pool`.
pub fn train_on_db(
    db: &Database,
    pool: &[usize],
    contexts: &BTreeMap<String, KernelContext>,
    tc: &TrainConfig,
    mc: &ModelConfig,
) -> Result<TrainOutcome, TrainError> {
    let mut kernels: Vec<&str> = pool.iter().map(|&i| db.records[i].kernel.as_str()).collect();
    kernels.sort_unstable();
    kernels.dedup();
    let mut ctxs = Vec::with_capacity(kernels.len());
    for k in &kernels {
        ctxs.push(contexts.get(*k).ok_or_else(|| TrainError::UnknownKernel(k.to_string()))?);
    }
    let vocab = build_vocab(ctxs.iter().copied());
    let pragma_kernels: BTreeMap<String, usize> = ctxs.iter().map(|c| (c.name().to_string(), c.space.num_slots())).collect();
    let max_latency = pool.iter().filter_map(|&i| db.records[i].result.objectives.map(|o| o.latency)).max().unwrap_or(1);
    let nf = tc.nf.unwrap_or_else(|| default_nf(max_latency));
    let (tr, va) = split_indices(db, pool, tc.seed, tc.split_fraction);
    let train_set = prepare_samples(db, &tr, contexts, &vocab, nf, mc.task)?;
    let val_set = prepare_samples(db, &va, contexts, &vocab, nf, mc.task)?;
    train(&train_set, &val_set, tc, mc, &vocab, &pragma_kernels, nf)
}

/// Pearson correlation matrix of (latency_t, dsp, lut, ff, bram) over valid
/// records. Zero-variance columns get correlation 0 off the diagonal and are
/// flagged.
pub fn correlation_matrix(db: &Database, nf: u64) -> Result<(Vec<Vec<f64>>, Vec<bool>), TrainError> {
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 5];
    for r in &db.records {
        if let Some(o) = r.result.objectives {
            let row = [transform_latency(o.latency, nf)?, o.util.dsp, o.util.lut, o.util.ff, o.util.bram];
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
    }
    Ok(pearson_matrix(&cols))
}

pub fn pearson_matrix(cols: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let k = cols.len();
    let n = cols.first().map_or(0, |c| c.len()) as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n.max(1.0)).collect();
    let dev: Vec<Vec<f64>> = cols.iter().zip(&means).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect();
    let norms: Vec<f64> = dev.iter().map(|d| d.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let flags: Vec<bool> = norms.iter().map(|&s| n < 2.0 || s <= 1e-300).collect();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = if i == j {
                1.0
            } else if flags[i] || flags[j] {
                0.0
            } else {
                let dot: f64 = dev[i].iter().zip(&dev[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            };
        }
    }
    (m, flags)
}
