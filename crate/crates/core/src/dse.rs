//! Surrogate-driven search, validation of the top designs and the active
//! learning loop that grows the database round by round.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::context::KernelContext;
use crate::dbgen::{to_record, Explored};
use crate::frontend::PragmaKind;
use crate::gnn::{GnnError, Model, ModelConfig, Task};
use crate::graph::EncodedGraph;
use crate::oracle::{Objectives, Utilization};
use crate::space::{DesignConfig, DesignSpace, Point};
use crate::trainer::{train_on_db, Database, DbError, DesignRecord, Provenance, TrainConfig, TrainError, CLASSIFY_THRESHOLD};

#[derive(Debug, thiserror::Error)]
pub enum DseError {
    #[error(transparent)]
    Model(#[from] GnnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error("no kernel context for `{0}`")]
    UnknownKernel(String),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exhaustive,
    Ordered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseConfig {
    /// Wall-clock cap per search, in seconds.
    pub time_limit: f64,
    pub util_threshold: f64,
    pub top_m: usize,
    pub rounds: usize,
    /// Forced traversal; chosen from the space size when `None`.
    pub mode: Option<SearchMode>,
    /// Cap on scored configurations per search. Unlike the time limit it
    /// keeps results reproducible.
    pub max_evals: u64,
    /// Configurations scored per surrogate call.
    pub chunk: usize,
}

impl Default for DseConfig {
    fn default() -> Self {
        DseConfig {
            time_limit: 3600.0,
            util_threshold: 0.8,
            top_m: 10,
            rounds: 3,
            mode: None,
            max_evals: 20_000,
            chunk: 256,
        }
    }
}

impl DseConfig {
    pub fn validate(&self) -> Result<(), DseError> {
        if !(self.util_threshold >= 0.0 && self.util_threshold <= 1.0) {
            return Err(DseError::Config(format!("util_threshold {} outside [0, 1]", self.util_threshold)));
        }
        if self.top_m == 0 {
            return Err(DseError::Config("top_m must be at least 1".into()));
        }
        Ok(())
    }
}

/// Surrogate output for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub valid_prob: f64,
    pub latency_t: f64,
    pub util: Utilization,
}

pub trait Surrogate {
    fn predict(&self, ctx: &KernelContext, points: &[Point]) -> Result<Vec<Prediction>, DseError>;
}

/// The three trained models used together during search.
#[derive(Debug, Clone)]
pub struct GnnSurrogate {
    pub main: Model,
    pub bram: Model,
    pub classify: Model,
}

pub const MODEL_FILES: [(Task, &str); 3] =
    [(Task::Main, "main.json"), (Task::Bram, "bram.json"), (Task::Classify, "classify.json")];

impl GnnSurrogate {
    pub fn new(main: Model, bram: Model, classify: Model) -> Result<Self, DseError> {
        for (m, t) in [(&main, Task::Main), (&bram, Task::Bram), (&classify, Task::Classify)] {
            if m.config.task != t {
                return Err(DseError::Config(format!("expected a {} model, got {}", t.name(), m.config.task.name())));
            }
        }
        Ok(GnnSurrogate { main, bram, classify })
    }

    pub fn load(dir: &Path) -> Result<Self, DseError> {
        let [m, b, c] = MODEL_FILES.map(|(_, f)| Model::load(&dir.join(f)));
        GnnSurrogate::new(m?, b?, c?)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DseError> {
        self.main.save(&dir.join(MODEL_FILES[0].1))?;
        self.bram.save(&dir.join(MODEL_FILES[1].1))?;
        self.classify.save(&dir.join(MODEL_FILES[2].1))?;
        Ok(())
    }

    fn run(model: &Model, ctx: &KernelContext, points: &[Point]) -> Result<Vec<Vec<f64>>, DseError> {
        let template = ctx.encode_template(&model.vocab);
        let graphs: Vec<EncodedGraph> = points.iter().map(|p| ctx.encode_point(&template, &model.vocab, p)).collect();
        let refs: Vec<&EncodedGraph> = graphs.iter().collect();
        Ok(model.predict(&refs)?)
    }
}

impl Surrogate for GnnSurrogate {
    fn predict(&self, ctx: &KernelContext, points: &[Point]) -> Result<Vec<Prediction>, DseError> {
        let main = Self::run(&self.main, ctx, points)?;
        let bram = Self::run(&self.bram, ctx, points)?;
        let valid = Self::run(&self.classify, ctx, points)?;
        Ok((0..points.len())
            .map(|i| Prediction {
                valid_prob: valid[i][0],
                latency_t: main[i][0],
                util: Utilization { dsp: main[i][1], lut: main[i][2], ff: main[i][3], bram: bram[i][0] },
            })
            .collect())
    }
}

/// The oracle itself in place of the learned models.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleSurrogate;

impl Surrogate for OracleSurrogate {
    fn predict(&self, ctx: &KernelContext, points: &[Point]) -> Result<Vec<Prediction>, DseError> {
        Ok(points
            .iter()
            .map(|p| {
                let r = ctx.oracle.synthesize_point(p);
                match r.objectives {
                    Some(o) => Prediction { valid_prob: 1.0, latency_t: -(o.latency as f64).log2(), util: o.util },
                    None => Prediction {
                        valid_prob: 0.0,
                        latency_t: f64::NEG_INFINITY,
                        util: Utilization { dsp: 0.0, bram: 0.0, lut: 0.0, ff: 0.0 },
                    },
                }
            })
            .collect())
    }
}

/// Candidate indices in the order the ordered search varies them (the first
/// entry changes fastest). Loop nests are handled one at a time; inside a
/// nest deeper loops come first; each loop contributes parallel, pipeline,
/// tile, and right after its parallel slot the parent's pipeline slot.
pub fn order_pragmas(space: &DesignSpace) -> Vec<usize> {
    let mut out = Vec::with_capacity(space.num_slots());
    let mut emitted = vec![false; space.num_slots()];
    let mut emit = |c: Option<usize>, out: &mut Vec<usize>| {
        if let Some(c) = c {
            if !emitted[c] {
                emitted[c] = true;
                out.push(c);
            }
        }
    };
    for &top in space.top_loops() {
        let mut nest = Vec::new();
        let mut stack = vec![(top, 0usize)];
        while let Some((l, d)) = stack.pop() {
            nest.push((l, d));
            stack.extend(space.loop_children(l).iter().map(|&c| (c, d + 1)));
        }
        nest.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (l, _) in nest {
            emit(space.candidate_of(l, PragmaKind::Parallel), &mut out);
            if let Some(p) = space.loop_parent(l) {
                emit(space.candidate_of(p, PragmaKind::Pipeline), &mut out);
            }
            emit(space.candidate_of(l, PragmaKind::Pipeline), &mut out);
            emit(space.candidate_of(l, PragmaKind::Tile), &mut out);
        }
    }
    // candidates on loops outside any nest (none for parsed kernels)
    for c in 0..space.num_slots() {
        emit(Some(c), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(skip)]
    pub point: Point,
    pub config: DesignConfig,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub kernel: String,
    pub mode: SearchMode,
    /// Configurations scored by the surrogate.
    pub explored: u64,
    /// Configurations that passed the validity and utilization filters.
    pub survivors: u64,
    pub top: Vec<Candidate>,
    /// `false` when the time limit stopped the search early.
    pub complete: bool,
    pub diagnostic: Option<String>,
}

/// Survivor order: higher latency_t, then lower total utilization, then
/// config key.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.prediction
        .latency_t
        .total_cmp(&a.prediction.latency_t)
        .then(a.prediction.util.total().total_cmp(&b.prediction.util.total()))
        .then_with(|| a.config.key().cmp(&b.config.key()))
}

fn passes(p: &Prediction, threshold: f64) -> bool {
    p.valid_prob >= CLASSIFY_THRESHOLD
        && p.latency_t.is_finite()
        && [p.util.dsp, p.util.bram, p.util.lut, p.util.ff].iter().all(|&u| u <= threshold)
}

/// Scores configurations with `surrogate` and returns the best `top_m`
/// survivors.
pub fn search(surrogate: &dyn Surrogate, ctx: &KernelContext, dc: &DseConfig) -> Result<SearchOutcome, DseError> {
    dc.validate()?;
    let space = &ctx.space;
    let mode = dc.mode.unwrap_or(if space.size_pruned <= u128::from(dc.max_evals) {
        SearchMode::Exhaustive
    } else {
        SearchMode::Ordered
    });
    let points: Box<dyn Iterator<Item = Point> + '_> = match mode {
        SearchMode::Exhaustive => Box::new(space.enumerate()),
        SearchMode::Ordered => Box::new(space.odometer(order_pragmas(space)).filter(|p| space.is_kept(p))),
    };
    let deadline = Instant::now() + Duration::from_secs_f64(dc.time_limit.clamp(0.0, 1e9));
    let mut points = points.take(dc.max_evals.min(usize::MAX as u64) as usize);
    let mut explored = 0u64;
    let mut survivors = 0u64;
    let mut top: Vec<Candidate> = Vec::new();
    let mut complete = true;
    loop {
        if Instant::now() >= deadline {
            complete = points.next().is_none();
            break;
        }
        let chunk: Vec<Point> = points.by_ref().take(dc.chunk.max(1)).collect();
        if chunk.is_empty() {
            break;
        }
        let preds = surrogate.predict(ctx, &chunk)?;
        explored += chunk.len() as u64;
        for (p, pred) in chunk.into_iter().zip(preds) {
            if passes(&pred, dc.util_threshold) {
                survivors += 1;
                top.push(Candidate { config: space.to_config(&p), point: p, prediction: pred });
            }
        }
        if top.len() > 4 * dc.top_m {
            top.sort_by(rank);
            top.truncate(dc.top_m);
        }
    }
    top.sort_by(rank);
    top.truncate(dc.top_m);
    let diagnostic = top.is_empty().then(|| {
        format!("no configuration of `{}` passed the validity and utilization filters ({explored} scored)", ctx.name())
    });
    if let Some(d) = &diagnostic {
        log::warn!("{d}");
    }
    Ok(SearchOutcome { kernel: ctx.name().to_string(), mode, explored, survivors, top, complete, diagnostic })
}

/// Synthesizes `configs` with the oracle and appends the new ones to `db`
/// tagged with `round`. Returns the records actually appended.
pub fn validate_top(db: &mut Database, ctx: &KernelContext, configs: &[DesignConfig], round: u32) -> Result<Vec<DesignRecord>, DseError> {
    db.add_kernel(&ctx.source)?;
    let mut added = Vec::new();
    for cfg in configs {
        if db.contains(ctx.name(), cfg) {
            continue;
        }
        let point = ctx.space.to_point(cfg).map_err(|e| DseError::Config(e.to_string()))?;
        let e = Explored { result: ctx.oracle.synthesize_point(&point), point };
        let (rec, g) = to_record(ctx, &e, Provenance::DseRound(round));
        if db.append(rec.clone(), &g)? {
            added.push(rec);
        }
    }
    if !configs.is_empty() && added.iter().all(|r| !r.result.valid) {
        log::info!("round {round}: no new valid design for `{}`", ctx.name());
    }
    Ok(added)
}

/// Model settings for the three surrogates of an active-learning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub train: TrainConfig,
    pub main: ModelConfig,
    pub bram: ModelConfig,
    pub classify: ModelConfig,
}

/// Trains all three models on the records at `pool`.
pub fn train_surrogate(
    db: &Database,
    pool: &[usize],
    contexts: &BTreeMap<String, KernelContext>,
    spec: &SurrogateSpec,
) -> Result<GnnSurrogate, DseError> {
    let main = train_on_db(db, pool, contexts, &spec.train, &spec.main)?.model;
    let bram = train_on_db(db, pool, contexts, &spec.train, &spec.bram)?.model;
    let classify = train_on_db(db, pool, contexts, &spec.train, &spec.classify)?.model;
    GnnSurrogate::new(main, bram, classify)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config: DesignConfig,
    pub objectives: Objectives,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub best_latency: BTreeMap<String, u64>,
    /// Initial best over best-found, per kernel.
    pub speedup: BTreeMap<String, f64>,
    pub explored: BTreeMap<String, u64>,
    pub added: usize,
    pub valid_added: usize,
    /// Oracle results of this round's top designs, in rank order.
    pub top: BTreeMap<String, Vec<TopResult>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopResult {
    pub config: DesignConfig,
    pub prediction: Prediction,
    pub latency: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DseReport {
    pub kernels: Vec<String>,
    pub config: DseConfig,
    pub initial_best: BTreeMap<String, u64>,
    pub rounds: Vec<RoundReport>,
    pub pareto: BTreeMap<String, Vec<ParetoPoint>>,
}

impl DseReport {
    pub fn final_best(&self) -> &BTreeMap<String, u64> {
        self.rounds.last().map_or(&self.initial_best, |r| &r.best_latency)
    }

    /// One row per (round, kernel): best latency and speedup.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,kernel,best_latency,speedup\n");
        for k in &self.kernels {
            if let Some(b) = self.initial_best.get(k) {
                out.push_str(&format!("0,{k},{b},1\n"));
            }
        }
        for r in &self.rounds {
            for k in &self.kernels {
                if let (Some(b), Some(s)) = (r.best_latency.get(k), r.speedup.get(k)) {
                    out.push_str(&format!("{},{k},{b},{s}\n", r.round));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ActiveLearning {
    pub report: DseReport,
    /// Models of the last round.
    pub surrogate: Option<GnnSurrogate>,
}

fn best_of(db: &Database, kernels: &[String]) -> BTreeMap<String, u64> {
    let all = db.best_latency();
    kernels.iter().filter_map(|k| all.get(k).map(|&b| (k.clone(), b))).collect()
}

/// Retrains the surrogate each round (seed offset by the round number),
/// searches every kernel in `kernels`, validates the top designs and
/// appends them to `db`. Training uses every record in `db` except those of
/// `exclude`, so held-out kernels can be searched without being trained on.
pub fn run_active_learning(
    db: &mut Database,
    contexts: &BTreeMap<String, KernelContext>,
    kernels: &[String],
    exclude: &[String],
    spec: &SurrogateSpec,
    dc: &DseConfig,
) -> Result<ActiveLearning, DseError> {
    dc.validate()?;
    for k in kernels {
        if !contexts.contains_key(k) {
            return Err(DseError::UnknownKernel(k.clone()));
        }
    }
    let initial_best = best_of(db, kernels);
    let mut rounds = Vec::with_capacity(dc.rounds);
    let mut last = None;
    for r in 1..=dc.rounds {
        let pool: Vec<usize> = (0..db.len()).filter(|&i| !exclude.contains(&db.records[i].kernel)).collect();
        let mut s = spec.clone();
        s.train.seed = spec.train.seed.wrapping_add(r as u64);
        let surrogate = train_surrogate(db, &pool, contexts, &s)?;
        let mut added = 0;
        let mut valid_added = 0;
        let mut explored = BTreeMap::new();
        let mut top = BTreeMap::new();
        for k in kernels {
            let ctx = &contexts[k];
            let outcome = search(&surrogate, ctx, dc)?;
            explored.insert(k.clone(), outcome.explored);
            let configs: Vec<DesignConfig> = outcome.top.iter().map(|c| c.config.clone()).collect();
            let new = validate_top(db, ctx, &configs, r as u32)?;
            added += new.len();
            valid_added += new.iter().filter(|x| x.result.valid).count();
            let results = outcome
                .top
                .iter()
                .map(|c| TopResult {
                    config: c.config.clone(),
                    prediction: c.prediction,
                    latency: ctx.oracle.synthesize_point(&c.point).objectives.map(|o| o.latency),
                })
                .collect();
            top.insert(k.clone(), results);
        }
        let best_latency = best_of(db, kernels);
        let speedup = best_latency
            .iter()
            .filter_map(|(k, &b)| initial_best.get(k).map(|&i| (k.clone(), i as f64 / b as f64)))
            .collect();
        log::info!("round {r}: {added} designs added ({valid_added} valid)");
        rounds.push(RoundReport { round: r, best_latency, speedup, explored, added, valid_added, top });
        last = Some(surrogate);
    }
    let pareto = kernels
        .iter()
        .map(|k| {
            let recs: Vec<&DesignRecord> = db.records_of(k).filter(|r| r.result.valid).collect();
            let front = pareto_filter(&recs).into_iter().map(|r| ParetoPoint {
                config: r.config.clone(),
                objectives: r.result.objectives.expect("valid records carry objectives"),
            });
            (k.clone(), front.collect())
        })
        .collect();
    let report = DseReport { kernels: kernels.to_vec(), config: dc.clone(), initial_best, rounds, pareto };
    Ok(ActiveLearning { report, surrogate: last })
}

fn objective_vector(o: &Objectives) -> [f64; 5] {
    [o.latency as f64, o.util.dsp, o.util.bram, o.util.lut, o.util.ff]
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &Objectives, b: &Objectives) -> bool {
    let (x, y) = (objective_vector(a), objective_vector(b));
    x.iter().zip(&y).all(|(p, q)| p <= q) && x.iter().zip(&y).any(|(p, q)| p < q)
}

/// Non-dominated valid records, sorted lexicographically by objectives.
pub fn pareto_filter<'a>(records: &[&'a DesignRecord]) -> Vec<&'a DesignRecord> {
    let mut items: Vec<(&DesignRecord, Objectives)> =
        records.iter().filter_map(|r| r.result.objectives.map(|o| (*r, o))).collect();
    // after a lexicographic sort nothing can be dominated by a later item
    items.sort_by(|a, b| {
        let (x, y) = (objective_vector(&a.1), objective_vector(&b.1));
        x.iter().zip(&y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    });
    let mut front: Vec<(&DesignRecord, Objectives)> = Vec::new();
    for (r, o) in items {
        if !front.iter().any(|(_, f)| dominates(f, &o)) {
            front.push((r, o));
        }
    }
    front.into_iter().map(|(r, _)| r).collect()
}
