//! Database generation: three explorers run against the oracle and their
//! union is committed to one database.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::KernelContext;
use crate::frontend::PragmaKind;
use crate::graph::ProgGraph;
use crate::oracle::SynthesisResult;
use crate::space::Point;
use crate::trainer::{fnv1a, Database, DbError, DbSettings, DesignRecord, Provenance};

/// Pruned spaces up to this size are enumerated and shuffled by the random
/// explorer; larger ones use rejection sampling.
const ENUMERATE_LIMIT: u128 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorerConfig {
    /// Maximum number of oracle evaluations.
    pub budget: usize,
    /// Improvement (percent) that triggers a neighbor sweep in the hybrid
    /// explorer.
    pub x_percent: f64,
    /// Neighbors evaluated per qualifying improvement.
    pub p_neighbors: usize,
    pub seed: u64,
}

impl ExplorerConfig {
    pub fn with_budget(budget: usize, seed: u64) -> Self {
        ExplorerConfig { budget, x_percent: 10.0, p_neighbors: 8, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbGenConfig {
    pub bottleneck: ExplorerConfig,
    pub hybrid: ExplorerConfig,
    pub random: ExplorerConfig,
    /// Kernels processed concurrently.
    pub jobs: usize,
}

impl DbGenConfig {
    pub fn new(seed: u64) -> Self {
        DbGenConfig {
            bottleneck: ExplorerConfig::with_budget(150, seed),
            hybrid: ExplorerConfig::with_budget(150, seed),
            random: ExplorerConfig::with_budget(100, seed),
            jobs: 1,
        }
    }
}

/// One oracle evaluation made by an explorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Explored {
    pub point: Point,
    pub result: SynthesisResult,
}

struct Session<'a> {
    ctx: &'a KernelContext,
    budget: usize,
    seen: HashSet<Point>,
    out: Vec<Explored>,
}

impl<'a> Session<'a> {
    fn new(ctx: &'a KernelContext, budget: usize) -> Self {
        Session { ctx, budget, seen: HashSet::new(), out: Vec::new() }
    }

    fn exhausted(&self) -> bool {
        self.out.len() >= self.budget
    }

    /// Evaluates `p` unless it was seen before; returns its latency when valid.
    fn eval(&mut self, p: &Point) -> Option<Option<u64>> {
        if self.exhausted() || !self.seen.insert(p.clone()) {
            return None;
        }
        let result = self.ctx.oracle.synthesize_point(p);
        let lat = result.objectives.map(|o| o.latency);
        self.out.push(Explored { point: p.clone(), result });
        Some(lat)
    }
}

const SLOT_PRIORITY: [PragmaKind; 3] = [PragmaKind::Parallel, PragmaKind::Pipeline, PragmaKind::Tile];

/// Greedy coordinate descent on the loop with the largest exclusive latency
/// share. The hybrid variant also sweeps neighbors of every new best that
/// beats the previous one by at least `x_percent`.
fn greedy(ctx: &KernelContext, ec: &ExplorerConfig, hybrid: bool) -> Vec<Explored> {
    let space = &ctx.space;
    let mut s = Session::new(ctx, ec.budget.max(1));
    let mut cur = space.default_point();
    let Some(first) = s.eval(&cur) else { return s.out };
    let mut best = first.unwrap_or(u64::MAX);
    'outer: while !s.exhausted() {
        let bd = ctx.oracle.breakdown(&ctx.oracle.resolve_point(&cur));
        let mut loops: Vec<usize> = (0..space.num_loops()).collect();
        loops.sort_by(|&a, &b| bd.exclusive[b].cmp(&bd.exclusive[a]).then(a.cmp(&b)));
        for l in loops {
            let mut step: Option<(u64, Point)> = None;
            for kind in SLOT_PRIORITY {
                let Some(c) = space.candidate_of(l, kind) else { continue };
                for o in 0..space.candidates[c].options.len() as u8 {
                    if o == cur[c] {
                        continue;
                    }
                    let mut q = cur.clone();
                    q[c] = o;
                    if !space.is_kept(&q) {
                        continue;
                    }
                    if let Some(Some(lat)) = s.eval(&q) {
                        if lat < best && step.as_ref().is_none_or(|(b, _)| lat < *b) {
                            step = Some((lat, q));
                        }
                    }
                    if s.exhausted() {
                        break;
                    }
                }
            }
            if let Some((lat, q)) = step {
                let gain = if best == u64::MAX { f64::INFINITY } else { (best - lat) as f64 / best as f64 * 100.0 };
                best = lat;
                cur = q;
                if hybrid && gain >= ec.x_percent {
                    let mut swept = 0;
                    for n in space.neighbors(&cur) {
                        if swept >= ec.p_neighbors || s.exhausted() {
                            break;
                        }
                        if s.eval(&n).is_some() {
                            swept += 1;
                        }
                    }
                }
                continue 'outer;
            }
            if s.exhausted() {
                break 'outer;
            }
        }
        break;
    }
    s.out
}

pub fn bottleneck_explore(ctx: &KernelContext, ec: &ExplorerConfig) -> Vec<Explored> {
    greedy(ctx, ec, false)
}

pub fn hybrid_explore(ctx: &KernelContext, ec: &ExplorerConfig) -> Vec<Explored> {
    greedy(ctx, ec, true)
}

/// Uniform sample of kept points without replacement.
pub fn random_explore(ctx: &KernelContext, ec: &ExplorerConfig) -> Vec<Explored> {
    let space = &ctx.space;
    let mut rng = ChaCha8Rng::seed_from_u64(ec.seed ^ fnv1a(ctx.name()));
    let mut s = Session::new(ctx, ec.budget);
    if space.size_pruned <= ENUMERATE_LIMIT {
        let mut all: Vec<Point> = space.enumerate().collect();
        all.shuffle(&mut rng);
        for p in all.iter().take(ec.budget) {
            s.eval(p);
        }
    } else {
        let want = (ec.budget as u128).min(space.size_pruned) as usize;
        while s.out.len() < want {
            let p: Point = space.candidates.iter().map(|c| rng.gen_range(0..c.options.len() as u8)).collect();
            if space.is_kept(&p) {
                s.eval(&p);
            }
        }
    }
    s.out
}

/// Wraps an evaluation as a record plus the graph it refers to.
pub fn to_record(ctx: &KernelContext, e: &Explored, provenance: Provenance) -> (DesignRecord, ProgGraph) {
    let graph = ctx.instantiate_point(&e.point);
    let record = DesignRecord {
        kernel: ctx.name().to_string(),
        config: ctx.space.to_config(&e.point),
        graph_ref: graph.content_hash(),
        result: e.result,
        provenance,
    };
    (record, graph)
}

/// Runs the three explorers on every kernel and deduplicates their union.
/// Records appear grouped by kernel in input order, then by explorer.
pub fn build_database(contexts: &[KernelContext], cfg: &DbGenConfig) -> Result<Database, DbError> {
    let mut names = HashSet::new();
    for c in contexts {
        if !names.insert(c.name()) {
            return Err(DbError::DuplicateKernel(c.name().to_string()));
        }
    }
    let run = |ctx: &KernelContext| {
        [
            (Provenance::Bottleneck, bottleneck_explore(ctx, &cfg.bottleneck)),
            (Provenance::Hybrid, hybrid_explore(ctx, &cfg.hybrid)),
            (Provenance::Random, random_explore(ctx, &cfg.random)),
        ]
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build().expect("thread pool");
    let results: Vec<_> = pool.install(|| contexts.par_iter().map(run).collect());
    let mut db = Database::new();
    if let Some(c) = contexts.first() {
        db.settings = DbSettings { factor_cap: c.space.factor_cap, oracle: c.oracle.config.clone() };
    }
    for (ctx, runs) in contexts.iter().zip(results) {
        db.add_kernel(&ctx.source)?;
        for (prov, evals) in runs {
            for e in &evals {
                if db.contains(ctx.name(), &ctx.space.to_config(&e.point)) {
                    continue;
                }
                let (rec, g) = to_record(ctx, e, prov);
                db.append(rec, &g)?;
            }
        }
    }
    Ok(db)
}

/// Per-kernel "total / valid" table.
pub fn summary_table(db: &Database) -> String {
    let summary: BTreeMap<String, (usize, usize)> = db.summary();
    let width = summary.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>7}  {:>7}\n", "kernel", "total", "valid");
    let (mut t, mut v) = (0, 0);
    for (k, (total, valid)) in &summary {
        out.push_str(&format!("{k:<width$}  {total:>7}  {valid:>7}\n"));
        t += total;
        v += valid;
    }
    out.push_str(&format!("{:<width$}  {t:>7}  {v:>7}\n", "all"));
    out
}
