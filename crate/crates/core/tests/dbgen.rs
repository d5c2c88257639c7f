mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use pragma_dse::context::KernelContext;
use pragma_dse::dbgen::*;
use pragma_dse::frontend::{parse_kernel_text, KernelSource};
use pragma_dse::oracle::OracleConfig;
use pragma_dse::space::Point;
use pragma_dse::trainer::{DbError, Provenance};

fn inline(text: &str, cap: u64) -> KernelContext {
    let ir = parse_kernel_text(text).unwrap();
    let src = KernelSource { name: ir.name.clone(), text: text.into(), path: String::new() };
    KernelContext::new(src, cap, OracleConfig::default()).unwrap()
}

const LEAF4: &str = "void leaf(int a[4]) {
#pragma ACCEL PIPELINE auto{_PIPE_L1}
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
  for (int i = 0; i < 4; i++) {
    a[i] += 1;
  }
}
";

fn points(e: &[Explored]) -> Vec<Point> {
    e.iter().map(|x| x.point.clone()).collect()
}

#[test]
fn budget_one() {
    for ctx in corpus_contexts(&["toy", "gemm"]) {
        let ec = ExplorerConfig::with_budget(1, 0);
        for run in [bottleneck_explore(&ctx, &ec), hybrid_explore(&ctx, &ec)] {
            assert_eq!(points(&run), vec![ctx.default_point()]);
        }
        assert_eq!(random_explore(&ctx, &ec).len(), 1);
    }
}

#[test]
fn explorers_respect_budget_and_pruning() {
    for ctx in corpus_contexts(&["toy", "scale_rows", "stencil", "mvt"]) {
        for budget in [5, 40] {
            let ec = ExplorerConfig::with_budget(budget, 3);
            for run in [bottleneck_explore(&ctx, &ec), hybrid_explore(&ctx, &ec), random_explore(&ctx, &ec)] {
                assert!(run.len() <= budget);
                let set: BTreeSet<Point> = points(&run).into_iter().collect();
                assert_eq!(set.len(), run.len(), "{}", ctx.name());
                for e in &run {
                    assert!(ctx.space.is_kept(&e.point));
                    assert_eq!(e.result, ctx.oracle.synthesize_point(&e.point));
                }
            }
        }
    }
}

#[test]
fn random_explorer_covers_small_space() {
    let ctx = &corpus_contexts(&["toy"])[0];
    let run = random_explore(ctx, &ExplorerConfig::with_budget(1000, 0));
    let got: BTreeSet<Point> = points(&run).into_iter().collect();
    let all: BTreeSet<Point> = ctx.space.enumerate().collect();
    assert_eq!(got, all);
    assert_eq!(run.len(), all.len());
}

#[test]
fn rejection_sampling_on_large_space() {
    let ctx = &corpus_contexts(&["mvt"])[0];
    assert!(ctx.space.size_pruned > 20_000);
    let run = random_explore(ctx, &ExplorerConfig::with_budget(200, 0));
    assert_eq!(run.len(), 200);
}

/// Chi-square goodness of fit of the first draw over 10⁴ seeds on a
/// 9-point space (8 degrees of freedom, 0.1% critical value 26.12).
#[test]
fn random_explorer_is_uniform() {
    let ctx = inline(LEAF4, 4);
    assert_eq!(ctx.space.size_pruned, 9);
    let mut counts: BTreeMap<Point, usize> = BTreeMap::new();
    let n = 10_000;
    for seed in 0..n {
        let run = random_explore(&ctx, &ExplorerConfig::with_budget(1, seed));
        *counts.entry(run[0].point.clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 9);
    let expected = n as f64 / 9.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 26.12, "chi2 {chi2}");
}

#[test]
fn greedy_only_moves_on_improvement() {
    for ctx in corpus_contexts(&["toy", "scale_rows", "atax", "gemm"]) {
        let run = bottleneck_explore(&ctx, &ExplorerConfig::with_budget(150, 0));
        let default_lat = run[0].result.objectives.map_or(u64::MAX, |o| o.latency);
        let best = run.iter().filter_map(|e| e.result.objectives.map(|o| o.latency)).min().unwrap();
        assert!(best <= default_lat);
        if run.len() < 150 {
            // stopped at a local optimum: no single-slot move of the final
            // best state improves it
            let best_point = &run.iter().find(|e| e.result.objectives.map(|o| o.latency) == Some(best)).unwrap().point;
            for q in ctx.space.neighbors(best_point) {
                if let Some(o) = ctx.oracle.synthesize_point(&q).objectives {
                    assert!(o.latency >= best, "{}: {:?}", ctx.name(), ctx.space.to_config(&q));
                }
            }
        }
    }
}

#[test]
fn hybrid_without_sweeps_is_bottleneck() {
    for ctx in corpus_contexts(&["toy", "scale_rows", "gemm", "stencil"]) {
        let mut ec = ExplorerConfig::with_budget(120, 0);
        ec.x_percent = 100.0;
        ec.p_neighbors = 0;
        assert_eq!(points(&hybrid_explore(&ctx, &ec)), points(&bottleneck_explore(&ctx, &ec)));
        ec.p_neighbors = 8;
        ec.x_percent = 101.0;
        assert_eq!(points(&hybrid_explore(&ctx, &ec)), points(&bottleneck_explore(&ctx, &ec)));
    }
}

#[test]
fn hybrid_sweeps_add_points() {
    let ctx = &corpus_contexts(&["gemm"])[0];
    let ec = ExplorerConfig { budget: 400, x_percent: 0.0, p_neighbors: 8, seed: 0 };
    let h = hybrid_explore(ctx, &ec);
    let b = bottleneck_explore(ctx, &ec);
    let hs: BTreeSet<Point> = points(&h).into_iter().collect();
    assert!(hs.len() > points(&b).into_iter().collect::<BTreeSet<_>>().intersection(&hs).count());
}

#[test]
fn database_is_deterministic_and_unique() {
    let ctxs = corpus_contexts(&["toy", "scale_rows", "bicg"]);
    let mut cfg = DbGenConfig::new(4);
    cfg.bottleneck.budget = 30;
    cfg.hybrid.budget = 30;
    cfg.random.budget = 30;
    let a = build_database(&ctxs, &cfg).unwrap();
    cfg.jobs = 3;
    let b = build_database(&ctxs, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    let keys: BTreeSet<(String, String)> = a.records.iter().map(|r| (r.kernel.clone(), r.config.key())).collect();
    assert_eq!(keys.len(), a.len());
    for r in &a.records {
        let g = a.graph_json(&r.graph_ref).unwrap();
        assert_eq!(pragma_dse::graph::ProgGraph::from_json(g).unwrap().content_hash(), r.graph_ref);
    }
    // records are grouped by kernel in input order, explorers in order
    let order: Vec<&str> = a.records.iter().map(|r| r.kernel.as_str()).collect();
    let mut grouped = order.clone();
    grouped.dedup();
    assert_eq!(grouped, vec!["toy", "scale_rows", "bicg"]);
    let first_random = a.records.iter().position(|r| r.provenance == Provenance::Random);
    let last_bottleneck = a.records.iter().rposition(|r| r.kernel == "toy" && r.provenance == Provenance::Bottleneck);
    if let (Some(f), Some(l)) = (first_random, last_bottleneck) {
        assert!(l < f);
    }
}

#[test]
fn duplicate_kernel_names_are_rejected() {
    let ctxs = corpus_contexts(&["toy", "toy"]);
    assert!(matches!(build_database(&ctxs, &DbGenConfig::new(0)), Err(DbError::DuplicateKernel(_))));
}

#[test]
fn summary_table_counts() {
    let db = small_db(&["toy", "scale_rows"], 10, 0);
    let table = summary_table(&db);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("kernel"));
    let total: usize = lines[3].split_whitespace().nth(1).unwrap().parse().unwrap();
    assert_eq!(total, db.len());
    let valid: usize = lines[3].split_whitespace().nth(2).unwrap().parse().unwrap();
    assert_eq!(valid, db.records.iter().filter(|r| r.result.valid).count());
}
