mod common;

use pragma_dse::context::KernelContext;
use pragma_dse::corpus;
use pragma_dse::dse::*;
use pragma_dse::frontend::KernelSource;
use pragma_dse::oracle::{Objectives, OracleConfig, Utilization};
use pragma_dse::space::DesignConfig;
use pragma_dse::trainer::{Database, DesignRecord, Provenance};
use proptest::prelude::*;

fn ctx_of(name: &str, text: &str) -> KernelContext {
    let src = KernelSource { name: name.into(), text: text.into(), path: String::new() };
    KernelContext::new(src, 32, OracleConfig::default()).unwrap()
}

fn slot_names(ctx: &KernelContext) -> Vec<String> {
    order_pragmas(&ctx.space).into_iter().map(|c| ctx.space.candidates[c].slot.clone()).collect()
}

#[test]
fn order_single_leaf_loop() {
    let ctx = &common::corpus_contexts(&["toy"])[0];
    assert_eq!(slot_names(ctx), vec!["_PARA_L1", "_PIPE_L1"]);
}

#[test]
fn order_two_level_nest() {
    let ctx = ctx_of(
        "nest",
        "void nest(float a[8][4]) {
#pragma ACCEL PIPELINE auto{_PIPE_L1}
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
#pragma ACCEL TILE factor=auto{_TILE_L1}
  for (int i = 0; i < 8; i++) {
#pragma ACCEL PIPELINE auto{_PIPE_L2}
#pragma ACCEL PARALLEL factor=auto{_PARA_L2}
    for (int j = 0; j < 4; j++) {
      a[i][j] += 1;
    }
  }
}
",
    );
    assert_eq!(slot_names(&ctx), vec!["_PARA_L2", "_PIPE_L1", "_PIPE_L2", "_PARA_L1", "_TILE_L1"]);
}

#[test]
fn order_zero_slots() {
    let ctx = ctx_of("plain", "void plain(int a[4]) {\n  for (int i = 0; i < 4; i++) {\n    a[i] = 1;\n  }\n}\n");
    assert!(order_pragmas(&ctx.space).is_empty());
}

#[test]
fn order_is_a_permutation_on_corpus() {
    for ctx in common::corpus_contexts(&corpus::names().collect::<Vec<_>>()) {
        let mut o = order_pragmas(&ctx.space);
        assert_eq!(o, order_pragmas(&ctx.space));
        o.sort_unstable();
        assert_eq!(o, (0..ctx.space.num_slots()).collect::<Vec<_>>(), "{}", ctx.name());
    }
}

/// Lowest latency among valid designs whose every utilization is at most
/// `threshold`.
fn brute_force_best(ctx: &KernelContext, threshold: f64) -> Option<u64> {
    ctx.space
        .enumerate()
        .filter_map(|p| ctx.oracle.synthesize_point(&p).objectives)
        .filter(|o| o.util.max() <= threshold)
        .map(|o| o.latency)
        .min()
}

#[test]
fn oracle_search_finds_constrained_optimum() {
    let dc = DseConfig::default();
    for ctx in common::corpus_contexts(&corpus::names().collect::<Vec<_>>()) {
        if ctx.space.size_pruned > 5000 {
            continue;
        }
        let out = search(&OracleSurrogate, &ctx, &dc).unwrap();
        assert_eq!(out.mode, SearchMode::Exhaustive);
        assert!(out.complete);
        assert_eq!(u128::from(out.explored), ctx.space.size_pruned);
        let best = brute_force_best(&ctx, dc.util_threshold).unwrap();
        let found = ctx.oracle.synthesize_point(&out.top[0].point).objectives.unwrap();
        assert_eq!(found.latency, best, "{}", ctx.name());
        assert!(out.top.len() <= dc.top_m);
        for w in out.top.windows(2) {
            assert!(w[0].prediction.latency_t >= w[1].prediction.latency_t);
        }
    }
}

#[test]
fn zero_threshold_gives_empty_result() {
    let ctx = &common::corpus_contexts(&["toy"])[0];
    let dc = DseConfig { util_threshold: 0.0, ..DseConfig::default() };
    let out = search(&OracleSurrogate, ctx, &dc).unwrap();
    assert!(out.top.is_empty());
    assert_eq!(out.survivors, 0);
    assert!(out.diagnostic.unwrap().contains("toy"));
}

#[test]
fn exhaustive_and_ordered_agree_on_small_spaces() {
    for name in ["toy", "scale_rows", "bicg"] {
        let ctx = &common::corpus_contexts(&[name])[0];
        let run = |mode| {
            let dc = DseConfig { mode: Some(mode), top_m: 10, ..DseConfig::default() };
            let out = search(&OracleSurrogate, ctx, &dc).unwrap();
            assert!(out.complete);
            out.top.into_iter().map(|c| c.config.key()).collect::<Vec<_>>()
        };
        assert_eq!(run(SearchMode::Exhaustive), run(SearchMode::Ordered), "{name}");
    }
}

#[test]
fn ordered_mode_respects_eval_cap() {
    let ctx = &common::corpus_contexts(&["mvt"])[0];
    let dc = DseConfig { max_evals: 500, ..DseConfig::default() };
    let out = search(&OracleSurrogate, ctx, &dc).unwrap();
    assert_eq!(out.mode, SearchMode::Ordered);
    assert_eq!(out.explored, 500);
    for c in &out.top {
        assert!(ctx.space.is_kept(&c.point));
    }
}

#[test]
fn config_validation() {
    assert!(DseConfig::default().validate().is_ok());
    assert!(DseConfig { top_m: 0, ..DseConfig::default() }.validate().is_err());
    assert!(DseConfig { util_threshold: 1.5, ..DseConfig::default() }.validate().is_err());
    assert!(DseConfig { util_threshold: f64::NAN, ..DseConfig::default() }.validate().is_err());
    let ctx = &common::corpus_contexts(&["toy"])[0];
    assert!(search(&OracleSurrogate, ctx, &DseConfig { top_m: 0, ..DseConfig::default() }).is_err());
}

#[test]
fn validate_top_appends_and_deduplicates() {
    let ctx = &common::corpus_contexts(&["toy"])[0];
    let mut db = Database::new();
    let out = search(&OracleSurrogate, ctx, &DseConfig { top_m: 3, ..DseConfig::default() }).unwrap();
    let configs: Vec<DesignConfig> = out.top.iter().map(|c| c.config.clone()).collect();
    let added = validate_top(&mut db, ctx, &configs, 2).unwrap();
    assert_eq!(added.len(), 3);
    for (rec, cfg) in added.iter().zip(&configs) {
        assert_eq!(rec.provenance, Provenance::DseRound(2));
        assert_eq!(rec.provenance.to_string(), "dse_round_2");
        assert_eq!(rec.result, ctx.oracle.synthesize(cfg).unwrap());
    }
    assert_eq!(db.len(), 3);
    let again = validate_top(&mut db, ctx, &configs, 3).unwrap();
    assert!(again.is_empty());
    assert_eq!(db.len(), 3);
}

#[test]
fn validate_top_with_invalid_designs() {
    let ctx = &common::corpus_contexts(&["gemm"])[0];
    let invalid: Vec<DesignConfig> = ctx
        .space
        .enumerate()
        .filter(|p| !ctx.oracle.synthesize_point(p).valid)
        .take(2)
        .map(|p| ctx.space.to_config(&p))
        .collect();
    assert_eq!(invalid.len(), 2);
    let mut db = Database::new();
    let added = validate_top(&mut db, ctx, &invalid, 1).unwrap();
    assert_eq!(added.len(), 2);
    assert!(added.iter().all(|r| !r.result.valid));
}

#[test]
fn zero_rounds_reports_initial_bests() {
    let ctxs = common::corpus_contexts(&["toy", "scale_rows"]);
    let contexts = common::context_map(&ctxs);
    let mut db = common::small_db(&["toy", "scale_rows"], 10, 1);
    let before = db.len();
    let kernels = vec!["toy".to_string(), "scale_rows".to_string()];
    let spec = SurrogateSpec {
        train: Default::default(),
        main: Default::default(),
        bram: Default::default(),
        classify: Default::default(),
    };
    let dc = DseConfig { rounds: 0, ..DseConfig::default() };
    let al = run_active_learning(&mut db, &contexts, &kernels, &[], &spec, &dc).unwrap();
    assert!(al.report.rounds.is_empty());
    assert!(al.surrogate.is_none());
    assert_eq!(al.report.initial_best, db.best_latency());
    assert_eq!(al.report.final_best(), &al.report.initial_best);
    assert_eq!(db.len(), before);
    let unknown = run_active_learning(&mut db, &contexts, &["nope".to_string()], &[], &spec, &dc);
    assert!(matches!(unknown, Err(DseError::UnknownKernel(_))));
}

fn obj(latency: u64, u: [f64; 4]) -> Objectives {
    Objectives { latency, util: Utilization { dsp: u[0], bram: u[1], lut: u[2], ff: u[3] } }
}

#[test]
fn dominance() {
    let a = obj(10, [0.1, 0.1, 0.1, 0.1]);
    assert!(!dominates(&a, &a));
    assert!(dominates(&a, &obj(11, [0.1, 0.1, 0.1, 0.1])));
    assert!(dominates(&a, &obj(10, [0.1, 0.2, 0.1, 0.1])));
    assert!(!dominates(&a, &obj(9, [0.5, 0.1, 0.1, 0.1])));
    assert!(!dominates(&obj(9, [0.5, 0.1, 0.1, 0.1]), &a));
}

fn records_from(objs: &[Objectives]) -> Vec<DesignRecord> {
    let ctx = &common::corpus_contexts(&["toy"])[0];
    let p = ctx.space.default_point();
    let base = pragma_dse::dbgen::to_record(
        ctx,
        &pragma_dse::dbgen::Explored { result: ctx.oracle.synthesize_point(&p), point: p },
        Provenance::Random,
    )
    .0;
    objs.iter()
        .map(|o| {
            let mut r = base.clone();
            r.result.objectives = Some(*o);
            r.result.valid = true;
            r
        })
        .collect()
}

proptest! {
    #[test]
    fn pareto_matches_pairwise_check(
        raw in prop::collection::vec((1u64..6, prop::array::uniform4(0u8..4)), 0..30)
    ) {
        let objs: Vec<Objectives> =
            raw.iter().map(|(l, u)| obj(*l, u.map(|x| f64::from(x) / 4.0))).collect();
        let recs = records_from(&objs);
        let refs: Vec<&DesignRecord> = recs.iter().collect();
        let front = pareto_filter(&refs);
        let front_objs: Vec<Objectives> = front.iter().map(|r| r.result.objectives.unwrap()).collect();
        for a in &front_objs {
            for b in &front_objs {
                prop_assert!(!dominates(a, b));
            }
        }
        // every non-dominated record is represented on the front
        for o in &objs {
            let dominated = objs.iter().any(|q| dominates(q, o));
            let on_front = front_objs.contains(o);
            prop_assert_eq!(on_front, !dominated);
        }
    }
}
