use pragma_dse::corpus;
use pragma_dse::frontend::{parse_kernel, parse_kernel_text, PragmaKind};
use pragma_dse::space::*;
use proptest::prelude::*;
use std::collections::BTreeSet;

fn space_of(text: &str, cap: u64) -> DesignSpace {
    DesignSpace::new(&parse_kernel_text(text).unwrap(), cap)
}

fn leaf(trip: u64) -> String {
    format!(
        "void leaf(int a[{trip}]) {{
#pragma ACCEL PIPELINE auto{{_PIPE_L1}}
#pragma ACCEL PARALLEL factor=auto{{_PARA_L1}}
  for (int i = 0; i < {trip}; i++) {{
    a[i] += 1;
  }}
}}
"
    )
}

const NEST: &str = "void nest(float a[8][4], float b[4], float c[8][4]) {
#pragma ACCEL PIPELINE auto{_PIPE_L0}
#pragma ACCEL PARALLEL factor=auto{_PARA_L0}
#pragma ACCEL TILE factor=auto{_TILE_L0}
  for (int i = 0; i < 8; i++) {
#pragma ACCEL PIPELINE auto{_PIPE_L1}
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
    for (int j = 0; j < 4; j++) {
      c[i][j] = a[i][j] * b[j];
    }
  }
}
";

fn cfg(pairs: &[(&str, OptionValue)]) -> DesignConfig {
    DesignConfig(pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

const OFF: OptionValue = OptionValue::Pipeline(PipelineMode::Off);
const CG: OptionValue = OptionValue::Pipeline(PipelineMode::Cg);
const FG: OptionValue = OptionValue::Pipeline(PipelineMode::Fg);
fn f(v: u64) -> OptionValue {
    OptionValue::Factor(v)
}

#[test]
fn leaf_loop_candidates() {
    let s = space_of(&leaf(8), 32);
    assert_eq!(s.candidates.len(), 2);
    assert_eq!(s.candidates[0].kind, PragmaKind::Pipeline);
    assert_eq!(s.candidates[0].options, vec![OFF, CG, FG]);
    assert_eq!(s.candidates[1].options, vec![f(1), f(2), f(4), f(8)]);
    assert!(s.candidates.iter().all(|c| c.kind != PragmaKind::Tile));
}

#[test]
fn trip_one_has_single_parallel_option() {
    let s = space_of(&leaf(1), 32);
    assert_eq!(s.candidates[1].options, vec![f(1)]);
}

#[test]
fn factor_cap_limits_divisors() {
    let s = space_of(&leaf(64), 16);
    assert_eq!(s.candidates[1].options, vec![f(1), f(2), f(4), f(8), f(16)]);
}

#[test]
fn pruning_examples() {
    let s = space_of(NEST, 32);
    let base = [
        ("_PIPE_L0", OFF),
        ("_PARA_L0", f(1)),
        ("_TILE_L0", f(1)),
        ("_PIPE_L1", OFF),
        ("_PARA_L1", f(1)),
    ];
    let with = |changes: &[(&str, OptionValue)]| {
        let mut c = cfg(&base);
        for (k, v) in changes {
            c.0.insert(k.to_string(), *v);
        }
        c
    };
    assert!(s.prune_config(&with(&[])).unwrap());
    assert!(!s.prune_config(&with(&[("_PIPE_L0", FG), ("_PARA_L1", f(4))])).unwrap());
    assert!(s.prune_config(&with(&[("_PIPE_L0", CG), ("_PARA_L1", f(4))])).unwrap());
    // fg on the outer loop also forbids inner pipelining and its own tiling
    assert!(!s.prune_config(&with(&[("_PIPE_L0", FG), ("_PIPE_L1", CG)])).unwrap());
    assert!(!s.prune_config(&with(&[("_PIPE_L0", FG), ("_TILE_L0", f(2))])).unwrap());
    assert!(s.prune_config(&with(&[("_PIPE_L0", FG), ("_PARA_L0", f(8))])).unwrap());
}

#[test]
fn single_leaf_raw_count() {
    let s = space_of(&leaf(4), 4);
    assert_eq!(s.size_total, 9);
    assert_eq!(s.odometer((0..s.num_slots()).collect()).count(), 9);
    assert_eq!(s.size_pruned, 9);
}

#[test]
fn zero_slots_has_one_empty_config() {
    let s = space_of("void k(int a[4]) {\n  for (int i = 0; i < 4; i++) {\n    a[i] = 1;\n  }\n}\n", 32);
    assert_eq!(s.size_total, 1);
    let all: Vec<Point> = s.enumerate().collect();
    assert_eq!(all, vec![Vec::<u8>::new()]);
    assert!(s.to_config(&all[0]).0.is_empty());
    assert!(s.neighbors(&all[0]).is_empty());
}

/// Raw enumeration followed by filtering.
fn brute_force(s: &DesignSpace) -> BTreeSet<Point> {
    s.odometer((0..s.num_slots()).collect()).filter(|p| s.is_kept(p)).collect()
}

#[test]
fn enumerate_matches_brute_force() {
    for text in [NEST.to_string(), leaf(12)] {
        let s = space_of(&text, 32);
        let fast: Vec<Point> = s.enumerate().collect();
        let set: BTreeSet<Point> = fast.iter().cloned().collect();
        assert_eq!(set.len(), fast.len(), "duplicates");
        assert_eq!(set, brute_force(&s));
        assert_eq!(s.size_pruned, fast.len() as u128);
    }
    for name in ["toy", "scale_rows", "atax", "bicg", "stencil"] {
        let ir = parse_kernel(&corpus::source(name).unwrap()).unwrap();
        let s = DesignSpace::new(&ir, 32);
        assert_eq!(s.enumerate().count() as u128, s.size_pruned, "{name}");
    }
}

#[test]
fn neighbors_of_trip8_default() {
    // pipeline cg/fg plus parallel 2/4/8
    let s = space_of(&leaf(8), 32);
    let n = s.neighbors(&s.default_point());
    assert_eq!(n.len(), 5);
    let configs: BTreeSet<String> = n.iter().map(|p| s.to_config(p).key()).collect();
    assert!(configs.contains("_PARA_L1=1,_PIPE_L1=cg"));
    assert!(configs.contains("_PARA_L1=8,_PIPE_L1=off"));
}

#[test]
fn config_json_round_trip() {
    let s = space_of(NEST, 32);
    for p in s.enumerate() {
        let c = s.to_config(&p);
        let json = serde_json::to_string(&c).unwrap();
        let back: DesignConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(s.to_point(&back).unwrap(), p);
    }
    let json = serde_json::to_string(&s.to_config(&s.default_point())).unwrap();
    assert!(json.contains("\"_PIPE_L0\":\"off\""), "{json}");
    assert!(json.contains("\"_PARA_L0\":1"), "{json}");
}

#[test]
fn bad_configs_are_rejected() {
    let s = space_of(&leaf(8), 32);
    assert!(matches!(
        s.to_point(&cfg(&[("_PIPE_L1", OFF), ("_PARA_L1", f(3))])),
        Err(SpaceError::BadOption { .. })
    ));
    assert!(matches!(s.to_point(&cfg(&[("_PIPE_L1", OFF)])), Err(SpaceError::MissingSlot(_))));
    assert!(matches!(
        s.to_point(&cfg(&[("_PIPE_L1", OFF), ("_PARA_L1", f(1)), ("_X", f(1))])),
        Err(SpaceError::UnknownSlot(_))
    ));
    assert_eq!(s.to_point_lenient(&cfg(&[("_PARA_L1", f(2))])).unwrap(), vec![0, 1]);
}

proptest! {
    #[test]
    fn neighbor_relation_is_symmetric(seed in 0usize..13755) {
        let ir = parse_kernel(&corpus::source("gemm").unwrap()).unwrap();
        let s = DesignSpace::new(&ir, 32);
        let p = s.enumerate().nth(seed % s.size_pruned as usize).unwrap();
        for q in s.neighbors(&p) {
            prop_assert!(s.is_kept(&q));
            prop_assert_eq!(q.iter().zip(&p).filter(|(a, b)| a != b).count(), 1);
            prop_assert!(s.neighbors(&q).contains(&p));
        }
    }

    #[test]
    fn kept_points_round_trip(trip in 1u64..40, cap in 1u64..40) {
        let s = space_of(&leaf(trip), cap);
        for p in s.enumerate() {
            prop_assert_eq!(s.to_point(&s.to_config(&p)).unwrap(), p);
        }
        let divisors = (1..=trip.min(cap)).filter(|d| trip % d == 0).count() as u128;
        prop_assert_eq!(s.size_total, 3 * divisors);
    }
}
