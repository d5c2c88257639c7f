use pragma_dse::corpus;
use pragma_dse::frontend::{parse_kernel, parse_kernel_text, PragmaKind};
use pragma_dse::oracle::*;
use pragma_dse::space::*;

const CODE1: &str = "#define N 64
void toy(int input[N]) {
#pragma ACCEL PIPELINE auto{_PIPE_L1}
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
  for (int i = 0; i < N; i++) {
    input[i] += 1;
  }
}
";

fn oracle_of(text: &str) -> Oracle {
    let ir = parse_kernel_text(text).unwrap();
    let space = DesignSpace::new(&ir, DEFAULT_FACTOR_CAP);
    Oracle::new(&ir, space, OracleConfig::default())
}

fn corpus_oracle(name: &str) -> Oracle {
    let ir = parse_kernel(&corpus::source(name).unwrap()).unwrap();
    let space = DesignSpace::new(&ir, DEFAULT_FACTOR_CAP);
    Oracle::new(&ir, space, OracleConfig::default())
}

fn config(o: &Oracle, pairs: &[(&str, &str)]) -> DesignConfig {
    let mut c = o.space.to_config(&o.space.default_point());
    for (k, v) in pairs {
        let value: OptionValue = serde_json::from_str(&format!("\"{v}\"")).or_else(|_| serde_json::from_str(v)).unwrap();
        c.0.insert(k.to_string(), value);
    }
    c
}

#[test]
fn code1_default_latency() {
    let o = oracle_of(CODE1);
    let r = o.synthesize(&config(&o, &[])).unwrap();
    assert!(r.valid);
    assert_eq!(r.reason, Reason::Ok);
    // 64 iterations of load+add+store, plus one read and one write burst of 64 words
    let dram = 2 * (50 + 64 / 8);
    assert_eq!(r.objectives.unwrap().latency, 64 * 5 + dram);
}

#[test]
fn parallel_over_trip_is_invalid() {
    let o = oracle_of(CODE1);
    let lp = vec![LoopPragmas { parallel: 128, ..Default::default() }];
    let r = o.synthesize_loops(&lp);
    assert!(!r.valid);
    assert_eq!(r.reason, Reason::ParallelOverTrip);
    assert!(r.objectives.is_none());
}

const NEST: &str = "void nest(float a[8][4], float b[4], float c[8][4]) {
#pragma ACCEL PIPELINE auto{_PIPE_L0}
  for (int i = 0; i < 8; i++) {
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
    for (int j = 0; j < 4; j++) {
      c[i][j] = a[i][j] * b[j];
    }
  }
}
";

#[test]
fn outer_fg_with_inner_parallel_is_infeasible() {
    let o = oracle_of(NEST);
    let r = o.synthesize(&config(&o, &[("_PIPE_L0", "fg"), ("_PARA_L1", "4")])).unwrap();
    assert_eq!(r.reason, Reason::InfeasibleCombination);
    assert!(!r.valid);
}

#[test]
fn cg_with_own_parallel_is_infeasible() {
    let o = oracle_of(CODE1);
    let r = o.synthesize(&config(&o, &[("_PIPE_L1", "cg"), ("_PARA_L1", "2")])).unwrap();
    assert_eq!(r.reason, Reason::InfeasibleCombination);
}

#[test]
fn parallelism_cap() {
    let text = "void k(float a[64][64]) {
#pragma ACCEL PARALLEL factor=auto{_PARA_L0}
  for (int i = 0; i < 64; i++) {
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
    for (int j = 0; j < 64; j++) {
      a[i][j] += 1;
    }
  }
}
";
    let o = oracle_of(text);
    let ok = o.synthesize(&config(&o, &[("_PARA_L0", "32"), ("_PARA_L1", "32")])).unwrap();
    assert_eq!(ok.reason, Reason::Ok);
    let lp = vec![LoopPragmas { parallel: 64, ..Default::default() }, LoopPragmas { parallel: 32, ..Default::default() }];
    assert_eq!(o.synthesize_loops(&lp).reason, Reason::ParallelismCap);
}

#[test]
fn unknown_slot_is_an_error() {
    let o = oracle_of(CODE1);
    let mut c = config(&o, &[]);
    c.0.insert("_NOPE".into(), OptionValue::Factor(1));
    assert!(o.synthesize(&c).is_err());
}

const LEAF8: &str = "void leaf(int a[8]) {
  for (int i = 0; i < 8; i++) {
    a[i] += 1;
  }
}
";

#[test]
fn leaf_loop_latency_examples() {
    let o = oracle_of(LEAF8);
    let lat = |pipeline, parallel| o.loop_latency(0, &[LoopPragmas { pipeline, parallel, tile: 1 }]);
    assert_eq!(lat(PipelineMode::Off, 1), 40);
    assert_eq!(lat(PipelineMode::Fg, 1), 8 + 5 - 1);
    assert_eq!(lat(PipelineMode::Off, 8), 5);
}

#[test]
fn resource_examples() {
    let o = oracle_of("void k(float a[16], float c[16], float s) {\n  for (int i = 0; i < 16; i++) {\n    c[i] = a[i] * s;\n  }\n}\n");
    let r = o.synthesize(&config(&o, &[])).unwrap();
    let util = r.objectives.unwrap().util;
    assert_eq!(o.resources(&[LoopPragmas::default()]).dsp, 5.0);
    assert_eq!(util.dsp, 5.0 / 6840.0);
    let ops = o.statement(0).ops.total() as f64;
    assert_eq!(o.resources(&[LoopPragmas::default()]).lut, 5000.0 + 100.0 * ops);
    assert!((util.ff - 0.9 * util.lut * 1182240.0 / 2364480.0).abs() < 1e-15);

    let cg = oracle_of(
        "void k(float a[1024]) {\n#pragma ACCEL PIPELINE auto{_PIPE_L0}\n  for (int i = 0; i < 1024; i++) {\n    a[i] += 1;\n  }\n}\n",
    );
    let res = cg.resources(&[LoopPragmas { pipeline: PipelineMode::Cg, parallel: 1, tile: 1 }]);
    assert_eq!(res.bram18, 4.0);
    let res = cg.resources(&[LoopPragmas::default()]);
    assert_eq!(res.bram18, 2.0);

    let empty = oracle_of("void k(int a[4]) {\n}\n");
    let res = empty.resources(&[]);
    assert_eq!((res.dsp, res.lut), (0.0, 5000.0));
}

#[test]
fn parallel_factor_partitions_bram() {
    let o = oracle_of(CODE1);
    let base = o.resources(&[LoopPragmas::default()]).bram18;
    let p4 = o.resources(&[LoopPragmas { parallel: 4, ..Default::default() }]).bram18;
    assert_eq!(p4, 4.0 * base);
}

#[test]
fn synthesis_is_deterministic() {
    for name in corpus::names() {
        let o = corpus_oracle(name);
        for p in o.space.enumerate().take(200) {
            let a = serde_json::to_string(&o.synthesize_point(&p)).unwrap();
            let b = serde_json::to_string(&o.synthesize_point(&p)).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn valid_iff_ok() {
    for name in ["toy", "scale_rows", "atax"] {
        let o = corpus_oracle(name);
        for p in o.space.enumerate() {
            let r = o.synthesize_point(&p);
            assert_eq!(r.valid, r.reason == Reason::Ok);
            assert_eq!(r.valid, r.objectives.is_some());
            if let Some(obj) = r.objectives {
                assert!(obj.latency >= 1);
                assert!(obj.util.dsp >= 0.0 && obj.util.bram >= 0.0);
            }
        }
    }
}

/// Raising any parallel factor never slows a valid design down and never
/// frees DSP, LUT or FF.
#[test]
fn parallel_monotonicity_exhaustive() {
    for name in ["toy", "scale_rows", "atax", "bicg", "stencil", "gesummv"] {
        let o = corpus_oracle(name);
        let s = &o.space;
        let par: Vec<usize> =
            (0..s.num_slots()).filter(|&c| s.candidates[c].kind == PragmaKind::Parallel).collect();
        let mut pairs = 0;
        for p in s.odometer((0..s.num_slots()).collect()) {
            let Some(a) = o.synthesize_point(&p).objectives else { continue };
            for &c in &par {
                if p[c] as usize + 1 >= s.candidates[c].options.len() {
                    continue;
                }
                let mut q = p.clone();
                q[c] += 1;
                let Some(b) = o.synthesize_point(&q).objectives else { continue };
                pairs += 1;
                assert!(b.latency <= a.latency, "{name} {:?} -> {:?}", s.to_config(&p), s.to_config(&q));
                assert!(b.util.dsp >= a.util.dsp && b.util.lut >= a.util.lut && b.util.ff >= a.util.ff);
            }
        }
        assert!(pairs > 0, "{name}");
    }
}

/// Somewhere in the corpus, latency along a single factor is neither
/// non-increasing nor non-decreasing.
#[test]
fn some_kernel_is_non_monotone_in_a_factor() {
    let mut found = None;
    'outer: for name in corpus::names() {
        let o = corpus_oracle(name);
        let s = &o.space;
        if s.size_pruned > 20_000 {
            continue;
        }
        for p in s.enumerate() {
            for c in 0..s.num_slots() {
                if s.candidates[c].kind == PragmaKind::Pipeline || p[c] != 0 {
                    continue;
                }
                let lats: Vec<u64> = (0..s.candidates[c].options.len() as u8)
                    .filter_map(|o_| {
                        let mut q = p.clone();
                        q[c] = o_;
                        o.synthesize_point(&q).objectives.map(|ob| ob.latency)
                    })
                    .collect();
                let up = lats.windows(2).any(|w| w[1] > w[0]);
                let down = lats.windows(2).any(|w| w[1] < w[0]);
                if up && down {
                    found = Some((name, s.candidates[c].slot.clone()));
                    break 'outer;
                }
            }
        }
    }
    assert!(found.is_some());
}

#[test]
fn kv_config_file() {
    let c = OracleConfig::from_kv("dram_burst_fixed = 10\nop_latency.div = 20\n").unwrap();
    assert_eq!(c.dram_burst_fixed, 10);
    assert_eq!(c.op_latency.div, 20);
    assert_eq!(c.op_latency.mul, 3);
    let d = OracleConfig::default();
    assert_eq!((d.op_latency.add, d.op_latency.mul, d.op_latency.div, d.op_latency.load), (1, 3, 16, 2));
    assert_eq!((d.dram_burst_fixed, d.dram_words_per_cycle, d.bram_bits, d.parallel_product_cap), (50, 8, 18432, 1024));
    assert!(OracleConfig::from_kv("device.dsp = abc").is_err());
}
