use pragma_dse::corpus;
use pragma_dse::frontend::*;
use proptest::prelude::*;

const CODE1: &str = "#define N 64
void toy(int input[N]) {
#pragma ACCEL PIPELINE auto{_PIPE_L1}
#pragma ACCEL PARALLEL factor=auto{_PARA_L1}
  for (int i = 0; i < N; i++) {
    input[i] += 1;
  }
}
";

const NEST: &str = "void nest(float a[8][4], float b[4], float c[8][4]) {
  for (int i = 0; i < 8; i++) {
    for (int j = 0; j < 4; j++) {
      c[i][j] = a[i][j] * b[j];
    }
  }
}
";

fn parse(text: &str) -> KernelIr {
    parse_kernel_text(text).unwrap()
}

#[test]
fn code1_toy_kernel() {
    let ir = parse(CODE1);
    assert_eq!(ir.name, "toy");
    assert_eq!(ir.loops.len(), 1);
    assert_eq!(ir.loops[0].trip_count, 64);
    let kinds: Vec<PragmaKind> = ir.slots.iter().map(|s| s.kind).collect();
    assert_eq!(kinds, vec![PragmaKind::Pipeline, PragmaKind::Parallel]);
    assert_eq!(ir.slots[0].name, "_PIPE_L1");
    assert_eq!(ir.slots[1].name, "_PARA_L1");
    assert!(ir.slots.iter().all(|s| s.loop_id == 0));
    let ops = ir.statements[0].ops;
    assert_eq!((ops.add, ops.load, ops.store, ops.total()), (1, 1, 1, 3));
}

#[test]
fn empty_body_has_no_loops() {
    let ir = parse("void empty(int a[4]) {\n}\n");
    assert!(ir.loops.is_empty());
    assert!(ir.slots.is_empty());
    let prog = lower_kernel(&ir);
    assert_eq!(prog.blocks.len(), 2);
    assert_eq!(prog.count(Opcode::Icmp), 0);
}

#[test]
fn two_deep_nest_counts() {
    let ir = parse(NEST);
    assert_eq!(ir.loops.len(), 2);
    assert_eq!(ir.loops[0].trip_count, 8);
    assert_eq!(ir.loops[1].trip_count, 4);
    assert_eq!(ir.loops[1].parent, Some(0));
    assert_eq!(ir.loops[1].depth, 1);
    let ops = ir.statements[0].ops;
    assert_eq!((ops.mul, ops.load, ops.store, ops.add), (1, 2, 1, 0));
    assert_eq!(ir.statements[0].parent, Some(1));
    let writes: Vec<bool> = ir.statements[0].accesses.iter().map(|a| a.is_write).collect();
    assert_eq!(writes.iter().filter(|w| **w).count(), 1);
}

#[test]
fn lowering_code1_blocks() {
    let prog = lower_kernel(&parse(CODE1));
    let kinds: Vec<BlockKind> = prog.blocks.iter().map(|b| b.kind).collect();
    assert_eq!(kinds, vec![BlockKind::Entry, BlockKind::Header, BlockKind::Body, BlockKind::Exit]);
    let ops_in = |b: usize| -> Vec<Opcode> {
        prog.instructions.iter().filter(|i| i.block == b).map(|i| i.opcode).collect()
    };
    let header = ops_in(1);
    assert!(header.contains(&Opcode::Icmp));
    assert!(header.contains(&Opcode::Add));
    assert_eq!(ops_in(2), vec![Opcode::Load, Opcode::Add, Opcode::Store]);
    assert_eq!(prog.count(Opcode::Icmp), 1);
    let icmp = prog.loop_icmp[0];
    // back-edge: the increment feeds the icmp
    assert!(prog.control.iter().any(|&(a, b)| b == icmp && prog.instructions[a].block == 1 && a != icmp));
}

#[test]
fn lowering_nest_preorder() {
    let prog = lower_kernel(&parse(NEST));
    assert_eq!(prog.count(Opcode::Icmp), 2);
    let outer = prog.instructions[prog.loop_icmp[0]].block;
    let inner = prog.instructions[prog.loop_icmp[1]].block;
    assert!(inner > outer);
    for (i, b) in prog.blocks.iter().enumerate() {
        assert_eq!(b.id, i);
    }
}

#[test]
fn lowering_is_deterministic() {
    for src in corpus::all() {
        let a = serde_json::to_string(&lower_kernel(&parse_kernel(&src).unwrap())).unwrap();
        let b = serde_json::to_string(&lower_kernel(&parse_kernel(&src).unwrap())).unwrap();
        assert_eq!(a, b, "{}", src.name);
    }
}

#[test]
fn corpus_invariants() {
    for src in corpus::all() {
        let ir = parse_kernel(&src).unwrap();
        assert_eq!(ir.slots.len(), src.text.matches("auto{").count(), "{}", src.name);
        let prog = lower_kernel(&ir);
        assert_eq!(prog.count(Opcode::Icmp), ir.loops.len());
        for l in &ir.loops {
            assert!(l.trip_count >= 1);
            if let Some(p) = l.parent {
                assert_eq!(l.depth, ir.loops[p].depth + 1);
            }
        }
        let reparsed = parse(&print_kernel(&ir));
        assert_eq!(reparsed, ir, "{}", src.name);
    }
}

#[test]
fn helper_calls_lower_to_call_edges() {
    let ir = parse_kernel(&corpus::source("scale_rows").unwrap()).unwrap();
    let prog = lower_kernel(&ir);
    assert_eq!(prog.count(Opcode::Call), 1);
    // one edge into the helper and one back
    assert_eq!(prog.calls.len(), 2);
}

fn error_of(text: &str) -> ParseError {
    parse_kernel_text(text).unwrap_err()
}

#[test]
fn syntax_error_has_position() {
    match error_of("void k(int a[4]) {\n  for (int i = 0; i < 4; i++) {\n    a[i] = ;\n  }\n}\n") {
        ParseError::Syntax { line, col, .. } => {
            assert_eq!(line, 3);
            assert!(col > 1);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn non_constant_bound() {
    let e = error_of("void k(int a[4], int n) {\n  for (int i = 0; i < n; i++) {\n    a[i] = 1;\n  }\n}\n");
    assert!(matches!(e, ParseError::NonConstantBound { line: 2, .. }), "{e:?}");
}

#[test]
fn dangling_pragma() {
    let e = error_of("void k(int a[4]) {\n#pragma ACCEL PIPELINE auto{_P}\n  a[0] = 1;\n}\n");
    assert!(matches!(e, ParseError::DanglingPragma { line: 2, .. }), "{e:?}");
}

#[test]
fn duplicate_placeholder() {
    let e = error_of(
        "void k(int a[4][4]) {\n#pragma ACCEL PIPELINE auto{_P}\n  for (int i = 0; i < 4; i++) {\n#pragma ACCEL PIPELINE auto{_P}\n    for (int j = 0; j < 4; j++) {\n      a[i][j] = 1;\n    }\n  }\n}\n",
    );
    assert!(matches!(e, ParseError::DuplicatePlaceholder { line: 4, .. }), "{e:?}");
}

#[test]
fn source_name_must_match() {
    let src = KernelSource { name: "other".into(), text: CODE1.into(), path: String::new() };
    assert!(parse_kernel(&src).is_err());
}

/// Random loop nest: each loop gets a trip count, optional pragmas and a
/// statement over the loop variables in scope.
fn nest_source(spec: &[(u64, u8, u8)]) -> String {
    let depth = spec.len();
    let dims: String = spec.iter().map(|(t, _, _)| format!("[{t}]")).collect();
    let mut s = format!("void gen(float a{dims}, float b{dims}, float s) {{\n");
    let vars: Vec<String> = (0..depth).map(|d| format!("i{d}")).collect();
    for (d, (trip, pragmas, _)) in spec.iter().enumerate() {
        let pad = "  ".repeat(d + 1);
        if pragmas & 1 != 0 {
            s += &format!("{pad}#pragma ACCEL PIPELINE auto{{_PIPE_L{d}}}\n");
        }
        if pragmas & 2 != 0 {
            s += &format!("{pad}#pragma ACCEL PARALLEL factor=auto{{_PARA_L{d}}}\n");
        }
        if pragmas & 4 != 0 {
            s += &format!("{pad}#pragma ACCEL TILE factor=auto{{_TILE_L{d}}}\n");
        }
        s += &format!("{pad}for (int i{d} = 0; i{d} < {trip}; i{d}++) {{\n");
    }
    let idx: String = vars.iter().map(|v| format!("[{v}]")).collect();
    let ops = ["+", "-", "*", "/"];
    let op = ops[spec[depth - 1].2 as usize % 4];
    s += &format!("{}a{idx} += b{idx} {op} s;\n", "  ".repeat(depth + 1));
    for d in (0..depth).rev() {
        s += &format!("{}}}\n", "  ".repeat(d + 1));
    }
    s + "}\n"
}

proptest! {
    #[test]
    fn print_parse_round_trip(spec in prop::collection::vec((1u64..20, 0u8..8, 0u8..4), 1..4)) {
        let text = nest_source(&spec);
        let ir = parse(&text);
        let printed = print_kernel(&ir);
        let again = parse(&printed);
        prop_assert_eq!(&again, &ir);
        prop_assert_eq!(print_kernel(&again), printed);
        prop_assert_eq!(ir.slots.len(), text.matches("auto{").count());
        let prog = lower_kernel(&ir);
        prop_assert_eq!(prog.count(Opcode::Icmp), spec.len());
    }
}
