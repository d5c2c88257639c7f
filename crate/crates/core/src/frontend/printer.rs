use std::fmt::Write;

use super::*;

/// Renders a kernel back to mini-language source. Re-parsing the output yields
/// a structurally equal [`KernelIr`].
pub fn print_kernel(ir: &KernelIr) -> String {
    let mut out = String::new();
    for f in &ir.functions[1..] {
        let params: Vec<String> = f.params.iter().map(|p| format!("{} {}", p.elem.c_name(), p.name)).collect();
        let ret = f.ret.map_or("void", |t| t.c_name());
        let body = f.body.as_ref().map(|b| expr_str(ir, b, Some(f))).unwrap_or_default();
        let _ = writeln!(out, "{ret} {}({}) {{\n  return {body};\n}}\n", f.name, params.join(", "));
    }
    let kernel = &ir.functions[0];
    let mut params: Vec<String> = ir
        .arrays
        .iter()
        .filter(|a| !a.local)
        .map(|a| format!("{} {}{}", a.elem.c_name(), a.name, dims_str(&a.dims)))
        .collect();
    params.extend(kernel.params.iter().map(|p| format!("{} {}", p.elem.c_name(), p.name)));
    let _ = writeln!(out, "void {}({}) {{", kernel.name, params.join(", "));
    for a in ir.arrays.iter().filter(|a| a.local) {
        let _ = writeln!(out, "  {} {}{};", a.elem.c_name(), a.name, dims_str(&a.dims));
    }
    for item in &ir.body {
        print_item(ir, *item, 1, &mut out);
    }
    out.push_str("}\n");
    out
}

fn dims_str(dims: &[u64]) -> String {
    dims.iter().map(|d| format!("[{d}]")).collect()
}

fn print_item(ir: &KernelIr, item: BodyItem, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    match item {
        BodyItem::Stmt(s) => {
            let st = &ir.statements[s];
            let lhs = match &st.target {
                LValue::Scalar(n) => n.clone(),
                LValue::Array { array, index } => access_str(ir, *array, index),
            };
            let op = match st.assign {
                AssignOp::Set => "=".to_string(),
                AssignOp::Compound(b) => format!("{}=", b.symbol()),
            };
            let decl = st.declares.map(|t| format!("{} ", t.c_name())).unwrap_or_default();
            let _ = writeln!(out, "{pad}{decl}{lhs} {op} {};", expr_str(ir, &st.expr, None));
        }
        BodyItem::Loop(l) => {
            let lp = &ir.loops[l];
            for sid in &lp.pragma_slots {
                let slot = &ir.slots[*sid];
                let arg = match slot.kind {
                    PragmaKind::Pipeline => format!("auto{{{}}}", slot.name),
                    _ => format!("factor=auto{{{}}}", slot.name),
                };
                let _ = writeln!(out, "{pad}#pragma ACCEL {} {arg}", slot.kind);
            }
            let upper = lp.lower + lp.trip_count as i64;
            let _ = writeln!(out, "{pad}for (int {v} = {}; {v} < {upper}; {v}++) {{", lp.lower, v = lp.var);
            for it in &lp.body {
                print_item(ir, *it, indent + 1, out);
            }
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

fn access_str(ir: &KernelIr, array: usize, index: &[IndexExpr]) -> String {
    let mut s = ir.arrays[array].name.clone();
    for ix in index {
        let _ = write!(s, "[{}]", index_str(ir, ix));
    }
    s
}

fn index_str(ir: &KernelIr, ix: &IndexExpr) -> String {
    let mut parts = Vec::new();
    for (l, c) in &ix.terms {
        let v = &ir.loops[*l].var;
        parts.push(match *c {
            1 => v.clone(),
            -1 => format!("-{v}"),
            c => format!("{c} * {v}"),
        });
    }
    if ix.offset != 0 || parts.is_empty() {
        parts.push(ix.offset.to_string());
    }
    let mut s = parts[0].clone();
    for p in &parts[1..] {
        match p.strip_prefix('-') {
            Some(rest) => {
                let _ = write!(s, " - {rest}");
            }
            None => {
                let _ = write!(s, " + {p}");
            }
        }
    }
    s
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op: BinOp::Add | BinOp::Sub, .. } => 1,
        Expr::Binary { .. } => 2,
        Expr::Neg(_) => 3,
        Expr::Int(v) if *v < 0 => 3,
        Expr::Float(v) if *v < 0.0 => 3,
        _ => 4,
    }
}

fn expr_str(ir: &KernelIr, e: &Expr, helper: Option<&FunctionDecl>) -> String {
    match e {
        Expr::Int(v) => v.to_string(),
        Expr::Float(v) => {
            let s = format!("{v:?}");
            if s.contains(['.', 'e', 'E']) {
                s
            } else {
                format!("{s}.0")
            }
        }
        Expr::Scalar(n) => n.clone(),
        Expr::Param(i) => helper.map(|f| f.params[*i].name.clone()).unwrap_or_else(|| format!("p{i}")),
        Expr::LoopVar(l) => ir.loops[*l].var.clone(),
        Expr::Array { array, index } => access_str(ir, *array, index),
        Expr::Neg(x) => {
            let inner = expr_str(ir, x, helper);
            if prec(x) >= 3 {
                format!("-{inner}")
            } else {
                format!("-({inner})")
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let p = prec(e);
            let l = expr_str(ir, lhs, helper);
            let r = expr_str(ir, rhs, helper);
            let l = if prec(lhs) < p { format!("({l})") } else { l };
            // left-associative: an equal-precedence right operand needs parentheses
            let r = if prec(rhs) <= p { format!("({r})") } else { r };
            format!("{l} {} {r}", op.symbol())
        }
        Expr::Call { func, args } => {
            let a: Vec<String> = args.iter().map(|x| expr_str(ir, x, helper)).collect();
            format!("{}({})", ir.functions[*func].name, a.join(", "))
        }
    }
}
