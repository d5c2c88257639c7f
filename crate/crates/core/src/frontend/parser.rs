use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::*;

/// Parses kernel source text into a [`KernelIr`].
pub fn parse_kernel_text(text: &str) -> Result<KernelIr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        defines: BTreeMap::new(),
        functions: Vec::new(),
        kernel: None,
        arrays: Vec::new(),
        scalars: Vec::new(),
        loops: Vec::new(),
        statements: Vec::new(),
        slots: Vec::new(),
        loop_stack: Vec::new(),
        helper_params: None,
        slot_names: BTreeSet::new(),
        top_body: None,
    };
    p.file()
}

struct PendingPragma {
    kind: PragmaKind,
    name: String,
    line: usize,
    col: usize,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    defines: BTreeMap<String, Tok>,
    /// Helper functions in source order (kernel is inserted at index 0 at the end).
    functions: Vec<FunctionDecl>,
    kernel: Option<FunctionDecl>,
    arrays: Vec<ArrayDecl>,
    scalars: Vec<ScalarDecl>,
    loops: Vec<LoopNode>,
    statements: Vec<Statement>,
    slots: Vec<PragmaSlot>,
    loop_stack: Vec<(String, LoopId)>,
    helper_params: Option<Vec<ScalarDecl>>,
    slot_names: BTreeSet<String>,
    top_body: Option<Vec<BodyItem>>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn semantic<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Semantic { line, col, msg: msg.into() })
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            self.syntax(format!("expected `{p}`, found {}", describe(self.peek())))
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => self.syntax(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn peek_type(&self) -> Option<ElemType> {
        match self.peek() {
            Tok::Ident(s) => ElemType::from_c_name(s),
            _ => None,
        }
    }

    fn file(&mut self) -> Result<KernelIr, ParseError> {
        loop {
            match self.peek().clone() {
                Tok::Eof => break,
                Tok::Define(name, value) => {
                    self.bump();
                    let toks = tokenize(&value)?;
                    let tok = match toks.as_slice() {
                        [t, Token { tok: Tok::Eof, .. }] => match &t.tok {
                            Tok::Int(_) | Tok::Float(_) => t.tok.clone(),
                            _ => return self.semantic(format!("#define {name} must be a numeric literal")),
                        },
                        [Token { tok: Tok::Punct("-"), .. }, t, Token { tok: Tok::Eof, .. }] => match t.tok {
                            Tok::Int(v) => Tok::Int(-v),
                            Tok::Float(v) => Tok::Float(-v),
                            _ => return self.semantic(format!("#define {name} must be a numeric literal")),
                        },
                        _ => return self.semantic(format!("#define {name} must be a numeric literal")),
                    };
                    self.defines.insert(name, tok);
                }
                Tok::Pragma(_) => {
                    let (line, col) = self.here();
                    return Err(ParseError::DanglingPragma { line, col });
                }
                Tok::Ident(ref s) if s == "void" => {
                    if self.kernel.is_some() {
                        return self.semantic("more than one kernel (`void`) function");
                    }
                    self.kernel_fn()?;
                }
                Tok::Ident(_) if self.peek_type().is_some() => {
                    if self.kernel.is_some() {
                        return self.semantic("helper functions must precede the kernel function");
                    }
                    self.helper_fn()?;
                }
                other => return self.syntax(format!("expected a function definition, found {}", describe(&other))),
            }
        }
        let kernel = match self.kernel.take() {
            Some(k) => k,
            None => return self.semantic("no kernel (`void`) function found"),
        };
        let name = kernel.name.clone();
        let mut functions = vec![kernel];
        functions.append(&mut self.functions);
        let body = self.top_body.take().unwrap_or_default();
        Ok(KernelIr {
            name,
            functions,
            arrays: std::mem::take(&mut self.arrays),
            scalars: std::mem::take(&mut self.scalars),
            loops: std::mem::take(&mut self.loops),
            statements: std::mem::take(&mut self.statements),
            body,
            slots: std::mem::take(&mut self.slots),
        })
    }

    fn helper_fn(&mut self) -> Result<(), ParseError> {
        let ret = self.peek_type().expect("checked by caller");
        self.bump();
        let name = self.expect_ident()?;
        if self.functions.iter().any(|f| f.name == name) {
            return self.semantic(format!("function `{name}` defined twice"));
        }
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let Some(elem) = self.peek_type() else {
                    return self.syntax("expected parameter type");
                };
                self.bump();
                let pname = self.expect_ident()?;
                if self.is_punct("[") {
                    return self.semantic("helper functions take scalar parameters only");
                }
                params.push(ScalarDecl { name: pname, elem });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.expect_punct("{")?;
        if !self.is_keyword("return") {
            return self.syntax("helper function body must be `return <expr>;`");
        }
        self.bump();
        self.helper_params = Some(params.clone());
        let body = self.expr()?;
        self.helper_params = None;
        self.expect_punct(";")?;
        self.expect_punct("}")?;
        self.functions.push(FunctionDecl { name, ret: Some(ret), params, body: Some(body) });
        Ok(())
    }

    fn kernel_fn(&mut self) -> Result<(), ParseError> {
        self.bump(); // void
        let name = self.expect_ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let Some(elem) = self.peek_type() else {
                    return self.syntax("expected parameter type");
                };
                self.bump();
                let pname = self.expect_ident()?;
                self.check_fresh_name(&pname)?;
                if self.is_punct("[") {
                    let dims = self.dims()?;
                    self.arrays.push(ArrayDecl { name: pname, elem, dims, local: false });
                } else {
                    let decl = ScalarDecl { name: pname, elem };
                    params.push(decl.clone());
                    self.scalars.push(decl);
                }
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        self.kernel = Some(FunctionDecl { name, ret: None, params, body: None });
        self.expect_punct("{")?;
        let items = self.items_until_brace(None)?;
        self.top_body = Some(items);
        Ok(())
    }

    fn check_fresh_name(&self, name: &str) -> Result<(), ParseError> {
        if self.arrays.iter().any(|a| a.name == name)
            || self.scalars.iter().any(|s| s.name == name)
            || self.loop_stack.iter().any(|(v, _)| v == name)
        {
            return self.semantic(format!("`{name}` is already declared"));
        }
        Ok(())
    }

    fn dims(&mut self) -> Result<Vec<u64>, ParseError> {
        let mut dims = Vec::new();
        while self.eat_punct("[") {
            let v = self.const_int()?;
            if v < 1 {
                return self.semantic("array extent must be positive");
            }
            dims.push(v as u64);
            self.expect_punct("]")?;
        }
        Ok(dims)
    }

    /// Integer constant expression: literals, `#define`s, `+ - *`.
    fn const_int(&mut self) -> Result<i64, ParseError> {
        let (line, col) = self.here();
        let e = self.expr()?;
        match const_eval(&e) {
            Some(v) => Ok(v),
            None => Err(ParseError::NonConstantBound { line, col, msg: "expected an integer constant".into() }),
        }
    }

    /// Parses items until the matching `}` (consumed).
    fn items_until_brace(&mut self, parent: Option<LoopId>) -> Result<Vec<BodyItem>, ParseError> {
        let mut items = Vec::new();
        loop {
            if self.eat_punct("}") {
                return Ok(items);
            }
            if matches!(self.peek(), Tok::Eof) {
                return self.syntax("unexpected end of input, expected `}`");
            }
            self.item(parent, &mut items)?;
        }
    }

    fn item(&mut self, parent: Option<LoopId>, out: &mut Vec<BodyItem>) -> Result<(), ParseError> {
        let mut pending = Vec::new();
        while let Tok::Pragma(text) = self.peek().clone() {
            let (line, col) = self.here();
            pending.push(parse_pragma(&text, line, col)?);
            self.bump();
        }
        if !pending.is_empty() && !self.is_keyword("for") {
            let p = &pending[0];
            return Err(ParseError::DanglingPragma { line: p.line, col: p.col });
        }
        if self.is_keyword("for") {
            let id = self.for_loop(parent, pending)?;
            out.push(BodyItem::Loop(id));
            return Ok(());
        }
        if self.eat_punct("{") {
            let mut inner = self.items_until_brace(parent)?;
            out.append(&mut inner);
            return Ok(());
        }
        if self.eat_punct(";") {
            return Ok(());
        }
        if let Some(elem) = self.peek_type() {
            self.bump();
            let name = self.expect_ident()?;
            self.check_fresh_name(&name)?;
            if self.is_punct("[") {
                let dims = self.dims()?;
                self.arrays.push(ArrayDecl { name, elem, dims, local: true });
                self.expect_punct(";")?;
                return Ok(());
            }
            if !self.eat_punct("=") {
                return self.syntax("scalar declarations need an initializer");
            }
            self.scalars.push(ScalarDecl { name: name.clone(), elem });
            let expr = self.expr()?;
            self.expect_punct(";")?;
            let id = self.push_statement(parent, LValue::Scalar(name), AssignOp::Set, expr, Some(elem));
            out.push(BodyItem::Stmt(id));
            return Ok(());
        }
        let id = self.assignment(parent)?;
        self.expect_punct(";")?;
        out.push(BodyItem::Stmt(id));
        Ok(())
    }

    fn for_loop(&mut self, parent: Option<LoopId>, pragmas: Vec<PendingPragma>) -> Result<LoopId, ParseError> {
        self.bump(); // for
        self.expect_punct("(")?;
        if self.is_keyword("int") || self.is_keyword("long") {
            self.bump();
        }
        let var = self.expect_ident()?;
        self.check_fresh_name(&var)?;
        self.expect_punct("=")?;
        let lower = self.const_int()?;
        self.expect_punct(";")?;
        let cv = self.expect_ident()?;
        if cv != var {
            return self.semantic(format!("loop condition must test `{var}`"));
        }
        let inclusive = if self.eat_punct("<=") {
            true
        } else if self.eat_punct("<") {
            false
        } else {
            return self.syntax("loop condition must be `<` or `<=`");
        };
        let upper = self.const_int()?;
        self.expect_punct(";")?;
        // increment: i++ | ++i | i += 1
        let ok = if self.eat_punct("++") {
            self.expect_ident()? == var
        } else {
            let v = self.expect_ident()?;
            if self.eat_punct("++") {
                v == var
            } else if self.eat_punct("+=") {
                v == var && matches!(self.bump().tok, Tok::Int(1))
            } else {
                false
            }
        };
        if !ok {
            return self.semantic("loops must have unit stride on their own variable");
        }
        self.expect_punct(")")?;
        let trip = upper - lower + i64::from(inclusive);
        if trip < 1 {
            return self.semantic(format!("loop `{var}` has trip count {trip}"));
        }

        let id = self.loops.len();
        let depth = parent.map_or(0, |p| self.loops[p].depth + 1);
        self.loops.push(LoopNode {
            id,
            var: var.clone(),
            lower,
            trip_count: trip as u64,
            depth,
            parent,
            body: Vec::new(),
            pragma_slots: Vec::new(),
        });
        for p in pragmas {
            if !self.slot_names.insert(p.name.clone()) {
                return Err(ParseError::DuplicatePlaceholder { line: p.line, col: p.col, name: p.name });
            }
            if self.loops[id].pragma_slots.iter().any(|s| self.slots[*s].kind == p.kind) {
                return Err(ParseError::DuplicateKind { line: p.line, col: p.col, kind: p.kind });
            }
            let sid = self.slots.len();
            self.slots.push(PragmaSlot { id: sid, name: p.name, kind: p.kind, loop_id: id });
            self.loops[id].pragma_slots.push(sid);
        }

        self.loop_stack.push((var, id));
        let body = if self.eat_punct("{") {
            self.items_until_brace(Some(id))?
        } else {
            let mut items = Vec::new();
            self.item(Some(id), &mut items)?;
            items
        };
        self.loop_stack.pop();
        self.loops[id].body = body;
        Ok(id)
    }

    fn assignment(&mut self, parent: Option<LoopId>) -> Result<StmtId, ParseError> {
        let name = self.expect_ident()?;
        let target = if self.is_punct("[") {
            let array = self.array_index(&name)?;
            let index = self.indices()?;
            self.check_rank(array, index.len())?;
            LValue::Array { array, index }
        } else if self.scalars.iter().any(|s| s.name == name) {
            LValue::Scalar(name)
        } else if self.loop_stack.iter().any(|(v, _)| *v == name) {
            return self.semantic(format!("cannot assign to loop variable `{name}`"));
        } else {
            return self.semantic(format!("unknown variable `{name}`"));
        };
        let assign = match self.bump().tok {
            Tok::Punct("=") => AssignOp::Set,
            Tok::Punct("+=") => AssignOp::Compound(BinOp::Add),
            Tok::Punct("-=") => AssignOp::Compound(BinOp::Sub),
            Tok::Punct("*=") => AssignOp::Compound(BinOp::Mul),
            Tok::Punct("/=") => AssignOp::Compound(BinOp::Div),
            other => {
                self.pos -= 1;
                return self.syntax(format!("expected assignment operator, found {}", describe(&other)));
            }
        };
        let expr = self.expr()?;
        Ok(self.push_statement(parent, target, assign, expr, None))
    }

    fn push_statement(
        &mut self,
        parent: Option<LoopId>,
        target: LValue,
        assign: AssignOp,
        expr: Expr,
        declares: Option<ElemType>,
    ) -> StmtId {
        let mut ops = OpCounts::default();
        let mut accesses = Vec::new();
        if let (LValue::Array { array, index }, AssignOp::Compound(_)) = (&target, assign) {
            ops.load += 1;
            accesses.push(Access { array: *array, is_write: false, index: index.clone() });
        }
        count_expr(&expr, &self.functions_with_kernel_offset(), &mut ops, &mut accesses);
        if let AssignOp::Compound(op) = assign {
            ops.bump(op.opcode());
        }
        if let LValue::Array { array, index } = &target {
            ops.store += 1;
            accesses.push(Access { array: *array, is_write: true, index: index.clone() });
        }
        let id = self.statements.len();
        self.statements.push(Statement { id, parent, target, assign, expr, declares, ops, accesses });
        id
    }

    /// Helper bodies indexed the way `Expr::Call::func` refers to them (kernel at 0).
    fn functions_with_kernel_offset(&self) -> Vec<Option<&Expr>> {
        std::iter::once(None).chain(self.functions.iter().map(|f| f.body.as_ref())).collect()
    }

    fn array_index(&self, name: &str) -> Result<usize, ParseError> {
        match self.arrays.iter().position(|a| a.name == name) {
            Some(i) => Ok(i),
            None => self.semantic(format!("unknown array `{name}`")),
        }
    }

    fn check_rank(&self, array: usize, n: usize) -> Result<(), ParseError> {
        let rank = self.arrays[array].dims.len();
        if rank != n {
            return self.semantic(format!("array `{}` has rank {rank}, indexed with {n}", self.arrays[array].name));
        }
        Ok(())
    }

    fn indices(&mut self) -> Result<Vec<IndexExpr>, ParseError> {
        let mut out = Vec::new();
        while self.eat_punct("[") {
            let e = self.expr()?;
            let Some(idx) = to_index(&e) else {
                return self.semantic("array index must be affine in loop variables");
            };
            out.push(idx);
            self.expect_punct("]")?;
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_punct("+") {
                BinOp::Add
            } else if self.eat_punct("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_punct("*") {
                BinOp::Mul
            } else if self.eat_punct("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_punct("-") {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Int(v) => Expr::Int(-v),
                Expr::Float(v) => Expr::Float(-v),
                other => Expr::Neg(Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Int(v))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::Float(v))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(t) = self.defines.get(&name) {
                    return Ok(match t {
                        Tok::Int(v) => Expr::Int(*v),
                        Tok::Float(v) => Expr::Float(*v),
                        _ => unreachable!("defines hold literals"),
                    });
                }
                if self.is_punct("(") {
                    return self.call(&name);
                }
                if let Some(params) = &self.helper_params {
                    return match params.iter().position(|p| p.name == name) {
                        Some(i) => Ok(Expr::Param(i)),
                        None => self.semantic(format!("unknown identifier `{name}` in helper function")),
                    };
                }
                if self.is_punct("[") {
                    let array = self.array_index(&name)?;
                    let index = self.indices()?;
                    self.check_rank(array, index.len())?;
                    return Ok(Expr::Array { array, index });
                }
                if let Some((_, id)) = self.loop_stack.iter().rev().find(|(v, _)| *v == name) {
                    return Ok(Expr::LoopVar(*id));
                }
                if self.scalars.iter().any(|s| s.name == name) {
                    return Ok(Expr::Scalar(name));
                }
                self.semantic(format!("unknown identifier `{name}`"))
            }
            other => self.syntax(format!("expected an expression, found {}", describe(&other))),
        }
    }

    fn call(&mut self, name: &str) -> Result<Expr, ParseError> {
        if self.helper_params.is_some() {
            return self.semantic("helper functions cannot call other functions");
        }
        let Some(idx) = self.functions.iter().position(|f| f.name == name) else {
            return self.semantic(format!("unknown function `{name}`"));
        };
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let want = self.functions[idx].params.len();
        if args.len() != want {
            return self.semantic(format!("`{name}` takes {want} arguments, got {}", args.len()));
        }
        Ok(Expr::Call { func: idx + 1, args })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Float(v) => format!("`{v}`"),
        Tok::Pragma(_) => "a pragma".into(),
        Tok::Define(..) => "a #define".into(),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn parse_pragma(text: &str, line: usize, col: usize) -> Result<PendingPragma, ParseError> {
    let err = |msg: &str| ParseError::Syntax { line, col, msg: msg.to_string() };
    let mut words = text.split_whitespace();
    if !words.next().is_some_and(|w| w.eq_ignore_ascii_case("ACCEL")) {
        return Err(err("only `#pragma ACCEL` directives are supported"));
    }
    let kind = words
        .next()
        .and_then(PragmaKind::from_keyword)
        .ok_or_else(|| err("expected pipeline, parallel or tile"))?;
    let arg = words.next().ok_or_else(|| err("missing pragma option"))?;
    if words.next().is_some() {
        return Err(err("trailing text after pragma option"));
    }
    let placeholder = match kind {
        PragmaKind::Pipeline => arg,
        PragmaKind::Parallel | PragmaKind::Tile => {
            arg.strip_prefix("factor=").ok_or_else(|| err("expected `factor=auto{NAME}`"))?
        }
    };
    let name = placeholder
        .strip_prefix("auto{")
        .and_then(|s| s.strip_suffix('}'))
        .filter(|s| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .ok_or_else(|| err("expected an `auto{NAME}` placeholder"))?;
    Ok(PendingPragma { kind, name: name.to_string(), line, col })
}

fn const_eval(e: &Expr) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Neg(x) => const_eval(x).map(|v| -v),
        Expr::Binary { op, lhs, rhs } => {
            let (a, b) = (const_eval(lhs)?, const_eval(rhs)?);
            match op {
                BinOp::Add => Some(a + b),
                BinOp::Sub => Some(a - b),
                BinOp::Mul => Some(a * b),
                BinOp::Div => (b != 0).then(|| a / b),
            }
        }
        _ => None,
    }
}

fn to_index(e: &Expr) -> Option<IndexExpr> {
    fn go(e: &Expr, scale: i64, acc: &mut BTreeMap<LoopId, i64>, off: &mut i64) -> Option<()> {
        match e {
            Expr::Int(v) => *off += scale * v,
            Expr::LoopVar(l) => *acc.entry(*l).or_default() += scale,
            Expr::Neg(x) => go(x, -scale, acc, off)?,
            Expr::Binary { op: BinOp::Add, lhs, rhs } => {
                go(lhs, scale, acc, off)?;
                go(rhs, scale, acc, off)?;
            }
            Expr::Binary { op: BinOp::Sub, lhs, rhs } => {
                go(lhs, scale, acc, off)?;
                go(rhs, -scale, acc, off)?;
            }
            Expr::Binary { op: BinOp::Mul, lhs, rhs } => {
                if let Some(c) = const_eval(lhs) {
                    go(rhs, scale * c, acc, off)?;
                } else {
                    let c = const_eval(rhs)?;
                    go(lhs, scale * c, acc, off)?;
                }
            }
            _ => return None,
        }
        Some(())
    }
    let mut acc = BTreeMap::new();
    let mut off = 0;
    go(e, 1, &mut acc, &mut off)?;
    Some(IndexExpr { terms: acc.into_iter().filter(|(_, c)| *c != 0).collect(), offset: off })
}

/// Adds the ops and array accesses of evaluating `e`; helper calls count the
/// helper body's ops inline.
pub(crate) fn count_expr(e: &Expr, helpers: &[Option<&Expr>], ops: &mut OpCounts, acc: &mut Vec<Access>) {
    match e {
        Expr::Int(_) | Expr::Float(_) | Expr::Scalar(_) | Expr::Param(_) | Expr::LoopVar(_) => {}
        Expr::Array { array, index } => {
            ops.load += 1;
            acc.push(Access { array: *array, is_write: false, index: index.clone() });
        }
        Expr::Binary { op, lhs, rhs } => {
            count_expr(lhs, helpers, ops, acc);
            count_expr(rhs, helpers, ops, acc);
            ops.bump(op.opcode());
        }
        Expr::Neg(x) => {
            count_expr(x, helpers, ops, acc);
            ops.sub += 1;
        }
        Expr::Call { func, args } => {
            for a in args {
                count_expr(a, helpers, ops, acc);
            }
            if let Some(Some(body)) = helpers.get(*func) {
                count_expr(body, &[], ops, &mut Vec::new());
            }
        }
    }
}
