use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::*;

pub type InstId = usize;
pub type ValueId = usize;

/// Mini-IR opcodes. The seven arithmetic/memory opcodes are the ones the cost
/// oracle prices; `call`/`ret` only appear around helper functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opcode {
    Add,
    Sub,
    Mul,
    Div,
    Icmp,
    Load,
    Store,
    Call,
    Ret,
}

impl Opcode {
    pub fn name(self) -> &'static str {
        match self {
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Div => "div",
            Opcode::Icmp => "icmp",
            Opcode::Load => "load",
            Opcode::Store => "store",
            Opcode::Call => "call",
            Opcode::Ret => "ret",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Entry,
    Header,
    Body,
    Cont,
    Exit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub function: usize,
    pub kind: BlockKind,
    pub loop_id: Option<LoopId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: InstId,
    pub opcode: Opcode,
    pub block: usize,
    pub function: usize,
    pub operands: Vec<ValueId>,
    pub result: Option<ValueId>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Variable,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Value {
    pub id: ValueId,
    pub kind: ValueKind,
    pub function: usize,
    pub block: usize,
    /// Type (variables) or literal (constants); becomes the node key text.
    pub key: String,
    pub text: String,
}

/// Lowered kernel: basic blocks numbered in preorder, instructions in emission
/// order, operand values, and control/call edges between instructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionProgram {
    pub kernel: String,
    pub blocks: Vec<Block>,
    pub instructions: Vec<Instruction>,
    pub values: Vec<Value>,
    pub control: Vec<(InstId, InstId)>,
    pub calls: Vec<(InstId, InstId)>,
    /// `icmp` instruction of each loop, indexed by loop id.
    pub loop_icmp: Vec<InstId>,
}

impl InstructionProgram {
    pub fn count(&self, op: Opcode) -> usize {
        self.instructions.iter().filter(|i| i.opcode == op).count()
    }
}

/// Lowers a parsed kernel. Deterministic: equal inputs give equal programs.
pub fn lower_kernel(ir: &KernelIr) -> InstructionProgram {
    let mut lw = Lowerer {
        ir,
        prog: InstructionProgram {
            kernel: ir.name.clone(),
            blocks: Vec::new(),
            instructions: Vec::new(),
            values: Vec::new(),
            control: Vec::new(),
            calls: Vec::new(),
            loop_icmp: vec![usize::MAX; ir.loops.len()],
        },
        consts: BTreeMap::new(),
        arrays: Vec::new(),
        loop_iv: vec![usize::MAX; ir.loops.len()],
        scalars: BTreeMap::new(),
        params: Vec::new(),
        function: 0,
        cur_block: 0,
        need_block: None,
        chain: None,
        pending_calls: Vec::new(),
    };
    lw.kernel();
    lw.prog
}

struct Lowerer<'a> {
    ir: &'a KernelIr,
    prog: InstructionProgram,
    consts: BTreeMap<(usize, String), ValueId>,
    arrays: Vec<ValueId>,
    loop_iv: Vec<ValueId>,
    scalars: BTreeMap<String, ValueId>,
    params: Vec<ValueId>,
    function: usize,
    cur_block: usize,
    /// Set after a loop: the next instruction opens a continuation block.
    need_block: Option<Option<LoopId>>,
    /// Previous instruction of the current straight-line run.
    chain: Option<InstId>,
    pending_calls: Vec<(InstId, usize)>,
}

impl Lowerer<'_> {
    fn new_block(&mut self, kind: BlockKind, loop_id: Option<LoopId>) -> usize {
        let id = self.prog.blocks.len();
        self.prog.blocks.push(Block { id, function: self.function, kind, loop_id });
        self.cur_block = id;
        id
    }

    fn new_value(&mut self, kind: ValueKind, key: String, text: String) -> ValueId {
        let id = self.prog.values.len();
        self.prog.values.push(Value { id, kind, function: self.function, block: self.cur_block, key, text });
        id
    }

    fn var(&mut self, ty: &str) -> ValueId {
        let n = self.prog.values.len();
        self.new_value(ValueKind::Variable, ty.to_string(), format!("%v{n} : {ty}"))
    }

    fn constant(&mut self, text: String) -> ValueId {
        let key = (self.function, text.clone());
        if let Some(v) = self.consts.get(&key) {
            return *v;
        }
        let v = self.new_value(ValueKind::Constant, text.clone(), format!("const {text}"));
        self.consts.insert(key, v);
        v
    }

    fn emit(&mut self, opcode: Opcode, operands: Vec<ValueId>, result: Option<ValueId>) -> InstId {
        if let Some(loop_id) = self.need_block.take() {
            self.new_block(BlockKind::Cont, loop_id);
        }
        let id = self.prog.instructions.len();
        let ops: Vec<String> = operands.iter().map(|v| self.value_name(*v)).collect();
        let text = match result {
            Some(r) => format!("{} = {} {}", self.value_name(r), opcode.name(), ops.join(", ")),
            None => format!("{} {}", opcode.name(), ops.join(", ")),
        };
        self.prog.instructions.push(Instruction {
            id,
            opcode,
            block: self.cur_block,
            function: self.function,
            operands,
            result,
            text,
        });
        if let Some(prev) = self.chain {
            self.prog.control.push((prev, id));
        }
        self.chain = Some(id);
        id
    }

    fn value_name(&self, v: ValueId) -> String {
        let val = &self.prog.values[v];
        match val.kind {
            ValueKind::Constant => val.key.clone(),
            ValueKind::Variable => val.text.split(' ').next().unwrap_or("%v").to_string(),
        }
    }

    fn link(&mut self, from: &[InstId], to: InstId) {
        for f in from {
            self.prog.control.push((*f, to));
        }
    }

    fn kernel(&mut self) {
        let ir = self.ir;
        self.function = 0;
        self.new_block(BlockKind::Entry, None);
        for a in &ir.arrays {
            let v = self.new_value(ValueKind::Variable, a.ir_type(), format!("%{} : {}", a.name, a.ir_type()));
            self.arrays.push(v);
        }
        for s in &ir.scalars {
            let ty = s.elem.ir_name();
            let v = self.new_value(ValueKind::Variable, ty.to_string(), format!("%{} : {ty}", s.name));
            self.scalars.insert(s.name.clone(), v);
        }
        let (first, exits) = self.items(&ir.body);
        self.need_block = None;
        self.new_block(BlockKind::Exit, None);
        self.chain = None;
        let ret = self.emit(Opcode::Ret, vec![], None);
        self.link(&exits, ret);
        let _ = first;

        for f in 1..ir.functions.len() {
            self.helper(f);
        }
        for (call, f) in std::mem::take(&mut self.pending_calls) {
            let (entry, ret) = self.helper_bounds(f);
            self.prog.calls.push((call, entry));
            self.prog.calls.push((ret, call));
        }
    }

    fn helper_bounds(&self, f: usize) -> (InstId, InstId) {
        let mut it = self.prog.instructions.iter().filter(|i| i.function == f);
        let entry = it.next().expect("helper has a ret").id;
        let ret = self.prog.instructions.iter().rev().find(|i| i.function == f).expect("helper has a ret").id;
        (entry, ret)
    }

    fn helper(&mut self, f: usize) {
        let decl = &self.ir.functions[f];
        self.function = f;
        self.new_block(BlockKind::Entry, None);
        self.chain = None;
        self.params = decl
            .params
            .iter()
            .map(|p| {
                let ty = p.elem.ir_name();
                self.new_value(ValueKind::Variable, ty.to_string(), format!("%{} : {ty}", p.name))
            })
            .collect();
        let ty = decl.ret.unwrap_or(ElemType::Int).ir_name();
        let body = decl.body.as_ref().expect("helpers have a body");
        let v = self.expr(body, ty);
        self.emit(Opcode::Ret, vec![v], None);
    }

    /// Lowers a sequence of body items; returns the first instruction and the
    /// instructions that fall through to whatever follows.
    fn items(&mut self, items: &[BodyItem]) -> (Option<InstId>, Vec<InstId>) {
        let mut first = None;
        let mut exits: Vec<InstId> = Vec::new();
        for item in items {
            let (f, ex) = match item {
                BodyItem::Stmt(s) => self.statement(*s),
                BodyItem::Loop(l) => self.lower_loop(*l),
            };
            if let Some(f) = f {
                let pending = std::mem::take(&mut exits);
                self.link(&pending, f);
                first.get_or_insert(f);
                exits = ex;
            }
        }
        (first, exits)
    }

    fn lower_loop(&mut self, l: LoopId) -> (Option<InstId>, Vec<InstId>) {
        let lp = &self.ir.loops[l];
        self.need_block = None;
        self.new_block(BlockKind::Header, Some(l));
        self.chain = None;
        let iv = self.new_value(ValueKind::Variable, "i32".into(), format!("%{} : i32", lp.var));
        self.loop_iv[l] = iv;
        let bound = self.constant((lp.lower + lp.trip_count as i64).to_string());
        let cond = self.var("i1");
        let icmp = self.emit(Opcode::Icmp, vec![iv, bound], Some(cond));
        self.chain = None;
        let one = self.constant("1".into());
        let inc = self.emit(Opcode::Add, vec![iv, one], Some(iv));
        self.prog.loop_icmp[l] = icmp;

        self.new_block(BlockKind::Body, Some(l));
        self.chain = None;
        let (bf, bex) = self.items(&lp.body);
        match bf {
            Some(f) => {
                self.link(&[icmp], f);
                self.link(&bex, inc);
            }
            None => self.link(&[icmp], inc),
        }
        self.link(&[inc], icmp);
        self.chain = None;
        self.need_block = Some(lp.parent);
        (Some(icmp), vec![icmp])
    }

    fn statement(&mut self, s: StmtId) -> (Option<InstId>, Vec<InstId>) {
        let st = &self.ir.statements[s];
        self.chain = None;
        let start = self.prog.instructions.len();
        let ty = match &st.target {
            LValue::Scalar(n) => self.ir.scalars.iter().find(|d| d.name == *n).map_or("i32", |d| d.elem.ir_name()),
            LValue::Array { array, .. } => self.ir.arrays[*array].elem.ir_name(),
        };
        let old = match (&st.target, st.assign) {
            (LValue::Array { array, index }, AssignOp::Compound(_)) => Some(self.load(*array, index, ty)),
            (LValue::Scalar(n), AssignOp::Compound(_)) => Some(self.scalars[n]),
            _ => None,
        };
        let mut v = self.expr(&st.expr, ty);
        if let (Some(old), AssignOp::Compound(op)) = (old, st.assign) {
            let r = self.var(ty);
            self.emit(op.opcode(), vec![old, v], Some(r));
            v = r;
        }
        match &st.target {
            LValue::Array { array, index } => {
                let mut ops = vec![v, self.arrays[*array]];
                ops.extend(self.index_values(index));
                self.emit(Opcode::Store, ops, None);
            }
            LValue::Scalar(n) => {
                // the scalar's node becomes the result of the last instruction
                let target = self.scalars[n];
                if let Some(last) = self.prog.instructions[start..].last().map(|i| i.id) {
                    if self.prog.instructions[last].result == Some(v) {
                        self.prog.instructions[last].result = Some(target);
                    }
                }
            }
        }
        let end = self.prog.instructions.len();
        self.chain = None;
        if end == start {
            (None, Vec::new())
        } else {
            (Some(start), vec![end - 1])
        }
    }

    fn index_values(&mut self, index: &[IndexExpr]) -> Vec<ValueId> {
        let mut seen = Vec::new();
        for ix in index {
            for l in ix.loops() {
                if !seen.contains(&l) {
                    seen.push(l);
                }
            }
        }
        seen.into_iter().map(|l| self.loop_iv[l]).collect()
    }

    fn load(&mut self, array: usize, index: &[IndexExpr], ty: &str) -> ValueId {
        let mut ops = vec![self.arrays[array]];
        ops.extend(self.index_values(index));
        let elem = self.ir.arrays[array].elem.ir_name();
        let r = self.var(if elem.is_empty() { ty } else { elem });
        self.emit(Opcode::Load, ops, Some(r));
        r
    }

    fn expr(&mut self, e: &Expr, ty: &str) -> ValueId {
        match e {
            Expr::Int(v) => self.constant(v.to_string()),
            Expr::Float(v) => self.constant(format!("{v:?}")),
            Expr::Scalar(n) => self.scalars[n],
            Expr::Param(i) => self.params[*i],
            Expr::LoopVar(l) => self.loop_iv[*l],
            Expr::Array { array, index } => self.load(*array, index, ty),
            Expr::Binary { op, lhs, rhs } => {
                let a = self.expr(lhs, ty);
                let b = self.expr(rhs, ty);
                let r = self.var(ty);
                self.emit(op.opcode(), vec![a, b], Some(r));
                r
            }
            Expr::Neg(x) => {
                let zero = self.constant("0".into());
                let a = self.expr(x, ty);
                let r = self.var(ty);
                self.emit(Opcode::Sub, vec![zero, a], Some(r));
                r
            }
            Expr::Call { func, args } => {
                let vals: Vec<ValueId> = args.iter().map(|a| self.expr(a, ty)).collect();
                let rty = self.ir.functions[*func].ret.map_or(ty, |t| t.ir_name());
                let r = self.var(rty);
                let call = self.emit(Opcode::Call, vals, Some(r));
                self.pending_calls.push((call, *func));
                r
            }
        }
    }
}
