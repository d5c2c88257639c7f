//! Kernel mini-language: parsing, pretty-printing and lowering to a small
//! instruction IR.
//!
//! A kernel file holds `#define` constants, optional scalar helper functions
//! and exactly one `void` kernel function whose body is a nest of `for` loops
//! with constant bounds. `#pragma ACCEL ... auto{NAME}` lines in front of a
//! loop declare the tunable pragma slots of that loop. The grammar is
//! documented in `docs/grammar.md`.

mod lexer;
mod lower;
mod parser;
mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use lower::{lower_kernel, Block, BlockKind, InstId, Instruction, InstructionProgram, Opcode, Value, ValueId, ValueKind};
pub use parser::parse_kernel_text;
pub use printer::print_kernel;

pub type LoopId = usize;
pub type StmtId = usize;
pub type SlotId = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: loop bound is not a compile-time constant: {msg}")]
    NonConstantBound { line: usize, col: usize, msg: String },
    #[error("{line}:{col}: pragma is not attached to a loop")]
    DanglingPragma { line: usize, col: usize },
    #[error("{line}:{col}: duplicate pragma placeholder `{name}`")]
    DuplicatePlaceholder { line: usize, col: usize, name: String },
    #[error("{line}:{col}: loop already has a {kind} pragma")]
    DuplicateKind { line: usize, col: usize, kind: PragmaKind },
    #[error("{line}:{col}: {msg}")]
    Semantic { line: usize, col: usize, msg: String },
}

/// A kernel source file as read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSource {
    pub name: String,
    pub text: String,
    pub path: String,
}

impl KernelSource {
    /// Builds a source whose name is taken from the kernel function in `text`.
    pub fn from_text(text: impl Into<String>, path: impl Into<String>) -> Result<Self, ParseError> {
        let text = text.into();
        let ir = parse_kernel_text(&text)?;
        Ok(KernelSource { name: ir.name, text, path: path.into() })
    }

    pub fn read(path: &std::path::Path) -> std::io::Result<Result<Self, ParseError>> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_text(text, path.display().to_string()))
    }
}

/// Parses a kernel source; the kernel function name must match `src.name`.
pub fn parse_kernel(src: &KernelSource) -> Result<KernelIr, ParseError> {
    let ir = parse_kernel_text(&src.text)?;
    if ir.name != src.name {
        return Err(ParseError::Semantic {
            line: 1,
            col: 1,
            msg: format!("kernel function `{}` does not match source name `{}`", ir.name, src.name),
        });
    }
    Ok(ir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    Char,
    Short,
    Int,
    Long,
    Float,
    Double,
}

impl ElemType {
    pub fn bits(self) -> u64 {
        match self {
            ElemType::Char => 8,
            ElemType::Short => 16,
            ElemType::Int | ElemType::Float => 32,
            ElemType::Long | ElemType::Double => 64,
        }
    }

    pub fn c_name(self) -> &'static str {
        match self {
            ElemType::Char => "char",
            ElemType::Short => "short",
            ElemType::Int => "int",
            ElemType::Long => "long",
            ElemType::Float => "float",
            ElemType::Double => "double",
        }
    }

    /// LLVM-flavoured type name used as node text in program graphs.
    pub fn ir_name(self) -> &'static str {
        match self {
            ElemType::Char => "i8",
            ElemType::Short => "i16",
            ElemType::Int => "i32",
            ElemType::Long => "i64",
            ElemType::Float => "float",
            ElemType::Double => "double",
        }
    }

    pub fn from_c_name(s: &str) -> Option<Self> {
        Some(match s {
            "char" => ElemType::Char,
            "short" => ElemType::Short,
            "int" => ElemType::Int,
            "long" => ElemType::Long,
            "float" => ElemType::Float,
            "double" => ElemType::Double,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PragmaKind {
    Pipeline,
    Parallel,
    Tile,
}

impl PragmaKind {
    pub const ALL: [PragmaKind; 3] = [PragmaKind::Pipeline, PragmaKind::Parallel, PragmaKind::Tile];

    /// Rank used wherever slots of one loop are ordered: parallel, pipeline, tile.
    pub fn priority(self) -> u8 {
        match self {
            PragmaKind::Parallel => 0,
            PragmaKind::Pipeline => 1,
            PragmaKind::Tile => 2,
        }
    }

    /// Position attribute of the pragma edge in the program graph.
    pub fn edge_position(self) -> u32 {
        match self {
            PragmaKind::Tile => 0,
            PragmaKind::Pipeline => 1,
            PragmaKind::Parallel => 2,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            PragmaKind::Pipeline => "PIPELINE",
            PragmaKind::Parallel => "PARALLEL",
            PragmaKind::Tile => "TILE",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pipeline" => Some(PragmaKind::Pipeline),
            "parallel" => Some(PragmaKind::Parallel),
            "tile" => Some(PragmaKind::Tile),
            _ => None,
        }
    }
}

impl fmt::Display for PragmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PragmaKind::Pipeline => "pipeline",
            PragmaKind::Parallel => "parallel",
            PragmaKind::Tile => "tile",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub elem: ElemType,
    pub dims: Vec<u64>,
    /// Declared inside the kernel body (on-chip) rather than as a parameter.
    pub local: bool,
}

impl ArrayDecl {
    pub fn words(&self) -> u64 {
        self.dims.iter().product()
    }

    /// LLVM-style pointer type, e.g. `[16 x [8 x float]]*`.
    pub fn ir_type(&self) -> String {
        let mut ty = self.elem.ir_name().to_string();
        for d in self.dims.iter().rev() {
            ty = format!("[{d} x {ty}]");
        }
        ty + "*"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarDecl {
    pub name: String,
    pub elem: ElemType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDecl {
    pub name: String,
    /// `None` for the `void` kernel function.
    pub ret: Option<ElemType>,
    pub params: Vec<ScalarDecl>,
    /// Helper functions are a single `return <expr>;`.
    pub body: Option<Expr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn opcode(self) -> Opcode {
        match self {
            BinOp::Add => Opcode::Add,
            BinOp::Sub => Opcode::Sub,
            BinOp::Mul => Opcode::Mul,
            BinOp::Div => Opcode::Div,
        }
    }
}

/// Affine index `offset + Σ coeff·loop_var`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexExpr {
    pub terms: Vec<(LoopId, i64)>,
    pub offset: i64,
}

impl IndexExpr {
    pub fn loops(&self) -> impl Iterator<Item = LoopId> + '_ {
        self.terms.iter().filter(|(_, c)| *c != 0).map(|(l, _)| *l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Scalar(String),
    /// Parameter of a helper function, by position.
    Param(usize),
    LoopVar(LoopId),
    Array { array: usize, index: Vec<IndexExpr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Neg(Box<Expr>),
    Call { func: usize, args: Vec<Expr> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssignOp {
    Set,
    Compound(BinOp),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Scalar(String),
    Array { array: usize, index: Vec<IndexExpr> },
}

/// Operation multiset of one statement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub add: u32,
    pub sub: u32,
    pub mul: u32,
    pub div: u32,
    pub cmp: u32,
    pub load: u32,
    pub store: u32,
}

impl OpCounts {
    pub fn total(&self) -> u32 {
        self.add + self.sub + self.mul + self.div + self.cmp + self.load + self.store
    }

    pub fn bump(&mut self, op: Opcode) {
        match op {
            Opcode::Add => self.add += 1,
            Opcode::Sub => self.sub += 1,
            Opcode::Mul => self.mul += 1,
            Opcode::Div => self.div += 1,
            Opcode::Icmp => self.cmp += 1,
            Opcode::Load => self.load += 1,
            Opcode::Store => self.store += 1,
            Opcode::Call | Opcode::Ret => {}
        }
    }

    pub fn merge(&mut self, other: &OpCounts) {
        self.add += other.add;
        self.sub += other.sub;
        self.mul += other.mul;
        self.div += other.div;
        self.cmp += other.cmp;
        self.load += other.load;
        self.store += other.store;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub array: usize,
    pub is_write: bool,
    pub index: Vec<IndexExpr>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StmtId,
    /// Innermost enclosing loop; `None` for the function body.
    pub parent: Option<LoopId>,
    pub target: LValue,
    pub assign: AssignOp,
    pub expr: Expr,
    /// `Some` when the statement declares the scalar it assigns.
    pub declares: Option<ElemType>,
    pub ops: OpCounts,
    pub accesses: Vec<Access>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyItem {
    Stmt(StmtId),
    Loop(LoopId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopNode {
    pub id: LoopId,
    pub var: String,
    pub lower: i64,
    pub trip_count: u64,
    pub depth: u32,
    pub parent: Option<LoopId>,
    pub body: Vec<BodyItem>,
    pub pragma_slots: Vec<SlotId>,
}

impl LoopNode {
    pub fn children(&self) -> impl Iterator<Item = LoopId> + '_ {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Loop(l) => Some(*l),
            BodyItem::Stmt(_) => None,
        })
    }

    pub fn has_child_loop(&self) -> bool {
        self.children().next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PragmaSlot {
    pub id: SlotId,
    /// Placeholder name, e.g. `_PIPE_L1`.
    pub name: String,
    pub kind: PragmaKind,
    pub loop_id: LoopId,
}

/// Parsed kernel: loops and statements live in arenas indexed by id, loops in
/// source preorder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelIr {
    pub name: String,
    /// Index 0 is the kernel function; helpers follow in source order.
    pub functions: Vec<FunctionDecl>,
    pub arrays: Vec<ArrayDecl>,
    pub scalars: Vec<ScalarDecl>,
    pub loops: Vec<LoopNode>,
    pub statements: Vec<Statement>,
    pub body: Vec<BodyItem>,
    pub slots: Vec<PragmaSlot>,
}

impl KernelIr {
    pub fn loop_node(&self, id: LoopId) -> &LoopNode {
        &self.loops[id]
    }

    pub fn slot_by_name(&self, name: &str) -> Option<&PragmaSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn top_level_loops(&self) -> impl Iterator<Item = LoopId> + '_ {
        self.body.iter().filter_map(|b| match b {
            BodyItem::Loop(l) => Some(*l),
            BodyItem::Stmt(_) => None,
        })
    }

    /// Enclosing loops of `loop_id` from the outermost down to the loop itself.
    pub fn loop_chain(&self, loop_id: LoopId) -> Vec<LoopId> {
        let mut chain = vec![loop_id];
        let mut cur = self.loops[loop_id].parent;
        while let Some(p) = cur {
            chain.push(p);
            cur = self.loops[p].parent;
        }
        chain.reverse();
        chain
    }

    /// Loops strictly inside `loop_id`, in preorder.
    pub fn descendants(&self, loop_id: LoopId) -> Vec<LoopId> {
        let mut out = Vec::new();
        let mut stack: Vec<LoopId> = self.loops[loop_id].children().collect();
        stack.reverse();
        while let Some(l) = stack.pop() {
            out.push(l);
            let mut kids: Vec<LoopId> = self.loops[l].children().collect();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    /// Statements directly in the body of `loop_id`.
    pub fn direct_statements(&self, loop_id: LoopId) -> impl Iterator<Item = &Statement> + '_ {
        self.loops[loop_id].body.iter().filter_map(move |b| match b {
            BodyItem::Stmt(s) => Some(&self.statements[*s]),
            BodyItem::Loop(_) => None,
        })
    }

    pub fn slot_of(&self, loop_id: LoopId, kind: PragmaKind) -> Option<&PragmaSlot> {
        self.loops[loop_id]
            .pragma_slots
            .iter()
            .map(|s| &self.slots[*s])
            .find(|s| s.kind == kind)
    }
}
