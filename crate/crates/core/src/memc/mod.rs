//! MemC frontend: a small C subset for free-list allocators.
//!
//! Parses allocator sources (with `//@ghost`, `//@label`, `//@request_size`
//! annotations), builds one whole-program CFG with every call inlined, and
//! rewrites bit-level statements into numerically analyzable form.

mod lex;
mod lower;
mod parse;
#[cfg(test)]
mod tests;

pub use lower::{
    lower, rewrite_bitops, AddrRhs, AddrTerm, BitExpr, Cfg, CmpKind, Cond, Edge, IntExpr,
    IntRhs, LowerError, NodeId, Stmt, Term, VarInfo,
};
pub use parse::{parse, pretty, ParseError};

use crate::sym::Field;
use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VarKind {
    Address,
    Integer,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GlobalDecl {
    pub name: String,
    pub kind: VarKind,
    pub init: Option<Expr>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<(String, VarKind)>,
    pub ret: Option<VarKind>,
    pub body: Vec<AStmt>,
    /// Variable named by a `//@request_size` annotation in this function.
    pub request_size: Option<String>,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MemCProgram {
    pub globals: Vec<GlobalDecl>,
    pub functions: Vec<FunctionDef>,
    pub entry: String,
    pub hdr_size_bytes: i64,
}

impl MemCProgram {
    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    BitAnd,
    BitOr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    LAnd,
    LOr,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Null,
    SizeofHdr,
    Str(String),
    Var(String),
    /// `p->field` with a variable base.
    FieldAcc(String, Field),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    /// `(HDR*)e` / `(void*)e`; types are erased, the cast is kept for
    /// printing fidelity.
    Cast(Box<Expr>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum LValue {
    Var(String),
    FieldAcc(String, Field),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AStmt {
    Decl { name: String, kind: VarKind, init: Option<Expr>, ghost: bool },
    Assign { lhs: LValue, rhs: Expr, ghost: bool },
    If { cond: Expr, then_branch: Vec<AStmt>, else_branch: Vec<AStmt> },
    While { cond: Expr, body: Vec<AStmt>, label: Option<String> },
    For {
        init: Vec<AStmt>,
        cond: Option<Expr>,
        step: Vec<AStmt>,
        body: Vec<AStmt>,
        label: Option<String>,
    },
    Return(Option<Expr>),
    ExprStmt(Expr),
    Break,
    /// Free-standing `//@label name` marking the next program point.
    Label(String),
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Address => write!(f, "HDR *"),
            VarKind::Integer => write!(f, "size_t "),
        }
    }
}
