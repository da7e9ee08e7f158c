//! Whole-program CFG construction: statement lowering, call inlining,
//! short-circuit branch expansion and bit-operation rewriting.

use super::{AStmt, BinOp, Expr, FunctionDef, LValue, MemCProgram, UnOp, VarKind};
use crate::sym::{Field, VarId};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub type NodeId = usize;

/// A term of a scalar linear expression.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Term {
    Var(VarId),
    /// Field read through an address variable.
    Field(VarId, Field),
}

/// Affine scalar expression `Σ c·t + k`.
#[derive(Clone, PartialEq, Eq, Default, Debug)]
pub struct IntExpr {
    pub terms: Vec<(i64, Term)>,
    pub k: i64,
}

impl IntExpr {
    pub fn constant(k: i64) -> IntExpr {
        IntExpr { terms: vec![], k }
    }

    pub fn var(v: VarId) -> IntExpr {
        IntExpr { terms: vec![(1, Term::Var(v))], k: 0 }
    }

    pub fn as_const(&self) -> Option<i64> {
        if self.terms.is_empty() {
            Some(self.k)
        } else {
            None
        }
    }

    fn add(&mut self, c: i64, t: Term) {
        for (co, tt) in self.terms.iter_mut() {
            if *tt == t {
                *co += c;
                return;
            }
        }
        if c != 0 {
            self.terms.push((c, t));
        }
    }

    fn scale(&mut self, c: i64) {
        for (co, _) in self.terms.iter_mut() {
            *co *= c;
        }
        self.k *= c;
        self.terms.retain(|(c, _)| *c != 0);
    }

    fn plus(&mut self, other: &IntExpr, sign: i64) {
        for (c, t) in &other.terms {
            self.add(c * sign, *t);
        }
        self.k += other.k * sign;
    }

    pub fn fields(&self) -> Vec<(VarId, Field)> {
        self.terms
            .iter()
            .filter_map(|(_, t)| match t {
                Term::Field(v, f) => Some((*v, *f)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum IntRhs {
    Expr(IntExpr),
    /// Truncating division by a positive constant.
    Div(IntExpr, i64),
    Havoc,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AddrRhs {
    Null,
    Var(VarId),
    /// fnx read through an address variable.
    FieldFnx(VarId),
    /// Unconstrained fresh address (uninitialized locals).
    Fresh,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CmpKind {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpKind {
    pub fn negate(self) -> CmpKind {
        match self {
            CmpKind::Eq => CmpKind::Ne,
            CmpKind::Ne => CmpKind::Eq,
            CmpKind::Lt => CmpKind::Ge,
            CmpKind::Ge => CmpKind::Lt,
            CmpKind::Le => CmpKind::Gt,
            CmpKind::Gt => CmpKind::Le,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum AddrTerm {
    Null,
    Var(VarId),
    FieldFnx(VarId),
    /// `p + e` in header units.
    VarPlusUnits(VarId, IntExpr),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Cond {
    Int { op: CmpKind, lhs: IntExpr, rhs: IntExpr },
    Addr { op: CmpKind, lhs: AddrTerm, rhs: AddrTerm },
    /// `v ≡ r (mod m)`; produced by bit-op rewriting only.
    Cong { var: VarId, residue: i64, modulus: i64 },
}

impl Cond {
    pub fn negate(&self) -> Cond {
        match self {
            Cond::Int { op, lhs, rhs } => {
                Cond::Int { op: op.negate(), lhs: lhs.clone(), rhs: rhs.clone() }
            }
            Cond::Addr { op, lhs, rhs } => {
                Cond::Addr { op: op.negate(), lhs: lhs.clone(), rhs: rhs.clone() }
            }
            Cond::Cong { .. } => unreachable!("congruence conditions never branch"),
        }
    }
}

/// Lowered statement attached to a CFG edge.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Stmt {
    Nop,
    AssignInt(VarId, IntRhs),
    /// Original bit-level assignment; the analyzer interprets it through
    /// `rewrite_bitops`, the concrete interpreter evaluates it exactly.
    AssignBit(VarId, BitExpr),
    AssignAddr(VarId, AddrRhs),
    FieldWriteInt(VarId, Field, IntExpr),
    FieldWriteAddr(VarId, AddrRhs),
    /// `dst = base + units × hdr_size_bytes`
    AddrArith { dst: VarId, base: VarId, units: IntExpr },
    Sbrk { dst: VarId, bytes: IntExpr },
    Assume(Cond),
    Havoc(VarId),
    Warning(String),
    /// End of scope: the variables leave the environment.
    Drop(Vec<VarId>),
}

impl Stmt {
    pub fn is_bit_free(&self) -> bool {
        true // by construction: Stmt has no bit operators
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Edge {
    pub src: NodeId,
    pub stmt: Stmt,
    pub dst: NodeId,
}

#[derive(Clone, Debug)]
pub struct VarInfo {
    pub name: String,
    pub kind: VarKind,
    pub global: bool,
}

#[derive(Clone, Debug)]
pub struct Cfg {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub entry: NodeId,
    pub exit: NodeId,
    pub error_sink: NodeId,
    pub vars: Vec<VarInfo>,
    pub hdr_size_bytes: i64,
    pub hli: VarId,
    pub loop_heads: BTreeSet<NodeId>,
    pub rpo: Vec<NodeId>,
    pub out_edges: Vec<Vec<usize>>,
    pub in_edges: Vec<Vec<usize>>,
    /// (function, label) -> instances with their variable scope.
    pub labels: BTreeMap<(String, String), Vec<(NodeId, BTreeMap<String, VarId>)>>,
    /// request-size variables (one per inlined allocation body).
    pub request_sizes: BTreeSet<VarId>,
    /// inline depth per node; 0 is the client frame.
    pub node_depth: Vec<usize>,
    pub warnings: Vec<String>,
    /// edges created per inlined body instance (construction audit).
    pub audit_bodies: Vec<(String, usize)>,
}

impl Cfg {
    pub fn var(&self, v: VarId) -> &VarInfo {
        &self.vars[v.0 as usize]
    }

    pub fn var_named(&self, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|i| i.name == name)
            .map(|i| VarId(i as u32))
    }

    pub fn addr_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, i)| i.kind == VarKind::Address)
            .map(|(i, _)| VarId(i as u32))
    }

    pub fn succs(&self, n: NodeId) -> impl Iterator<Item = &Edge> {
        self.out_edges[n].iter().map(|i| &self.edges[*i])
    }
}

#[derive(Clone, Debug)]
pub enum LowerError {
    Recursion(Vec<String>),
    MissingFunction(String),
    Unsupported(String),
}

impl fmt::Display for LowerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LowerError::Recursion(chain) => {
                write!(f, "recursive call chain: {}", chain.join(" -> "))
            }
            LowerError::MissingFunction(n) => write!(f, "call to undefined function {}", n),
            LowerError::Unsupported(m) => write!(f, "unsupported construct: {}", m),
        }
    }
}

impl std::error::Error for LowerError {}

type LR<T> = Result<T, LowerError>;

struct Frame {
    fn_name: String,
    inst: usize,
    scope: BTreeMap<String, VarId>,
    ret_var: Option<VarId>,
    ret_join: NodeId,
    locals: Vec<VarId>,
    breaks: Vec<NodeId>,
    pending_label: Option<String>,
    depth: usize,
}

struct Builder<'p> {
    prog: &'p MemCProgram,
    vars: Vec<VarInfo>,
    globals: BTreeMap<String, VarId>,
    edges: Vec<Edge>,
    node_count: usize,
    node_depth: Vec<usize>,
    stack: Vec<String>,
    instance: usize,
    tmp_count: usize,
    labels: BTreeMap<(String, String), Vec<(NodeId, BTreeMap<String, VarId>)>>,
    request_sizes: BTreeSet<VarId>,
    warnings: Vec<String>,
    audit_bodies: Vec<(String, usize)>,
    audit_open: Vec<usize>,
}

impl<'p> Builder<'p> {
    fn node(&mut self, depth: usize) -> NodeId {
        self.node_count += 1;
        self.node_depth.push(depth);
        self.node_count - 1
    }

    fn intern(&mut self, name: String, kind: VarKind, global: bool) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(VarInfo { name, kind, global });
        id
    }

    fn edge(&mut self, src: NodeId, stmt: Stmt, dst: NodeId) {
        self.edges.push(Edge { src, stmt, dst });
        if let Some(open) = self.audit_open.last() {
            self.audit_bodies[*open].1 += 1;
        }
    }

    /// Chains a statement after `cur`, returning the new program point.
    fn step(&mut self, cur: NodeId, stmt: Stmt, depth: usize) -> NodeId {
        let next = self.node(depth);
        self.edge(cur, stmt, next);
        next
    }

    fn lookup(&self, frame: &Frame, name: &str) -> LR<VarId> {
        frame
            .scope
            .get(name)
            .or_else(|| self.globals.get(name))
            .copied()
            .ok_or_else(|| LowerError::Unsupported(format!("unknown variable {}", name)))
    }

    fn kind(&self, v: VarId) -> VarKind {
        self.vars[v.0 as usize].kind
    }

    fn fresh_tmp(&mut self, kind: VarKind) -> VarId {
        self.tmp_count += 1;
        self.intern(format!("__t{}", self.tmp_count), kind, false)
    }

    fn take_label(&mut self, frame: &mut Frame, node: NodeId) {
        if let Some(l) = frame.pending_label.take() {
            let scope: BTreeMap<String, VarId> = self
                .globals
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .chain(frame.scope.iter().map(|(k, v)| (k.clone(), *v)))
                .collect();
            self.labels
                .entry((frame.fn_name.clone(), l))
                .or_default()
                .push((node, scope));
        }
    }

    /// Constant folding over the expression tree (sizeof, arithmetic, ~).
    fn fold(&self, e: &Expr) -> Expr {
        match e {
            Expr::SizeofHdr => Expr::Int(self.prog.hdr_size_bytes),
            Expr::Bool(b) => Expr::Int(if *b { 1 } else { 0 }),
            Expr::Cast(inner) => {
                let f = self.fold(inner);
                match f {
                    Expr::Int(_) | Expr::Null => f,
                    other => Expr::Cast(Box::new(other)),
                }
            }
            Expr::Unary(op, inner) => {
                let f = self.fold(inner);
                if let Expr::Int(v) = f {
                    match op {
                        UnOp::Neg => return Expr::Int(-v),
                        UnOp::BitNot => return Expr::Int(!v),
                        UnOp::Not => return Expr::Int(if v == 0 { 1 } else { 0 }),
                    }
                }
                Expr::Unary(*op, Box::new(f))
            }
            Expr::Binary(op, a, b) => {
                let fa = self.fold(a);
                let fb = self.fold(b);
                if let (Expr::Int(x), Expr::Int(y)) = (&fa, &fb) {
                    let v = match op {
                        BinOp::Add => Some(x + y),
                        BinOp::Sub => Some(x - y),
                        BinOp::Mul => Some(x * y),
                        BinOp::Div if *y != 0 => Some(x / y),
                        BinOp::BitAnd => Some(x & y),
                        BinOp::BitOr => Some(x | y),
                        _ => None,
                    };
                    if let Some(v) = v {
                        return Expr::Int(v);
                    }
                }
                Expr::Binary(*op, Box::new(fa), Box::new(fb))
            }
            other => other.clone(),
        }
    }

    /// Lowers a scalar expression to an affine form, emitting temporaries
    /// for divisions; returns the updated program point.
    fn int_expr(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        e: &Expr,
        temps: &mut Vec<VarId>,
    ) -> LR<(NodeId, IntExpr)> {
        let folded = self.fold(e);
        self.int_expr_folded(frame, cur, &folded, temps)
    }

    fn int_expr_folded(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        e: &Expr,
        temps: &mut Vec<VarId>,
    ) -> LR<(NodeId, IntExpr)> {
        match e {
            Expr::Int(v) => Ok((cur, IntExpr::constant(*v))),
            Expr::Var(name) => {
                let v = self.lookup(frame, name)?;
                if self.kind(v) != VarKind::Integer {
                    return Err(LowerError::Unsupported(format!(
                        "address variable {} in integer context",
                        name
                    )));
                }
                Ok((cur, IntExpr::var(v)))
            }
            Expr::FieldAcc(name, f) => {
                let v = self.lookup(frame, name)?;
                if *f == Field::Fnx {
                    return Err(LowerError::Unsupported(
                        "fnx is address-valued; integer expression expected".into(),
                    ));
                }
                Ok((cur, IntExpr { terms: vec![(1, Term::Field(v, *f))], k: 0 }))
            }
            Expr::Unary(UnOp::Neg, inner) => {
                let (cur, mut ie) = self.int_expr_folded(frame, cur, inner, temps)?;
                ie.scale(-1);
                Ok((cur, ie))
            }
            Expr::Binary(BinOp::Add, a, b) => {
                let (cur, mut ia) = self.int_expr_folded(frame, cur, a, temps)?;
                let (cur, ib) = self.int_expr_folded(frame, cur, b, temps)?;
                ia.plus(&ib, 1);
                Ok((cur, ia))
            }
            Expr::Binary(BinOp::Sub, a, b) => {
                let (cur, mut ia) = self.int_expr_folded(frame, cur, a, temps)?;
                let (cur, ib) = self.int_expr_folded(frame, cur, b, temps)?;
                ia.plus(&ib, -1);
                Ok((cur, ia))
            }
            Expr::Binary(BinOp::Mul, a, b) => {
                let (cur, ia) = self.int_expr_folded(frame, cur, a, temps)?;
                let (cur, ib) = self.int_expr_folded(frame, cur, b, temps)?;
                if let Some(c) = ia.as_const() {
                    let mut r = ib;
                    r.scale(c);
                    Ok((cur, r))
                } else if let Some(c) = ib.as_const() {
                    let mut r = ia;
                    r.scale(c);
                    Ok((cur, r))
                } else {
                    Err(LowerError::Unsupported("nonlinear multiplication".into()))
                }
            }
            Expr::Binary(BinOp::Div, a, b) => {
                let (cur, ia) = self.int_expr_folded(frame, cur, a, temps)?;
                let (cur, ib) = self.int_expr_folded(frame, cur, b, temps)?;
                let den = ib.as_const().ok_or_else(|| {
                    LowerError::Unsupported("division by a non-constant".into())
                })?;
                if den <= 0 {
                    return Err(LowerError::Unsupported("division by a non-positive".into()));
                }
                let t = self.fresh_tmp(VarKind::Integer);
                temps.push(t);
                let cur = self.step(cur, Stmt::AssignInt(t, IntRhs::Div(ia, den)), frame.depth);
                Ok((cur, IntExpr::var(t)))
            }
            Expr::Binary(BinOp::BitAnd, _, _)
            | Expr::Binary(BinOp::BitOr, _, _)
            | Expr::Unary(UnOp::BitNot, _) => {
                let t = self.fresh_tmp(VarKind::Integer);
                temps.push(t);
                let bit = self.bit_expr(frame, e)?;
                let (_, warn) = rewrite_bitops(t, &bit);
                if let Some(w) = warn {
                    self.warnings.push(w);
                }
                let cur = self.step(cur, Stmt::AssignBit(t, bit), frame.depth);
                Ok((cur, IntExpr::var(t)))
            }
            other => Err(LowerError::Unsupported(format!(
                "integer expression {:?}",
                other
            ))),
        }
    }

    /// Name-resolved bit expression for `rewrite_bitops`.
    fn bit_expr(&mut self, frame: &mut Frame, e: &Expr) -> LR<BitExpr> {
        match e {
            Expr::Binary(BinOp::BitAnd, a, b) => Ok(BitExpr::And(
                Box::new(self.bit_expr(frame, a)?),
                Box::new(self.bit_expr(frame, b)?),
            )),
            Expr::Binary(BinOp::BitOr, a, b) => Ok(BitExpr::Or(
                Box::new(self.bit_expr(frame, a)?),
                Box::new(self.bit_expr(frame, b)?),
            )),
            Expr::Unary(UnOp::BitNot, a) => Ok(BitExpr::Not(Box::new(self.bit_expr(frame, a)?))),
            other => {
                // affine leaf; divisions inside masks are not supported
                let mut temps = Vec::new();
                let before = self.edges.len();
                let (_, ie) = self.int_expr_folded(frame, usize::MAX, other, &mut temps)?;
                if self.edges.len() != before || !temps.is_empty() {
                    return Err(LowerError::Unsupported(
                        "division inside a bit-level expression".into(),
                    ));
                }
                Ok(BitExpr::Aff(ie))
            }
        }
    }
}

/// A bit-level right-hand side with names resolved; input to the rewrite.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum BitExpr {
    Aff(IntExpr),
    And(Box<BitExpr>, Box<BitExpr>),
    Or(Box<BitExpr>, Box<BitExpr>),
    Not(Box<BitExpr>),
}

/// Rewrites `dst := e` with bit operators into statements a numeric domain
/// can interpret: recognized alignment idioms become Havoc + congruence +
/// range assumptions, everything else soundly havocs the target (with a
/// warning). The output never contains a bit operator.
pub fn rewrite_bitops(dst: VarId, e: &BitExpr) -> (Vec<Stmt>, Option<String>) {
    match e {
        BitExpr::Aff(ie) => (vec![Stmt::AssignInt(dst, IntRhs::Expr(ie.clone()))], None),
        BitExpr::And(a, b) => {
            let (mask, expr) = match (&**a, &**b) {
                (BitExpr::Aff(m), BitExpr::Aff(e2)) if m.as_const().is_some() => {
                    (m.as_const().unwrap(), Some(e2.clone()))
                }
                (BitExpr::Aff(e2), BitExpr::Aff(m)) if m.as_const().is_some() => {
                    (m.as_const().unwrap(), Some(e2.clone()))
                }
                _ => (0, None),
            };
            match expr {
                Some(_) if mask == 0 => {
                    (vec![Stmt::AssignInt(dst, IntRhs::Expr(IntExpr::constant(0)))], None)
                }
                Some(e2) if mask < 0 && (-mask as u64).is_power_of_two() => {
                    // e & ~(m-1): the floor-alignment idiom
                    let m = -mask;
                    let upper = e2.clone();
                    let mut lower = e2;
                    lower.k -= m - 1;
                    (
                        vec![
                            Stmt::Havoc(dst),
                            Stmt::Assume(Cond::Cong { var: dst, residue: 0, modulus: m }),
                            Stmt::Assume(Cond::Int {
                                op: CmpKind::Le,
                                lhs: IntExpr::var(dst),
                                rhs: upper,
                            }),
                            Stmt::Assume(Cond::Int {
                                op: CmpKind::Ge,
                                lhs: IntExpr::var(dst),
                                rhs: lower,
                            }),
                        ],
                        None,
                    )
                }
                Some(_) if mask > 0 && (mask as u64 + 1).is_power_of_two() => {
                    // e & (2^k - 1): value lands in [0, mask]
                    (
                        vec![
                            Stmt::Havoc(dst),
                            Stmt::Assume(Cond::Int {
                                op: CmpKind::Ge,
                                lhs: IntExpr::var(dst),
                                rhs: IntExpr::constant(0),
                            }),
                            Stmt::Assume(Cond::Int {
                                op: CmpKind::Le,
                                lhs: IntExpr::var(dst),
                                rhs: IntExpr::constant(mask),
                            }),
                        ],
                        None,
                    )
                }
                _ => (
                    vec![Stmt::Havoc(dst)],
                    Some("unsupported bit-and mask; target havocked".to_string()),
                ),
            }
        }
        BitExpr::Or(..) | BitExpr::Not(..) => (
            vec![Stmt::Havoc(dst)],
            Some("unsupported bit operation; target havocked".to_string()),
        ),
    }
}

impl<'p> Builder<'p> {
    /// Classifies an address-valued expression and assigns it to `dst`.
    fn assign_addr(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        dst: VarId,
        rhs: &Expr,
    ) -> LR<NodeId> {
        let folded = self.fold(rhs);
        match &folded {
            Expr::Null | Expr::Int(0) => {
                Ok(self.step(cur, Stmt::AssignAddr(dst, AddrRhs::Null), frame.depth))
            }
            Expr::Cast(inner) => self.assign_addr(frame, cur, dst, inner),
            Expr::Var(name) => {
                let v = self.lookup(frame, name)?;
                if self.kind(v) != VarKind::Address {
                    return Err(LowerError::Unsupported(format!(
                        "integer variable {} in address context",
                        name
                    )));
                }
                Ok(self.step(cur, Stmt::AssignAddr(dst, AddrRhs::Var(v)), frame.depth))
            }
            Expr::FieldAcc(name, Field::Fnx) => {
                let v = self.lookup(frame, name)?;
                Ok(self.step(cur, Stmt::AssignAddr(dst, AddrRhs::FieldFnx(v)), frame.depth))
            }
            Expr::Binary(op @ (BinOp::Add | BinOp::Sub), a, b) => {
                // pointer arithmetic in HDR units
                let (base, off) = (a, b);
                let base_var = self.addr_base(frame, base)?;
                let mut temps = Vec::new();
                let (cur, mut units) = self.int_expr(frame, cur, off, &mut temps)?;
                if *op == BinOp::Sub {
                    units.scale(-1);
                }
                let cur = self.step(
                    cur,
                    Stmt::AddrArith { dst, base: base_var, units },
                    frame.depth,
                );
                Ok(self.drop_temps(cur, temps, frame.depth))
            }
            Expr::Call(f, args) if f == "sbrk" => {
                if args.len() != 1 {
                    return Err(LowerError::Unsupported("sbrk takes one argument".into()));
                }
                let mut temps = Vec::new();
                let (cur, bytes) = self.int_expr(frame, cur, &args[0], &mut temps)?;
                let cur = self.step(cur, Stmt::Sbrk { dst, bytes }, frame.depth);
                Ok(self.drop_temps(cur, temps, frame.depth))
            }
            Expr::Call(f, args) => self.inline_call(frame, cur, f, args, Some(dst)),
            other => Err(LowerError::Unsupported(format!(
                "address expression {:?}",
                other
            ))),
        }
    }

    fn addr_base(&mut self, frame: &Frame, e: &Expr) -> LR<VarId> {
        match e {
            Expr::Cast(inner) => self.addr_base(frame, inner),
            Expr::Var(name) => {
                let v = self.lookup(frame, name)?;
                if self.kind(v) != VarKind::Address {
                    return Err(LowerError::Unsupported(format!(
                        "pointer arithmetic on integer {}",
                        name
                    )));
                }
                Ok(v)
            }
            other => Err(LowerError::Unsupported(format!(
                "pointer arithmetic base {:?}",
                other
            ))),
        }
    }

    fn drop_temps(&mut self, cur: NodeId, temps: Vec<VarId>, depth: usize) -> NodeId {
        if temps.is_empty() {
            cur
        } else {
            self.step(cur, Stmt::Drop(temps), depth)
        }
    }

    /// Address-term classification for conditions.
    fn addr_term(&mut self, frame: &mut Frame, e: &Expr) -> LR<Option<AddrTerm>> {
        let folded = self.fold(e);
        match &folded {
            Expr::Null | Expr::Int(0) => Ok(Some(AddrTerm::Null)),
            Expr::Cast(inner) => self.addr_term(frame, inner),
            Expr::Var(name) => {
                let v = self.lookup(frame, name)?;
                Ok((self.kind(v) == VarKind::Address).then_some(AddrTerm::Var(v)))
            }
            Expr::FieldAcc(name, Field::Fnx) => {
                let v = self.lookup(frame, name)?;
                Ok(Some(AddrTerm::FieldFnx(v)))
            }
            Expr::Binary(op @ (BinOp::Add | BinOp::Sub), a, b) => {
                let base = match self.addr_term(frame, a)? {
                    Some(AddrTerm::Var(v)) => v,
                    _ => return Ok(None),
                };
                let mut temps = Vec::new();
                let before = self.edges.len();
                let (_, mut units) = self.int_expr(frame, usize::MAX, b, &mut temps)?;
                if self.edges.len() != before {
                    return Err(LowerError::Unsupported(
                        "division inside an address comparison".into(),
                    ));
                }
                if *op == BinOp::Sub {
                    units.scale(-1);
                }
                Ok(Some(AddrTerm::VarPlusUnits(base, units)))
            }
            _ => Ok(None),
        }
    }

    /// Lowers a condition into complementary Assume branches.
    fn cond(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        e: &Expr,
        then_to: NodeId,
        else_to: NodeId,
    ) -> LR<()> {
        let folded = self.fold(e);
        match &folded {
            Expr::Unary(UnOp::Not, inner) => self.cond(frame, cur, inner, else_to, then_to),
            Expr::Binary(BinOp::LAnd, a, b) => {
                let mid = self.node(frame.depth);
                self.cond(frame, cur, a, mid, else_to)?;
                self.cond(frame, mid, b, then_to, else_to)
            }
            Expr::Binary(BinOp::LOr, a, b) => {
                let mid = self.node(frame.depth);
                self.cond(frame, cur, a, then_to, mid)?;
                self.cond(frame, mid, b, then_to, else_to)
            }
            Expr::Int(v) => {
                let target = if *v != 0 { then_to } else { else_to };
                self.edge(cur, Stmt::Nop, target);
                Ok(())
            }
            Expr::Binary(op @ (BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge), a, b) => {
                let k = match op {
                    BinOp::Eq => CmpKind::Eq,
                    BinOp::Ne => CmpKind::Ne,
                    BinOp::Lt => CmpKind::Lt,
                    BinOp::Le => CmpKind::Le,
                    BinOp::Gt => CmpKind::Gt,
                    _ => CmpKind::Ge,
                };
                // address comparison when either side is address-like
                let la = self.addr_term(frame, a)?;
                let lb = self.addr_term(frame, b)?;
                let atom = match (la, lb) {
                    (Some(ta), Some(tb)) if !(ta == AddrTerm::Null && tb == AddrTerm::Null) => {
                        Cond::Addr { op: k, lhs: ta, rhs: tb }
                    }
                    _ => {
                        let mut temps = Vec::new();
                        let (c1, lhs) = self.int_expr(frame, cur, a, &mut temps)?;
                        let (c2, rhs) = self.int_expr(frame, c1, b, &mut temps)?;
                        if !temps.is_empty() {
                            // divisions feeding a comparison stay live past it
                        }
                        let cond = Cond::Int { op: k, lhs, rhs };
                        self.edge(c2, Stmt::Assume(cond.clone()), then_to);
                        self.edge(c2, Stmt::Assume(cond.negate()), else_to);
                        return Ok(());
                    }
                };
                self.edge(cur, Stmt::Assume(atom.clone()), then_to);
                self.edge(cur, Stmt::Assume(atom.negate()), else_to);
                Ok(())
            }
            // truthiness
            other => {
                if let Some(t) = self.addr_term(frame, other)? {
                    let atom = Cond::Addr { op: CmpKind::Ne, lhs: t, rhs: AddrTerm::Null };
                    self.edge(cur, Stmt::Assume(atom.clone()), then_to);
                    self.edge(cur, Stmt::Assume(atom.negate()), else_to);
                    Ok(())
                } else {
                    let mut temps = Vec::new();
                    let (c1, lhs) = self.int_expr(frame, cur, other, &mut temps)?;
                    let atom = Cond::Int {
                        op: CmpKind::Ne,
                        lhs,
                        rhs: IntExpr::constant(0),
                    };
                    self.edge(c1, Stmt::Assume(atom.clone()), then_to);
                    self.edge(c1, Stmt::Assume(atom.negate()), else_to);
                    Ok(())
                }
            }
        }
    }

    fn inline_call(
        &mut self,
        caller: &mut Frame,
        cur: NodeId,
        name: &str,
        args: &[Expr],
        ret_to: Option<VarId>,
    ) -> LR<NodeId> {
        if name == "warning" {
            let msg = match args.first() {
                Some(Expr::Str(s)) => s.clone(),
                _ => "warning".to_string(),
            };
            return Ok(self.step(cur, Stmt::Warning(msg), caller.depth));
        }
        if self.stack.iter().any(|f| f == name) {
            let mut chain = self.stack.clone();
            chain.push(name.to_string());
            return Err(LowerError::Recursion(chain));
        }
        let fun: &FunctionDef = self
            .prog
            .function(name)
            .ok_or_else(|| LowerError::MissingFunction(name.to_string()))?;
        if fun.params.len() != args.len() {
            return Err(LowerError::Unsupported(format!(
                "{} expects {} arguments, got {}",
                name,
                fun.params.len(),
                args.len()
            )));
        }
        self.instance += 1;
        let inst = self.instance;
        let depth = caller.depth + 1;
        self.audit_bodies.push((format!("{}#{}", name, inst), 0));
        self.audit_open.push(self.audit_bodies.len() - 1);

        let mut frame = Frame {
            fn_name: name.to_string(),
            inst,
            scope: BTreeMap::new(),
            ret_var: None,
            ret_join: self.node(depth),
            locals: Vec::new(),
            breaks: Vec::new(),
            pending_label: None,
            depth,
        };
        // formals, assigned from the caller's actuals
        let mut cur = cur;
        for ((pname, pkind), arg) in fun.params.iter().zip(args) {
            let formal = self.intern(format!("{}#{}", pname, inst), *pkind, false);
            match pkind {
                VarKind::Integer => {
                    let mut temps = Vec::new();
                    let (c, ie) = self.int_expr(caller, cur, arg, &mut temps)?;
                    cur = self.step(c, Stmt::AssignInt(formal, IntRhs::Expr(ie)), depth);
                    cur = self.drop_temps(cur, temps, depth);
                }
                VarKind::Address => {
                    cur = self.assign_addr(caller, cur, formal, arg)?;
                }
            }
            frame.scope.insert(pname.clone(), formal);
            frame.locals.push(formal);
        }
        if let Some(rk) = fun.ret {
            let rv = self.intern(format!("ret#{}", inst), rk, false);
            frame.ret_var = Some(rv);
        }
        if let Some(rs) = &fun.request_size {
            // the distinguished request-size dim of this instance
            if let Some(v) = frame.scope.get(rs) {
                self.request_sizes.insert(*v);
            }
        }
        self.stack.push(name.to_string());
        let body_end = self.lower_block(&mut frame, cur, &fun.body)?;
        self.stack.pop();
        if let Some(end) = body_end {
            self.edge(end, Stmt::Nop, frame.ret_join);
        }
        // request_size locals are only known after Decl interning
        if let Some(rs) = &fun.request_size {
            if let Some(v) = frame.scope.get(rs) {
                self.request_sizes.insert(*v);
            }
        }
        let mut after = frame.ret_join;
        if let (Some(dst), Some(rv)) = (ret_to, frame.ret_var) {
            let stmt = match self.kind(dst) {
                VarKind::Address => Stmt::AssignAddr(dst, AddrRhs::Var(rv)),
                VarKind::Integer => Stmt::AssignInt(dst, IntRhs::Expr(IntExpr::var(rv))),
            };
            after = self.step(after, stmt, caller.depth);
        }
        let mut dead: Vec<VarId> = frame.locals.clone();
        if let Some(rv) = frame.ret_var {
            dead.push(rv);
        }
        let after = self.step(after, Stmt::Drop(dead), caller.depth);
        self.audit_open.pop();
        Ok(after)
    }

    /// Lowers a statement sequence; returns the fallthrough point, or None
    /// when every path leaves (return/break).
    fn lower_block(
        &mut self,
        frame: &mut Frame,
        mut cur: NodeId,
        stmts: &[AStmt],
    ) -> LR<Option<NodeId>> {
        for s in stmts {
            match self.lower_stmt(frame, cur, s)? {
                Some(next) => cur = next,
                None => return Ok(None),
            }
        }
        Ok(Some(cur))
    }

    fn lower_stmt(&mut self, frame: &mut Frame, cur: NodeId, s: &AStmt) -> LR<Option<NodeId>> {
        match s {
            AStmt::Label(l) => {
                frame.pending_label = Some(l.clone());
                Ok(Some(cur))
            }
            // loop labels mark the loop head, not the pre-init point
            AStmt::While { .. } | AStmt::For { .. } => self.lower_stmt_inner(frame, cur, s),
            _ => {
                self.take_label(frame, cur);
                self.lower_stmt_inner(frame, cur, s)
            }
        }
    }

    fn lower_stmt_inner(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        s: &AStmt,
    ) -> LR<Option<NodeId>> {
        let depth = frame.depth;
        match s {
            AStmt::Label(_) => unreachable!(),
            AStmt::Decl { name, kind, init, .. } => {
                let mangled = if frame.fn_name.is_empty() {
                    name.clone()
                } else {
                    format!("{}#{}", name, frame.inst)
                };
                let v = self.intern(mangled, *kind, false);
                frame.scope.insert(name.clone(), v);
                frame.locals.push(v);
                let next = match (init, kind) {
                    (Some(e), VarKind::Integer) => {
                        let mut temps = Vec::new();
                        let (c, ie) = self.int_expr(frame, cur, e, &mut temps)?;
                        let c = self.step(c, Stmt::AssignInt(v, IntRhs::Expr(ie)), depth);
                        self.drop_temps(c, temps, depth)
                    }
                    (Some(e), VarKind::Address) => self.assign_addr(frame, cur, v, e)?,
                    (None, VarKind::Integer) => self.step(cur, Stmt::Havoc(v), depth),
                    (None, VarKind::Address) => {
                        self.step(cur, Stmt::AssignAddr(v, AddrRhs::Fresh), depth)
                    }
                };
                Ok(Some(next))
            }
            AStmt::Assign { lhs, rhs, .. } => {
                let next = self.lower_assign(frame, cur, lhs, rhs)?;
                Ok(Some(next))
            }
            AStmt::If { cond, then_branch, else_branch } => {
                let then_in = self.node(depth);
                let else_in = self.node(depth);
                let join = self.node(depth);
                self.cond(frame, cur, cond, then_in, else_in)?;
                if let Some(te) = self.lower_block(frame, then_in, then_branch)? {
                    self.edge(te, Stmt::Nop, join);
                }
                if let Some(ee) = self.lower_block(frame, else_in, else_branch)? {
                    self.edge(ee, Stmt::Nop, join);
                }
                Ok(Some(join))
            }
            AStmt::While { cond, body, .. } => {
                let head = self.node(depth);
                self.take_label_for_head(frame, head);
                self.edge(cur, Stmt::Nop, head);
                let body_in = self.node(depth);
                let exit = self.node(depth);
                self.cond(frame, head, cond, body_in, exit)?;
                frame.breaks.push(exit);
                if let Some(be) = self.lower_block(frame, body_in, body)? {
                    self.edge(be, Stmt::Nop, head);
                }
                frame.breaks.pop();
                Ok(Some(exit))
            }
            AStmt::For { init, cond, step, body, .. } => {
                let mut c = cur;
                for s in init {
                    c = match self.lower_stmt_inner(frame, c, s)? {
                        Some(n) => n,
                        None => return Ok(None),
                    };
                }
                let head = self.node(depth);
                self.take_label_for_head(frame, head);
                self.edge(c, Stmt::Nop, head);
                let body_in = self.node(depth);
                let exit = self.node(depth);
                match cond {
                    Some(e) => self.cond(frame, head, e, body_in, exit)?,
                    None => self.edge(head, Stmt::Nop, body_in),
                }
                frame.breaks.push(exit);
                let after_body = self.lower_block(frame, body_in, body)?;
                frame.breaks.pop();
                if let Some(mut be) = after_body {
                    for s in step {
                        be = match self.lower_stmt_inner(frame, be, s)? {
                            Some(n) => n,
                            None => return Ok(None),
                        };
                    }
                    self.edge(be, Stmt::Nop, head);
                }
                Ok(Some(exit))
            }
            AStmt::Return(e) => {
                let mut c = cur;
                if let (Some(e), Some(rv)) = (e, frame.ret_var) {
                    match self.kind(rv) {
                        VarKind::Address => c = self.assign_addr(frame, c, rv, e)?,
                        VarKind::Integer => {
                            let mut temps = Vec::new();
                            let (cc, ie) = self.int_expr(frame, c, e, &mut temps)?;
                            c = self.step(cc, Stmt::AssignInt(rv, IntRhs::Expr(ie)), depth);
                            c = self.drop_temps(c, temps, depth);
                        }
                    }
                }
                self.edge(c, Stmt::Nop, frame.ret_join);
                Ok(None)
            }
            AStmt::Break => {
                let target = *frame
                    .breaks
                    .last()
                    .ok_or_else(|| LowerError::Unsupported("break outside a loop".into()))?;
                self.edge(cur, Stmt::Nop, target);
                Ok(None)
            }
            AStmt::ExprStmt(e) => match self.fold(e) {
                Expr::Call(name, args) => {
                    let next = self.inline_call(frame, cur, &name, &args, None)?;
                    Ok(Some(next))
                }
                other => Err(LowerError::Unsupported(format!(
                    "expression statement {:?}",
                    other
                ))),
            },
        }
    }

    fn take_label_for_head(&mut self, frame: &mut Frame, head: NodeId) {
        if frame.pending_label.is_some() {
            self.take_label(frame, head);
        }
    }

    fn lower_assign(
        &mut self,
        frame: &mut Frame,
        cur: NodeId,
        lhs: &LValue,
        rhs: &Expr,
    ) -> LR<NodeId> {
        let depth = frame.depth;
        match lhs {
            LValue::Var(name) => {
                let v = self.lookup(frame, name)?;
                match self.kind(v) {
                    VarKind::Address => self.assign_addr(frame, cur, v, rhs),
                    VarKind::Integer => {
                        let folded = self.fold(rhs);
                        if contains_bitop(&folded) {
                            let bit = self.bit_expr(frame, &folded)?;
                            let (_, warn) = rewrite_bitops(v, &bit);
                            if let Some(w) = warn {
                                self.warnings.push(w);
                            }
                            return Ok(self.step(cur, Stmt::AssignBit(v, bit), depth));
                        }
                        // direct division assignment avoids a temp
                        if let Expr::Binary(BinOp::Div, a, b) = &folded {
                            let mut temps = Vec::new();
                            let (c, ia) = self.int_expr(frame, cur, a, &mut temps)?;
                            if let Some(den) = self.fold(b).as_int() {
                                if den > 0 {
                                    let c = self.step(
                                        c,
                                        Stmt::AssignInt(v, IntRhs::Div(ia, den)),
                                        depth,
                                    );
                                    return Ok(self.drop_temps(c, temps, depth));
                                }
                            }
                            return Err(LowerError::Unsupported(
                                "division by a non-positive constant".into(),
                            ));
                        }
                        let mut temps = Vec::new();
                        let (c, ie) = self.int_expr(frame, cur, &folded, &mut temps)?;
                        let c = self.step(c, Stmt::AssignInt(v, IntRhs::Expr(ie)), depth);
                        Ok(self.drop_temps(c, temps, depth))
                    }
                }
            }
            LValue::FieldAcc(name, field) => {
                let base = self.lookup(frame, name)?;
                match field {
                    Field::Fnx => {
                        let folded = self.fold(rhs);
                        let a = match &folded {
                            Expr::Null | Expr::Int(0) => AddrRhs::Null,
                            Expr::Cast(inner) => match self.fold(inner) {
                                Expr::Var(n) => AddrRhs::Var(self.lookup(frame, &n)?),
                                Expr::Null => AddrRhs::Null,
                                other => {
                                    return Err(LowerError::Unsupported(format!(
                                        "fnx write rhs {:?}",
                                        other
                                    )))
                                }
                            },
                            Expr::Var(n) => AddrRhs::Var(self.lookup(frame, n)?),
                            Expr::FieldAcc(n, Field::Fnx) => {
                                AddrRhs::FieldFnx(self.lookup(frame, n)?)
                            }
                            other => {
                                return Err(LowerError::Unsupported(format!(
                                    "fnx write rhs {:?}",
                                    other
                                )))
                            }
                        };
                        Ok(self.step(cur, Stmt::FieldWriteAddr(base, a), depth))
                    }
                    Field::Size | Field::IsFree => {
                        let folded = self.fold(rhs);
                        if let Expr::Binary(BinOp::Div, a, b) = &folded {
                            if let Some(den) = self.fold(b).as_int() {
                                if den > 0 {
                                    let mut temps = Vec::new();
                                    let (c, ia) = self.int_expr(frame, cur, a, &mut temps)?;
                                    let t = self.fresh_tmp(VarKind::Integer);
                                    temps.push(t);
                                    let c = self.step(
                                        c,
                                        Stmt::AssignInt(t, IntRhs::Div(ia, den)),
                                        depth,
                                    );
                                    let c = self.step(
                                        c,
                                        Stmt::FieldWriteInt(base, *field, IntExpr::var(t)),
                                        depth,
                                    );
                                    return Ok(self.drop_temps(c, temps, depth));
                                }
                            }
                        }
                        let mut temps = Vec::new();
                        let (c, ie) = self.int_expr(frame, cur, &folded, &mut temps)?;
                        let c = self.step(c, Stmt::FieldWriteInt(base, *field, ie), depth);
                        Ok(self.drop_temps(c, temps, depth))
                    }
                }
            }
        }
    }
}

trait AsInt {
    fn as_int(&self) -> Option<i64>;
}

impl AsInt for Expr {
    fn as_int(&self) -> Option<i64> {
        match self {
            Expr::Int(v) => Some(*v),
            _ => None,
        }
    }
}

fn contains_bitop(e: &Expr) -> bool {
    match e {
        Expr::Binary(BinOp::BitAnd | BinOp::BitOr, ..) => true,
        Expr::Binary(_, a, b) => contains_bitop(a) || contains_bitop(b),
        Expr::Unary(UnOp::BitNot, _) => true,
        Expr::Unary(_, a) => contains_bitop(a),
        Expr::Cast(a) => contains_bitop(a),
        _ => false,
    }
}

/// Lowers a program to a single CFG with every call inlined from the entry.
pub fn lower(prog: &MemCProgram) -> Result<Cfg, LowerError> {
    let mut b = Builder {
        prog,
        vars: Vec::new(),
        globals: BTreeMap::new(),
        edges: Vec::new(),
        node_count: 0,
        node_depth: Vec::new(),
        stack: Vec::new(),
        instance: 0,
        tmp_count: 0,
        labels: BTreeMap::new(),
        request_sizes: BTreeSet::new(),
        warnings: Vec::new(),
        audit_bodies: Vec::new(),
        audit_open: Vec::new(),
    };
    for g in &prog.globals {
        let v = b.intern(g.name.clone(), g.kind, true);
        b.globals.insert(g.name.clone(), v);
    }
    let hli = b
        .globals
        .get("hli")
        .copied()
        .expect("parser guarantees the hli ghost global");
    let entry = b.node(0);
    let mut frame = Frame {
        fn_name: String::new(),
        inst: 0,
        scope: BTreeMap::new(),
        ret_var: None,
        ret_join: 0,
        locals: Vec::new(),
        breaks: Vec::new(),
        pending_label: None,
        depth: 0,
    };
    // static initialization: zero/NULL defaults, then explicit initializers
    let mut cur = entry;
    for g in &prog.globals {
        let v = b.globals[&g.name];
        if g.name == "hli" {
            continue; // bound by the analysis/oracle start state
        }
        cur = match (&g.init, g.kind) {
            (None, VarKind::Address) => b.step(cur, Stmt::AssignAddr(v, AddrRhs::Null), 0),
            (None, VarKind::Integer) => {
                b.step(cur, Stmt::AssignInt(v, IntRhs::Expr(IntExpr::constant(0))), 0)
            }
            (Some(e), VarKind::Address) => b.assign_addr(&mut frame, cur, v, e)?,
            (Some(e), VarKind::Integer) => {
                let mut temps = Vec::new();
                let (c, ie) = b.int_expr(&mut frame, cur, e, &mut temps)?;
                let c = b.step(c, Stmt::AssignInt(v, IntRhs::Expr(ie)), 0);
                b.drop_temps(c, temps, 0)
            }
        };
    }
    let entry_fun = prog
        .function(&prog.entry)
        .ok_or_else(|| LowerError::MissingFunction(prog.entry.clone()))?;
    // entry formals are unconstrained
    let args: Vec<Expr> = Vec::new();
    let cur = if entry_fun.params.is_empty() {
        b.inline_call(&mut frame, cur, &prog.entry, &args, None)?
    } else {
        // open entry: havoc the formals via a wrapper frame
        b.instance += 1;
        let inst = b.instance;
        let mut inner = Frame {
            fn_name: prog.entry.clone(),
            inst,
            scope: BTreeMap::new(),
            ret_var: None,
            ret_join: b.node(1),
            locals: Vec::new(),
            breaks: Vec::new(),
            pending_label: None,
            depth: 1,
        };
        let mut c = cur;
        for (pname, pkind) in &entry_fun.params {
            let v = b.intern(format!("{}#{}", pname, inst), *pkind, false);
            inner.scope.insert(pname.clone(), v);
            inner.locals.push(v);
            c = match pkind {
                VarKind::Integer => b.step(c, Stmt::Havoc(v), 1),
                VarKind::Address => b.step(c, Stmt::AssignAddr(v, AddrRhs::Fresh), 1),
            };
        }
        if let Some(rk) = entry_fun.ret {
            inner.ret_var = Some(b.intern(format!("ret#{}", inst), rk, false));
        }
        if let Some(rs) = &entry_fun.request_size {
            if let Some(v) = inner.scope.get(rs) {
                b.request_sizes.insert(*v);
            }
        }
        b.stack.push(prog.entry.clone());
        let end = b.lower_block(&mut inner, c, &entry_fun.body)?;
        b.stack.pop();
        if let Some(e) = end {
            b.edge(e, Stmt::Nop, inner.ret_join);
        }
        if let Some(rs) = &entry_fun.request_size {
            if let Some(v) = inner.scope.get(rs) {
                b.request_sizes.insert(*v);
            }
        }
        inner.ret_join
    };
    let exit = cur;
    let error_sink = b.node(0);

    let mut cfg = Cfg {
        node_count: b.node_count,
        edges: b.edges,
        entry,
        exit,
        error_sink,
        vars: b.vars,
        hdr_size_bytes: prog.hdr_size_bytes,
        hli,
        loop_heads: BTreeSet::new(),
        rpo: Vec::new(),
        out_edges: Vec::new(),
        in_edges: Vec::new(),
        labels: b.labels,
        request_sizes: b.request_sizes,
        node_depth: b.node_depth,
        warnings: b.warnings,
        audit_bodies: b.audit_bodies,
    };
    index_cfg(&mut cfg);
    Ok(cfg)
}

/// Adjacency, reverse postorder and dominator-based loop heads.
fn index_cfg(cfg: &mut Cfg) {
    let n = cfg.node_count;
    cfg.out_edges = vec![Vec::new(); n];
    cfg.in_edges = vec![Vec::new(); n];
    for (i, e) in cfg.edges.iter().enumerate() {
        cfg.out_edges[e.src].push(i);
        cfg.in_edges[e.dst].push(i);
    }
    // DFS postorder from entry
    let mut state = vec![0u8; n];
    let mut post = Vec::new();
    let mut stack = vec![(cfg.entry, 0usize)];
    state[cfg.entry] = 1;
    while let Some((node, idx)) = stack.pop() {
        if idx < cfg.out_edges[node].len() {
            stack.push((node, idx + 1));
            let succ = cfg.edges[cfg.out_edges[node][idx]].dst;
            if state[succ] == 0 {
                state[succ] = 1;
                stack.push((succ, 0));
            }
        } else {
            post.push(node);
        }
    }
    cfg.rpo = post.iter().rev().copied().collect();
    let mut rpo_index = vec![usize::MAX; n];
    for (i, node) in cfg.rpo.iter().enumerate() {
        rpo_index[*node] = i;
    }
    // iterative dominators (Cooper-Harvey-Kennedy)
    let mut idom = vec![usize::MAX; n];
    idom[cfg.entry] = cfg.entry;
    let mut changed = true;
    while changed {
        changed = false;
        for &node in &cfg.rpo {
            if node == cfg.entry {
                continue;
            }
            let mut new_idom = usize::MAX;
            for &ei in &cfg.in_edges[node] {
                let p = cfg.edges[ei].src;
                if rpo_index[p] == usize::MAX || idom[p] == usize::MAX {
                    continue;
                }
                new_idom = if new_idom == usize::MAX {
                    p
                } else {
                    intersect(&idom, &rpo_index, p, new_idom)
                };
            }
            if new_idom != usize::MAX && idom[node] != new_idom {
                idom[node] = new_idom;
                changed = true;
            }
        }
    }
    let dominates = |a: usize, b: usize| -> bool {
        // does a dominate b?
        let mut x = b;
        loop {
            if x == a {
                return true;
            }
            if idom[x] == usize::MAX || idom[x] == x {
                return x == a;
            }
            x = idom[x];
        }
    };
    cfg.loop_heads.clear();
    for e in &cfg.edges {
        if rpo_index[e.src] == usize::MAX {
            continue;
        }
        if dominates(e.dst, e.src) {
            cfg.loop_heads.insert(e.dst);
        }
    }
}

fn intersect(idom: &[usize], rpo_index: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while rpo_index[a] > rpo_index[b] {
            if idom[a] == usize::MAX {
                return b;
            }
            a = idom[a];
        }
        while rpo_index[b] > rpo_index[a] {
            if idom[b] == usize::MAX {
                return a;
            }
            b = idom[b];
        }
    }
    a
}
