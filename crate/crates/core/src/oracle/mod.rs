//! Byte-level concrete interpreter for MemC programs plus the ground-truth
//! side of every soundness check: structural monitors, atom satisfaction
//! and membership of concrete states in abstract values.

mod member;
#[cfg(test)]
mod tests;
mod monitor;
mod sat;

pub use member::{member, member_binding};
pub use monitor::{check_structural, parse_heap_list, walk_free_list, Chunk};
pub use sat::{contiguous, sat_atom, Assignment, AtomRef};

use crate::memc::{
    AddrRhs, AddrTerm, BitExpr, Cfg, CmpKind, Cond, IntExpr, IntRhs, NodeId, Stmt, Term,
};
use crate::sym::{Field, VarId};
use std::collections::{BTreeMap, BTreeSet};

/// Arena start used by the interpreter; arbitrary but fixed.
pub const BASE_ADDR: i64 = 4096;

/// A concrete machine state: byte heap, variable environment, break marker
/// and the ghost isfree shadow (keyed by chunk start address).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ConcreteState {
    pub heap: BTreeMap<i64, u8>,
    pub env: BTreeMap<VarId, i64>,
    pub base: i64,
    pub brk: i64,
    pub free_shadow: BTreeSet<i64>,
}

#[derive(Clone, Debug)]
pub struct ConcreteFault {
    pub node: NodeId,
    pub msg: String,
}

impl std::fmt::Display for ConcreteFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "concrete fault at node {}: {}", self.node, self.msg)
    }
}

impl ConcreteState {
    pub fn initial() -> ConcreteState {
        ConcreteState {
            heap: BTreeMap::new(),
            env: BTreeMap::new(),
            base: BASE_ADDR,
            brk: BASE_ADDR,
            free_shadow: BTreeSet::new(),
        }
    }

    pub fn in_arena(&self, addr: i64, len: i64) -> bool {
        addr >= self.base && addr + len <= self.brk
    }

    pub(crate) fn read_u32(&self, addr: i64) -> Option<i64> {
        let mut v: u32 = 0;
        for i in 0..4 {
            v |= (*self.heap.get(&(addr + i))? as u32) << (8 * i);
        }
        Some(v as i64)
    }

    fn write_u32(&mut self, addr: i64, v: i64) -> bool {
        if !(0..=u32::MAX as i64).contains(&v) {
            return false;
        }
        let v = v as u32;
        for i in 0..4 {
            if !self.in_arena(addr + i, 1) {
                return false;
            }
            self.heap.insert(addr + i, ((v >> (8 * i)) & 0xff) as u8);
        }
        true
    }

    /// Reads a header field at chunk start `addr` (isfree via the shadow).
    pub fn read_field(&self, addr: i64, field: Field) -> Option<i64> {
        if !self.in_arena(addr, 8) {
            return None;
        }
        match field {
            Field::Fnx => self.read_u32(addr),
            Field::Size => self.read_u32(addr + 4),
            Field::IsFree => Some(if self.free_shadow.contains(&addr) { 1 } else { 0 }),
        }
    }

    pub fn write_field(&mut self, addr: i64, field: Field, v: i64) -> bool {
        if !self.in_arena(addr, 8) {
            return false;
        }
        match field {
            Field::Fnx => self.write_u32(addr, v),
            Field::Size => self.write_u32(addr + 4, v),
            Field::IsFree => {
                if v != 0 {
                    self.free_shadow.insert(addr);
                } else {
                    self.free_shadow.remove(&addr);
                }
                true
            }
        }
    }

    pub fn var(&self, v: VarId) -> Option<i64> {
        self.env.get(&v).copied()
    }
}

/// An execution trace: the state at every visited control location.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub steps: Vec<(NodeId, ConcreteState)>,
    pub warnings: Vec<(NodeId, String)>,
    pub exited: bool,
}

fn eval_int(state: &ConcreteState, e: &IntExpr) -> Result<i64, String> {
    let mut acc = e.k;
    for (c, t) in &e.terms {
        let v = match t {
            Term::Var(v) => state
                .var(*v)
                .ok_or_else(|| format!("read of unbound variable {:?}", v))?,
            Term::Field(p, f) => {
                let addr = state
                    .var(*p)
                    .ok_or_else(|| format!("read of unbound pointer {:?}", p))?;
                state
                    .read_field(addr, *f)
                    .ok_or_else(|| format!("wild field read at {:#x}", addr))?
            }
        };
        acc = acc
            .checked_add(c.checked_mul(v).ok_or("arithmetic overflow")?)
            .ok_or("arithmetic overflow")?;
    }
    Ok(acc)
}

fn eval_addr_term(state: &ConcreteState, t: &AddrTerm, hdr: i64) -> Result<i64, String> {
    match t {
        AddrTerm::Null => Ok(0),
        AddrTerm::Var(v) => state
            .var(*v)
            .ok_or_else(|| format!("read of unbound variable {:?}", v)),
        AddrTerm::FieldFnx(p) => {
            let addr = state
                .var(*p)
                .ok_or_else(|| format!("read of unbound pointer {:?}", p))?;
            state
                .read_field(addr, Field::Fnx)
                .ok_or_else(|| format!("wild fnx read at {:#x}", addr))
        }
        AddrTerm::VarPlusUnits(v, units) => {
            let b = state
                .var(*v)
                .ok_or_else(|| format!("read of unbound variable {:?}", v))?;
            Ok(b + eval_int(state, units)? * hdr)
        }
    }
}

fn eval_cond(state: &ConcreteState, c: &Cond, hdr: i64) -> Result<bool, String> {
    match c {
        Cond::Int { op, lhs, rhs } => {
            let a = eval_int(state, lhs)?;
            let b = eval_int(state, rhs)?;
            Ok(cmp(*op, a, b))
        }
        Cond::Addr { op, lhs, rhs } => {
            let a = eval_addr_term(state, lhs, hdr)?;
            let b = eval_addr_term(state, rhs, hdr)?;
            Ok(cmp(*op, a, b))
        }
        Cond::Cong { var, residue, modulus } => {
            let v = state
                .var(*var)
                .ok_or_else(|| format!("read of unbound variable {:?}", var))?;
            Ok(v.rem_euclid(*modulus) == *residue)
        }
    }
}

fn eval_bits(state: &ConcreteState, e: &BitExpr) -> Result<i64, String> {
    match e {
        BitExpr::Aff(ie) => eval_int(state, ie),
        BitExpr::And(a, b) => Ok(eval_bits(state, a)? & eval_bits(state, b)?),
        BitExpr::Or(a, b) => Ok(eval_bits(state, a)? | eval_bits(state, b)?),
        BitExpr::Not(a) => Ok(!eval_bits(state, a)?),
    }
}

fn cmp(op: CmpKind, a: i64, b: i64) -> bool {
    match op {
        CmpKind::Eq => a == b,
        CmpKind::Ne => a != b,
        CmpKind::Lt => a < b,
        CmpKind::Le => a <= b,
        CmpKind::Gt => a > b,
        CmpKind::Ge => a >= b,
    }
}

/// Executes one statement; `Ok(false)` means the guard refused the edge.
fn exec_stmt(state: &mut ConcreteState, stmt: &Stmt, hdr: i64) -> Result<bool, String> {
    match stmt {
        Stmt::Nop | Stmt::Warning(_) => Ok(true),
        Stmt::Assume(c) => eval_cond(state, c, hdr),
        Stmt::AssignInt(v, rhs) => {
            let val = match rhs {
                IntRhs::Expr(e) => eval_int(state, e)?,
                IntRhs::Div(e, den) => {
                    let n = eval_int(state, e)?;
                    n / *den
                }
                IntRhs::Havoc => 0,
            };
            state.env.insert(*v, val);
            Ok(true)
        }
        Stmt::Havoc(v) => {
            state.env.insert(*v, 0);
            Ok(true)
        }
        Stmt::AssignBit(v, bits) => {
            let val = eval_bits(state, bits)?;
            state.env.insert(*v, val);
            Ok(true)
        }
        Stmt::AssignAddr(v, rhs) => {
            let val = match rhs {
                AddrRhs::Null => 0,
                AddrRhs::Fresh => 0,
                AddrRhs::Var(q) => state
                    .var(*q)
                    .ok_or_else(|| format!("read of unbound variable {:?}", q))?,
                AddrRhs::FieldFnx(p) => {
                    let addr = state
                        .var(*p)
                        .ok_or_else(|| format!("read of unbound pointer {:?}", p))?;
                    state
                        .read_field(addr, Field::Fnx)
                        .ok_or_else(|| format!("wild fnx read at {:#x}", addr))?
                }
            };
            state.env.insert(*v, val);
            Ok(true)
        }
        Stmt::FieldWriteInt(p, f, e) => {
            let addr = state
                .var(*p)
                .ok_or_else(|| format!("write through unbound pointer {:?}", p))?;
            let v = eval_int(state, e)?;
            if !state.write_field(addr, *f, v) {
                return Err(format!("wild field write at {:#x}", addr));
            }
            Ok(true)
        }
        Stmt::FieldWriteAddr(p, rhs) => {
            let addr = state
                .var(*p)
                .ok_or_else(|| format!("write through unbound pointer {:?}", p))?;
            let v = match rhs {
                AddrRhs::Null => 0,
                AddrRhs::Fresh => 0,
                AddrRhs::Var(q) => state
                    .var(*q)
                    .ok_or_else(|| format!("read of unbound variable {:?}", q))?,
                AddrRhs::FieldFnx(q) => {
                    let qa = state
                        .var(*q)
                        .ok_or_else(|| format!("read of unbound pointer {:?}", q))?;
                    state
                        .read_field(qa, Field::Fnx)
                        .ok_or_else(|| format!("wild fnx read at {:#x}", qa))?
                }
            };
            if !state.write_field(addr, Field::Fnx, v) {
                return Err(format!("wild fnx write at {:#x}", addr));
            }
            Ok(true)
        }
        Stmt::AddrArith { dst, base, units } => {
            let b = state
                .var(*base)
                .ok_or_else(|| format!("read of unbound variable {:?}", base))?;
            let u = eval_int(state, units)?;
            state.env.insert(*dst, b + u * hdr);
            Ok(true)
        }
        Stmt::Sbrk { dst, bytes } => {
            let n = eval_int(state, bytes)?;
            if n < 0 {
                return Err("sbrk of a negative size".into());
            }
            let old = state.brk;
            for a in old..old + n {
                state.heap.insert(a, 0);
            }
            state.brk = old + n;
            state.env.insert(*dst, old);
            Ok(true)
        }
        Stmt::Drop(vars) => {
            for v in vars {
                state.env.remove(v);
            }
            Ok(true)
        }
    }
}

/// Runs the (deterministic) program to completion or until the step budget
/// is exhausted, recording the state at every visited location.
pub fn exec(cfg: &Cfg, step_budget: usize) -> Result<Trace, ConcreteFault> {
    let mut state = ConcreteState::initial();
    let mut trace = Trace::default();
    let mut node = cfg.entry;
    trace.steps.push((node, state.clone()));
    let mut steps = 0;
    while steps < step_budget {
        steps += 1;
        if node == cfg.exit {
            trace.exited = true;
            break;
        }
        let mut taken = None;
        for e in cfg.succs(node) {
            match &e.stmt {
                Stmt::Assume(c) => {
                    let ok = eval_cond(&state, c, cfg.hdr_size_bytes)
                        .map_err(|msg| ConcreteFault { node, msg })?;
                    if ok {
                        taken = Some(e);
                        break;
                    }
                }
                _ => {
                    taken = Some(e);
                    break;
                }
            }
        }
        let Some(edge) = taken else {
            return Err(ConcreteFault {
                node,
                msg: "no enabled edge (stuck)".into(),
            });
        };
        if let Stmt::Warning(w) = &edge.stmt {
            trace.warnings.push((node, w.clone()));
        }
        let ok = exec_stmt(&mut state, &edge.stmt, cfg.hdr_size_bytes)
            .map_err(|msg| ConcreteFault { node, msg })?;
        debug_assert!(ok, "non-assume statements always fire");
        node = edge.dst;
        trace.steps.push((node, state.clone()));
    }
    Ok(trace)
}
