//! Sound abstract post-images for every statement kind: hierarchical
//! unfolding to expose the fields a statement touches, lemma-driven
//! rewriting of blocks and segments, and hierarchical folding back to
//! normal form with cross-level promotion.

mod fold;
mod mat;

pub use fold::fold_pass;
pub use mat::{split_heap_segment, unfold_to};

use crate::memc::{
    AddrRhs, AddrTerm, Cfg, CmpKind, Cond, IntExpr, IntRhs, NodeId, Stmt, Term,
};
use crate::num::{Dim, LinCons, LinExpr};
use crate::pure::Guard;
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::{Field, Gen, SymLoc, VarId};
use crate::value::{AbstractValue, Binding};
use num_bigint::BigInt;
use std::collections::BTreeSet;

/// Specialization order of the spatial predicates.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum PredLevel {
    Blk,
    Chd,
    Chk,
    Fck,
    Seg,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ErrKind {
    ChunkBreaking,
    InvalidAccess,
    FreeListViolation,
    NullDereference,
    ArenaOverflow,
}

/// An analysis finding, attached to the error sink with the binding that
/// witnessed it.
#[derive(Clone, Debug)]
pub struct AnalysisError {
    pub kind: ErrKind,
    pub node: NodeId,
    pub witness: String,
}

#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub hdr: i64,
    pub widen_delay: usize,
    pub max_disjuncts: usize,
    pub trace: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { hdr: 8, widen_delay: 2, max_disjuncts: 64, trace: false }
    }
}

/// Step log and lemma-application tally (`--trace-transformers`).
#[derive(Clone, Debug, Default)]
pub struct Tracer {
    pub enabled: bool,
    pub lines: Vec<String>,
    pub lemma_counts: std::collections::BTreeMap<&'static str, u64>,
}

impl Tracer {
    pub fn lemma(&mut self, name: &'static str, detail: impl Fn() -> String) {
        *self.lemma_counts.entry(name).or_insert(0) += 1;
        if self.enabled {
            let d = detail();
            self.lines.push(format!("[{}] {}", name, d));
        }
    }

    pub fn note(&mut self, msg: impl Fn() -> String) {
        if self.enabled {
            self.lines.push(msg());
        }
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a Cfg,
    pub config: &'a AnalysisConfig,
    pub gen: &'a mut Gen,
    pub tracer: &'a mut Tracer,
    pub node: NodeId,
    pub errors: Vec<AnalysisError>,
}

impl<'a> Ctx<'a> {
    pub fn new(
        cfg: &'a Cfg,
        config: &'a AnalysisConfig,
        gen: &'a mut Gen,
        tracer: &'a mut Tracer,
    ) -> Ctx<'a> {
        Ctx { cfg, config, gen, tracer, node: 0, errors: Vec::new() }
    }

    pub fn hdr(&self) -> i64 {
        self.config.hdr
    }

    pub fn error(&mut self, kind: ErrKind, b: &Binding, what: &str) {
        self.errors.push(AnalysisError {
            kind,
            node: self.node,
            witness: format!("{}: {:?}", what, b.shape),
        });
    }

    /// The guard family for fresh segment entries: the fixed guards plus a
    /// size guard per live request-size dim.
    pub fn guard_family(&self, b: &Binding) -> Vec<Guard> {
        let dims = b.pure.exists.dims();
        let mut rsz = None;
        for v in &self.cfg.request_sizes {
            if dims.contains(&Dim::Var(*v)) {
                rsz = Some(Dim::Var(*v));
                break;
            }
        }
        let mut fam = Guard::family(rsz);
        // additional live request sizes (distinct inlined bodies)
        for v in &self.cfg.request_sizes {
            let d = Dim::Var(*v);
            if Some(d) != rsz && dims.contains(&d) {
                fam.push(Guard::Size(crate::pure::GuardRel::Ge, crate::pure::GuardRhs::Dim(d)));
            }
        }
        fam
    }
}

/// Converts a frontend scalar expression into a numeric-domain expression;
/// the field terms must already be materialized on `b` by the caller.
pub fn lin_of(b: &Binding, e: &IntExpr) -> Option<(LinExpr, BigInt)> {
    let mut out = LinExpr::zero();
    for (c, t) in &e.terms {
        match t {
            Term::Var(v) => out.add_term(Dim::Var(*v), BigInt::from(*c)),
            Term::Field(p, f) => {
                let l = b.env.get(*p)?;
                out.add_term(Dim::Fld(l, *f), BigInt::from(*c));
            }
        }
    }
    Some((out, BigInt::from(e.k)))
}

/// The locations named by atoms, the environment and flso parameters.
pub fn known_locs(b: &Binding) -> BTreeSet<SymLoc> {
    let mut out = b.shape.locs();
    out.extend(b.env.image());
    out.insert(SymLoc::NIL);
    out
}

/// Abstract post-image of one statement over a whole abstract value.
pub fn post(stmt: &Stmt, a: &AbstractValue, ctx: &mut Ctx) -> AbstractValue {
    let AbstractValue::Disj(bindings) = a else {
        return AbstractValue::Top;
    };
    let mut out = AbstractValue::bottom();
    for b in bindings {
        for nb in post_binding(stmt, b.clone(), ctx) {
            let folded = fold_pass(nb, ctx);
            if !folded.pure.is_bottom() {
                #[cfg(debug_assertions)]
                {
                    if let Err(e) = folded.check_wf() {
                        panic!(
                            "ill-formed binding after {:?} at node {}: {}\n{:?}",
                            stmt, ctx.node, e, folded
                        );
                    }
                }
                out.insert(folded);
            }
        }
    }
    out
}

/// Per-binding statement dispatch (before refolding).
pub fn post_binding(stmt: &Stmt, b: Binding, ctx: &mut Ctx) -> Vec<Binding> {
    match stmt {
        Stmt::Nop | Stmt::Warning(_) => vec![b],
        Stmt::Drop(vars) => vec![drop_vars(b, vars)],
        Stmt::Havoc(v) => {
            let mut b = b;
            b.pure.project_dims(&[Dim::Var(*v)].into_iter().collect());
            vec![b]
        }
        Stmt::AssignInt(v, rhs) => assign_int(b, *v, rhs, ctx),
        Stmt::AssignBit(v, bits) => {
            // interpret through the bit-operation rewriting
            let (stmts, _) = crate::memc::rewrite_bitops(*v, bits);
            let mut cur = vec![b];
            for s in &stmts {
                let mut next = Vec::new();
                for nb in cur {
                    next.extend(post_binding(s, nb, ctx));
                }
                cur = next;
            }
            cur
        }
        Stmt::AssignAddr(v, rhs) => assign_addr(b, *v, rhs, ctx),
        Stmt::FieldWriteInt(p, f, e) => field_write_int(b, *p, *f, e, ctx),
        Stmt::FieldWriteAddr(p, rhs) => field_write_addr(b, *p, rhs, ctx),
        Stmt::AddrArith { dst, base, units } => addr_arith(b, *dst, *base, units, ctx),
        Stmt::Sbrk { dst, bytes } => sbrk_post(b, *dst, bytes, ctx),
        Stmt::Assume(c) => assume_post(b, c, ctx),
    }
}

fn drop_vars(mut b: Binding, vars: &[VarId]) -> Binding {
    let mut dims = BTreeSet::new();
    for v in vars {
        b.env.unbind(*v);
        dims.insert(Dim::Var(*v));
    }
    b.pure.project_dims(&dims);
    // universal entries guarded on a dropped request size are stale
    b.pure
        .univs
        .retain(|(_, g), _| match g {
            Guard::Size(_, crate::pure::GuardRhs::Dim(d)) => !dims.contains(d),
            _ => true,
        });
    b
}

/// Materializes every field term of `e` for reading; may fan out.
fn materialize_terms(b: Binding, e: &IntExpr, ctx: &mut Ctx) -> Vec<Binding> {
    let mut cur = vec![b];
    for (_, t) in &e.terms {
        if let Term::Field(p, _) = t {
            let mut next = Vec::new();
            for nb in cur {
                next.extend(mat::materialize(nb, *p, PredLevel::Fck, ctx));
            }
            cur = next;
        }
    }
    cur
}

fn assign_int(b: Binding, v: VarId, rhs: &IntRhs, ctx: &mut Ctx) -> Vec<Binding> {
    match rhs {
        IntRhs::Havoc => {
            let mut b = b;
            b.pure.project_dims(&[Dim::Var(v)].into_iter().collect());
            vec![b]
        }
        IntRhs::Expr(e) => materialize_terms(b, e, ctx)
            .into_iter()
            .filter_map(|mut nb| {
                let (lin, k) = lin_of(&nb, e)?;
                nb.pure.exists = nb.pure.exists.assign(Dim::Var(v), &lin, k);
                Some(nb)
            })
            .collect(),
        IntRhs::Div(e, den) => materialize_terms(b, e, ctx)
            .into_iter()
            .filter_map(|mut nb| {
                let (lin, k) = lin_of(&nb, e)?;
                let dvd = Dim::Var(v);
                if !nb
                    .pure
                    .exists
                    .entails(&LinCons::le(lin.scaled(&BigInt::from(-1)), k.clone()))
                {
                    // dividend not provably nonnegative: sound havoc
                    nb.pure.project_dims(&[dvd].into_iter().collect());
                    return Some(nb);
                }
                // v = floor(e / den): den*v <= e <= den*v + den - 1
                let r = Dim::IVar(ctx.gen.ivar());
                let mut ex = nb.pure.exists.forget(dvd);
                let mut eq = lin.clone();
                eq.add_term(dvd, BigInt::from(-*den));
                eq.add_term(r, BigInt::from(-1));
                ex.meet_cons(LinCons::eq(eq, -k));
                ex.meet_cons(LinCons::dim_ge(r, 0));
                ex.meet_cons(LinCons::dim_le(r, *den - 1));
                nb.pure.exists = ex.forget(r);
                Some(nb)
            })
            .collect(),
    }
}

fn assign_addr(b: Binding, v: VarId, rhs: &AddrRhs, ctx: &mut Ctx) -> Vec<Binding> {
    match rhs {
        AddrRhs::Null => {
            let mut b = b;
            b.env.bind(v, SymLoc::NIL);
            vec![b]
        }
        AddrRhs::Fresh => {
            let mut b = b;
            let l = ctx.gen.loc();
            b.env.bind(v, l);
            vec![b]
        }
        AddrRhs::Var(q) => {
            let mut b = b;
            match b.env.get(*q) {
                Some(l) => {
                    b.env.bind(v, l);
                    vec![b]
                }
                None => {
                    ctx.error(ErrKind::InvalidAccess, &b, "copy of an unbound pointer");
                    vec![]
                }
            }
        }
        AddrRhs::FieldFnx(q) => mat::materialize(b, *q, PredLevel::Fck, ctx)
            .into_iter()
            .filter_map(|mut nb| {
                let x = nb.env.get(*q)?;
                let target = fnx_target(&mut nb, x, ctx);
                nb.env.bind(v, target);
                Some(nb)
            })
            .collect(),
    }
}

/// The location the fnx field of `x` points to: the explicit fck successor
/// when present, an entailed known location otherwise, a fresh constrained
/// location as a last resort.
pub fn fnx_target(b: &mut Binding, x: SymLoc, ctx: &mut Ctx) -> SymLoc {
    if let Some((_, FreeAtom::Fck { to, .. })) = b.shape.free_at(x) {
        return *to;
    }
    let fnx = LinExpr::var(Dim::Fld(x, Field::Fnx));
    for l in known_locs(b) {
        let diff = fnx.minus(&LinExpr::var(Dim::Loc(l)));
        if b.pure.exists.entails(&LinCons::eq(diff, 0)) {
            return l;
        }
    }
    if b
        .pure
        .exists
        .entails(&LinCons::eq(fnx.clone(), 0))
    {
        return SymLoc::NIL;
    }
    let fresh = ctx.gen.loc();
    let diff = fnx.minus(&LinExpr::var(Dim::Loc(fresh)));
    b.pure.exists.meet_cons(LinCons::eq(diff, 0));
    fresh
}

fn field_write_int(b: Binding, p: VarId, f: Field, e: &IntExpr, ctx: &mut Ctx) -> Vec<Binding> {
    let need = match f {
        Field::Size => PredLevel::Chd,
        _ => PredLevel::Chk,
    };
    let mut out = Vec::new();
    for nb in materialize_terms(b, e, ctx) {
        for mut mb in mat::materialize(nb, p, need, ctx) {
            let Some(x) = mb.env.get(p) else { continue };
            let Some((lin, k)) = lin_of(&mb, e) else { continue };
            mb.pure.exists = mb.pure.exists.assign(Dim::Fld(x, f), &lin, k);
            if f == Field::IsFree {
                mb.pure.exists.meet_cons(LinCons::dim_ge(Dim::Fld(x, Field::IsFree), 0));
                mb.pure.exists.meet_cons(LinCons::dim_le(Dim::Fld(x, Field::IsFree), 1));
            }
            if !mb.pure.is_bottom() {
                out.push(mb);
            }
        }
    }
    out
}

fn field_write_addr(b: Binding, p: VarId, rhs: &AddrRhs, ctx: &mut Ctx) -> Vec<Binding> {
    // reading q->fnx first when the rhs is itself a field
    let pre: Vec<(Binding, Option<LinExpr>)> = match rhs {
        AddrRhs::Null => vec![(b, Some(LinExpr::zero()))],
        AddrRhs::Fresh => vec![(b, None)],
        AddrRhs::Var(q) => {
            let l = b.env.get(*q);
            match l {
                Some(l) => vec![(b, Some(LinExpr::var(Dim::Loc(l))))],
                None => vec![],
            }
        }
        AddrRhs::FieldFnx(q) => mat::materialize(b, *q, PredLevel::Fck, ctx)
            .into_iter()
            .filter_map(|nb| {
                let x = nb.env.get(*q)?;
                Some((nb, Some(LinExpr::var(Dim::Fld(x, Field::Fnx)))))
            })
            .collect(),
    };
    let mut out = Vec::new();
    for (nb, val) in pre {
        for mut mb in mat::materialize(nb, p, PredLevel::Chk, ctx) {
            let Some(x) = mb.env.get(p) else { continue };
            match &val {
                Some(expr) => {
                    mb.pure.exists = mb.pure.exists.assign(Dim::Fld(x, Field::Fnx), expr, 0);
                }
                None => {
                    mb.pure.project_dims(
                        &[Dim::Fld(x, Field::Fnx)].into_iter().collect(),
                    );
                }
            }
            out.push(mb);
        }
    }
    out
}

fn addr_arith(b: Binding, dst: VarId, base: VarId, units: &IntExpr, ctx: &mut Ctx) -> Vec<Binding> {
    let mut out = Vec::new();
    for nb in materialize_terms(b, units, ctx) {
        out.extend(mat::addr_arith_binding(nb, dst, base, units, ctx));
    }
    out
}

fn sbrk_post(mut b: Binding, dst: VarId, bytes: &IntExpr, ctx: &mut Ctx) -> Vec<Binding> {
    let Some(hli_loc) = b.env.get(ctx.cfg.hli) else {
        ctx.error(ErrKind::InvalidAccess, &b, "break variable unbound");
        return vec![];
    };
    let Some((lin, k)) = lin_of(&b, bytes) else {
        return vec![];
    };
    // sbrk(0): query of the current break
    if lin.is_zero() && k == BigInt::from(0) {
        b.env.bind(dst, hli_loc);
        return vec![b];
    }
    if !b
        .pure
        .exists
        .entails(&LinCons::le(lin.scaled(&BigInt::from(-1)), k.clone()))
    {
        ctx.error(ErrKind::ArenaOverflow, &b, "sbrk of a possibly-negative size");
        return vec![];
    }
    let new_break = ctx.gen.loc();
    // hli' = hli + bytes
    let mut eq = LinExpr::var(Dim::Loc(new_break)).minus(&LinExpr::var(Dim::Loc(hli_loc)));
    eq = eq.minus(&lin);
    b.pure.exists.meet_cons(LinCons::eq(eq, k));
    b.shape.heap.push(HeapAtom::Blk { from: hli_loc, to: new_break });
    b.env.bind(dst, hli_loc);
    b.env.bind(ctx.cfg.hli, new_break);
    ctx.tracer.note(|| format!("sbrk: blk({:?}; {:?}) appended", hli_loc, new_break));
    vec![b]
}

fn assume_post(b: Binding, cond: &Cond, ctx: &mut Ctx) -> Vec<Binding> {
    match cond {
        Cond::Cong { var, residue, modulus } => {
            let mut b = b;
            b.pure.exists.meet_cong(Dim::Var(*var), *residue, *modulus);
            if b.pure.is_bottom() {
                vec![]
            } else {
                vec![b]
            }
        }
        Cond::Int { op, lhs, rhs } => {
            let mut out = Vec::new();
            for nb in materialize_terms(b, lhs, ctx) {
                for mb in materialize_terms(nb, rhs, ctx) {
                    let Some((l1, k1)) = lin_of(&mb, lhs) else { continue };
                    let Some((l2, k2)) = lin_of(&mb, rhs) else { continue };
                    let diff = l1.minus(&l2);
                    let k = k2 - k1; // lhs - rhs OP k
                    out.extend(meet_cmp(mb, *op, diff, k));
                }
            }
            out
        }
        Cond::Addr { op, lhs, rhs } => {
            let mut out = Vec::new();
            for (nb, le1, k1) in addr_term_bindings(b, lhs, ctx) {
                for (mb, le2, k2) in addr_term_bindings(nb, rhs, ctx) {
                    // (le1 + k1) OP (le2 + k2)  ⟺  le1 - le2 OP k2 - k1
                    let diff = le1.minus(&le2);
                    out.extend(meet_cmp(mb, *op, diff, &k2 - &k1));
                }
            }
            out
        }
    }
}

/// Materializes an address term and yields its value as `expr + constant`.
fn addr_term_bindings(b: Binding, t: &AddrTerm, ctx: &mut Ctx) -> Vec<(Binding, LinExpr, BigInt)> {
    let zero = BigInt::from(0);
    match t {
        AddrTerm::Null => vec![(b, LinExpr::zero(), zero)],
        AddrTerm::Var(v) => match b.env.get(*v) {
            Some(l) => vec![(b, LinExpr::var(Dim::Loc(l)), zero)],
            None => vec![],
        },
        AddrTerm::FieldFnx(p) => mat::materialize(b, *p, PredLevel::Fck, ctx)
            .into_iter()
            .filter_map(|nb| {
                let x = nb.env.get(*p)?;
                Some((nb, LinExpr::var(Dim::Fld(x, Field::Fnx)), BigInt::from(0)))
            })
            .collect(),
        AddrTerm::VarPlusUnits(v, units) => {
            let mut out = Vec::new();
            for nb in materialize_terms(b, units, ctx) {
                let Some(l) = nb.env.get(*v) else { continue };
                let Some((lin, k)) = lin_of(&nb, units) else { continue };
                let hdr = BigInt::from(ctx.hdr());
                let e = LinExpr::var(Dim::Loc(l)).plus(&lin.scaled(&hdr));
                out.push((nb, e, k * hdr));
            }
            out
        }
    }
}

fn with_cons(b: &Binding, c: LinCons) -> Option<Binding> {
    let mut nb = b.clone();
    nb.pure.exists.meet_cons(c);
    if nb.pure.is_bottom() {
        None
    } else {
        Some(nb)
    }
}

fn meet_cmp(b: Binding, op: CmpKind, diff: LinExpr, k: BigInt) -> Vec<Binding> {
    // diff OP k
    match op {
        CmpKind::Eq => with_cons(&b, LinCons::eq(diff, k)).into_iter().collect(),
        CmpKind::Le => with_cons(&b, LinCons::le(diff, k)).into_iter().collect(),
        CmpKind::Lt => with_cons(&b, LinCons::le(diff, k - 1)).into_iter().collect(),
        CmpKind::Ge => with_cons(&b, LinCons::le(diff.scaled(&BigInt::from(-1)), -k))
            .into_iter()
            .collect(),
        CmpKind::Gt => with_cons(&b, LinCons::le(diff.scaled(&BigInt::from(-1)), -k - 1))
            .into_iter()
            .collect(),
        CmpKind::Ne => {
            // disequality by case split
            let lo = LinCons::le(diff.clone(), k.clone() - 1);
            let hi = LinCons::le(diff.scaled(&BigInt::from(-1)), -k - 1);
            if b.pure.exists.entails(&lo) || b.pure.exists.entails(&hi) {
                return vec![b];
            }
            let mut out = Vec::new();
            out.extend(with_cons(&b, lo));
            out.extend(with_cons(&b, hi));
            out
        }
    }
}

#[cfg(test)]
#[path = "tests.rs"]
mod tests;
