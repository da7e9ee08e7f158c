//! Hierarchical folding: after every transformer step, bindings are
//! normalized by merging blocks, refolding chunks, promoting free chunks to
//! the free level, summarizing chunks into segments and composing adjacent
//! segments, until only cut-points keep explicit structure.

use super::mat::{anchor_locs, no_free_start_at, unify_locs};
use super::{fnx_target, Ctx};
use crate::num::{Dim, LinCons, LinExpr};
use crate::pure::{SeqItem, Side};
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::{Field, IVar, SymLoc};
use crate::value::Binding;
use num_bigint::BigInt;
use std::collections::BTreeSet;

fn loc_dim(l: SymLoc) -> LinExpr {
    LinExpr::var(Dim::Loc(l))
}

fn fld(l: SymLoc, f: Field) -> Dim {
    Dim::Fld(l, f)
}

fn entails_le(b: &Binding, a: SymLoc, c: SymLoc, k: i64) -> bool {
    b.pure
        .exists
        .entails(&LinCons::le(loc_dim(a).minus(&loc_dim(c)), k))
}

fn pinned_flag(b: &Binding, i: IVar) -> Option<i64> {
    if b.pure.exists.entails(&LinCons::dim_eq(Dim::IVar(i), 0)) {
        Some(0)
    } else if b.pure.exists.entails(&LinCons::dim_eq(Dim::IVar(i), 1)) {
        Some(1)
    } else {
        None
    }
}

fn isfree_pinned(b: &Binding, x: SymLoc) -> Option<i64> {
    let d = fld(x, Field::IsFree);
    if b.pure.exists.entails(&LinCons::dim_eq(d, 1)) {
        Some(1)
    } else if b.pure.exists.entails(&LinCons::dim_eq(d, 0)) {
        Some(0)
    } else {
        None
    }
}

/// Folding blockers: locations that must keep their explicit identity.
struct Blockers {
    /// nothing at the heap level may fold over these
    heap: BTreeSet<SymLoc>,
    /// free chunks at these stay explicit fcks
    free: BTreeSet<SymLoc>,
}

fn blockers(b: &Binding) -> Blockers {
    let mut pinned = b.env.image();
    pinned.extend(anchor_locs(b));
    pinned.remove(&SymLoc::NIL);
    let mut heap = BTreeSet::new();
    for l in &pinned {
        // a chunk covered at the free level keeps its identity there, so
        // the heap level may abstract it
        if b.shape.free_at(*l).is_none() {
            heap.insert(*l);
        }
    }
    Blockers { heap, free: pinned }
}

/// Normalization to fixpoint.
pub fn fold_pass(mut b: Binding, ctx: &mut Ctx) -> Binding {
    if b.pure.is_bottom() {
        return b;
    }
    saturate(&mut b, ctx);
    for _ in 0..48 {
        if b.pure.is_bottom() {
            return b;
        }
        let blocks = blockers(&b);
        let changed = drop_empty_blks(&mut b, &blocks, ctx)
            || merge_blks(&mut b, &blocks, ctx)
            || refold_chk(&mut b, &blocks, ctx)
            || promote(&mut b, ctx)
            || segmentize_heap(&mut b, &blocks, ctx)
            || compose_heap(&mut b, &blocks, ctx)
            || segmentize_free(&mut b, &blocks, ctx)
            || compose_free(&mut b, &blocks, ctx);
        if !changed {
            break;
        }
    }
    gc(&mut b);
    b
}

/// Invariants of the shape re-stated numerically: nil, chain ordering and
/// the separation of materialized chunks.
fn saturate(b: &mut Binding, ctx: &mut Ctx) {
    let dims = b.pure.exists.dims();
    let mut cons = Vec::new();
    if dims.contains(&Dim::Loc(SymLoc::NIL)) {
        cons.push(LinCons::dim_eq(Dim::Loc(SymLoc::NIL), 0));
    }
    for a in &b.shape.heap {
        if let Some(to) = a.to() {
            match a {
                HeapAtom::Blk { .. } | HeapAtom::Hls { .. } | HeapAtom::Hlsc { .. } => {
                    cons.push(LinCons::le(loc_dim(a.from()).minus(&loc_dim(to)), 0));
                }
                _ => {}
            }
        }
    }
    // separation of materialized chunks (both levels)
    let mut chunks: Vec<SymLoc> = Vec::new();
    for a in &b.shape.heap {
        if matches!(a, HeapAtom::Chd { .. } | HeapAtom::Chk { .. }) {
            chunks.push(a.from());
        }
    }
    for a in &b.shape.free {
        if matches!(a, FreeAtom::Fck { .. }) && !chunks.contains(&a.from()) {
            chunks.push(a.from());
        }
    }
    let hdr = BigInt::from(ctx.hdr());
    for &x in &chunks {
        for &y in &chunks {
            if x == y || !dims.contains(&fld(x, Field::Size)) {
                continue;
            }
            if entails_le(b, x, y, -1) {
                // x's chunk ends at or before y
                let end = loc_dim(x).plus(&LinExpr::var(fld(x, Field::Size)).scaled(&hdr));
                cons.push(LinCons::le(end.minus(&loc_dim(y)), 0));
            }
        }
    }
    b.pure.exists.meet_all(cons);
}

/// blk(x; y) with x ≥ y is empty and disappears (lemma 3).
fn drop_empty_blks(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.heap.len() {
        if let HeapAtom::Blk { from, to } = b.shape.heap[i] {
            if from == to || entails_le(b, to, from, 0) {
                // keep cut-point identities by renaming towards them
                let (keep, gone) = if blocks.heap.contains(&from) || from == to {
                    (from, to)
                } else {
                    (to, from)
                };
                b.shape.heap.remove(i);
                if from != to && !unify_locs(b, keep, gone) {
                    return true; // bottom
                }
                ctx.tracer.lemma("blk-empty", || format!("{:?}", keep));
                return true;
            }
        }
    }
    false
}

/// blk(x; y) * blk(y; z) → blk(x; z) (lemma 5) when y is disposable.
fn merge_blks(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.heap.len().saturating_sub(1) {
        if let (HeapAtom::Blk { from, to }, HeapAtom::Blk { from: f2, to: to2 }) =
            (b.shape.heap[i], b.shape.heap[i + 1])
        {
            if to == f2 && !blocks.heap.contains(&to) && b.shape.free_at(to).is_none() {
                b.shape.heap[i] = HeapAtom::Blk { from, to: to2 };
                b.shape.heap.remove(i + 1);
                ctx.tracer.lemma("blk-merge", || format!("at {:?}", to));
                return true;
            }
        }
    }
    false
}

/// chd(x; h) * blk...(h; e) refolds into chk(x; e) when the pure part pins
/// the extent; an exhausted boundary demotes the next dead chunk to raw
/// bytes so a grown chunk can absorb it.
fn refold_chk(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    let hdr = BigInt::from(ctx.hdr());
    for i in 0..b.shape.heap.len() {
        let HeapAtom::Chd { from: x, to: h } = b.shape.heap[i] else {
            continue;
        };
        if !b
            .pure
            .exists
            .entails(&LinCons::dim_ge(fld(x, Field::Size), 1))
        {
            continue;
        }
        let end_expr = loc_dim(x).plus(&LinExpr::var(fld(x, Field::Size)).scaled(&hdr));
        // the chunk may end exactly at the header when its size is 1 unit
        let mut boundary = h;
        let mut j = i; // last atom index included so far
        loop {
            let fits = b
                .pure
                .exists
                .entails(&LinCons::eq(end_expr.clone().minus(&loc_dim(boundary)), 0));
            if fits {
                b.shape.heap[i] = HeapAtom::Chk { from: x, to: boundary };
                for _ in i..j {
                    b.shape.heap.remove(i + 1);
                }
                ctx.tracer
                    .lemma("chk-fold", || format!("chk({:?};{:?})", x, boundary));
                return true;
            }
            // can the chunk reach past this boundary?
            let past = b.pure.exists.entails(&LinCons::le(
                loc_dim(boundary).minus(&end_expr.clone()),
                -1,
            ));
            if !past {
                break;
            }
            match b.shape.heap.get(j + 1) {
                Some(HeapAtom::Blk { to, .. }) => {
                    boundary = *to;
                    j += 1;
                }
                Some(HeapAtom::Chk { from: n, to }) => {
                    let n = *n;
                    let to = *to;
                    // demote a dead chunk that the grown one swallows
                    if blocks.heap.contains(&n)
                        || blocks.free.contains(&n)
                        || b.shape.free_at(n).is_some()
                    {
                        break;
                    }
                    b.shape.heap[j + 1] = HeapAtom::Blk { from: n, to };
                    b.pure.seqs.subst(SeqItem::Lit(n), &[]);
                    let mut kill = BTreeSet::new();
                    for f in Field::ALL {
                        kill.insert(fld(n, f));
                    }
                    b.pure.project_dims(&kill);
                    ctx.tracer.lemma("chk-demote", || format!("{:?} absorbed", n));
                    return true;
                }
                _ => break,
            }
        }
    }
    false
}

/// A fully refolded chunk whose header is provably free surfaces at the
/// free level as an fck (the ∋ promotion).
fn promote(b: &mut Binding, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.heap.len() {
        let HeapAtom::Chk { from: x, .. } = b.shape.heap[i] else {
            continue;
        };
        if b.shape.free_at(x).is_some() {
            continue;
        }
        if isfree_pinned(b, x) != Some(1) {
            continue;
        }
        let target = fnx_target(b, x, ctx);
        let atom = FreeAtom::Fck { from: x, to: target };
        // chain position: after the atom pointing here, else before the
        // atom this one points to, else at the end
        let pos = b
            .shape
            .free
            .iter()
            .position(|a| a.to() == x)
            .map(|p| p + 1)
            .or_else(|| b.shape.free.iter().position(|a| a.from() == target))
            .unwrap_or(b.shape.free.len());
        b.shape.free.insert(pos, atom);
        ctx.tracer.lemma("fck-promote", || format!("{:?}", x));
        return true;
    }
    false
}

/// Summarizes an unblocked explicit chunk into a one-element heap segment
/// (definition fold), so adjacent segments can then compose.
fn segmentize_heap(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.heap.len() {
        let HeapAtom::Chk { from: x, to: e } = b.shape.heap[i] else {
            continue;
        };
        if blocks.heap.contains(&x) {
            continue;
        }
        // only fold where a segment can grow out of it
        let left_seg = i > 0 && b.shape.heap[i - 1].is_segment();
        let right_seg = b
            .shape
            .heap
            .get(i + 1)
            .map(|a| a.is_segment())
            .unwrap_or(false);
        let chunk_neighbour = (i > 0 && matches!(b.shape.heap[i - 1], HeapAtom::Chk { .. }))
            || matches!(b.shape.heap.get(i + 1), Some(HeapAtom::Chk { .. }));
        if !left_seg && !right_seg && !chunk_neighbour && b.shape.heap.len() > 1 {
            continue;
        }
        let Some(isfree) = isfree_pinned(b, x) else {
            continue;
        };
        // left context flag
        let Some((lflag, lflag_zero)) = left_flag_for(b, i, x, ctx) else {
            continue;
        };
        // early coalescing across the left boundary
        let alt_ok = isfree == 0
            || lflag_zero
            || b.pure.exists.entails(&LinCons::le(
                LinExpr::var(Dim::IVar(lflag)).plus(&LinExpr::var(fld(x, Field::IsFree))),
                1,
            ));
        if !alt_ok {
            continue;
        }
        let w = ctx.gen.seq();
        let rflag = ctx.gen.ivar();
        b.pure.exists.meet_all([
            LinCons::eq(
                LinExpr::var(Dim::IVar(rflag)).minus(&LinExpr::var(fld(x, Field::IsFree))),
                0,
            ),
            LinCons::dim_ge(Dim::IVar(lflag), 0),
            LinCons::dim_le(Dim::IVar(lflag), 1),
            LinCons::le(
                LinExpr::var(Dim::IVar(lflag)).plus(&LinExpr::var(fld(x, Field::IsFree))),
                1,
            ),
        ]);
        if b.pure.is_bottom() {
            return true;
        }
        b.shape.heap[i] = HeapAtom::Hlsc { from: x, to: e, seq: w, lflag, rflag };
        b.pure
            .seqs
            .wh
            .subst(SeqItem::Lit(x), &[SeqItem::Lit(x), SeqItem::Var(w)]);
        b.pure.init_entries(w, &ctx.guard_family(b));
        b.pure.absorb(w, x, Side::Front);
        if b.shape.free_at(x).is_none() {
            let mut kill = BTreeSet::new();
            for f in Field::ALL {
                kill.insert(fld(x, f));
            }
            b.pure.project_dims(&kill);
        }
        ctx.tracer.lemma("hlsc-fold", || format!("chunk {:?}", x));
        return true;
    }
    false
}

/// The left-context flag for position `i` (the flag of the chunk before
/// it): the left segment's right flag, a fresh flag pinned to an explicit
/// left chunk's freeness, or pinned 0 at the arena start / after a busy
/// window.
fn left_flag_for(b: &mut Binding, i: usize, x: SymLoc, ctx: &mut Ctx) -> Option<(IVar, bool)> {
    if i == 0 {
        let iv = ctx.gen.ivar();
        b.pure.exists.meet_cons(LinCons::dim_eq(Dim::IVar(iv), 0));
        return Some((iv, true));
    }
    match b.shape.heap[i - 1] {
        HeapAtom::Hlsc { rflag, .. } => {
            let zero = pinned_flag(b, rflag) == Some(0);
            Some((rflag, zero))
        }
        HeapAtom::Chk { from: l, .. } => {
            let iv = ctx.gen.ivar();
            b.pure.exists.meet_cons(LinCons::eq(
                LinExpr::var(Dim::IVar(iv)).minus(&LinExpr::var(fld(l, Field::IsFree))),
                0,
            ));
            let zero = isfree_pinned(b, l) == Some(0);
            Some((iv, zero))
        }
        _ => {
            // a busy window lets the flag pin to 0 even without a chunk
            if super::mat::no_free_end_at(b, x, ctx.hdr()) {
                let iv = ctx.gen.ivar();
                b.pure.exists.meet_cons(LinCons::dim_eq(Dim::IVar(iv), 0));
                Some((iv, true))
            } else {
                None
            }
        }
    }
}

/// Composes adjacent heap segments sharing their boundary (lemma 2); flag
/// parameters must agree or be soundly retargetable.
fn compose_heap(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.heap.len().saturating_sub(1) {
        let (
            HeapAtom::Hlsc { from, to, seq: s1, lflag, rflag: r1 },
            HeapAtom::Hlsc { from: f2, to: to2, seq: s2, lflag: l2, rflag },
        ) = (b.shape.heap[i], b.shape.heap[i + 1])
        else {
            continue;
        };
        if to != f2 {
            continue;
        }
        // the boundary is the right segment's first element; keep it
        // explicit while something pins it
        if blocks.heap.contains(&to) {
            continue;
        }
        let agreed = if r1 == l2 {
            true
        } else if b
            .pure
            .exists
            .entails(&LinCons::dims_eq(Dim::IVar(r1), Dim::IVar(l2)))
        {
            true
        } else {
            match pinned_flag(b, r1) {
                Some(0) => true, // a 0 left-context imposes nothing
                Some(1) => no_free_start_at(b, to),
                _ => false,
            }
        };
        if !agreed {
            continue;
        }
        let s3 = ctx.gen.seq();
        b.shape.heap[i] = HeapAtom::Hlsc { from, to: to2, seq: s3, lflag, rflag };
        b.shape.heap.remove(i + 1);
        b.pure.compose_entries(s1, s2, s3);
        ctx.tracer.lemma("hlsc-compose", || format!("at {:?}", to));
        return true;
    }
    false
}

/// Summarizes an unblocked explicit free chunk into a one-element sorted
/// free segment.
fn segmentize_free(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.free.len() {
        let FreeAtom::Fck { from: x, to: t } = b.shape.free[i] else {
            continue;
        };
        if blocks.free.contains(&x) {
            continue;
        }
        // while the heap atom is explicit the fck carries the link fields
        if b.shape.heap_at(x).is_some() {
            continue;
        }
        // lower bound: the chain predecessor's last element, or the nil
        // sentinel at the chain head
        let lbound = match b.shape.free.iter().position(|a| a.to() == x) {
            Some(p) => match b.shape.free[p] {
                FreeAtom::Fck { from: l, .. } => Some(l),
                FreeAtom::Flso { last, .. } => Some(last),
                FreeAtom::Fls { .. } => None,
            },
            None => Some(SymLoc::NIL),
        };
        let sorted = lbound.map(|lb| entails_le(b, lb, x, -1)).unwrap_or(false);
        let w = ctx.gen.seq();
        let replacement = if sorted {
            FreeAtom::Flso { from: x, to: t, seq: w, lbound: lbound.unwrap(), last: x }
        } else {
            FreeAtom::Fls { from: x, to: t, seq: w }
        };
        b.shape.free[i] = replacement;
        b.pure
            .seqs
            .wf
            .subst(SeqItem::Lit(x), &[SeqItem::Lit(x), SeqItem::Var(w)]);
        b.pure.init_entries(w, &ctx.guard_family(b));
        b.pure.absorb(w, x, Side::Front);
        // no atom heads x anymore: its header dims leave the pure part
        let mut kill = BTreeSet::new();
        for f in Field::ALL {
            kill.insert(fld(x, f));
        }
        b.pure.project_dims(&kill);
        ctx.tracer.lemma("flso-fold", || format!("chunk {:?}", x));
        return true;
    }
    false
}

/// Composes adjacent free segments (lemma 2 for the sorted predicate).
fn compose_free(b: &mut Binding, blocks: &Blockers, ctx: &mut Ctx) -> bool {
    for i in 0..b.shape.free.len().saturating_sub(1) {
        let (a1, a2) = (b.shape.free[i], b.shape.free[i + 1]);
        if a1.to() != a2.from() || !a1.is_segment() || !a2.is_segment() {
            continue;
        }
        let boundary = a1.to();
        if blocks.free.contains(&boundary) {
            continue;
        }
        match (a1, a2) {
            (
                FreeAtom::Flso { from, seq: s1, lbound, last: y1, .. },
                FreeAtom::Flso { from: f2, to: to2, seq: s2, lbound: x2, last },
            ) => {
                let agreed = y1 == x2
                    || b
                        .pure
                        .exists
                        .entails(&LinCons::dims_eq(Dim::Loc(y1), Dim::Loc(x2)));
                if !agreed {
                    continue;
                }
                let s3 = ctx.gen.seq();
                b.shape.free[i] = FreeAtom::Flso { from, to: to2, seq: s3, lbound, last };
                b.shape.free.remove(i + 1);
                b.pure.compose_entries(s1, s2, s3);
                ctx.tracer.lemma("flso-compose", || format!("at {:?}", f2));
                return true;
            }
            (
                FreeAtom::Fls { from, seq: s1, .. },
                FreeAtom::Fls { to: to2, seq: s2, .. },
            ) => {
                let s3 = ctx.gen.seq();
                b.shape.free[i] = FreeAtom::Fls { from, to: to2, seq: s3 };
                b.shape.free.remove(i + 1);
                b.pure.compose_entries(s1, s2, s3);
                ctx.tracer.lemma("fls-compose", || format!("at {:?}", boundary));
                return true;
            }
            _ => continue,
        }
    }
    false
}

/// Projects out the dims of locations and flags that no longer occur, and
/// universal entries of vanished words.
fn gc(b: &mut Binding) {
    let live_seq: BTreeSet<_> = b.shape.seqvars().into_iter().collect();
    b.pure.retain_seqvars(&live_seq);
    let mut live_locs = b.shape.locs();
    live_locs.extend(b.env.image());
    live_locs.insert(SymLoc::NIL);
    for it in b.pure.seqs.wh.0.iter().chain(b.pure.seqs.wf.0.iter()) {
        if let SeqItem::Lit(l) = it {
            live_locs.insert(*l);
        }
    }
    let live_ivars: BTreeSet<_> = b.shape.ivars().into_iter().collect();
    // header dims only where a header atom is materialized
    let mut headed = BTreeSet::new();
    for a in &b.shape.heap {
        if matches!(a, HeapAtom::Chd { .. } | HeapAtom::Chk { .. }) {
            headed.insert(a.from());
        }
    }
    for a in &b.shape.free {
        if matches!(a, FreeAtom::Fck { .. }) {
            headed.insert(a.from());
        }
    }
    let mut kill = BTreeSet::new();
    for d in b.pure.exists.dims() {
        match d {
            Dim::Loc(l) => {
                if !live_locs.contains(&l) {
                    kill.insert(d);
                }
            }
            Dim::Fld(l, _) => {
                if !headed.contains(&l) {
                    kill.insert(d);
                }
            }
            Dim::IVar(i) => {
                if !live_ivars.contains(&i) {
                    kill.insert(d);
                }
            }
            _ => {}
        }
    }
    b.pure.project_dims(&kill);
}
