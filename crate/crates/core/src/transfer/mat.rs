//! Hierarchical unfolding: materializing the predicate level a statement
//! needs at a location, splitting segments at interior chunks, and the
//! pointer-arithmetic transformer with its chunk-breaking check.

use super::{known_locs, lin_of, Ctx, ErrKind, PredLevel};
use crate::memc::IntExpr;
use crate::sym::VarId;
use crate::num::{Dim, LinCons, LinExpr};
use crate::pure::SeqItem;
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::{Field, SymLoc};
use crate::value::Binding;
use num_bigint::BigInt;
use std::collections::BTreeSet;

fn loc_dim(l: SymLoc) -> LinExpr {
    LinExpr::var(Dim::Loc(l))
}

fn fld(l: SymLoc, f: Field) -> Dim {
    Dim::Fld(l, f)
}

/// `a - b <= k` over location dims.
fn loc_le(a: SymLoc, b: SymLoc, k: i64) -> LinCons {
    LinCons::le(loc_dim(a).minus(&loc_dim(b)), k)
}

fn entails_loc_le(b: &Binding, x: SymLoc, y: SymLoc, k: i64) -> bool {
    b.pure.exists.entails(&loc_le(x, y, k))
}

/// Is the level of an explicit atom at `x` already at or below `need`?
fn satisfied(b: &Binding, x: SymLoc, need: PredLevel) -> bool {
    let heap = b.shape.heap_at(x).map(|(_, a)| a);
    let free = b.shape.free_at(x).map(|(_, a)| a);
    match need {
        PredLevel::Fck => matches!(
            heap,
            Some(HeapAtom::Chd { .. }) | Some(HeapAtom::Chk { .. })
        ) || matches!(free, Some(FreeAtom::Fck { .. })),
        PredLevel::Chk => {
            matches!(
                heap,
                Some(HeapAtom::Chd { .. }) | Some(HeapAtom::Chk { .. })
            ) && !matches!(free, Some(FreeAtom::Fck { .. }))
        }
        PredLevel::Chd => {
            matches!(heap, Some(HeapAtom::Chd { .. }))
                && !matches!(free, Some(FreeAtom::Fck { .. }))
        }
        PredLevel::Blk | PredLevel::Seg => true,
    }
}

/// Ensures the atom covering the location of `p` is specialized to at most
/// `need` (the §5.2 discipline: reads need fck, link-field writes need chk,
/// size writes and pointer arithmetic need chd). May fan out on segment
/// unfolds and freeness case splits; erroneous bindings are dropped after
/// reporting.
pub fn materialize(b: Binding, p: VarId, need: PredLevel, ctx: &mut Ctx) -> Vec<Binding> {
    let Some(x) = b.env.get(p) else {
        ctx.error(ErrKind::InvalidAccess, &b, "access through an unbound pointer");
        return vec![];
    };
    materialize_loc(b, x, need, ctx)
}

/// Spec-facing entry point: unfold the covering atom of `x` to level `need`.
pub fn unfold_to(b: Binding, x: SymLoc, need: PredLevel, ctx: &mut Ctx) -> Vec<Binding> {
    materialize_loc(b, x, need, ctx)
}

pub(super) fn materialize_loc(
    b: Binding,
    x: SymLoc,
    need: PredLevel,
    ctx: &mut Ctx,
) -> Vec<Binding> {
    let mut work = vec![b];
    let mut out = Vec::new();
    let mut fuel = 64;
    while let Some(mut b) = work.pop() {
        fuel -= 1;
        if fuel == 0 {
            ctx.error(ErrKind::InvalidAccess, &b, "materialization did not converge");
            break;
        }
        if x.is_nil() {
            ctx.error(ErrKind::NullDereference, &b, "access through nil");
            continue;
        }
        // a location that may be nil is reported once, then refined
        if !b.pure.exists.entails(&LinCons::dim_ge(Dim::Loc(x), 1)) {
            ctx.error(ErrKind::NullDereference, &b, "access through a possibly-nil pointer");
            b.pure.exists.meet_cons(LinCons::dim_ge(Dim::Loc(x), 1));
            if b.pure.is_bottom() {
                continue;
            }
        }
        if satisfied(&b, x, need) {
            out.extend(ensure_freeness_decided(b, x, ctx));
            continue;
        }
        // the fck pins fnx and isfree; writes demand its removal first
        if need <= PredLevel::Chk {
            if let Some((i, FreeAtom::Fck { .. })) = b.shape.free_at(x) {
                if b.shape.heap_at(x).is_some() {
                    ctx.tracer.lemma("fck-drop", || format!("unfold below fck at {:?}", x));
                    b.shape.free.remove(i);
                    work.push(b);
                    continue;
                }
            }
        }
        match next_step(&b, x, need) {
            Some(Step::UnfoldFreeSeg(i)) => work.extend(left_unfold_free(b, i, ctx)),
            Some(Step::UnfoldHeapSeg(i)) => work.extend(left_unfold_heap(b, i, ctx)),
            Some(Step::SplitHeapSeg(i)) => work.extend(split_heap_segment(b, i, x, ctx)),
            Some(Step::UnfoldChk) => work.extend(unfold_chk(b, x, ctx)),
            Some(Step::CarveChd(i)) => work.extend(carve_chd(b, i, x, ctx)),
            None => {
                ctx.error(ErrKind::InvalidAccess, &b, "no atom covers the access");
            }
        }
    }
    out
}

enum Step {
    UnfoldFreeSeg(usize),
    UnfoldHeapSeg(usize),
    SplitHeapSeg(usize),
    UnfoldChk,
    CarveChd(usize),
}

fn next_step(b: &Binding, x: SymLoc, need: PredLevel) -> Option<Step> {
    // explicit chk that must open up further
    if need == PredLevel::Chd {
        if let Some((_, HeapAtom::Chk { .. })) = b.shape.heap_at(x) {
            return Some(Step::UnfoldChk);
        }
    }
    // for reads, an fck (or a free segment to unfold) suffices
    if need == PredLevel::Fck {
        if let Some((i, a)) = b.shape.free_at(x) {
            if a.is_segment() {
                return Some(Step::UnfoldFreeSeg(i));
            }
        }
    }
    match b.shape.heap_at(x) {
        Some((i, a)) if a.is_segment() => return Some(Step::UnfoldHeapSeg(i)),
        Some((_, HeapAtom::Chk { .. })) => return Some(Step::UnfoldChk),
        Some((_, HeapAtom::Blk { .. })) if need <= PredLevel::Chk => {
            let (i, _) = b.shape.heap_at(x).unwrap();
            return Some(Step::CarveChd(i));
        }
        Some(_) => {}
        None => {}
    }
    // free-level materialization may still go through a free segment start
    if let Some((i, a)) = b.shape.free_at(x) {
        if a.is_segment() {
            return Some(Step::UnfoldFreeSeg(i));
        }
    }
    // x strictly inside a heap atom
    for (i, a) in b.shape.heap.iter().enumerate() {
        if a.from() == x {
            continue;
        }
        let Some(to) = a.to() else { continue };
        let lo_ok = !entails_loc_le(b, x, a.from(), -1); // not provably x < from
        let hi_ok = !entails_loc_le(b, to, x, 0); // not provably to <= x
        if lo_ok && hi_ok {
            match a {
                HeapAtom::Hls { .. } | HeapAtom::Hlsc { .. } => {
                    // justified only for anchored chunk starts: an fck at x
                    // or an exact known position inside the segment
                    if b.shape.free_at(x).is_some() {
                        return Some(Step::SplitHeapSeg(i));
                    }
                }
                HeapAtom::Blk { .. } if need <= PredLevel::Chk => {
                    return Some(Step::CarveChd(i));
                }
                _ => {}
            }
        }
    }
    None
}

/// Materialized chunks must have a decided freeness so promotion keeps the
/// free level exactly covering the free chunks.
fn ensure_freeness_decided(b: Binding, x: SymLoc, ctx: &mut Ctx) -> Vec<Binding> {
    let d = fld(x, Field::IsFree);
    if !b.pure.exists.dims().contains(&d) {
        // freshly materialized headers always carry the dim; a missing dim
        // means the header is not exposed here (nothing to decide)
        return vec![b];
    }
    let zero = LinCons::dim_eq(d, 0);
    let one = LinCons::dim_eq(d, 1);
    if b.pure.exists.entails(&zero) || b.pure.exists.entails(&one) {
        return vec![b];
    }
    ctx.tracer.note(|| format!("freeness split at {:?}", x));
    let mut out = Vec::new();
    for c in [zero, one] {
        let mut nb = b.clone();
        nb.pure.exists.meet_cons(c);
        if !nb.pure.is_bottom() {
            out.push(nb);
        }
    }
    if out.is_empty() {
        out.push(b);
    }
    out
}

/// Adds the defining facts of a chunk header at `x`.
fn meet_chunk_facts(b: &mut Binding, x: SymLoc, end: SymLoc, hdr: i64) {
    let ex = &mut b.pure.exists;
    ex.meet_all([
        // end = x + size*hdr, size >= 1, x >= 1, 0 <= isfree <= 1
        LinCons::eq(
            loc_dim(end)
                .minus(&loc_dim(x))
                .minus(&LinExpr::var(fld(x, Field::Size)).scaled(&BigInt::from(hdr))),
            0,
        ),
        LinCons::dim_ge(fld(x, Field::Size), 1),
        LinCons::dim_ge(Dim::Loc(x), 1),
        LinCons::dim_ge(fld(x, Field::IsFree), 0),
        LinCons::dim_le(fld(x, Field::IsFree), 1),
        LinCons::dim_ge(fld(x, Field::Fnx), 0),
    ]);
}

/// Left-unfold of a free segment: the empty and one-step disjuncts.
pub(super) fn left_unfold_free(b: Binding, idx: usize, ctx: &mut Ctx) -> Vec<Binding> {
    let atom = b.shape.free[idx];
    let (from, to, seq) = (atom.from(), atom.to(), atom.seq().unwrap());
    let mut out = Vec::new();
    // empty disjunct: from = to (and last = lbound for sorted segments)
    let refuted = entails_loc_le(&b, from, to, -1) || entails_loc_le(&b, to, from, -1);
    if !refuted {
        let mut nb = b.clone();
        nb.shape.free.remove(idx);
        nb.pure.seq_empty(seq);
        let mut ok = true;
        if let FreeAtom::Flso { lbound, last, .. } = atom {
            ok = unify_locs(&mut nb, lbound, last);
        }
        if ok && unify_locs(&mut nb, from, to) && !nb.pure.is_bottom() {
            ctx.tracer.lemma("fls-unfold-empty", || format!("{:?} empty", seq));
            out.push(nb);
        }
    }
    // nonempty: fck(from; z) * seg(z, ...; to, ...)
    // (a plain fls may also close a cycle: from = to stays possible)
    {
        let mut nb = b.clone();
        let z = ctx.gen.loc();
        let w2 = ctx.gen.seq();
        let rest = match atom {
            FreeAtom::Fls { .. } => FreeAtom::Fls { from: z, to, seq: w2 },
            FreeAtom::Flso { to, last, .. } => {
                FreeAtom::Flso { from: z, to, seq: w2, lbound: from, last }
            }
            FreeAtom::Fck { .. } => unreachable!(),
        };
        nb.shape.free[idx] = FreeAtom::Fck { from, to: z };
        nb.shape.free.insert(idx + 1, rest);
        // z is the fnx target of the first element, not its chunk end
        let ex = &mut nb.pure.exists;
        ex.meet_all([
            LinCons::eq(
                LinExpr::var(fld(from, Field::Fnx)).minus(&loc_dim(z)),
                0,
            ),
            LinCons::dim_eq(fld(from, Field::IsFree), 1),
            LinCons::dim_ge(fld(from, Field::Size), 1),
            LinCons::dim_ge(Dim::Loc(from), 1),
            LinCons::dim_ge(fld(from, Field::Fnx), 0),
        ]);
        if let FreeAtom::Flso { lbound, last, .. } = atom {
            // sortedness: lbound < from <= last
            ex.meet_all([
                loc_le(lbound, from, -1),
                loc_le(from, last, 0),
            ]);
        }
        if !nb.pure.is_bottom() {
            nb.pure.copy_entries(seq, w2);
            let variants = nb.pure.release(seq, from);
            for mut v in variants {
                v.seqs.subst(SeqItem::Var(seq), &[SeqItem::Lit(from), SeqItem::Var(w2)]);
                v.univs.retain(|(w, _), _| *w != seq);
                let mut vb = nb.clone();
                vb.pure = v;
                if !vb.pure.is_bottom() {
                    ctx.tracer
                        .lemma("fls-unfold", || format!("fck({:?}) off {:?}", from, seq));
                    out.extend(ensure_freeness_decided(vb, from, ctx));
                }
            }
        }
    }
    out
}

/// Left-unfold of a heap segment.
pub(super) fn left_unfold_heap(b: Binding, idx: usize, ctx: &mut Ctx) -> Vec<Binding> {
    let atom = b.shape.heap[idx];
    let (from, to, seq) = (atom.from(), atom.to().unwrap(), atom.seq().unwrap());
    let mut out = Vec::new();
    let refuted = entails_loc_le(&b, from, to, -1) || entails_loc_le(&b, to, from, -1);
    if !refuted {
        let mut nb = b.clone();
        nb.shape.heap.remove(idx);
        nb.pure.seq_empty(seq);
        if let HeapAtom::Hlsc { lflag, rflag, .. } = atom {
            nb.pure
                .exists
                .meet_cons(LinCons::dims_eq(Dim::IVar(lflag), Dim::IVar(rflag)));
        }
        if unify_locs(&mut nb, from, to) && !nb.pure.is_bottom() {
            ctx.tracer.lemma("hls-unfold-empty", || format!("{:?} empty", seq));
            out.push(nb);
        }
    }
    {
        let mut nb = b.clone();
        let z = ctx.gen.loc();
        let w2 = ctx.gen.seq();
        let rest = match atom {
            HeapAtom::Hls { .. } => HeapAtom::Hls { from: z, to, seq: w2 },
            HeapAtom::Hlsc { to, rflag, .. } => {
                let i2 = ctx.gen.ivar();
                HeapAtom::Hlsc { from: z, to, seq: w2, lflag: i2, rflag }
            }
            _ => unreachable!(),
        };
        nb.shape.heap[idx] = HeapAtom::Chk { from, to: z };
        nb.shape.heap.insert(idx + 1, rest);
        meet_chunk_facts(&mut nb, from, z, ctx.hdr());
        nb.pure.exists.meet_cons(loc_le(z, to, 0));
        if let (HeapAtom::Hlsc { lflag, .. }, HeapAtom::Hlsc { lflag: i2, .. }) = (atom, rest) {
            let ex = &mut nb.pure.exists;
            ex.meet_all([
                // the new segment's left context is this chunk's flag
                LinCons::eq(
                    LinExpr::var(Dim::IVar(i2)).minus(&LinExpr::var(fld(from, Field::IsFree))),
                    0,
                ),
                // early coalescing step: not both the context and this free
                LinCons::le(
                    LinExpr::var(Dim::IVar(lflag)).plus(&LinExpr::var(fld(from, Field::IsFree))),
                    1,
                ),
                LinCons::dim_ge(Dim::IVar(lflag), 0),
                LinCons::dim_le(Dim::IVar(lflag), 1),
                LinCons::dim_ge(Dim::IVar(i2), 0),
                LinCons::dim_le(Dim::IVar(i2), 1),
            ]);
        }
        if !nb.pure.is_bottom() {
            nb.pure.copy_entries(seq, w2);
            let variants = nb.pure.release(seq, from);
            for mut v in variants {
                v.seqs.subst(SeqItem::Var(seq), &[SeqItem::Lit(from), SeqItem::Var(w2)]);
                v.univs.retain(|(w, _), _| *w != seq);
                let mut vb = nb.clone();
                vb.pure = v;
                if !vb.pure.is_bottom() {
                    ctx.tracer
                        .lemma("hls-unfold", || format!("chk({:?}) off {:?}", from, seq));
                    out.extend(ensure_freeness_decided(vb, from, ctx));
                }
            }
        }
    }
    out
}

/// Splits a heap segment at an interior chunk start `x` (justified by the
/// hierarchical composition: an fck at `x` makes it a chunk of the heap).
pub fn split_heap_segment(b: Binding, idx: usize, x: SymLoc, ctx: &mut Ctx) -> Vec<Binding> {
    let atom = b.shape.heap[idx];
    let (from, to, seq) = (atom.from(), atom.to().unwrap(), atom.seq().unwrap());
    let mut nb = b;
    let w1 = ctx.gen.seq();
    let w2 = ctx.gen.seq();
    let c = ctx.gen.loc();
    let (left, right, j1) = match atom {
        HeapAtom::Hls { .. } => (
            HeapAtom::Hls { from, to: x, seq: w1 },
            HeapAtom::Hls { from: c, to, seq: w2 },
            None,
        ),
        HeapAtom::Hlsc { lflag, rflag, .. } => {
            let j1 = ctx.gen.ivar();
            let i2 = ctx.gen.ivar();
            (
                HeapAtom::Hlsc { from, to: x, seq: w1, lflag, rflag: j1 },
                HeapAtom::Hlsc { from: c, to, seq: w2, lflag: i2, rflag },
                Some((j1, i2, lflag)),
            )
        }
        _ => unreachable!("split of a non-segment"),
    };
    nb.shape.heap[idx] = left;
    nb.shape.heap.insert(idx + 1, HeapAtom::Chk { from: x, to: c });
    nb.shape.heap.insert(idx + 2, right);
    meet_chunk_facts(&mut nb, x, c, ctx.hdr());
    {
        let ex = &mut nb.pure.exists;
        ex.meet_all([loc_le(from, x, 0), loc_le(c, to, 0)]);
    }
    if nb.shape.free_at(x).is_some() {
        // the ∋ anchoring: x is a free chunk here
        nb.pure
            .exists
            .meet_cons(LinCons::dim_eq(fld(x, Field::IsFree), 1));
    }
    if let Some((j1, i2, lflag)) = j1 {
        let ex = &mut nb.pure.exists;
        ex.meet_all([
            LinCons::eq(
                LinExpr::var(Dim::IVar(i2)).minus(&LinExpr::var(fld(x, Field::IsFree))),
                0,
            ),
            LinCons::le(
                LinExpr::var(Dim::IVar(j1)).plus(&LinExpr::var(fld(x, Field::IsFree))),
                1,
            ),
            LinCons::dim_ge(Dim::IVar(j1), 0),
            LinCons::dim_le(Dim::IVar(j1), 1),
            LinCons::dim_ge(Dim::IVar(i2), 0),
            LinCons::dim_le(Dim::IVar(i2), 1),
        ]);
        // left-neighbour freeness from the free-list window
        if left_context_busy(&nb, x, from, lflag, ctx.hdr()) {
            nb.pure.exists.meet_cons(LinCons::dim_eq(Dim::IVar(j1), 0));
        }
    }
    if nb.pure.is_bottom() {
        return vec![];
    }
    nb.pure.copy_entries(seq, w1);
    nb.pure.copy_entries(seq, w2);
    let variants = nb.pure.release(seq, x);
    let mut out = Vec::new();
    for mut v in variants {
        v.seqs.subst(
            SeqItem::Var(seq),
            &[SeqItem::Var(w1), SeqItem::Lit(x), SeqItem::Var(w2)],
        );
        v.univs.retain(|(w, _), _| *w != seq);
        let mut vb = nb.clone();
        vb.pure = v;
        if !vb.pure.is_bottom() {
            ctx.tracer
                .lemma("hls-split", || format!("{:?} at {:?}", seq, x));
            out.extend(ensure_freeness_decided(vb, x, ctx));
        }
    }
    out
}

/// Can the chunk immediately before `x` be proven busy? Uses the sorted
/// free-chain windows under the exact hierarchical composition: if no free
/// chunk can end at `x`, the predecessor chunk is busy. When the enclosing
/// segment may be empty at the left, its left flag must already be 0.
pub(super) fn left_context_busy(
    b: &Binding,
    x: SymLoc,
    seg_from: SymLoc,
    lflag: crate::sym::IVar,
    hdr: i64,
) -> bool {
    let nonempty_left = entails_loc_le(b, seg_from, x, -hdr);
    let ctx_zero = b
        .pure
        .exists
        .entails(&LinCons::dim_eq(Dim::IVar(lflag), 0));
    if !nonempty_left && !ctx_zero {
        return false;
    }
    no_free_end_at(b, x, hdr)
}

/// No free-level chunk's end can equal the address of `x`.
pub(super) fn no_free_end_at(b: &Binding, x: SymLoc, hdr: i64) -> bool {
    for atom in &b.shape.free {
        match *atom {
            FreeAtom::Fck { from, .. } => {
                if from == x {
                    continue; // x itself
                }
                // end = from + size*hdr must differ from x
                let end = loc_dim(from)
                    .plus(&LinExpr::var(fld(from, Field::Size)).scaled(&BigInt::from(hdr)));
                let below = LinCons::le(end.clone().minus(&loc_dim(x)), -1);
                let above = LinCons::le(loc_dim(x).minus(&loc_dim(from)), 0);
                if !(b.pure.exists.entails(&below) || b.pure.exists.entails(&above)) {
                    return false;
                }
            }
            FreeAtom::Fls { .. } => return false, // unsorted: no window info
            FreeAtom::Flso { from, to, .. } => {
                // elements live in [from, to-chunk); their ends stay at or
                // before the `to` anchor chunk, so a window clears them
                let after = b.pure.exists.entails(&loc_le(x, from, 0));
                let before = !to.is_nil() && b.pure.exists.entails(&loc_le(to, x, -1));
                if !(before || after) {
                    return false;
                }
            }
        }
    }
    true
}

/// No free-level chunk starts at the address of `x` (dually to the above).
pub(super) fn no_free_start_at(b: &Binding, x: SymLoc) -> bool {
    for atom in &b.shape.free {
        match *atom {
            FreeAtom::Fck { from, .. } => {
                if from == x {
                    return false;
                }
                let ne = entails_loc_le(b, from, x, -1) || entails_loc_le(b, x, from, -1);
                if !ne {
                    return false;
                }
            }
            FreeAtom::Fls { .. } => return false,
            FreeAtom::Flso { from, to, .. } => {
                let before = !to.is_nil() && b.pure.exists.entails(&loc_le(to, x, 0));
                let after = entails_loc_le(b, x, from, -1);
                if !(before || after) {
                    return false;
                }
            }
        }
    }
    true
}

/// chk(x; e) → chd(x; h) * blk(h; e), dropping any fck at x.
pub(super) fn unfold_chk(b: Binding, x: SymLoc, ctx: &mut Ctx) -> Vec<Binding> {
    let Some((idx, HeapAtom::Chk { to, .. })) = b.shape.heap_at(x) else {
        ctx.error(ErrKind::InvalidAccess, &b, "chk unfold on a non-chk");
        return vec![];
    };
    let to = *to;
    let mut nb = b;
    if let Some((fi, FreeAtom::Fck { .. })) = nb.shape.free_at(x) {
        ctx.tracer.lemma("fck-drop", || format!("chk unfold strips fck at {:?}", x));
        nb.shape.free.remove(fi);
    }
    let h = ctx.gen.loc();
    nb.shape.heap[idx] = HeapAtom::Chd { from: x, to: h };
    nb.shape.heap.insert(idx + 1, HeapAtom::Blk { from: h, to });
    let ex = &mut nb.pure.exists;
    ex.meet_all([
        LinCons::eq(loc_dim(h).minus(&loc_dim(x)), ctx.hdr()),
        loc_le(h, to, 0),
    ]);
    ctx.tracer.lemma("chk-unfold", || format!("chd({:?};{:?}) * blk", x, h));
    if nb.pure.is_bottom() {
        vec![]
    } else {
        vec![nb]
    }
}

/// Carves a chunk header at `x` out of a raw block (Eq. 4 splits around the
/// new header).
fn carve_chd(b: Binding, idx: usize, x: SymLoc, ctx: &mut Ctx) -> Vec<Binding> {
    let HeapAtom::Blk { from, to } = b.shape.heap[idx] else {
        return vec![];
    };
    // containment: from <= x and x + hdr <= to must be provable
    let fits = entails_loc_le(&b, from, x, 0)
        && b.pure
            .exists
            .entails(&LinCons::le(loc_dim(x).minus(&loc_dim(to)), -ctx.hdr()));
    if !fits {
        ctx.error(ErrKind::ChunkBreaking, &b, "header carve outside the block");
        return vec![];
    }
    let mut nb = b;
    let h = ctx.gen.loc();
    let mut inserted = idx;
    if from != x {
        nb.shape.heap[inserted] = HeapAtom::Blk { from, to: x };
        inserted += 1;
        nb.shape.heap.insert(inserted, HeapAtom::Chd { from: x, to: h });
    } else {
        nb.shape.heap[inserted] = HeapAtom::Chd { from: x, to: h };
    }
    nb.shape.heap.insert(inserted + 1, HeapAtom::Blk { from: h, to });
    let ex = &mut nb.pure.exists;
    ex.meet_all([
        LinCons::eq(loc_dim(h).minus(&loc_dim(x)), ctx.hdr()),
        loc_le(from, x, 0),
        loc_le(h, to, 0),
        LinCons::dim_ge(Dim::Loc(x), 1),
        LinCons::dim_ge(fld(x, Field::IsFree), 0),
        LinCons::dim_le(fld(x, Field::IsFree), 1),
    ]);
    ctx.tracer.lemma("blk-split", || format!("carve chd at {:?}", x));
    if nb.pure.is_bottom() {
        vec![]
    } else {
        vec![nb]
    }
}

/// Renames `gone` to `keep` across the binding after meeting their equality.
pub(super) fn unify_locs(b: &mut Binding, keep: SymLoc, gone: SymLoc) -> bool {
    if keep == gone {
        return true;
    }
    b.pure
        .exists
        .meet_cons(LinCons::dims_eq(Dim::Loc(keep), Dim::Loc(gone)));
    if b.pure.is_bottom() {
        return false;
    }
    let mut iso = crate::shape::ShapeIso::identity();
    iso.loc.insert(gone, keep);
    b.shape = crate::shape::rename_shape(&b.shape, &iso);
    b.env = crate::shape::rename_env(&b.env, &iso);
    b.pure = b.pure.rename(&iso);
    true
}

/// The pointer-arithmetic transformer: computes `dst := base + units×hdr`,
/// reuses a provably-equal known location, checks chunk containment and
/// splits the enclosing block at the new position.
pub(super) fn addr_arith_binding(
    b: Binding,
    dst: VarId,
    base: VarId,
    units: &IntExpr,
    ctx: &mut Ctx,
) -> Vec<Binding> {
    let Some(x) = b.env.get(base) else {
        ctx.error(ErrKind::InvalidAccess, &b, "arithmetic on an unbound pointer");
        return vec![];
    };
    let Some((ulin, uk)) = lin_of(&b, units) else {
        return vec![];
    };
    let hdr = BigInt::from(ctx.hdr());
    // value = x + units*hdr
    let val = loc_dim(x).plus(&ulin.scaled(&hdr));
    let vk = uk * &hdr;
    // offset zero: alias of the base
    if b
        .pure
        .exists
        .entails(&LinCons::eq(val.clone().minus(&loc_dim(x)), -vk.clone()))
        && vk == BigInt::from(0)
        && ulin.is_zero()
    {
        let mut nb = b;
        nb.env.bind(dst, x);
        return vec![nb];
    }
    // §5.2: the base must sit at header level before the move
    let mats = if b.shape.heap_at(x).is_some() || b.shape.free_at(x).is_some() {
        materialize_loc(b, x, PredLevel::Chd, ctx)
    } else {
        vec![b]
    };
    let mut out = Vec::new();
    for mut nb in mats {
        // reuse an entailed-equal known location
        let mut target = None;
        for l in known_locs(&nb) {
            let diff = val.clone().minus(&loc_dim(l));
            if nb.pure.exists.entails(&LinCons::eq(diff, -vk.clone())) {
                target = Some(l);
                break;
            }
        }
        let z = match target {
            Some(l) => l,
            None => {
                let z = ctx.gen.loc();
                let diff = val.clone().minus(&loc_dim(z));
                nb.pure.exists.meet_cons(LinCons::eq(diff, -vk.clone()));
                // containment in the enclosing chunk of the base
                match enclosing_extent(&nb, x) {
                    Some((lo, hi)) => {
                        let inside = nb
                            .pure
                            .exists
                            .entails(&LinCons::le(
                                loc_dim(lo).minus(&loc_dim(z)),
                                0,
                            ))
                            && nb
                                .pure
                                .exists
                                .entails(&LinCons::le(loc_dim(z).minus(&loc_dim(hi)), 0));
                        if !inside {
                            ctx.error(
                                ErrKind::ChunkBreaking,
                                &nb,
                                "pointer arithmetic may cross a chunk boundary",
                            );
                            continue;
                        }
                        split_blk_at(&mut nb, z, ctx);
                    }
                    None => {
                        let hli_loc = nb.env.get(ctx.cfg.hli);
                        let overflow = match hli_loc {
                            Some(h) => !nb
                                .pure
                                .exists
                                .entails(&LinCons::le(loc_dim(z).minus(&loc_dim(h)), 0)),
                            None => true,
                        };
                        ctx.error(
                            if overflow {
                                ErrKind::ArenaOverflow
                            } else {
                                ErrKind::ChunkBreaking
                            },
                            &nb,
                            "pointer arithmetic from an uncovered location",
                        );
                        continue;
                    }
                }
                z
            }
        };
        nb.env.bind(dst, z);
        out.push(nb);
    }
    out
}

/// The user-part extent of the chunk enclosing `x` when `x` is a header.
fn enclosing_extent(b: &Binding, x: SymLoc) -> Option<(SymLoc, SymLoc)> {
    match b.shape.heap_at(x) {
        Some((i, HeapAtom::Chd { to, .. })) => {
            // chd * blk: the user part runs to the block's end
            let h = *to;
            match b.shape.heap.get(i + 1) {
                Some(HeapAtom::Blk { from, to }) if *from == h => Some((h, *to)),
                _ => Some((h, h)),
            }
        }
        Some((_, HeapAtom::Chk { to, .. })) => Some((x, *to)),
        _ => None,
    }
}

/// Splits the block containing `z` at `z` (lemma 4); no-op when `z` is an
/// existing boundary.
fn split_blk_at(b: &mut Binding, z: SymLoc, ctx: &mut Ctx) {
    for i in 0..b.shape.heap.len() {
        if let HeapAtom::Blk { from, to } = b.shape.heap[i] {
            if from == z || to == z {
                return;
            }
            let lo_ok = entails_loc_le(b, from, z, 0);
            let hi_ok = entails_loc_le(b, z, to, 0);
            if lo_ok && hi_ok {
                b.shape.heap[i] = HeapAtom::Blk { from, to: z };
                b.shape.heap.insert(i + 1, HeapAtom::Blk { from: z, to });
                ctx.tracer.lemma("blk-split", || format!("at {:?}", z));
                return;
            }
        }
    }
}

/// The anchored locations: chunk starts tied to a live pointer by a
/// syntactic affine equality (interior pointers keep their chunk
/// materialized so deallocation can find it again).
pub fn anchor_locs(b: &Binding) -> BTreeSet<SymLoc> {
    let env_locs = b.env.image();
    let mut out = BTreeSet::new();
    for c in b.pure.exists.lincons() {
        if c.op != crate::num::CmpOp::Eq {
            continue;
        }
        let dims: Vec<(Dim, BigInt)> = c.expr.terms().map(|(d, c)| (*d, c.clone())).collect();
        if dims.len() != 2 {
            continue;
        }
        let (d0, c0) = &dims[0];
        let (d1, c1) = &dims[1];
        if !(c0.magnitude() == c1.magnitude() && c0.sign() != c1.sign()) {
            continue;
        }
        if let (Dim::Loc(a), Dim::Loc(bl)) = (d0, d1) {
            let a_env = env_locs.contains(a);
            let b_env = env_locs.contains(bl);
            if a_env && !b_env {
                out.insert(*bl);
            } else if b_env && !a_env {
                out.insert(*a);
            }
        }
    }
    out
}
