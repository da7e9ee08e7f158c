use super::*;
use crate::num::{LinCons, NumVal};
use crate::pure::{Guard, SeqExpr};
use crate::sym::{IVar, SymLoc, VarId};

fn chunk_binding(size_cons: LinCons) -> Binding {
    // env: v0 = hli at the chunk end, v1 at the chunk start
    let (a, b) = (SymLoc(2), SymLoc(3));
    let mut env = AbstractEnv::default();
    env.bind(VarId(0), b);
    env.bind(VarId(1), a);
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Chk { from: a, to: b }],
        free: vec![],
    };
    let mut pure = PureValue::top();
    pure.seqs.wh = SeqExpr(vec![SeqItem::Lit(a)]);
    pure.exists = NumVal::of_cons(vec![size_cons]);
    Binding { env, shape, pure }
}

#[test]
fn leq_extremes() {
    let x = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(
        Dim::Fld(SymLoc(2), Field::Size),
        128,
    ))]);
    assert!(AbstractValue::bottom().leq(&x));
    assert!(x.leq(&AbstractValue::Top));
    assert!(!AbstractValue::Top.leq(&x));
}

#[test]
fn leq_numeric_entailment() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let a = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(sz, 128))]);
    let b = AbstractValue::of(vec![chunk_binding(LinCons::dim_ge(sz, 1))]);
    assert!(a.leq(&b));
    assert!(!b.leq(&a));
}

#[test]
fn join_bottom_identity() {
    let a = AbstractValue::of(vec![chunk_binding(LinCons::dim_ge(
        Dim::Fld(SymLoc(2), Field::Size),
        1,
    ))]);
    assert_eq!(a.join(&AbstractValue::bottom()), a);
    assert_eq!(AbstractValue::bottom().join(&a), a);
}

#[test]
fn join_merges_isomorphic() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let a = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(sz, 4))]);
    let b = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(sz, 6))]);
    let j = a.join(&b);
    assert_eq!(j.len(), 1);
    let got = &j.bindings()[0].pure.exists;
    assert!(got.entails(&LinCons::dim_ge(sz, 4)));
    assert!(got.entails(&LinCons::dim_le(sz, 6)));
}

#[test]
fn join_keeps_non_isomorphic() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let chk = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(sz, 4))]);
    // same footprint but folded as a segment: different atom kind
    let mut seg = chunk_binding(LinCons::dim_ge(sz, 1));
    seg.pure = PureValue::top();
    seg.shape.heap = vec![HeapAtom::Hls { from: SymLoc(2), to: SymLoc(3), seq: SeqVar(0) }];
    seg.pure.seqs.wh = SeqExpr(vec![SeqItem::Var(SeqVar(0))]);
    let both = chk.join(&AbstractValue::of(vec![seg]));
    assert_eq!(both.len(), 2);
}

#[test]
fn widen_identity_and_fresh_disjunct() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let a = AbstractValue::of(vec![chunk_binding(LinCons::dim_eq(sz, 4))]);
    let w = a.widen(&a);
    assert!(w.leq(&a) && a.leq(&w));

    let mut seg = chunk_binding(LinCons::dim_ge(sz, 1));
    seg.pure = PureValue::top();
    seg.shape.heap = vec![HeapAtom::Hls { from: SymLoc(2), to: SymLoc(3), seq: SeqVar(0) }];
    seg.pure.seqs.wh = SeqExpr(vec![SeqItem::Var(SeqVar(0))]);
    let b = a.join(&AbstractValue::of(vec![seg.clone()]));
    let w2 = a.widen(&b);
    assert_eq!(w2.len(), 2, "fresh non-isomorphic disjunct kept verbatim");
}

fn two_segment_binding(off: u32) -> Binding {
    let (a, b, c) = (SymLoc(10 + off), SymLoc(11 + off), SymLoc(12 + off));
    let (i0, j0, j1) = (IVar(20 + off), IVar(21 + off), IVar(22 + off));
    let (s1, s2) = (SeqVar(30 + off), SeqVar(31 + off));
    let mut env = AbstractEnv::default();
    env.bind(VarId(0), a);
    env.bind(VarId(1), c);
    let shape = TwoLevelShape {
        heap: vec![
            HeapAtom::Hlsc { from: a, to: b, seq: s1, lflag: i0, rflag: j0 },
            HeapAtom::Hlsc { from: b, to: c, seq: s2, lflag: j0, rflag: j1 },
        ],
        free: vec![],
    };
    let mut pure = PureValue::top();
    pure.seqs.wh = SeqExpr(vec![SeqItem::Var(s1), SeqItem::Var(s2)]);
    pure.univs.insert((s1, Guard::True), NumVal::bottom());
    pure.univs.insert((s2, Guard::True), NumVal::bottom());
    Binding { env, shape, pure }
}

fn one_segment_binding() -> Binding {
    let (a, c) = (SymLoc(50), SymLoc(51));
    let mut env = AbstractEnv::default();
    env.bind(VarId(0), a);
    env.bind(VarId(1), c);
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Hlsc {
            from: a,
            to: c,
            seq: SeqVar(60),
            lflag: IVar(61),
            rflag: IVar(62),
        }],
        free: vec![],
    };
    let mut pure = PureValue::top();
    pure.seqs.wh = SeqExpr(vec![SeqItem::Var(SeqVar(60))]);
    Binding { env, shape, pure }
}

#[test]
fn cap_under_is_identity() {
    let a = AbstractValue::of(vec![chunk_binding(LinCons::dim_ge(
        Dim::Fld(SymLoc(2), Field::Size),
        1,
    ))]);
    let mut gen = Gen::new();
    let (v, warn) = a.enforce_cap(4, &mut gen, |_| {});
    assert_eq!(v, a);
    assert!(warn.is_empty());
}

#[test]
fn cap_merges_after_collapse() {
    // Two bindings whose shapes agree after composing one segment boundary.
    let v = AbstractValue::Disj(vec![two_segment_binding(0), one_segment_binding()]);
    let mut gen = Gen::new();
    gen.seq(); // keep fresh ids clear of the fixtures
    for _ in 0..100 {
        gen.seq();
    }
    let (out, warn) = v.enforce_cap(1, &mut gen, |_| {});
    assert!(warn.is_empty());
    assert_eq!(out.len(), 1, "collapse + merge should reach the cap");
}

#[test]
fn cap_incompatible_goes_top() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let chk = chunk_binding(LinCons::dim_eq(sz, 4));
    let mut other = chunk_binding(LinCons::dim_eq(sz, 4));
    other.shape.free = vec![FreeAtom::Fck { from: SymLoc(2), to: SymLoc::NIL }];
    let v = AbstractValue::Disj(vec![chk, other]);
    let mut gen = Gen::new();
    let (out, warn) = v.enforce_cap(1, &mut gen, |_| {});
    assert!(out.is_top());
    assert_eq!(warn.len(), 1);
}

#[test]
fn insert_never_stores_isomorphic_pair() {
    let sz = Dim::Fld(SymLoc(2), Field::Size);
    let mut v = AbstractValue::bottom();
    for k in [4i64, 6, 8] {
        v.insert(chunk_binding(LinCons::dim_eq(sz, k)));
    }
    assert_eq!(v.len(), 1);
    // dropped bottoms
    v.insert(chunk_binding(LinCons::dim_eq(sz, -1).clone()));
    assert_eq!(v.len(), 1);
    let mut bot = chunk_binding(LinCons::dim_eq(sz, 4));
    bot.pure.exists = NumVal::bottom();
    v.insert(bot);
    assert_eq!(v.len(), 1);
}

#[test]
fn wf_checks_word_tracking() {
    let good = two_segment_binding(0);
    assert!(good.check_wf().is_ok());
    let mut bad = good.clone();
    bad.pure.seqs.wh = SeqExpr::empty();
    assert!(bad.check_wf().is_err());
}
