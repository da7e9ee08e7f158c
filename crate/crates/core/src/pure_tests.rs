use super::*;
use crate::num::{CmpOp, Dim, LinCons, LinExpr, NumVal};
use crate::sym::VarId;
use num_traits::ToPrimitive;

fn w1() -> SeqVar {
    SeqVar(0)
}
fn w2() -> SeqVar {
    SeqVar(1)
}
fn xloc() -> SymLoc {
    SymLoc(5)
}
fn usize_dim() -> Dim {
    Dim::UFld(Field::Size)
}
fn rsz() -> Dim {
    Dim::Var(VarId(9))
}

fn body_of(cons: Vec<LinCons>) -> NumVal {
    NumVal::of_cons(cons)
}

/// pv with one segment word `W0` (and otherwise empty words).
fn seg_pv(entry_guard: Guard, body: NumVal) -> PureValue {
    let mut pv = PureValue::top();
    pv.seqs.wh = SeqExpr::one(SeqItem::Var(w1()));
    pv.univs.insert((w1(), entry_guard), body);
    pv
}

#[test]
fn leq_identity() {
    let pv = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 8)]));
    assert!(pv.leq(&pv, &ShapeIso::identity()));
}

#[test]
fn leq_pointwise_weakening() {
    let a = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 8)]));
    let b = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 4)]));
    assert!(a.leq(&b, &ShapeIso::identity()));
    assert!(!b.leq(&a, &ShapeIso::identity()));
}

#[test]
fn leq_word_order_matters() {
    let mut a = PureValue::top();
    a.seqs.wh = SeqExpr(vec![SeqItem::Lit(xloc()), SeqItem::Var(w1())]);
    let mut b = PureValue::top();
    b.seqs.wh = SeqExpr(vec![SeqItem::Var(w1()), SeqItem::Lit(xloc())]);
    assert!(!a.leq(&b, &ShapeIso::identity()));
}

#[test]
fn join_of_constant_bodies() {
    // Brute-force hull of {8, 16}: 8 ≤ s ≤ 16 and s ≡ 0 mod 8.
    let a = seg_pv(Guard::True, body_of(vec![LinCons::dim_eq(usize_dim(), 8)]));
    let b = seg_pv(Guard::True, body_of(vec![LinCons::dim_eq(usize_dim(), 16)]));
    let j = a.join(&b, &ShapeIso::identity());
    let body = j.entry(w1(), Guard::True).expect("entry kept");
    assert!(body.entails(&LinCons::dim_ge(usize_dim(), 8)));
    assert!(body.entails(&LinCons::dim_le(usize_dim(), 16)));
    let congs: Vec<_> = body.congs().collect();
    assert!(
        congs.iter().any(|(d, c)| *d == usize_dim()
            && c.modulus == 8.into()
            && c.residue == 0.into()),
        "expected s ≡ 0 mod 8 in {:?}",
        body
    );
}

#[test]
fn join_missing_entry_is_top() {
    let a = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 8)]));
    let mut b = a.clone();
    b.univs.clear();
    let j = b.join(&a, &ShapeIso::identity());
    assert!(j.entry(w1(), Guard::True).is_none());
}

#[test]
fn join_idempotent() {
    let mut a = seg_pv(
        Guard::Size(GuardRel::Ge, GuardRhs::Dim(rsz())),
        body_of(vec![LinCons::dim_ge(usize_dim(), 2)]),
    );
    a.exists.meet_cons(LinCons::dim_ge(rsz(), 1));
    let j = a.join(&a, &ShapeIso::identity());
    assert!(a.leq(&j, &ShapeIso::identity()) && j.leq(&a, &ShapeIso::identity()));
}

#[test]
fn widen_chain_stabilizes() {
    // growing X.size ≤ k bodies stabilize within 3 rounds
    let mk = |k: i64| {
        seg_pv(
            Guard::True,
            body_of(vec![LinCons::dim_ge(usize_dim(), 1), LinCons::dim_le(usize_dim(), k)]),
        )
    };
    let mut cur = mk(1);
    let mut rounds = 0;
    for k in 2..20 {
        let next = mk(k);
        let w = cur.widen(&next, &ShapeIso::identity());
        rounds += 1;
        if w.leq(&cur, &ShapeIso::identity()) && cur.leq(&w, &ShapeIso::identity()) {
            break;
        }
        cur = w;
    }
    assert!(rounds <= 3, "stabilized after {} rounds", rounds);
    // the stable lower bound is retained
    assert!(cur
        .entry(w1(), Guard::True)
        .unwrap()
        .entails(&LinCons::dim_ge(usize_dim(), 1)));
    assert!(!cur
        .entry(w1(), Guard::True)
        .unwrap()
        .entails(&LinCons::dim_le(usize_dim(), 1_000)));
}

#[test]
fn widen_idempotent() {
    let a = seg_pv(Guard::IsFree(true), body_of(vec![LinCons::dim_ge(usize_dim(), 4)]));
    let w = a.widen(&a, &ShapeIso::identity());
    assert!(w.leq(&a, &ShapeIso::identity()) && a.leq(&w, &ShapeIso::identity()));
}

fn exists_with_x_size(k: i64) -> NumVal {
    NumVal::of_cons(vec![LinCons::dim_eq(Dim::Fld(xloc(), Field::Size), k)])
}

#[test]
fn absorb_kept_bound() {
    // body size ≥ 4, absorbed element has size = 4: bound survives
    let mut pv = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 4)]));
    pv.seqs.wh = SeqExpr(vec![SeqItem::Lit(xloc()), SeqItem::Var(w1())]);
    pv.exists = exists_with_x_size(4);
    pv.absorb(w1(), xloc(), Side::Front);
    assert_eq!(pv.seqs.wh, SeqExpr::one(SeqItem::Var(w1())));
    assert!(pv
        .entry(w1(), Guard::True)
        .unwrap()
        .entails(&LinCons::dim_ge(usize_dim(), 4)));
}

#[test]
fn absorb_weakens_bound() {
    // body size ≥ 8 joins an element of size 4: becomes size ≥ 4
    let mut pv = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 8)]));
    pv.seqs.wh = SeqExpr(vec![SeqItem::Lit(xloc()), SeqItem::Var(w1())]);
    pv.exists = exists_with_x_size(4);
    pv.absorb(w1(), xloc(), Side::Front);
    let body = pv.entry(w1(), Guard::True).unwrap();
    assert!(body.entails(&LinCons::dim_ge(usize_dim(), 4)));
    assert!(!body.entails(&LinCons::dim_ge(usize_dim(), 8)));
}

#[test]
fn absorb_refuted_guard_untouched() {
    // guard size ≥ rsz, element provably below rsz: entry unchanged
    let g = Guard::Size(GuardRel::Ge, GuardRhs::Dim(rsz()));
    let before = body_of(vec![LinCons::dim_ge(usize_dim(), 100)]);
    let mut pv = seg_pv(g, before.clone());
    pv.seqs.wh = SeqExpr(vec![SeqItem::Lit(xloc()), SeqItem::Var(w1())]);
    pv.exists = NumVal::of_cons(vec![LinCons::le(
        LinExpr::var(Dim::Fld(xloc(), Field::Size)).minus(&LinExpr::var(rsz())),
        -1,
    )]);
    pv.absorb(w1(), xloc(), Side::Front);
    assert_eq!(pv.entry(w1(), g), Some(&before));
}

#[test]
fn release_true_guard() {
    let mut pv = seg_pv(Guard::True, body_of(vec![LinCons::dim_ge(usize_dim(), 1)]));
    pv.seqs.wh = SeqExpr::one(SeqItem::Var(w1()));
    let out = pv.release(w1(), xloc());
    assert_eq!(out.len(), 1);
    assert!(out[0]
        .exists
        .entails(&LinCons::dim_ge(Dim::Fld(xloc(), Field::Size), 1)));
}

#[test]
fn release_undetermined_guard_splits() {
    let g = Guard::IsFree(true);
    let pv = seg_pv(g, body_of(vec![LinCons::dim_ge(usize_dim(), 4)]));
    let out = pv.release(w1(), xloc());
    assert_eq!(out.len(), 2, "expected the isfree case split");
    let free_branch = out
        .iter()
        .find(|v| v.exists.entails(&LinCons::dim_eq(Dim::Fld(xloc(), Field::IsFree), 1)))
        .expect("guard-true branch");
    assert!(free_branch
        .exists
        .entails(&LinCons::dim_ge(Dim::Fld(xloc(), Field::Size), 4)));
    assert!(out
        .iter()
        .any(|v| v.exists.entails(&LinCons::dim_eq(Dim::Fld(xloc(), Field::IsFree), 0))));
}

#[test]
fn release_first_fit_entry() {
    // the Eq. 1 pattern: scanned-prefix entry size < rsz instantiates
    let mut pv = seg_pv(
        Guard::True,
        body_of(vec![LinCons::le(
            LinExpr::var(usize_dim()).minus(&LinExpr::var(rsz())),
            -1,
        )]),
    );
    pv.exists.meet_cons(LinCons::dim_ge(rsz(), 2));
    let out = pv.release(w1(), xloc());
    assert_eq!(out.len(), 1);
    assert!(out[0].exists.entails(&LinCons::le(
        LinExpr::var(Dim::Fld(xloc(), Field::Size)).minus(&LinExpr::var(rsz())),
        -1,
    )));
}

// --- sampled-model soundness ------------------------------------------------

#[derive(Clone, Copy, Debug)]
struct Elem {
    size: i64,
    fnx: i64,
    isfree: i64,
}

fn elem_assign<'a>(
    sigma: &'a std::collections::BTreeMap<Dim, i64>,
    e: Option<Elem>,
) -> impl Fn(Dim) -> Option<num_bigint::BigInt> + 'a {
    move |d: Dim| match d {
        Dim::UFld(Field::Size) => e.map(|e| e.size.into()),
        Dim::UFld(Field::Fnx) => e.map(|e| e.fnx.into()),
        Dim::UFld(Field::IsFree) => e.map(|e| e.isfree.into()),
        other => sigma.get(&other).map(|v| (*v).into()),
    }
}

fn guard_holds(g: &Guard, e: Elem, sigma: &std::collections::BTreeMap<Dim, i64>) -> bool {
    match g {
        Guard::True => true,
        Guard::IsFree(b) => e.isfree == if *b { 1 } else { 0 },
        Guard::Size(rel, rhs) => {
            let r = match rhs {
                GuardRhs::Const(k) => *k,
                GuardRhs::Dim(d) => *sigma.get(d).unwrap_or(&0),
            };
            match rel {
                GuardRel::Eq => e.size == r,
                GuardRel::Ne => e.size != r,
                GuardRel::Le => e.size <= r,
                GuardRel::Ge => e.size >= r,
            }
        }
    }
}

/// Model check of a PureValue against an assignment and one segment word.
fn models(
    pv: &PureValue,
    sigma: &std::collections::BTreeMap<Dim, i64>,
    word: &[Elem],
) -> bool {
    if !pv.exists.holds_at(&elem_assign(sigma, None)) {
        return false;
    }
    for ((w, g), body) in &pv.univs {
        if *w != w1() {
            continue;
        }
        for e in word {
            if guard_holds(g, *e, sigma) && !body.holds_at(&elem_assign(sigma, Some(*e))) {
                return false;
            }
        }
    }
    true
}

#[test]
fn sampled_leq_join_and_roundtrip_soundness() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xdead);
    for _ in 0..60 {
        // sample a model first, then build values the model satisfies
        let mut sigma = std::collections::BTreeMap::new();
        sigma.insert(rsz(), rng.gen_range(0..8i64));
        let xs = Elem {
            size: rng.gen_range(0..32i64),
            fnx: 0,
            isfree: rng.gen_range(0..2i64),
        };
        sigma.insert(Dim::Fld(xloc(), Field::Size), xs.size);
        sigma.insert(Dim::Fld(xloc(), Field::IsFree), xs.isfree);
        sigma.insert(Dim::Fld(xloc(), Field::Fnx), xs.fnx);
        let word: Vec<Elem> = (0..rng.gen_range(0..4usize))
            .map(|_| Elem {
                size: rng.gen_range(0..32i64),
                fnx: 0,
                isfree: rng.gen_range(0..2i64),
            })
            .collect();

        // exists: interval constraints around sigma's values
        let build = |slack: i64| -> PureValue {
            let mut pv = PureValue::top();
            pv.seqs.wh = SeqExpr(vec![SeqItem::Lit(xloc()), SeqItem::Var(w1())]);
            for (d, v) in &sigma {
                pv.exists.meet_cons(LinCons::dim_le(*d, *v + slack));
                pv.exists.meet_cons(LinCons::dim_ge(*d, *v - slack));
            }
            // body: hull of the word's sizes (plus slack), guard True
            let mut body = NumVal::bottom();
            for e in &word {
                body = body.join(&NumVal::of_cons(vec![
                    LinCons::dim_le(usize_dim(), e.size + slack),
                    LinCons::dim_ge(usize_dim(), e.size - slack),
                ]));
            }
            pv.univs.insert((w1(), Guard::True), body);
            pv
        };
        let a = build(rng.gen_range(0..2i64));
        let b = build(rng.gen_range(1..4i64));
        assert!(models(&a, &sigma, &word), "construction must satisfy a");
        assert!(models(&b, &sigma, &word));

        // leq soundness
        if a.leq(&b, &ShapeIso::identity()) {
            assert!(models(&b, &sigma, &word));
        }
        // join soundness: models of either side satisfy the join
        let j = a.join(&b, &ShapeIso::identity());
        assert!(models(&j, &sigma, &word), "join lost a model");

        // absorb / release round-trip over-approximates identity
        let mut absorbed = a.clone();
        absorbed.absorb(w1(), xloc(), Side::Front);
        let mut dims = BTreeSet::new();
        for f in Field::ALL {
            dims.insert(Dim::Fld(xloc(), f));
        }
        absorbed.project_dims(&dims);
        // post-absorb model: the element joins the word
        let mut bigger = vec![xs];
        bigger.extend_from_slice(&word);
        let mut sigma2 = sigma.clone();
        for f in Field::ALL {
            sigma2.remove(&Dim::Fld(xloc(), f));
        }
        assert!(models(&absorbed, &sigma2, &bigger), "absorb lost the model");
        let released = absorbed.release(w1(), xloc());
        assert!(
            released.iter().any(|v| models(v, &sigma, &word)),
            "release ∘ absorb excluded the original model"
        );
    }
}

#[test]
fn guard_decide_and_family() {
    let fam = Guard::family(Some(rsz()));
    assert_eq!(fam.len(), 4);
    let mut exists = NumVal::top();
    exists.meet_cons(LinCons::dim_eq(Dim::Fld(xloc(), Field::IsFree), 1));
    assert_eq!(Guard::IsFree(true).decide(&exists, xloc()), Some(true));
    assert_eq!(Guard::IsFree(false).decide(&exists, xloc()), Some(false));
    assert_eq!(
        Guard::Size(GuardRel::Ge, GuardRhs::Dim(rsz())).decide(&exists, xloc()),
        None
    );
}

#[test]
fn compose_entries_pointwise() {
    let mut pv = PureValue::top();
    pv.seqs.wh = SeqExpr(vec![SeqItem::Var(w1()), SeqItem::Var(w2())]);
    pv.univs
        .insert((w1(), Guard::True), body_of(vec![LinCons::dim_ge(usize_dim(), 4)]));
    pv.univs
        .insert((w2(), Guard::True), body_of(vec![LinCons::dim_ge(usize_dim(), 8)]));
    let w3 = SeqVar(7);
    pv.compose_entries(w1(), w2(), w3);
    assert_eq!(pv.seqs.wh, SeqExpr::one(SeqItem::Var(w3)));
    let body = pv.entry(w3, Guard::True).unwrap();
    assert!(body.entails(&LinCons::dim_ge(usize_dim(), 4)));
    assert!(!body.entails(&LinCons::dim_ge(usize_dim(), 8)));
}

#[test]
fn normalize_cmpop_eq_exposed() {
    // keeps the CmpOp import honest and guards the public surface
    let c = LinCons::dim_eq(usize_dim(), 3);
    assert_eq!(c.op, CmpOp::Eq);
    let v = body_of(vec![c]);
    assert_eq!(v.bounds(usize_dim()), (Some(3.into()), Some(3.into())));
    let _ = ToPrimitive::to_i64(&num_bigint::BigInt::from(3));
}
