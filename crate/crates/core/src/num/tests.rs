use super::*;
use crate::sym::VarId;

fn x() -> Dim {
    Dim::Var(VarId(0))
}
fn y() -> Dim {
    Dim::Var(VarId(1))
}
fn z() -> Dim {
    Dim::Var(VarId(2))
}

fn val(cons: Vec<LinCons>) -> NumVal {
    NumVal::of_cons(cons)
}

/// x - y <= k
fn diff_le(a: Dim, b: Dim, k: i64) -> LinCons {
    LinCons::dim_le_dim(a, b, k)
}

fn big(i: i64) -> BigInt {
    BigInt::from(i)
}

/// Brute-force model check of a constraint set at an integer point.
fn sat_point(v: &NumVal, pt: &[(Dim, i64)]) -> bool {
    let assign = |d: Dim| pt.iter().find(|(p, _)| *p == d).map(|(_, k)| big(*k));
    v.holds_at(&assign)
}

#[test]
fn entails_transitive_weakening() {
    let v = val(vec![diff_le(x(), y(), -1)]);
    assert!(v.entails(&diff_le(x(), y(), 0)));
}

#[test]
fn entails_congruence_tightening() {
    // x ≡ 0 mod 8 ∧ x ≥ 1 entails x ≥ 8; cross-checked by brute force.
    let mut v = val(vec![LinCons::dim_ge(x(), 1)]);
    v.meet_cong(x(), 0, 8);
    let c = LinCons::dim_ge(x(), 8);
    for p in -64..=64i64 {
        if p % 8 == 0 && p >= 1 {
            assert!(p >= 8, "oracle: witness {} refutes the expected value", p);
        }
    }
    assert!(v.entails(&c));
    // and the sound No on a tighter bound
    assert!(!v.entails(&LinCons::dim_ge(x(), 9)));
}

#[test]
fn entails_no_on_countermodel() {
    let v = val(vec![LinCons::dim_ge(x(), 0)]);
    assert!(!v.entails(&LinCons::dim_ge(x(), 1)));
}

#[test]
fn join_hull_of_constants() {
    let a = val(vec![LinCons::dim_eq(x(), 1)]);
    let b = val(vec![LinCons::dim_eq(x(), 3)]);
    let j = a.join(&b);
    // Brute-force hull of {1, 3}: 1 ≤ x ≤ 3, x ≡ 1 mod 2.
    assert!(j.entails(&LinCons::dim_ge(x(), 1)));
    assert!(j.entails(&LinCons::dim_le(x(), 3)));
    assert!(j.entails_cong(x(), &Cong { residue: big(1), modulus: big(2) }));
    assert!(sat_point(&j, &[(x(), 1)]));
    assert!(sat_point(&j, &[(x(), 3)]));
}

#[test]
fn join_bottom_is_identity() {
    let b = val(vec![LinCons::dim_eq(x(), 7)]);
    assert_eq!(NumVal::bottom().join(&b), b);
    assert_eq!(b.join(&NumVal::bottom()), b);
}

#[test]
fn join_chain_upper_bound() {
    let a = val(vec![diff_le(x(), y(), 0)]);
    let b = val(vec![diff_le(x(), y(), 0), LinCons::dim_le(y(), 5)]);
    let j = a.join(&b);
    assert!(j.entails(&diff_le(x(), y(), 0)));
    assert!(!j.entails(&LinCons::dim_le(y(), 5)));
}

#[test]
fn widen_drops_unstable_bound() {
    let a = val(vec![LinCons::dim_ge(x(), 0), LinCons::dim_le(x(), 1)]);
    let b = val(vec![LinCons::dim_ge(x(), 0), LinCons::dim_le(x(), 2)]);
    let w = a.widen(&b);
    assert!(w.entails(&LinCons::dim_ge(x(), 0)));
    assert!(!w.entails(&LinCons::dim_le(x(), 1_000_000)));
}

#[test]
fn widen_idempotent_on_stable() {
    let v = val(vec![LinCons::dim_ge(x(), 0), diff_le(x(), y(), 3)]);
    let w = v.widen(&v);
    assert!(w.entails_all(&v) && v.entails_all(&w));
}

#[test]
fn widen_chain_stabilizes() {
    // x ≤ k for k = 1, 2, 3, ...: iterated widening is constant after ≤ 2 steps.
    let mut cur = val(vec![LinCons::dim_ge(x(), 0), LinCons::dim_le(x(), 1)]);
    let mut stable_at = None;
    for k in 2..50i64 {
        let next = val(vec![LinCons::dim_ge(x(), 0), LinCons::dim_le(x(), k)]);
        let w = cur.widen(&next);
        if w.entails_all(&cur) && cur.entails_all(&w) {
            stable_at = Some(k);
            break;
        }
        cur = w;
    }
    assert!(stable_at.is_some() && stable_at.unwrap() <= 3);
}

#[test]
fn project_transitivity() {
    let v = val(vec![
        LinCons::dims_eq(x(), y()),
        LinCons::dims_eq(y(), z()),
    ]);
    let p = v.project(&[y()].into_iter().collect());
    assert!(p.entails(&LinCons::dims_eq(x(), z())));
    assert!(p.dims().iter().all(|d| *d != y()));
}

#[test]
fn project_fm_step() {
    let v = val(vec![diff_le(x(), y(), 0), diff_le(y(), z(), 0)]);
    let p = v.project(&[y()].into_iter().collect());
    assert!(p.entails(&diff_le(x(), z(), 0)));
}

#[test]
fn project_matches_box_enumeration() {
    // Three small systems; compare per-dim hulls of the projection with the
    // hull of the pointwise-projected model set over a box.
    let systems = vec![
        val(vec![diff_le(x(), y(), -1), LinCons::dim_ge(y(), -3), LinCons::dim_le(y(), 4)]),
        val(vec![
            LinCons::le(LinExpr::from_terms([(x(), big(2)), (y(), big(1))]), 6),
            LinCons::dim_ge(x(), -2),
            LinCons::dim_ge(y(), -2),
        ]),
        val(vec![
            LinCons::eq(LinExpr::from_terms([(x(), big(1)), (y(), big(-2))]), 1),
            LinCons::dim_le(x(), 7),
            LinCons::dim_ge(x(), -7),
        ]),
    ];
    for v in systems {
        let p = v.project(&[y()].into_iter().collect());
        let mut lo = None;
        let mut hi = None;
        for px in -20..=20i64 {
            for py in -20..=20i64 {
                if sat_point(&v, &[(x(), px), (y(), py)]) {
                    lo = Some(lo.map_or(px, |l: i64| l.min(px)));
                    hi = Some(hi.map_or(px, |h: i64| h.max(px)));
                    assert!(sat_point(&p, &[(x(), px)]), "projection excluded a model");
                }
            }
        }
        let (plo, phi) = p.bounds(x());
        if let (Some(l), Some(pl)) = (lo, &plo) {
            assert_eq!(big(l), *pl, "lower hull mismatch");
        }
        if let (Some(h), Some(ph)) = (hi, &phi) {
            assert_eq!(big(h), *ph, "upper hull mismatch");
        }
    }
}

#[test]
fn assign_increment() {
    let v = val(vec![LinCons::dim_eq(x(), 1)]);
    let a = v.assign(x(), &LinExpr::var(x()), 1);
    assert!(a.entails(&LinCons::dim_eq(x(), 2)));
}

#[test]
fn assign_parity() {
    // x := 2y on top entails x ≡ 0 mod 2 (brute-force over y ∈ [-10, 10]).
    for py in -10..=10i64 {
        assert_eq!((2 * py) % 2, 0);
    }
    let v = NumVal::top();
    let a = v.assign(x(), &LinExpr::from_terms([(y(), big(2))]), 0);
    assert!(a.entails_cong(x(), &Cong { residue: big(0), modulus: big(2) }));
}

#[test]
fn assign_on_bottom() {
    let a = NumVal::bottom().assign(x(), &LinExpr::var(y()), 5);
    assert!(a.is_bottom());
}

#[test]
fn bottom_detection_congruence_conflict() {
    let mut v = val(vec![LinCons::dim_ge(x(), 1), LinCons::dim_le(x(), 7)]);
    v.meet_cong(x(), 0, 8);
    assert!(v.is_bottom());
}

#[test]
fn rename_roundtrip() {
    let v = val(vec![diff_le(x(), y(), -2)]);
    let mut map = BTreeMap::new();
    map.insert(x(), z());
    let r = v.rename(&map);
    assert!(r.entails(&diff_le(z(), y(), -2)));
    assert!(!r.dims().contains(&x()));
}

/// Randomized soundness sampling for join/widen/project/entails.
#[test]
fn sampled_soundness() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xf1a);
    let dims = [x(), y(), z()];
    let gen_val = |rng: &mut rand_chacha::ChaCha8Rng| -> NumVal {
        let mut v = NumVal::top();
        for _ in 0..rng.gen_range(1..=3) {
            let mut e = LinExpr::zero();
            for d in dims {
                e.add_term(d, big(rng.gen_range(-3..=3)));
            }
            let k = rng.gen_range(-10..=10i64);
            if rng.gen_bool(0.2) {
                v.meet_cons(LinCons::eq(e, k));
            } else {
                v.meet_cons(LinCons::le(e, k));
            }
        }
        if rng.gen_bool(0.3) {
            v.meet_cong(dims[rng.gen_range(0..3)], rng.gen_range(0..4), rng.gen_range(2..=4));
        }
        v
    };
    let mut samples = 0u64;
    for _ in 0..60 {
        let a = gen_val(&mut rng);
        let b = gen_val(&mut rng);
        if a.is_bottom() || b.is_bottom() {
            continue;
        }
        let j = a.join(&b);
        let w = a.widen(&b);
        let proj = a.project(&[y()].into_iter().collect());
        let probe = LinCons::le(
            LinExpr::from_terms([(x(), big(1)), (y(), big(1))]),
            rng.gen_range(-5..=5i64),
        );
        let yes = a.entails(&probe);
        for px in -8..=8i64 {
            for py in -8..=8i64 {
                for pz in -8..=8i64 {
                    samples += 1;
                    let pt = [(x(), px), (y(), py), (z(), pz)];
                    let in_a = sat_point(&a, &pt);
                    let in_b = sat_point(&b, &pt);
                    if in_a || in_b {
                        assert!(sat_point(&j, &pt), "join excluded a model of an argument");
                    }
                    if in_a || in_b {
                        assert!(sat_point(&w, &pt), "widen excluded a model of an argument");
                    }
                    if in_a {
                        assert!(sat_point(&proj, &[(x(), px), (z(), pz)]));
                        if yes {
                            assert!(
                                probe.holds_at(&|d| pt
                                    .iter()
                                    .find(|(p, _)| *p == d)
                                    .map(|(_, k)| big(*k)))
                                    == Some(true),
                                "entails returned Yes on a violated constraint"
                            );
                        }
                    }
                }
            }
        }
    }
    assert!(samples >= 10_000, "sampled {} points", samples);
}

/// Widening terminates on randomized ascending chains.
#[test]
fn widen_random_chains_stabilize() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        // Build an ascending chain by relaxing bounds.
        let mut lo = -(rng.gen_range(0..5i64));
        let mut hi = rng.gen_range(0..5i64);
        let mut cur = val(vec![LinCons::dim_ge(x(), lo), LinCons::dim_le(x(), hi)]);
        let mut stable = 0;
        for _ in 0..50 {
            lo -= rng.gen_range(0..3i64);
            hi += rng.gen_range(0..3i64);
            let next = val(vec![LinCons::dim_ge(x(), lo), LinCons::dim_le(x(), hi)]);
            let w = cur.widen(&next);
            if w.entails_all(&cur) && cur.entails_all(&w) {
                stable += 1;
            } else {
                stable = 0;
            }
            cur = w;
        }
        assert!(stable > 0, "chain did not stabilize");
    }
}
