use super::*;
use crate::sym::Gen;

fn env_of(pairs: &[(u32, SymLoc)]) -> AbstractEnv {
    AbstractEnv {
        addr: pairs.iter().map(|(v, l)| (VarId(*v), *l)).collect(),
    }
}

#[test]
fn gaifman_empty_shape() {
    // emp ∋ emp with only the ghost break bound: nil and hli nodes.
    let hli = SymLoc(1);
    let g = gaifman(&TwoLevelShape::empty(), &env_of(&[(0, hli)]));
    assert_eq!(g.nodes.len(), 2);
    assert!(g.nodes.contains(&GNode::Loc(SymLoc::NIL)));
    assert!(g.nodes.contains(&GNode::Loc(hli)));
    assert!(g.edges.is_empty());
}

#[test]
fn gaifman_single_blk() {
    let (a, b) = (SymLoc(2), SymLoc(3));
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Blk { from: a, to: b }],
        free: vec![],
    };
    let g = gaifman(&shape, &env_of(&[(0, SymLoc(1))]));
    assert_eq!(g.edges.len(), 1);
    let (s, l, _, t) = g.edges[0];
    assert_eq!((s, l, t), (GNode::Loc(a), "blk", GNode::Loc(b)));
}

#[test]
fn gaifman_two_levels_share_nodes() {
    // An hlsc over the arena with an explicit free chunk inside: the free
    // edge layer reuses the location nodes of the heap layer.
    let (x0, hli, y2, y3) = (SymLoc(2), SymLoc(1), SymLoc(4), SymLoc(5));
    let mut gen = Gen::new();
    let w = gen.seq();
    let w1 = gen.seq();
    let (i, j) = (IVar(0), IVar(1));
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Hlsc { from: x0, to: hli, seq: w, lflag: i, rflag: j }],
        free: vec![
            FreeAtom::Fls { from: y2, to: y3, seq: w1 },
            FreeAtom::Fck { from: y3, to: SymLoc::NIL },
        ],
    };
    let g = gaifman(&shape, &env_of(&[(0, hli), (1, y2)]));
    // node count = |SymLocs| + |SeqVars| + 2 (nil and the break)
    let locs: BTreeSet<SymLoc> = [x0, y2, y3].into_iter().collect();
    assert_eq!(g.nodes.len(), locs.len() + 2 + 2);
    assert!(g.edges.iter().any(|(s, l, _, _)| *s == GNode::Loc(y3) && *l == "fck"));
}

fn sample_shape(seed: u64) -> (AbstractEnv, TwoLevelShape) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gen = Gen::new();
    let hli = gen.loc();
    let n = rng.gen_range(1..=4usize);
    let mut heap = Vec::new();
    let mut bound = gen.loc();
    let first = bound;
    let mut chunk_starts = Vec::new();
    for _ in 0..n {
        let to = gen.loc();
        match rng.gen_range(0..3) {
            0 => heap.push(HeapAtom::Blk { from: bound, to }),
            1 => {
                chunk_starts.push(bound);
                heap.push(HeapAtom::Chk { from: bound, to });
            }
            _ => heap.push(HeapAtom::Hlsc {
                from: bound,
                to,
                seq: gen.seq(),
                lflag: gen.ivar(),
                rflag: gen.ivar(),
            }),
        }
        bound = to;
    }
    let mut free = Vec::new();
    let mut prev: Option<SymLoc> = None;
    for &c in &chunk_starts {
        if let Some(p) = prev {
            if let Some(FreeAtom::Fck { to, .. }) = free.last_mut() {
                *to = c;
            }
            let _ = p;
        }
        if rng.gen_bool(0.7) {
            free.push(FreeAtom::Fck { from: c, to: SymLoc::NIL });
            prev = Some(c);
        }
    }
    let mut env = env_of(&[(0, hli), (1, first)]);
    if let Some(c) = chunk_starts.first() {
        env.bind(VarId(2), *c);
    }
    (env, TwoLevelShape { heap, free })
}

fn permuted(env: &AbstractEnv, shape: &TwoLevelShape, offset: u32) -> (AbstractEnv, TwoLevelShape, ShapeIso) {
    let mut iso = ShapeIso::default();
    for l in shape.locs().iter().chain(env.image().iter()) {
        if !l.is_nil() {
            iso.loc.insert(*l, SymLoc(l.0 + offset));
        }
    }
    for w in shape.seqvars() {
        iso.seq.insert(w, SeqVar(w.0 + offset));
    }
    for i in shape.ivars() {
        iso.ivar.insert(i, IVar(i.0 + offset));
    }
    (rename_env(env, &iso), rename_shape(shape, &iso), iso)
}

#[test]
fn iso_identity() {
    let (env, shape) = sample_shape(7);
    let iso = isomorphic(&env, &shape, &env, &shape).expect("reflexive");
    for (a, b) in &iso.loc {
        assert_eq!(a, b);
    }
}

#[test]
fn iso_alpha_renaming() {
    for seed in 0..30u64 {
        let (env, shape) = sample_shape(seed);
        let (env2, shape2, expected) = permuted(&env, &shape, 100);
        let iso = isomorphic(&env, &shape, &env2, &shape2).expect("alpha-renamed");
        for (a, b) in &expected.loc {
            assert_eq!(iso.map_loc(*a), *b);
        }
    }
}

#[test]
fn iso_label_mismatch() {
    let mut gen = Gen::new();
    let (a, b) = (gen.loc(), gen.loc());
    let w = gen.seq();
    let hls = TwoLevelShape {
        heap: vec![HeapAtom::Hls { from: a, to: b, seq: w }],
        free: vec![],
    };
    let hlsc = TwoLevelShape {
        heap: vec![HeapAtom::Hlsc { from: a, to: b, seq: w, lflag: IVar(0), rflag: IVar(1) }],
        free: vec![],
    };
    let env = env_of(&[(0, a)]);
    assert!(isomorphic(&env, &hls, &env, &hlsc).is_none());
}

#[test]
fn iso_equivalence_properties() {
    for seed in 0..40u64 {
        let (env_a, a) = sample_shape(seed);
        // reflexive
        assert!(isomorphic(&env_a, &a, &env_a, &a).is_some());
        let (env_b, b, _) = permuted(&env_a, &a, 50);
        let (env_c, c, _) = permuted(&env_a, &a, 200);
        // symmetric: the inverse witnesses the reverse direction
        let ab = isomorphic(&env_a, &a, &env_b, &b).unwrap();
        let ba = isomorphic(&env_b, &b, &env_a, &a).unwrap();
        assert_eq!(rename_shape(&b, &ba), a);
        assert_eq!(rename_shape(&a, &ab.compose(&ba)), a);
        // transitive: composition witnesses a -> c
        let bc = isomorphic(&env_b, &b, &env_c, &c).unwrap();
        let ac = ab.compose(&bc);
        assert_eq!(rename_shape(&a, &ac), c);
        assert_eq!(rename_env(&env_a, &ac), env_c);
    }
}

#[test]
fn cuts_chain_interior_not_cut() {
    let (a, b, c) = (SymLoc(2), SymLoc(3), SymLoc(4));
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Chk { from: a, to: b }, HeapAtom::Chk { from: b, to: c }],
        free: vec![],
    };
    let env = env_of(&[(0, SymLoc(1)), (1, a)]);
    let cuts = cut_points(&shape, &env);
    assert!(cuts.contains(&a));
    assert!(!cuts.contains(&b), "interior chain boundary is not a cut-point");
    assert!(!cuts.contains(&c));
}

#[test]
fn cuts_empty() {
    let hli = SymLoc(1);
    let cuts = cut_points(&TwoLevelShape::empty(), &env_of(&[(0, hli)]));
    assert_eq!(cuts, [SymLoc::NIL, hli].into_iter().collect());
}

#[test]
fn cuts_free_starts_and_roots() {
    // Arena-wide hlsc with the free structure of the malloc scan: the scan
    // pointer roots and every free-level start are cut-points.
    let (x0, hli, y0, y2, y3) = (SymLoc(2), SymLoc(1), SymLoc(3), SymLoc(4), SymLoc(5));
    let mut gen = Gen::new();
    let shape = TwoLevelShape {
        heap: vec![HeapAtom::Hlsc {
            from: x0,
            to: hli,
            seq: gen.seq(),
            lflag: IVar(0),
            rflag: IVar(1),
        }],
        free: vec![
            FreeAtom::Fls { from: y0, to: y2, seq: gen.seq() },
            FreeAtom::Fck { from: y2, to: y3 },
            FreeAtom::Fls { from: y3, to: SymLoc::NIL, seq: gen.seq() },
        ],
    };
    let env = env_of(&[(0, hli), (1, y0), (2, y2)]);
    let cuts = cut_points(&shape, &env);
    for l in [SymLoc::NIL, hli, y0, y2, y3] {
        assert!(cuts.contains(&l), "{:?} must be a cut-point", l);
    }
}

#[test]
fn wf_rejects_double_start_and_broken_chain() {
    let (a, b, c) = (SymLoc(2), SymLoc(3), SymLoc(4));
    let bad = TwoLevelShape {
        heap: vec![HeapAtom::Chk { from: a, to: b }, HeapAtom::Blk { from: a, to: c }],
        free: vec![],
    };
    assert!(bad.check_wf().is_err());
    let broken = TwoLevelShape {
        heap: vec![HeapAtom::Chk { from: a, to: b }, HeapAtom::Blk { from: c, to: b }],
        free: vec![],
    };
    assert!(broken.check_wf().is_err());
}
