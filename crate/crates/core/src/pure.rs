//! The data-word pure component: existential numeric constraints, the two
//! sequence equations (for the full heap and free words), and guarded
//! universal constraints over segment words.

use crate::num::{Dim, LinCons, LinExpr, NumVal};
use crate::shape::ShapeIso;
use crate::sym::{Field, SeqVar, SymLoc};
use num_bigint::BigInt;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// One item of a sequence term.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum SeqItem {
    Lit(SymLoc),
    Var(SeqVar),
}

/// A flattened concatenation; the empty vector is ε.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct SeqExpr(pub Vec<SeqItem>);

impl SeqExpr {
    pub fn empty() -> SeqExpr {
        SeqExpr::default()
    }

    pub fn one(item: SeqItem) -> SeqExpr {
        SeqExpr(vec![item])
    }

    pub fn seqvars(&self) -> impl Iterator<Item = SeqVar> + '_ {
        self.0.iter().filter_map(|i| match i {
            SeqItem::Var(w) => Some(*w),
            _ => None,
        })
    }

    pub fn lits(&self) -> impl Iterator<Item = SymLoc> + '_ {
        self.0.iter().filter_map(|i| match i {
            SeqItem::Lit(l) => Some(*l),
            _ => None,
        })
    }

    /// Replaces one item by a sequence (flattening rewrite).
    pub fn subst(&mut self, target: SeqItem, replacement: &[SeqItem]) {
        let mut out = Vec::with_capacity(self.0.len() + replacement.len());
        for it in &self.0 {
            if *it == target {
                out.extend_from_slice(replacement);
            } else {
                out.push(*it);
            }
        }
        self.0 = out;
    }

    /// Replaces the adjacent pair `[a, b]` by `c` everywhere it occurs.
    pub fn subst_pair(&mut self, a: SeqItem, b: SeqItem, c: SeqItem) -> bool {
        let mut out = Vec::with_capacity(self.0.len());
        let mut i = 0;
        let mut hit = false;
        while i < self.0.len() {
            if i + 1 < self.0.len() && self.0[i] == a && self.0[i + 1] == b {
                out.push(c);
                i += 2;
                hit = true;
            } else {
                out.push(self.0[i]);
                i += 1;
            }
        }
        self.0 = out;
        hit
    }

    pub fn rename(&self, iso: &ShapeIso) -> SeqExpr {
        SeqExpr(
            self.0
                .iter()
                .map(|it| match it {
                    SeqItem::Lit(l) => SeqItem::Lit(iso.map_loc(*l)),
                    SeqItem::Var(w) => SeqItem::Var(iso.map_seq(*w)),
                })
                .collect(),
        )
    }
}

impl fmt::Debug for SeqExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "eps");
        }
        let items: Vec<String> = self
            .0
            .iter()
            .map(|i| match i {
                SeqItem::Lit(l) => format!("[{:?}]", l),
                SeqItem::Var(w) => format!("{:?}", w),
            })
            .collect();
        write!(f, "{}", items.join("."))
    }
}

/// The two sequence equations of the pure part (restriction R2).
#[derive(Clone, PartialEq, Eq, Default, Debug)]
pub struct SeqEqs {
    pub wh: SeqExpr,
    pub wf: SeqExpr,
}

impl SeqEqs {
    pub fn rename(&self, iso: &ShapeIso) -> SeqEqs {
        SeqEqs { wh: self.wh.rename(iso), wf: self.wf.rename(iso) }
    }

    pub fn subst(&mut self, target: SeqItem, replacement: &[SeqItem]) {
        self.wh.subst(target, replacement);
        self.wf.subst(target, replacement);
    }

    pub fn seqvars(&self) -> BTreeSet<SeqVar> {
        self.wh.seqvars().chain(self.wf.seqvars()).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum GuardRel {
    Eq,
    Ne,
    Le,
    Ge,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum GuardRhs {
    Const(i64),
    Dim(Dim),
}

/// Universal guard of restriction R4: `X.size # i` or `X.isfree = i`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Guard {
    True,
    Size(GuardRel, GuardRhs),
    IsFree(bool),
}

impl Guard {
    /// The fixed guard family: always-true, both freeness polarities, and
    /// (when a request-size dim is distinguished) `size ≥ rsz`.
    pub fn family(rsz: Option<Dim>) -> Vec<Guard> {
        let mut fam = vec![Guard::True, Guard::IsFree(false), Guard::IsFree(true)];
        if let Some(d) = rsz {
            fam.push(Guard::Size(GuardRel::Ge, GuardRhs::Dim(d)));
        }
        fam
    }

    fn rhs_expr(rhs: GuardRhs) -> (LinExpr, BigInt) {
        match rhs {
            GuardRhs::Const(k) => (LinExpr::zero(), BigInt::from(k)),
            GuardRhs::Dim(d) => (LinExpr::var(d), BigInt::from(0)),
        }
    }

    /// Conjunctive constraints asserting the guard for field dims of `x`;
    /// `None` when the guard is not conjunctively expressible (≠).
    pub fn assert_at(&self, x: SymLoc) -> Option<Vec<LinCons>> {
        let sz = Dim::Fld(x, Field::Size);
        match *self {
            Guard::True => Some(vec![]),
            Guard::IsFree(b) => Some(vec![LinCons::dim_eq(
                Dim::Fld(x, Field::IsFree),
                if b { 1 } else { 0 },
            )]),
            Guard::Size(rel, rhs) => {
                let (e, k) = Self::rhs_expr(rhs);
                let diff = LinExpr::var(sz).minus(&e);
                match rel {
                    GuardRel::Eq => Some(vec![LinCons::eq(diff, k)]),
                    GuardRel::Le => Some(vec![LinCons::le(diff, k)]),
                    GuardRel::Ge => Some(vec![LinCons::le(diff.scaled(&BigInt::from(-1)), -k)]),
                    GuardRel::Ne => None,
                }
            }
        }
    }

    /// Conjunctive constraints asserting the negation, when expressible.
    pub fn refute_at(&self, x: SymLoc) -> Option<Vec<LinCons>> {
        let sz = Dim::Fld(x, Field::Size);
        match *self {
            Guard::True => None,
            Guard::IsFree(b) => Guard::IsFree(!b).assert_at(x),
            Guard::Size(rel, rhs) => {
                let (e, k) = Self::rhs_expr(rhs);
                let diff = LinExpr::var(sz).minus(&e);
                match rel {
                    // ¬(s ≤ k) ⟺ s ≥ k+1
                    GuardRel::Le => Some(vec![LinCons::le(diff.scaled(&BigInt::from(-1)), -k - 1)]),
                    GuardRel::Ge => Some(vec![LinCons::le(diff, k - 1)]),
                    GuardRel::Ne => Some(vec![LinCons::eq(diff, k)]),
                    GuardRel::Eq => None,
                }
            }
        }
    }

    /// Whether `exists` decides the guard at `x`: `Some(true/false)` when
    /// provably holding/failing, `None` when open.
    pub fn decide(&self, exists: &NumVal, x: SymLoc) -> Option<bool> {
        if let Some(cs) = self.assert_at(x) {
            if cs.iter().all(|c| exists.entails(c)) {
                return Some(true);
            }
        }
        if let Some(cs) = self.refute_at(x) {
            if cs.iter().all(|c| exists.entails(c)) {
                return Some(false);
            }
        }
        None
    }

    /// The guard over the universal dims themselves (for queries and the
    /// concrete membership check).
    pub fn assert_univ(&self) -> Option<Vec<LinCons>> {
        self.assert_at(UNIV_PROBE).map(|cs| {
            cs.into_iter()
                .map(|c| {
                    let expr = LinExpr::from_terms(c.expr.terms().map(|(d, co)| {
                        let nd = match d {
                            Dim::Fld(l, f) if *l == UNIV_PROBE => Dim::UFld(*f),
                            other => *other,
                        };
                        (nd, co.clone())
                    }));
                    LinCons { expr, op: c.op, k: c.k }
                })
                .collect()
        })
    }

    pub fn rename(&self, iso: &ShapeIso) -> Guard {
        match *self {
            Guard::Size(rel, GuardRhs::Dim(d)) => {
                let map = iso.dim_map();
                Guard::Size(rel, GuardRhs::Dim(*map.get(&d).unwrap_or(&d)))
            }
            g => g,
        }
    }
}

/// Scratch location used to build guard constraints over universal dims.
const UNIV_PROBE: SymLoc = SymLoc(u32::MAX);

/// The pure component Π of a binding.
#[derive(Clone, PartialEq, Eq, Default, Debug)]
pub struct PureValue {
    pub exists: NumVal,
    pub seqs: SeqEqs,
    pub univs: BTreeMap<(SeqVar, Guard), NumVal>,
}

impl PureValue {
    pub fn top() -> PureValue {
        PureValue::default()
    }

    pub fn is_bottom(&self) -> bool {
        self.exists.is_bottom()
    }

    pub fn rename(&self, iso: &ShapeIso) -> PureValue {
        let map = iso.dim_map();
        PureValue {
            exists: self.exists.rename(&map),
            seqs: self.seqs.rename(iso),
            univs: self
                .univs
                .iter()
                .map(|((w, g), body)| {
                    ((iso.map_seq(*w), g.rename(iso)), body.rename(&map))
                })
                .collect(),
        }
    }

    /// Creates the strongest (⊥-bodied) entries for a fresh empty segment.
    pub fn init_entries(&mut self, w: SeqVar, guards: &[Guard]) {
        for g in guards {
            self.univs.insert((w, *g), NumVal::bottom());
        }
    }

    pub fn entry(&self, w: SeqVar, g: Guard) -> Option<&NumVal> {
        self.univs.get(&(w, g))
    }

    /// Drops entries whose sequence variable is gone from the shape.
    pub fn retain_seqvars(&mut self, live: &BTreeSet<SeqVar>) {
        self.univs.retain(|(w, _), _| live.contains(w));
    }

    /// Ordering relative to an isomorphism from self's companion shape to
    /// other's; sound (false negatives allowed).
    pub fn leq(&self, other: &PureValue, iso: &ShapeIso) -> bool {
        let a = self.rename(iso);
        if a.is_bottom() {
            return true;
        }
        if a.seqs != other.seqs {
            return false;
        }
        if !a.exists.entails_all(&other.exists) {
            return false;
        }
        for ((w, g), body_b) in &other.univs {
            if body_b.is_bottom() {
                // ⊥ body demands the word admits no g-element; only an
                // identical ⊥ entry on the left is safely below it.
                match a.univs.get(&(*w, *g)) {
                    Some(body_a) if body_a.is_bottom() => continue,
                    _ => return false,
                }
            }
            let lhs = match a.univs.get(&(*w, *g)) {
                Some(body_a) => a.exists.meet(body_a),
                None => a.exists.clone(),
            };
            if !lhs.entails_all(body_b) {
                return false;
            }
        }
        true
    }

    /// Join under an isomorphism (self renamed into other's namespace);
    /// sequence equations are taken from `other`.
    pub fn join(&self, other: &PureValue, iso: &ShapeIso) -> PureValue {
        self.merge(other, iso, false)
    }

    /// Widening: like join but with the numeric widening on both the
    /// existential part and every universal body.
    pub fn widen(&self, other: &PureValue, iso: &ShapeIso) -> PureValue {
        self.merge(other, iso, true)
    }

    fn merge(&self, other: &PureValue, iso: &ShapeIso, widen: bool) -> PureValue {
        let a = self.rename(iso);
        if a.is_bottom() {
            return other.clone();
        }
        if other.is_bottom() {
            return a;
        }
        debug_assert_eq!(a.seqs, other.seqs, "merged bindings must agree on words");
        let exists = if widen {
            a.exists.widen(&other.exists)
        } else {
            a.exists.join(&other.exists)
        };
        let mut univs = BTreeMap::new();
        for ((w, g), body_a) in &a.univs {
            if let Some(body_b) = other.univs.get(&(*w, *g)) {
                let merged = if widen { body_a.widen(body_b) } else { body_a.join(body_b) };
                if !merged.is_top() {
                    univs.insert((*w, *g), merged);
                }
            }
            // missing on the other side = ⊤: entry dropped
        }
        PureValue { exists, seqs: other.seqs.clone(), univs }
    }

    /// Folds element `x` into segment word `w` (the companion shape appends
    /// `[x]` on `side`): universal bodies absorb the element's facts and the
    /// word equations drop the literal. The caller projects `x`'s field dims
    /// from `exists` afterwards.
    pub fn absorb(&mut self, w: SeqVar, x: SymLoc, side: Side) {
        let keys: Vec<(SeqVar, Guard)> =
            self.univs.keys().filter(|(kw, _)| *kw == w).cloned().collect();
        for (kw, g) in keys {
            if let Some(refut) = g.refute_at(x) {
                if refut.iter().all(|c| self.exists.entails(c)) {
                    continue; // guard refuted: entry untouched
                }
            }
            let mut cand = self.exists.clone();
            if let Some(asserts) = g.assert_at(x) {
                cand.meet_all(asserts);
            } else {
                // Unsupported guard shape: weaken to ⊤ (drop the entry).
                self.univs.remove(&(kw, g));
                continue;
            }
            if cand.is_bottom() {
                continue; // guard cannot hold at x
            }
            let mut map = BTreeMap::new();
            for f in Field::ALL {
                map.insert(Dim::Fld(x, f), Dim::UFld(f));
            }
            let cand = cand.rename(&map).forget(Dim::Loc(x));
            let body = self.univs.get_mut(&(kw, g)).unwrap();
            let joined = body.join(&cand);
            if joined.is_top() {
                self.univs.remove(&(kw, g));
            } else {
                *body = joined;
            }
        }
        let lit = SeqItem::Lit(x);
        let var = SeqItem::Var(w);
        let (a, b) = match side {
            Side::Front => (lit, var),
            Side::Back => (var, lit),
        };
        self.seqs.wh.subst_pair(a, b, var);
        self.seqs.wf.subst_pair(a, b, var);
    }

    /// Splits element `x` off segment word `w` (the companion unfold); the
    /// guard-decided universal facts are instantiated into `exists`, an
    /// undecided guard with a nontrivial body case-splits the value.
    pub fn release(&self, w: SeqVar, x: SymLoc) -> Vec<PureValue> {
        let mut variants = vec![self.clone()];
        let keys: Vec<(SeqVar, Guard)> =
            self.univs.keys().filter(|(kw, _)| *kw == w).cloned().collect();
        for (_, g) in keys {
            let mut next = Vec::new();
            for v in variants {
                let body = match v.univs.get(&(w, g)) {
                    Some(b) if !b.is_top() => b.clone(),
                    _ => {
                        next.push(v);
                        continue;
                    }
                };
                let inst = |val: &PureValue, with_guard: bool| -> PureValue {
                    let mut out = val.clone();
                    let mut map = BTreeMap::new();
                    for f in Field::ALL {
                        map.insert(Dim::UFld(f), Dim::Fld(x, f));
                    }
                    out.exists = out.exists.meet(&body.rename(&map));
                    if with_guard {
                        if let Some(cs) = g.assert_at(x) {
                            out.exists.meet_all(cs);
                        }
                    }
                    out
                };
                match g.decide(&v.exists, x) {
                    Some(true) => next.push(inst(&v, false)),
                    Some(false) => next.push(v),
                    None => {
                        if body.is_top() {
                            next.push(v);
                            continue;
                        }
                        // case split: guard holds / guard fails at x
                        let pos = inst(&v, true);
                        if !pos.is_bottom() {
                            next.push(pos);
                        }
                        if let Some(refut) = g.refute_at(x) {
                            let mut negv = v.clone();
                            negv.exists.meet_all(refut);
                            if !negv.is_bottom() {
                                next.push(negv);
                            }
                        } else {
                            next.push(v);
                        }
                    }
                }
            }
            variants = next;
        }
        variants
    }

    /// Duplicates the universal entries of `w` onto a fresh segment word
    /// (used when splitting one segment into two).
    pub fn copy_entries(&mut self, from: SeqVar, to: SeqVar) {
        let copies: Vec<(Guard, NumVal)> = self
            .univs
            .iter()
            .filter(|((w, _), _)| *w == from)
            .map(|((_, g), b)| (*g, b.clone()))
            .collect();
        for (g, b) in copies {
            self.univs.insert((to, g), b);
        }
    }

    /// Composes two segment words into a fresh one; entries join pointwise
    /// (an entry missing on either side is ⊤ and disappears).
    pub fn compose_entries(&mut self, w1: SeqVar, w2: SeqVar, w3: SeqVar) {
        let guards: BTreeSet<Guard> = self
            .univs
            .keys()
            .filter(|(w, _)| *w == w1 || *w == w2)
            .map(|(_, g)| *g)
            .collect();
        for g in guards {
            let b1 = self.univs.get(&(w1, g)).cloned();
            let b2 = self.univs.get(&(w2, g)).cloned();
            if let (Some(b1), Some(b2)) = (b1, b2) {
                let j = b1.join(&b2);
                if !j.is_top() {
                    self.univs.insert((w3, g), j);
                }
            }
        }
        self.univs.retain(|(w, _), _| *w != w1 && *w != w2);
        self.seqs
            .wh
            .subst_pair(SeqItem::Var(w1), SeqItem::Var(w2), SeqItem::Var(w3));
        self.seqs
            .wf
            .subst_pair(SeqItem::Var(w1), SeqItem::Var(w2), SeqItem::Var(w3));
    }

    /// Removes an empty segment's word: substitutes ε and drops entries.
    pub fn seq_empty(&mut self, w: SeqVar) {
        self.seqs.subst(SeqItem::Var(w), &[]);
        self.univs.retain(|(kw, _), _| *kw != w);
    }

    /// Eliminates dims from the existential part and every universal body.
    pub fn project_dims(&mut self, dims: &BTreeSet<Dim>) {
        if dims.is_empty() {
            return;
        }
        self.exists = self.exists.project(dims);
        let mut updated = BTreeMap::new();
        for ((w, g), body) in &self.univs {
            let nb = body.project(dims);
            if !nb.is_top() {
                updated.insert((*w, *g), nb);
            }
        }
        self.univs = updated;
    }

    pub fn dump_lines(&self) -> Vec<String> {
        let mut out = self.exists.dump_lines();
        out.push(format!("W_H = {:?}", self.seqs.wh));
        out.push(format!("W_F = {:?}", self.seqs.wf));
        for ((w, g), body) in &self.univs {
            out.push(format!("forall X in {:?}. {:?} => {:?}", w, g, body));
        }
        out
    }
}

/// Absorption side: where the companion fold appended `[x]` to the word.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Side {
    Front,
    Back,
}

#[cfg(test)]
#[path = "pure_tests.rs"]
mod pure_tests;
