//! The parameter numeric domain: conjunctions of integer linear constraints
//! and unary congruences over named dimensions, with exact bignum arithmetic.
//!
//! Entailment, join, widening, projection and assignment are built on a
//! Fourier-Motzkin core (`solve`) with congruence interval tightening, so a
//! `Yes` from [`NumVal::entails`] and a `bottom` verdict are always backed by
//! a proof over the integers; the imprecise direction is the sound one.

mod solve;

use crate::sym::{Field, IVar, SymLoc, VarId};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A dimension of the numeric domain.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dim {
    /// Scalar (integer-typed) program variable.
    Var(VarId),
    /// Address value of a symbolic location.
    Loc(SymLoc),
    /// Header field of a materialized chunk.
    Fld(SymLoc, Field),
    /// Logic integer variable (segment flag parameters).
    IVar(IVar),
    /// Field of the bound position of a universal constraint.
    UFld(Field),
    /// Internal scratch dimension; never occurs in stored values.
    Tmp(u32),
}

impl fmt::Debug for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Var(v) => write!(f, "{:?}", v),
            Dim::Loc(l) => write!(f, "{:?}", l),
            Dim::Fld(l, fd) => write!(f, "{:?}.{}", l, fd.name()),
            Dim::IVar(i) => write!(f, "{:?}", i),
            Dim::UFld(fd) => write!(f, "_.{}", fd.name()),
            Dim::Tmp(t) => write!(f, "tmp{}", t),
        }
    }
}

/// Integer linear expression `Σ c·d`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct LinExpr {
    terms: BTreeMap<Dim, BigInt>,
}

impl LinExpr {
    pub fn zero() -> LinExpr {
        LinExpr::default()
    }

    pub fn var(d: Dim) -> LinExpr {
        LinExpr::from_terms([(d, BigInt::one())])
    }

    pub fn from_terms<I: IntoIterator<Item = (Dim, BigInt)>>(terms: I) -> LinExpr {
        let mut e = LinExpr::default();
        for (d, c) in terms {
            e.add_term(d, c);
        }
        e
    }

    pub fn add_term(&mut self, d: Dim, c: BigInt) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(d).or_insert_with(BigInt::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&d);
        }
    }

    pub fn coeff(&self, d: Dim) -> BigInt {
        self.terms.get(&d).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Dim, &BigInt)> {
        self.terms.iter()
    }

    pub fn dims(&self) -> impl Iterator<Item = Dim> + '_ {
        self.terms.keys().copied()
    }

    pub fn mentions(&self, d: Dim) -> bool {
        self.terms.contains_key(&d)
    }

    pub fn scaled(&self, c: &BigInt) -> LinExpr {
        if c.is_zero() {
            return LinExpr::zero();
        }
        LinExpr {
            terms: self.terms.iter().map(|(d, x)| (*d, x * c)).collect(),
        }
    }

    pub fn plus(&self, other: &LinExpr) -> LinExpr {
        let mut e = self.clone();
        for (d, c) in other.terms() {
            e.add_term(*d, c.clone());
        }
        e
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        self.plus(&other.scaled(&BigInt::from(-1)))
    }

    pub fn eval(&self, assign: &dyn Fn(Dim) -> Option<BigInt>) -> Option<BigInt> {
        let mut acc = BigInt::zero();
        for (d, c) in self.terms() {
            acc += c * assign(*d)?;
        }
        Some(acc)
    }

    fn content(&self) -> BigInt {
        let mut g = BigInt::zero();
        for c in self.terms.values() {
            g = g.gcd(c);
        }
        g
    }
}

impl fmt::Debug for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (d, c)) in self.terms.iter().enumerate() {
            if i == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let a = c.abs();
            if !a.is_one() {
                write!(f, "{}*", a)?;
            }
            write!(f, "{:?}", d)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum CmpOp {
    Eq,
    Le,
}

/// Normalized linear constraint `expr op k` with primitive integer
/// coefficients; `Le` constants are integer-tightened.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct LinCons {
    pub expr: LinExpr,
    pub op: CmpOp,
    pub k: BigInt,
}

pub enum Normalized {
    Tauto,
    Contra,
    Cons(LinCons),
}

impl LinCons {
    pub fn le(expr: LinExpr, k: impl Into<BigInt>) -> LinCons {
        LinCons { expr, op: CmpOp::Le, k: k.into() }
    }

    pub fn eq(expr: LinExpr, k: impl Into<BigInt>) -> LinCons {
        LinCons { expr, op: CmpOp::Eq, k: k.into() }
    }

    /// `d ≤ k`
    pub fn dim_le(d: Dim, k: impl Into<BigInt>) -> LinCons {
        LinCons::le(LinExpr::var(d), k)
    }

    /// `d ≥ k`, stored as `-d ≤ -k`
    pub fn dim_ge(d: Dim, k: impl Into<BigInt>) -> LinCons {
        LinCons::le(LinExpr::var(d).scaled(&BigInt::from(-1)), -k.into())
    }

    /// `d = k`
    pub fn dim_eq(d: Dim, k: impl Into<BigInt>) -> LinCons {
        LinCons::eq(LinExpr::var(d), k)
    }

    /// `a = b`
    pub fn dims_eq(a: Dim, b: Dim) -> LinCons {
        LinCons::eq(LinExpr::var(a).minus(&LinExpr::var(b)), 0)
    }

    /// `a ≤ b + k`
    pub fn dim_le_dim(a: Dim, b: Dim, k: impl Into<BigInt>) -> LinCons {
        LinCons::le(LinExpr::var(a).minus(&LinExpr::var(b)), k)
    }

    pub fn normalize(mut self) -> Normalized {
        if self.expr.is_zero() {
            let holds = match self.op {
                CmpOp::Eq => self.k.is_zero(),
                CmpOp::Le => !self.k.is_negative(),
            };
            return if holds { Normalized::Tauto } else { Normalized::Contra };
        }
        let g = self.expr.content();
        debug_assert!(g.is_positive());
        if !g.is_one() {
            match self.op {
                CmpOp::Le => {
                    self.expr = LinExpr {
                        terms: self.expr.terms.iter().map(|(d, c)| (*d, c / &g)).collect(),
                    };
                    self.k = self.k.div_floor(&g);
                }
                CmpOp::Eq => {
                    if !self.k.is_multiple_of(&g) {
                        return Normalized::Contra;
                    }
                    self.expr = LinExpr {
                        terms: self.expr.terms.iter().map(|(d, c)| (*d, c / &g)).collect(),
                    };
                    self.k = &self.k / &g;
                }
            }
        }
        if self.op == CmpOp::Eq {
            let lead_neg = self
                .expr
                .terms
                .values()
                .next()
                .map(|c| c.is_negative())
                .unwrap_or(false);
            if lead_neg {
                self.expr = self.expr.scaled(&BigInt::from(-1));
                self.k = -self.k;
            }
        }
        Normalized::Cons(self)
    }

    pub fn dims(&self) -> impl Iterator<Item = Dim> + '_ {
        self.expr.dims()
    }

    pub fn holds_at(&self, assign: &dyn Fn(Dim) -> Option<BigInt>) -> Option<bool> {
        let v = self.expr.eval(assign)?;
        Some(match self.op {
            CmpOp::Eq => v == self.k,
            CmpOp::Le => v <= self.k,
        })
    }
}

impl fmt::Display for LinCons {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            CmpOp::Eq => "=",
            CmpOp::Le => "<=",
        };
        write!(f, "{:?} {} {}", self.expr, op, self.k)
    }
}

impl fmt::Debug for LinCons {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Unary congruence `d ≡ residue (mod modulus)`, modulus ≥ 2.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Cong {
    pub residue: BigInt,
    pub modulus: BigInt,
}

impl Cong {
    fn new(residue: BigInt, modulus: BigInt) -> Cong {
        debug_assert!(modulus >= BigInt::from(2));
        Cong { residue: residue.mod_floor(&modulus), modulus }
    }

    /// CRT meet of two congruences on the same dim; `None` means conflict.
    fn meet(&self, other: &Cong) -> Option<Cong> {
        let g = self.modulus.gcd(&other.modulus);
        if !(&self.residue - &other.residue).is_multiple_of(&g) {
            return None;
        }
        let l = self.modulus.lcm(&other.modulus);
        // Find r ≡ self.residue (mod self.m), r ≡ other.residue (mod other.m).
        let mut r = self.residue.clone();
        while !(&r - &other.residue).is_multiple_of(&other.modulus) {
            r += &self.modulus;
        }
        Some(Cong::new(r, l))
    }

    /// Weakest congruence implied by both.
    fn join(&self, other: &Cong) -> Option<Cong> {
        let g = self
            .modulus
            .gcd(&other.modulus)
            .gcd(&(&self.residue - &other.residue));
        if g >= BigInt::from(2) {
            Some(Cong::new(self.residue.clone(), g))
        } else {
            None
        }
    }
}

/// A conjunction of linear constraints and congruences, or bottom.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct NumVal {
    bottom: bool,
    lin: BTreeSet<LinCons>,
    congs: BTreeMap<Dim, Cong>,
}

/// Constraint-count cap for Fourier-Motzkin intermediates; past it the
/// operation falls back to the sound imprecise answer.
pub const FM_CAP: usize = 6000;

impl NumVal {
    pub fn top() -> NumVal {
        NumVal::default()
    }

    pub fn bottom() -> NumVal {
        NumVal { bottom: true, ..NumVal::default() }
    }

    pub fn is_bottom(&self) -> bool {
        self.bottom
    }

    pub fn is_top(&self) -> bool {
        !self.bottom && self.lin.is_empty() && self.congs.is_empty()
    }

    pub fn lincons(&self) -> impl Iterator<Item = &LinCons> {
        self.lin.iter()
    }

    pub fn congs(&self) -> impl Iterator<Item = (Dim, &Cong)> {
        self.congs.iter().map(|(d, c)| (*d, c))
    }

    pub fn dims(&self) -> BTreeSet<Dim> {
        let mut out = BTreeSet::new();
        for c in &self.lin {
            out.extend(c.dims());
        }
        out.extend(self.congs.keys().copied());
        out
    }

    pub fn of_cons<I: IntoIterator<Item = LinCons>>(cons: I) -> NumVal {
        let mut v = NumVal::top();
        for c in cons {
            v.meet_cons(c);
        }
        v
    }

    /// Conjoin one linear constraint (checks satisfiability).
    pub fn meet_cons(&mut self, c: LinCons) {
        if self.bottom {
            return;
        }
        match c.normalize() {
            Normalized::Tauto => {}
            Normalized::Contra => *self = NumVal::bottom(),
            Normalized::Cons(c) => {
                if self.lin.insert(c) {
                    self.recheck();
                }
            }
        }
    }

    /// Conjoin several constraints with a single satisfiability check.
    pub fn meet_all<I: IntoIterator<Item = LinCons>>(&mut self, cons: I) {
        if self.bottom {
            return;
        }
        let mut changed = false;
        for c in cons {
            match c.normalize() {
                Normalized::Tauto => {}
                Normalized::Contra => {
                    *self = NumVal::bottom();
                    return;
                }
                Normalized::Cons(c) => changed |= self.lin.insert(c),
            }
        }
        if changed {
            self.recheck();
        }
    }

    /// Conjoin the congruence `d ≡ r (mod m)`.
    pub fn meet_cong(&mut self, d: Dim, residue: impl Into<BigInt>, modulus: impl Into<BigInt>) {
        if self.bottom {
            return;
        }
        let m = modulus.into();
        if m < BigInt::from(2) {
            return;
        }
        let c = Cong::new(residue.into(), m);
        match self.congs.get(&d) {
            None => {
                self.congs.insert(d, c);
            }
            Some(old) => match old.meet(&c) {
                Some(merged) => {
                    self.congs.insert(d, merged);
                }
                None => {
                    *self = NumVal::bottom();
                    return;
                }
            },
        }
        self.recheck();
    }

    /// Conjunction of two values over the same dimension universe.
    pub fn meet(&self, other: &NumVal) -> NumVal {
        if self.bottom || other.bottom {
            return NumVal::bottom();
        }
        let mut out = self.clone();
        for c in &other.lin {
            out.lin.insert(c.clone());
        }
        for (d, c) in &other.congs {
            match out.congs.get(d) {
                None => {
                    out.congs.insert(*d, c.clone());
                }
                Some(old) => match old.meet(c) {
                    Some(m) => {
                        out.congs.insert(*d, m);
                    }
                    None => return NumVal::bottom(),
                },
            }
        }
        out.recheck();
        out
    }

    fn recheck(&mut self) {
        if !solve::is_sat(&self.lin, &self.congs) {
            *self = NumVal::bottom();
        }
    }

    /// Sound entailment: `Yes` only if every integer point of `self`
    /// satisfies `c`.
    pub fn entails(&self, c: &LinCons) -> bool {
        if self.bottom {
            return true;
        }
        let c = match c.clone().normalize() {
            Normalized::Tauto => return true,
            Normalized::Contra => return false,
            Normalized::Cons(c) => c,
        };
        match c.op {
            CmpOp::Le => self.refutes(&neg_le(&c)),
            CmpOp::Eq => {
                let le = LinCons::le(c.expr.clone(), c.k.clone());
                let ge = LinCons::le(c.expr.scaled(&BigInt::from(-1)), -c.k.clone());
                self.entails(&le) && self.entails(&ge)
            }
        }
    }

    /// True iff `self ∧ extra` is provably unsatisfiable over the integers.
    fn refutes(&self, extra: &LinCons) -> bool {
        let mut lin = self.lin.clone();
        match extra.clone().normalize() {
            Normalized::Tauto => {}
            Normalized::Contra => return true,
            Normalized::Cons(c) => {
                lin.insert(c);
            }
        }
        !solve::is_sat(&lin, &self.congs)
    }

    /// Entailment of a whole value: every constraint of `other` follows.
    pub fn entails_all(&self, other: &NumVal) -> bool {
        if self.bottom {
            return true;
        }
        if other.bottom {
            return false;
        }
        for c in &other.lin {
            if !self.entails(c) {
                return false;
            }
        }
        for (d, c) in &other.congs {
            if !self.entails_cong(*d, c) {
                return false;
            }
        }
        true
    }

    fn entails_cong(&self, d: Dim, c: &Cong) -> bool {
        if let Some(own) = self.congs.get(&d) {
            if own.modulus.is_multiple_of(&c.modulus)
                && (&own.residue - &c.residue).is_multiple_of(&c.modulus)
            {
                return true;
            }
        }
        // A pinned constant entails any congruence it satisfies.
        if let (Some(lo), Some(hi)) = self.bounds(d) {
            if lo == hi {
                return (&lo - &c.residue).is_multiple_of(&c.modulus);
            }
        }
        false
    }

    /// Derives the best [lo, hi] interval for `d` (rational projection with
    /// congruence tightening).
    pub fn bounds(&self, d: Dim) -> (Option<BigInt>, Option<BigInt>) {
        if self.bottom {
            return (Some(BigInt::zero()), Some(-BigInt::one()));
        }
        solve::bounds(&self.lin, &self.congs, d)
    }

    /// Over-approximating join per the constraint-filter + interval-hull +
    /// congruence-join recipe.
    pub fn join(&self, other: &NumVal) -> NumVal {
        if self.bottom {
            return other.clone();
        }
        if other.bottom {
            return self.clone();
        }
        let mut out = NumVal::top();
        for c in self.lin.iter() {
            if other.entails(c) {
                out.lin.insert(c.clone());
            }
        }
        for c in other.lin.iter() {
            if !out.lin.contains(c) && self.entails(c) {
                out.lin.insert(c.clone());
            }
        }
        // Interval hull on every dim either side constrains.
        let mut hull_dims = self.dims();
        hull_dims.extend(other.dims());
        for d in hull_dims {
            let (lo_a, hi_a) = self.bounds(d);
            let (lo_b, hi_b) = other.bounds(d);
            if let (Some(a), Some(b)) = (&lo_a, &lo_b) {
                out.lin.extend(norm_cons(LinCons::dim_ge(d, a.min(b).clone())));
            }
            if let (Some(a), Some(b)) = (&hi_a, &hi_b) {
                out.lin.extend(norm_cons(LinCons::dim_le(d, a.max(b).clone())));
            }
            if let Some(c) = joined_cong(self, other, d, (&lo_a, &hi_a), (&lo_b, &hi_b)) {
                out.congs.insert(d, c);
            }
        }
        out
    }

    /// Standard constraint-dropping widening; stabilizes every ascending
    /// chain.
    pub fn widen(&self, other: &NumVal) -> NumVal {
        if self.bottom {
            return other.clone();
        }
        if other.bottom {
            return self.clone();
        }
        let mut out = NumVal::top();
        for c in self.lin.iter() {
            if other.entails(c) {
                out.lin.insert(c.clone());
            }
        }
        for (d, c) in &self.congs {
            let kept = match other.congs.get(d) {
                Some(oc) => c.join(oc),
                None => match other.bounds(*d) {
                    (Some(lo), Some(hi)) if lo == hi => c.join(&Cong {
                        residue: lo,
                        modulus: c.modulus.clone(),
                    }),
                    _ => None,
                },
            };
            if let Some(k) = kept {
                out.congs.insert(*d, k);
            }
        }
        out
    }

    /// Eliminates the given dims (Gauss on equalities, Fourier-Motzkin on
    /// inequalities; congruences transfer through unary substitutions).
    pub fn project(&self, dims: &BTreeSet<Dim>) -> NumVal {
        if self.bottom {
            return NumVal::bottom();
        }
        match solve::project(&self.lin, &self.congs, dims) {
            None => NumVal::bottom(),
            Some((lin, congs)) => {
                let mut out = NumVal { bottom: false, lin, congs };
                out.recheck();
                out
            }
        }
    }

    pub fn forget(&self, d: Dim) -> NumVal {
        let mut s = BTreeSet::new();
        s.insert(d);
        self.project(&s)
    }

    /// Strongest post of `d := expr + k`.
    pub fn assign(&self, d: Dim, expr: &LinExpr, k: impl Into<BigInt>) -> NumVal {
        if self.bottom {
            return NumVal::bottom();
        }
        let k = k.into();
        let tmp = Dim::Tmp(0);
        debug_assert!(!self.dims().contains(&tmp));
        let mut v = self.clone();
        let mut eq = expr.clone();
        eq.add_term(tmp, BigInt::from(-1));
        v.meet_cons(LinCons::eq(eq, -&k));
        // Congruence of the assigned value from rhs congruences and coeffs.
        let mut g = BigInt::zero();
        let mut r = BigInt::zero();
        for (dim, c) in expr.terms() {
            match self.congs.get(dim) {
                Some(cg) => {
                    g = g.gcd(&(c * &cg.modulus));
                    r += c * &cg.residue;
                }
                None => g = g.gcd(c),
            }
        }
        if g >= BigInt::from(2) {
            v.meet_cong(tmp, r + k, g);
        }
        let mut kill = BTreeSet::new();
        kill.insert(d);
        let v = v.project(&kill);
        let mut map = BTreeMap::new();
        map.insert(tmp, d);
        v.rename(&map)
    }

    /// Havoc: `d` becomes unconstrained.
    pub fn havoc(&self, d: Dim) -> NumVal {
        self.forget(d)
    }

    /// Applies a dimension renaming (must be injective on occurring dims).
    pub fn rename(&self, map: &BTreeMap<Dim, Dim>) -> NumVal {
        if self.bottom {
            return NumVal::bottom();
        }
        if map.is_empty() {
            return self.clone();
        }
        let mut out = NumVal::top();
        for c in &self.lin {
            let expr = LinExpr::from_terms(
                c.expr
                    .terms()
                    .map(|(d, co)| (*map.get(d).unwrap_or(d), co.clone())),
            );
            out.lin.extend(norm_cons(LinCons { expr, op: c.op, k: c.k.clone() }));
        }
        for (d, c) in &self.congs {
            out.congs.insert(*map.get(d).unwrap_or(d), c.clone());
        }
        out
    }

    /// Evaluates all constraints under a total assignment.
    pub fn holds_at(&self, assign: &dyn Fn(Dim) -> Option<BigInt>) -> bool {
        if self.bottom {
            return false;
        }
        for c in &self.lin {
            match c.holds_at(assign) {
                Some(true) => {}
                _ => return false,
            }
        }
        for (d, c) in &self.congs {
            match assign(*d) {
                Some(v) => {
                    if !(&v - &c.residue).is_multiple_of(&c.modulus) {
                        return false;
                    }
                }
                None => return false,
            }
        }
        true
    }

    /// Textual dump, one constraint per line.
    pub fn dump_lines(&self) -> Vec<String> {
        if self.bottom {
            return vec!["false".to_string()];
        }
        let mut out: Vec<String> = self.lin.iter().map(|c| format!("{}", c)).collect();
        for (d, c) in &self.congs {
            out.push(format!("{:?} == {} mod {}", d, c.residue, c.modulus));
        }
        out
    }
}

impl fmt::Debug for NumVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bottom {
            return write!(f, "false");
        }
        if self.is_top() {
            return write!(f, "true");
        }
        write!(f, "{{{}}}", self.dump_lines().join(" /\\ "))
    }
}

fn norm_cons(c: LinCons) -> Option<LinCons> {
    match c.normalize() {
        Normalized::Cons(c) => Some(c),
        _ => None,
    }
}

/// Negation of `expr ≤ k` over the integers: `-expr ≤ -k-1`.
fn neg_le(c: &LinCons) -> LinCons {
    debug_assert_eq!(c.op, CmpOp::Le);
    LinCons::le(c.expr.scaled(&BigInt::from(-1)), -&c.k - 1)
}

/// Congruence join used by `join`: combines stored congruences and pinned
/// constants of both sides.
fn joined_cong(
    a: &NumVal,
    b: &NumVal,
    d: Dim,
    ab: (&Option<BigInt>, &Option<BigInt>),
    bb: (&Option<BigInt>, &Option<BigInt>),
) -> Option<Cong> {
    let eff = |v: &NumVal, (lo, hi): (&Option<BigInt>, &Option<BigInt>)| -> Option<Cong> {
        if let Some(c) = v.congs.get(&d) {
            return Some(c.clone());
        }
        match (lo, hi) {
            (Some(l), Some(h)) if l == h => Some(Cong { residue: l.clone(), modulus: BigInt::zero() }),
            _ => None,
        }
    };
    let ca = eff(a, ab)?;
    let cb = eff(b, bb)?;
    // modulus 0 encodes an exact constant here.
    let g = ca.modulus.gcd(&cb.modulus).gcd(&(&ca.residue - &cb.residue));
    if g >= BigInt::from(2) {
        Some(Cong::new(ca.residue, g))
    } else {
        None
    }
}

#[cfg(test)]
mod tests;
