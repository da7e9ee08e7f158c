//! Gauss / Fourier-Motzkin machinery behind the numeric domain.
//!
//! Everything here is proof-carrying in one direction only: `is_sat` may
//! answer `true` for an unsatisfiable system (after hitting [`FM_CAP`]), but
//! `false` is always a genuine integer-infeasibility proof built from
//! rational elimination plus congruence interval tightening.

use super::{CmpOp, Cong, Dim, LinCons, Normalized, FM_CAP};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};

struct Sys {
    eqs: Vec<LinCons>,
    les: Vec<LinCons>,
    congs: BTreeMap<Dim, Cong>,
    contra: bool,
}

impl Sys {
    fn new(lin: &BTreeSet<LinCons>, congs: &BTreeMap<Dim, Cong>) -> Sys {
        let mut s = Sys {
            eqs: Vec::new(),
            les: Vec::new(),
            congs: congs.clone(),
            contra: false,
        };
        for c in lin {
            s.push(c.clone());
        }
        s
    }

    fn push(&mut self, c: LinCons) {
        match c.normalize() {
            Normalized::Tauto => {}
            Normalized::Contra => self.contra = true,
            Normalized::Cons(c) => match c.op {
                CmpOp::Eq => self.eqs.push(c),
                CmpOp::Le => self.les.push(c),
            },
        }
    }

    fn add_cong(&mut self, d: Dim, c: Cong) {
        match self.congs.get(&d) {
            None => {
                self.congs.insert(d, c);
            }
            Some(old) => match old.meet(&c) {
                Some(m) => {
                    self.congs.insert(d, m);
                }
                None => self.contra = true,
            },
        }
    }

    fn dims(&self) -> BTreeSet<Dim> {
        let mut out = BTreeSet::new();
        for c in self.eqs.iter().chain(self.les.iter()) {
            out.extend(c.dims());
        }
        out
    }

    /// Substitutes the solution of `eq` (an equality containing `pivot`)
    /// into every other constraint, removing `pivot` from the system.
    fn gauss_step(&mut self, eq_idx: usize, pivot: Dim) {
        let eq = self.eqs.swap_remove(eq_idx);
        let a = eq.expr.coeff(pivot);
        debug_assert!(!a.is_zero());
        // Make the pivot coefficient positive for sign discipline.
        let (eq_expr, eq_k, a) = if a.is_negative() {
            (eq.expr.scaled(&BigInt::from(-1)), -eq.k.clone(), -a)
        } else {
            (eq.expr.clone(), eq.k.clone(), a)
        };
        let subst = |c: &LinCons| -> LinCons {
            let cp = c.expr.coeff(pivot);
            if cp.is_zero() {
                return c.clone();
            }
            let expr = c.expr.scaled(&a).minus(&eq_expr.scaled(&cp));
            let k = &c.k * &a - &cp * &eq_k;
            LinCons { expr, op: c.op, k }
        };
        let old_eqs = std::mem::take(&mut self.eqs);
        let old_les = std::mem::take(&mut self.les);
        for c in old_eqs {
            let n = subst(&c);
            self.push(n);
        }
        for c in old_les {
            let n = subst(&c);
            self.push(n);
        }
        // Transfer the pivot's congruence through `a*pivot = eq_k - rest`.
        if let Some(cg) = self.congs.remove(&pivot) {
            let mut rest = eq_expr.clone();
            rest.add_term(pivot, -a.clone());
            // rest ≡ eq_k - a*r (mod a*m)
            let m = &a * &cg.modulus;
            let target = &eq_k - &a * &cg.residue;
            let terms: Vec<_> = rest.terms().map(|(d, c)| (*d, c.clone())).collect();
            match terms.len() {
                0 => {
                    if !target.mod_floor(&m).is_zero() {
                        self.contra = true;
                    }
                }
                1 => {
                    let (q, c) = (terms[0].0, terms[0].1.clone());
                    // c*q ≡ target (mod m)
                    let g = c.gcd(&m);
                    if !target.mod_floor(&g).is_zero() {
                        self.contra = true;
                    } else {
                        let m2 = &m / &g;
                        if m2 >= BigInt::from(2) {
                            let c2 = (&c / &g).mod_floor(&m2);
                            let t2 = (&target / &g).mod_floor(&m2);
                            if let Some(inv) = mod_inverse(&c2, &m2) {
                                let r2 = (inv * t2).mod_floor(&m2);
                                self.add_cong(q, Cong { residue: r2, modulus: m2 });
                            }
                        }
                    }
                }
                _ => {} // non-unary residue constraint: dropped (sound)
            }
        }
    }

    /// Runs Gaussian elimination. With `targets = None` every equality is
    /// used up; otherwise only pivots from `targets` are eliminated.
    fn gauss(&mut self, targets: Option<&BTreeSet<Dim>>) {
        loop {
            if self.contra {
                return;
            }
            let mut found = None;
            'outer: for (i, eq) in self.eqs.iter().enumerate() {
                for d in eq.dims() {
                    let ok = match targets {
                        None => true,
                        Some(t) => t.contains(&d),
                    };
                    if ok {
                        found = Some((i, d));
                        break 'outer;
                    }
                }
            }
            match found {
                Some((i, d)) => self.gauss_step(i, d),
                None => return,
            }
        }
    }

    /// Derives the explicit single-variable bounds on `d` present in the
    /// inequality set, as (lower, upper).
    fn explicit_bounds(&self, d: Dim) -> (Option<BigInt>, Option<BigInt>) {
        let mut lo: Option<BigInt> = None;
        let mut hi: Option<BigInt> = None;
        for c in &self.les {
            if c.expr.terms.len() != 1 {
                continue;
            }
            let a = c.expr.coeff(d);
            if a.is_zero() {
                continue;
            }
            if a.is_positive() {
                let b = c.k.div_floor(&a);
                hi = Some(match hi {
                    None => b,
                    Some(h) => h.min(b),
                });
            } else {
                let b = ceil_div(&c.k, &a);
                lo = Some(match lo {
                    None => b,
                    Some(l) => l.max(b),
                });
            }
        }
        for c in &self.eqs {
            if c.expr.terms.len() == 1 && !c.expr.coeff(d).is_zero() {
                let a = c.expr.coeff(d);
                if c.k.is_multiple_of(&a) {
                    let v = &c.k / &a;
                    lo = Some(match lo {
                        None => v.clone(),
                        Some(l) => l.max(v.clone()),
                    });
                    hi = Some(match hi {
                        None => v,
                        Some(h) => h.min(v),
                    });
                } else {
                    // handled as Contra by normalization elsewhere
                }
            }
        }
        (lo, hi)
    }

    /// Congruence rounding of the explicit bounds of `d`; detects crossing.
    fn tighten(&mut self, d: Dim) {
        let Some(cg) = self.congs.get(&d).cloned() else {
            return;
        };
        let (lo, hi) = self.explicit_bounds(d);
        let mut new_lo = None;
        let mut new_hi = None;
        if let Some(l) = lo {
            // smallest x ≥ l with x ≡ r (mod m)
            let x = &l + (&cg.residue - &l).mod_floor(&cg.modulus);
            new_lo = Some(x);
        }
        if let Some(h) = hi {
            // largest x ≤ h with x ≡ r (mod m)
            let x = &h - (&h - &cg.residue).mod_floor(&cg.modulus);
            new_hi = Some(x);
        }
        if let (Some(l), Some(h)) = (&new_lo, &new_hi) {
            if l > h {
                self.contra = true;
                return;
            }
        }
        if let Some(l) = new_lo {
            self.push(LinCons::dim_ge(d, l));
        }
        if let Some(h) = new_hi {
            self.push(LinCons::dim_le(d, h));
        }
    }

    /// Fourier-Motzkin elimination of `d` from the inequalities.
    /// Returns false when the constraint cap was exceeded (caller must
    /// treat the result as unknown / fall back).
    fn fm_eliminate(&mut self, d: Dim) -> bool {
        self.tighten(d);
        if self.contra {
            return true;
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rest = Vec::new();
        for c in std::mem::take(&mut self.les) {
            let a = c.expr.coeff(d);
            if a.is_zero() {
                rest.push(c);
            } else if a.is_positive() {
                pos.push(c);
            } else {
                neg.push(c);
            }
        }
        if pos.len() * neg.len() + rest.len() > FM_CAP {
            self.les = rest;
            self.les.extend(pos);
            self.les.extend(neg);
            return false;
        }
        self.les = rest;
        for p in &pos {
            let a = p.expr.coeff(d);
            for n in &neg {
                let b = -n.expr.coeff(d);
                debug_assert!(a.is_positive() && b.is_positive());
                let expr = p.expr.scaled(&b).plus(&n.expr.scaled(&a));
                let k = &b * &p.k + &a * &n.k;
                self.push(LinCons { expr, op: CmpOp::Le, k });
                if self.contra {
                    return true;
                }
            }
        }
        true
    }

    /// Picks the next dim to eliminate: dims without congruences first
    /// (their tightening cannot help), then by FM cost.
    fn pick_dim(&self, candidates: &BTreeSet<Dim>) -> Option<Dim> {
        let mut best: Option<(bool, usize, Dim)> = None;
        for &d in candidates {
            let mut pos = 0usize;
            let mut neg = 0usize;
            for c in &self.les {
                let a = c.expr.coeff(d);
                if a.is_positive() {
                    pos += 1;
                } else if a.is_negative() {
                    neg += 1;
                }
            }
            let key = (self.congs.contains_key(&d), pos * neg, d);
            if best.as_ref().map(|b| key < *b).unwrap_or(true) {
                best = Some(key);
            }
        }
        best.map(|(_, _, d)| d)
    }
}

fn ceil_div(a: &BigInt, b: &BigInt) -> BigInt {
    // ceil(a / b); b may be negative.
    let (q, r) = a.div_mod_floor(b);
    if r.is_zero() {
        q
    } else {
        q + 1
    }
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(m))
    } else {
        None
    }
}

/// Satisfiability over the integers; `false` is a proof of unsatisfiability.
pub(super) fn is_sat(lin: &BTreeSet<LinCons>, congs: &BTreeMap<Dim, Cong>) -> bool {
    let mut sys = Sys::new(lin, congs);
    sys.gauss(None);
    if sys.contra {
        return false;
    }
    loop {
        let dims = sys.dims();
        if dims.is_empty() {
            return !sys.contra;
        }
        let d = sys.pick_dim(&dims).unwrap();
        if !sys.fm_eliminate(d) {
            return true; // cap exceeded: unknown, report satisfiable
        }
        if sys.contra {
            return false;
        }
    }
}

/// Best derivable integer interval for `d`.
pub(super) fn bounds(
    lin: &BTreeSet<LinCons>,
    congs: &BTreeMap<Dim, Cong>,
    d: Dim,
) -> (Option<BigInt>, Option<BigInt>) {
    let mut sys = Sys::new(lin, congs);
    let mut others: BTreeSet<Dim> = sys.dims();
    others.remove(&d);
    sys.gauss(Some(&others));
    // An equality still mentioning `d` pins it after solving.
    loop {
        let mut dims = sys.dims();
        dims.remove(&d);
        if dims.is_empty() || sys.contra {
            break;
        }
        let next = sys.pick_dim(&dims).unwrap();
        if !sys.fm_eliminate(next) {
            break;
        }
    }
    if sys.contra {
        return (Some(BigInt::zero()), Some(-BigInt::one()));
    }
    // Solve remaining equalities on d alone.
    for eq in &sys.eqs {
        if eq.expr.terms.len() == 1 && !eq.expr.coeff(d).is_zero() {
            let a = eq.expr.coeff(d);
            if eq.k.is_multiple_of(&a) {
                let v = &eq.k / &a;
                return (Some(v.clone()), Some(v));
            }
        }
    }
    let (mut lo, mut hi) = sys.explicit_bounds(d);
    if let Some(cg) = sys.congs.get(&d) {
        if let Some(l) = lo {
            lo = Some(&l + (&cg.residue - &l).mod_floor(&cg.modulus));
        }
        if let Some(h) = hi {
            hi = Some(&h - (&h - &cg.residue).mod_floor(&cg.modulus));
        }
    }
    (lo, hi)
}

/// Eliminates `targets`, returning the projected system or `None` when a
/// contradiction surfaced. Congruences on eliminated dims transfer through
/// unary substitutions or are dropped.
pub(super) fn project(
    lin: &BTreeSet<LinCons>,
    congs: &BTreeMap<Dim, Cong>,
    targets: &BTreeSet<Dim>,
) -> Option<(BTreeSet<LinCons>, BTreeMap<Dim, Cong>)> {
    let mut sys = Sys::new(lin, congs);
    sys.gauss(Some(targets));
    for &d in targets {
        if sys.contra {
            break;
        }
        if !sys.dims().contains(&d) {
            continue;
        }
        if !sys.fm_eliminate(d) {
            // Cap exceeded: drop everything mentioning d (sound fallback).
            sys.les.retain(|c| !c.expr.mentions(d));
            sys.eqs.retain(|c| !c.expr.mentions(d));
        }
    }
    if sys.contra {
        return None;
    }
    let mut out = BTreeSet::new();
    for c in sys.eqs.into_iter().chain(sys.les.into_iter()) {
        debug_assert!(!c.dims().any(|d| targets.contains(&d)));
        out.insert(c);
    }
    let mut out_congs = BTreeMap::new();
    for (d, c) in sys.congs {
        if !targets.contains(&d) {
            out_congs.insert(d, c);
        }
    }
    Some((out, out_congs))
}
