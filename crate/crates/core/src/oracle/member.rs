//! Membership of a concrete state in the concretization of an abstract
//! value: a backtracking witness search over segment absorption counts and
//! flag values, verified against the atom semantics and the pure part.

use super::sat::{sat_atom, Assignment, AtomRef};
use super::ConcreteState;
use crate::num::Dim;
use crate::pure::{Guard, GuardRhs, SeqItem};
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::{Field, IVar, SymLoc, VarId};
use crate::value::{AbstractValue, Binding};
use num_bigint::BigInt;
use std::collections::BTreeSet;

/// True iff some binding of `value` admits a witness for `state`.
/// `hli` is the ghost break variable of the program.
pub fn member(state: &ConcreteState, value: &AbstractValue, hli: VarId, hdr: i64) -> bool {
    match value {
        AbstractValue::Top => true,
        AbstractValue::Disj(ds) => ds
            .iter()
            .any(|b| member_binding(state, b, hli, hdr).is_some()),
    }
}

/// Searches a satisfying interpretation of the binding's symbolic locations,
/// words and flags for the given state.
pub fn member_binding(
    state: &ConcreteState,
    b: &Binding,
    hli: VarId,
    hdr: i64,
) -> Option<Assignment> {
    let mut asg = Assignment::default();
    // roots: program variables pin their locations
    for (v, l) in &b.env.addr {
        let cv = if *v == hli {
            state.brk
        } else {
            state.var(*v)?
        };
        if l.is_nil() {
            if cv != 0 {
                return None;
            }
            continue;
        }
        match asg.locs.get(l) {
            Some(prev) if *prev != cv => return None,
            _ => {
                asg.locs.insert(*l, cv);
            }
        }
    }
    let ctx = Ctx { state, b, hdr, hli };
    ctx.heap_walk(0, state.base, asg)
}

struct Ctx<'a> {
    state: &'a ConcreteState,
    b: &'a Binding,
    hdr: i64,
    hli: VarId,
}

impl<'a> Ctx<'a> {
    fn assign_loc(&self, asg: &mut Assignment, l: SymLoc, v: i64) -> bool {
        if l.is_nil() {
            return v == 0;
        }
        match asg.locs.get(&l) {
            Some(prev) => *prev == v,
            None => {
                asg.locs.insert(l, v);
                true
            }
        }
    }

    fn assign_ivar(&self, asg: &mut Assignment, i: IVar, v: i64) -> bool {
        match asg.ivars.get(&i) {
            Some(prev) => *prev == v,
            None => {
                asg.ivars.insert(i, v);
                true
            }
        }
    }

    fn chunk_at(&self, a: i64) -> Option<(i64, i64)> {
        let size = self.state.read_field(a, Field::Size)?;
        if size < 1 {
            return None;
        }
        let end = a + size * self.hdr;
        if end > self.state.brk {
            return None;
        }
        Some((size, end))
    }

    /// Matches heap atoms left to right, tiling [base, brk).
    fn heap_walk(&self, idx: usize, pos: i64, asg: Assignment) -> Option<Assignment> {
        let atoms = &self.b.shape.heap;
        if idx == atoms.len() {
            if pos != self.state.brk {
                return None;
            }
            return self.free_walk(0, asg, &mut BTreeSet::new());
        }
        let atom = &atoms[idx];
        let mut asg = asg;
        if !self.assign_loc(&mut asg, atom.from(), pos) {
            return None;
        }
        match *atom {
            HeapAtom::Blk { to, .. } => {
                let candidates: Vec<i64> = match asg.loc(to) {
                    Some(v) => vec![v],
                    None => (pos..=self.state.brk).collect(),
                };
                for end in candidates {
                    if end < pos || end > self.state.brk {
                        continue;
                    }
                    let mut a2 = asg.clone();
                    if !self.assign_loc(&mut a2, to, end) {
                        continue;
                    }
                    if let Some(done) = self.heap_walk(idx + 1, end, a2) {
                        return Some(done);
                    }
                }
                None
            }
            HeapAtom::Chd { to, .. } => {
                let end = pos + self.hdr;
                if end > self.state.brk || !self.assign_loc(&mut asg, to, end) {
                    return None;
                }
                self.heap_walk(idx + 1, end, asg)
            }
            HeapAtom::Chk { to, .. } => {
                let (_, end) = self.chunk_at(pos)?;
                if !self.assign_loc(&mut asg, to, end) {
                    return None;
                }
                self.heap_walk(idx + 1, end, asg)
            }
            HeapAtom::PointsTo { .. } => {
                // never produced by the transformers; a 4-byte cell
                self.heap_walk(idx + 1, pos + 4, asg)
            }
            HeapAtom::Hls { to, seq, .. } => {
                let runs = self.heap_runs(pos, asg.loc(to));
                for (word, end) in runs {
                    let mut a2 = asg.clone();
                    if !self.assign_loc(&mut a2, to, end) {
                        continue;
                    }
                    a2.seqs.insert(seq, word);
                    if let Some(done) = self.heap_walk(idx + 1, end, a2) {
                        return Some(done);
                    }
                }
                None
            }
            HeapAtom::Hlsc { to, seq, lflag, rflag, .. } => {
                let runs = self.heap_runs(pos, asg.loc(to));
                for (word, end) in runs {
                    let lcands: Vec<i64> = match asg.ivars.get(&lflag) {
                        Some(v) => vec![*v],
                        None => vec![0, 1],
                    };
                    for lf in lcands {
                        // alternation along the word given the left flag
                        let mut prev = lf;
                        let mut ok = true;
                        for &e in &word {
                            let free = if self.state.free_shadow.contains(&e) { 1 } else { 0 };
                            if prev == 1 && free == 1 {
                                ok = false;
                                break;
                            }
                            prev = free;
                        }
                        if !ok {
                            continue;
                        }
                        let mut a2 = asg.clone();
                        if !self.assign_ivar(&mut a2, lflag, lf)
                            || !self.assign_ivar(&mut a2, rflag, prev)
                            || !self.assign_loc(&mut a2, to, end)
                        {
                            continue;
                        }
                        a2.seqs.insert(seq, word.clone());
                        if let Some(done) = self.heap_walk(idx + 1, end, a2) {
                            return Some(done);
                        }
                    }
                }
                None
            }
        }
    }

    /// All chunk runs starting at `pos`: words with their end positions,
    /// shortest first; a known end restricts to the matching run.
    fn heap_runs(&self, pos: i64, known_end: Option<i64>) -> Vec<(Vec<i64>, i64)> {
        let mut out = Vec::new();
        let mut word = Vec::new();
        let mut a = pos;
        loop {
            if known_end.map(|e| e == a).unwrap_or(true) {
                out.push((word.clone(), a));
            }
            match self.chunk_at(a) {
                Some((_, end)) => {
                    word.push(a);
                    a = end;
                }
                None => break,
            }
        }
        out
    }

    /// Matches free atoms in chain order; `used` tracks footprint bytes.
    fn free_walk(
        &self,
        idx: usize,
        asg: Assignment,
        used: &mut BTreeSet<i64>,
    ) -> Option<Assignment> {
        let atoms = &self.b.shape.free;
        if idx == atoms.len() {
            return self.finalize(asg);
        }
        let atom = &atoms[idx];
        let from = asg.loc(atom.from())?; // anchored by env, heap or chain
        match *atom {
            FreeAtom::Fck { from: f, to } => {
                let mut asg = asg;
                if !self.assign_loc(&mut asg, f, from) {
                    return None;
                }
                if !self.state.free_shadow.contains(&from) {
                    return None;
                }
                let (_, end) = self.chunk_at(from)?;
                let fnx = self.state.read_field(from, Field::Fnx)?;
                if !self.assign_loc(&mut asg, to, fnx) {
                    return None;
                }
                if !self.claim(used, from, end) {
                    return None;
                }
                let r = self.free_walk(idx + 1, asg, used);
                if r.is_none() {
                    self.unclaim(used, from, end);
                }
                r
            }
            FreeAtom::Fls { to, seq, .. } | FreeAtom::Flso { to, seq, .. } => {
                let lbound = match *atom {
                    FreeAtom::Flso { lbound, .. } => Some(lbound),
                    _ => None,
                };
                let last = match *atom {
                    FreeAtom::Flso { last, .. } => Some(last),
                    _ => None,
                };
                // enumerate chain prefixes from `from`
                let mut word: Vec<i64> = Vec::new();
                let mut cursor = from;
                let known_to = asg.loc(to);
                loop {
                    let fits = known_to.map(|t| t == cursor).unwrap_or(true);
                    if fits {
                        let mut a2 = asg.clone();
                        let mut ok = self.assign_loc(&mut a2, to, cursor);
                        if let Some(lb) = lbound {
                            // sorted above the bound parameter
                            if let Some(lbv) = a2.loc(lb) {
                                let mut prev = lbv;
                                for &e in &word {
                                    if e <= prev {
                                        ok = false;
                                        break;
                                    }
                                    prev = e;
                                }
                            } else {
                                ok = false;
                            }
                        }
                        if ok {
                            if let Some(la) = last {
                                let lv = if word.is_empty() {
                                    a2.loc(lbound.unwrap()).unwrap_or(0)
                                } else {
                                    *word.last().unwrap()
                                };
                                ok = self.assign_loc(&mut a2, la, lv);
                            }
                        }
                        if ok {
                            a2.seqs.insert(seq, word.clone());
                            let mut spans = Vec::new();
                            let mut claimed = true;
                            for &e in &word {
                                let (_, end) = self.chunk_at(e).unwrap();
                                if !self.claim(used, e, end) {
                                    claimed = false;
                                    break;
                                }
                                spans.push((e, end));
                            }
                            if claimed {
                                if let Some(done) = self.free_walk(idx + 1, a2, used) {
                                    return Some(done);
                                }
                            }
                            for (s, e) in spans {
                                self.unclaim(used, s, e);
                            }
                        }
                    }
                    // extend the run by one free chunk
                    if cursor == 0 || !self.state.free_shadow.contains(&cursor) {
                        break;
                    }
                    if self.chunk_at(cursor).is_none() {
                        break;
                    }
                    if word.contains(&cursor) {
                        break; // looped
                    }
                    word.push(cursor);
                    cursor = self.state.read_field(cursor, Field::Fnx)?;
                }
                None
            }
        }
    }

    fn claim(&self, used: &mut BTreeSet<i64>, lo: i64, hi: i64) -> bool {
        for a in lo..hi {
            if used.contains(&a) {
                return false;
            }
        }
        for a in lo..hi {
            used.insert(a);
        }
        true
    }

    fn unclaim(&self, used: &mut BTreeSet<i64>, lo: i64, hi: i64) {
        for a in lo..hi {
            used.remove(&a);
        }
    }

    /// Verifies atoms semantically, the ∋ exactness, both word equations,
    /// the existential constraints and every universal entry.
    fn finalize(&self, asg: Assignment) -> Option<Assignment> {
        // leftover flag dims of the pure part get searched exhaustively
        let mut free_ivars: Vec<IVar> = Vec::new();
        for d in self.b.pure.exists.dims() {
            if let Dim::IVar(i) = d {
                if !asg.ivars.contains_key(&i) {
                    free_ivars.push(i);
                }
            }
        }
        let combos = 1usize << free_ivars.len().min(16);
        for mask in 0..combos {
            let mut a2 = asg.clone();
            for (bit, iv) in free_ivars.iter().enumerate() {
                a2.ivars.insert(*iv, ((mask >> bit) & 1) as i64);
            }
            if self.finalize_fixed(&a2).is_some() {
                return Some(a2);
            }
        }
        None
    }

    fn finalize_fixed(&self, asg: &Assignment) -> Option<()> {
        // re-verify every atom against the semantics it claims
        for atom in &self.b.shape.heap {
            let dom = self.heap_atom_dom(atom, asg)?;
            if !sat_atom(self.state, self.hdr, &dom, AtomRef::Heap(atom), asg) {
                return None;
            }
        }
        for atom in &self.b.shape.free {
            let dom = self.free_atom_dom(atom, asg)?;
            if !sat_atom(self.state, self.hdr, &dom, AtomRef::Free(atom), asg) {
                return None;
            }
        }
        // hierarchical exactness: the free level covers exactly the free
        // chunks of the heap level
        let heap_word = self.level_word(true, asg)?;
        let free_word = self.level_word(false, asg)?;
        let free_set: BTreeSet<i64> = free_word.iter().copied().collect();
        for &c in &heap_word {
            let shadow = self.state.free_shadow.contains(&c);
            if shadow != free_set.contains(&c) {
                return None;
            }
        }
        for &c in &free_word {
            if !heap_word.contains(&c) {
                return None;
            }
        }
        // word equations (R2): both sides evaluate to the level words
        if self.eval_seq(&self.b.pure.seqs.wh, asg)? != heap_word {
            return None;
        }
        if self.eval_seq(&self.b.pure.seqs.wf, asg)? != free_word {
            return None;
        }
        // numeric side
        let val = |d: Dim| self.dim_value(d, asg, None);
        if !self.b.pure.exists.holds_at(&val) {
            return None;
        }
        for ((w, g), body) in &self.b.pure.univs {
            let word = asg.seqs.get(w)?;
            for &elem in word {
                if self.guard_holds(*g, elem, asg)? {
                    let valb = |d: Dim| self.dim_value(d, asg, Some(elem));
                    if !body.holds_at(&valb) {
                        return None;
                    }
                }
            }
        }
        Some(())
    }

    /// The footprint a heap atom occupies, from its assigned endpoints.
    fn heap_atom_dom(&self, atom: &HeapAtom, asg: &Assignment) -> Option<BTreeSet<i64>> {
        let lo = asg.loc(atom.from())?;
        let hi = match atom {
            HeapAtom::PointsTo { .. } => lo + 4,
            _ => asg.loc(atom.to().unwrap())?,
        };
        Some((lo..hi).collect())
    }

    fn free_atom_dom(&self, atom: &FreeAtom, asg: &Assignment) -> Option<BTreeSet<i64>> {
        let mut dom = BTreeSet::new();
        let mut add_chunk = |a: i64| -> Option<()> {
            let (_, end) = self.chunk_at(a)?;
            for b in a..end {
                dom.insert(b);
            }
            Some(())
        };
        match atom {
            FreeAtom::Fck { from, .. } => add_chunk(asg.loc(*from)?)?,
            FreeAtom::Fls { seq, .. } | FreeAtom::Flso { seq, .. } => {
                for &e in asg.seqs.get(seq)? {
                    add_chunk(e)?;
                }
            }
        }
        Some(dom)
    }

    /// Concatenated chunk-start word of one level under the assignment.
    fn level_word(&self, heap: bool, asg: &Assignment) -> Option<Vec<i64>> {
        let mut out = Vec::new();
        if heap {
            for atom in &self.b.shape.heap {
                match atom {
                    HeapAtom::Chd { from, .. } | HeapAtom::Chk { from, .. } => {
                        out.push(asg.loc(*from)?)
                    }
                    HeapAtom::Hls { seq, .. } | HeapAtom::Hlsc { seq, .. } => {
                        out.extend_from_slice(asg.seqs.get(seq)?)
                    }
                    HeapAtom::Blk { .. } | HeapAtom::PointsTo { .. } => {}
                }
            }
        } else {
            for atom in &self.b.shape.free {
                match atom {
                    FreeAtom::Fck { from, .. } => out.push(asg.loc(*from)?),
                    FreeAtom::Fls { seq, .. } | FreeAtom::Flso { seq, .. } => {
                        out.extend_from_slice(asg.seqs.get(seq)?)
                    }
                }
            }
        }
        Some(out)
    }

    fn eval_seq(&self, e: &crate::pure::SeqExpr, asg: &Assignment) -> Option<Vec<i64>> {
        let mut out = Vec::new();
        for item in &e.0 {
            match item {
                SeqItem::Lit(l) => out.push(asg.loc(*l)?),
                SeqItem::Var(w) => out.extend_from_slice(asg.seqs.get(w)?),
            }
        }
        Some(out)
    }

    fn dim_value(&self, d: Dim, asg: &Assignment, elem: Option<i64>) -> Option<BigInt> {
        match d {
            Dim::Var(v) => {
                let cv = if v == self.hli {
                    self.state.brk
                } else {
                    self.state.var(v)?
                };
                Some(cv.into())
            }
            Dim::Loc(l) => asg.loc(l).map(BigInt::from),
            Dim::Fld(l, f) => {
                let a = asg.loc(l)?;
                self.state.read_field(a, f).map(BigInt::from)
            }
            Dim::IVar(i) => asg.ivars.get(&i).map(|v| BigInt::from(*v)),
            Dim::UFld(f) => {
                let e = elem?;
                self.state.read_field(e, f).map(BigInt::from)
            }
            Dim::Tmp(_) => None,
        }
    }

    fn guard_holds(&self, g: Guard, elem: i64, asg: &Assignment) -> Option<bool> {
        match g {
            Guard::True => Some(true),
            Guard::IsFree(b) => {
                Some(self.state.free_shadow.contains(&elem) == b)
            }
            Guard::Size(rel, rhs) => {
                let s = self.state.read_field(elem, Field::Size)?;
                let r = match rhs {
                    GuardRhs::Const(k) => k,
                    GuardRhs::Dim(d) => {
                        use num_traits::ToPrimitive;
                        self.dim_value(d, asg, None)?.to_i64()?
                    }
                };
                Some(match rel {
                    crate::pure::GuardRel::Eq => s == r,
                    crate::pure::GuardRel::Ne => s != r,
                    crate::pure::GuardRel::Le => s <= r,
                    crate::pure::GuardRel::Ge => s >= r,
                })
            }
        }
    }
}
