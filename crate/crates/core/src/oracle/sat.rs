//! Direct satisfaction of spatial atoms by concrete heap fragments — the
//! semantic reference the lemma-enumeration suite and the membership
//! decision are checked against. Independent of the abstract transformers.

use super::ConcreteState;
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::{Field, IVar, SeqVar, SymLoc};
use std::collections::{BTreeMap, BTreeSet};

/// Interpretation of the logic variables of an atom.
#[derive(Clone, Debug, Default)]
pub struct Assignment {
    pub locs: BTreeMap<SymLoc, i64>,
    pub seqs: BTreeMap<SeqVar, Vec<i64>>,
    pub ivars: BTreeMap<IVar, i64>,
}

impl Assignment {
    pub fn loc(&self, l: SymLoc) -> Option<i64> {
        if l.is_nil() {
            Some(0)
        } else {
            self.locs.get(&l).copied()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum AtomRef<'a> {
    Heap(&'a HeapAtom),
    Free(&'a FreeAtom),
    Emp,
}

/// The contiguous range covered by a byte set, if it has no holes.
pub fn contiguous(dom: &BTreeSet<i64>) -> Option<(i64, i64)> {
    let (lo, hi) = match (dom.iter().next(), dom.iter().next_back()) {
        (Some(a), Some(b)) => (*a, *b + 1),
        _ => return Some((0, 0)),
    };
    if (hi - lo) as usize == dom.len() {
        Some((lo, hi))
    } else {
        None
    }
}

fn chunk_extent(state: &ConcreteState, hdr: i64, at: i64) -> Option<(i64, i64)> {
    let size = state.read_field(at, Field::Size)?;
    if size < 1 {
        return None;
    }
    Some((size, at + size * hdr))
}

/// Checks the word of a heap-list run tiling `[lo, hi)`.
fn hls_word(state: &ConcreteState, hdr: i64, lo: i64, hi: i64, word: &[i64]) -> bool {
    let mut a = lo;
    for &elem in word {
        if elem != a {
            return false;
        }
        let Some((_, end)) = chunk_extent(state, hdr, a) else {
            return false;
        };
        if end > hi {
            return false;
        }
        a = end;
    }
    a == hi
}

/// Checks a free-list run: `word` chains by fnx from `from` to `to`, every
/// element a free chunk; returns the footprint it occupies.
fn fls_footprint(
    state: &ConcreteState,
    hdr: i64,
    from: i64,
    to: i64,
    word: &[i64],
) -> Option<BTreeSet<i64>> {
    let mut dom = BTreeSet::new();
    if word.is_empty() {
        return if from == to { Some(dom) } else { None };
    }
    if word[0] != from {
        return None;
    }
    for (i, &elem) in word.iter().enumerate() {
        if !state.free_shadow.contains(&elem) {
            return None;
        }
        let (_, end) = chunk_extent(state, hdr, elem)?;
        for b in elem..end {
            dom.insert(b);
        }
        let fnx = state.read_field(elem, Field::Fnx)?;
        let expected = if i + 1 < word.len() { word[i + 1] } else { to };
        if fnx != expected {
            return None;
        }
    }
    Some(dom)
}

/// Does the fragment `dom` of `state` satisfy `atom` under `asg`?
///
/// Implements the semantic rules for blocks, headers, chunks and the
/// inductive segment reconstructions; `blk` is possibly-empty (`X = Y`).
pub fn sat_atom(
    state: &ConcreteState,
    hdr: i64,
    dom: &BTreeSet<i64>,
    atom: AtomRef,
    asg: &Assignment,
) -> bool {
    match atom {
        AtomRef::Emp => dom.is_empty(),
        AtomRef::Heap(a) => sat_heap(state, hdr, dom, a, asg),
        AtomRef::Free(a) => sat_free(state, hdr, dom, a, asg),
    }
}

fn sat_heap(
    state: &ConcreteState,
    hdr: i64,
    dom: &BTreeSet<i64>,
    atom: &HeapAtom,
    asg: &Assignment,
) -> bool {
    match *atom {
        HeapAtom::Blk { from, to } => {
            let (Some(f), Some(t)) = (asg.loc(from), asg.loc(to)) else {
                return false;
            };
            if dom.is_empty() {
                return f == t;
            }
            match contiguous(dom) {
                Some((lo, hi)) => f == lo && t == hi && f < t,
                None => false,
            }
        }
        HeapAtom::Chd { from, to } => {
            let (Some(f), Some(t)) = (asg.loc(from), asg.loc(to)) else {
                return false;
            };
            t - f == hdr
                && contiguous(dom) == Some((f, t))
                && state.read_field(f, Field::Size).is_some()
        }
        HeapAtom::Chk { from, to } => {
            let (Some(f), Some(t)) = (asg.loc(from), asg.loc(to)) else {
                return false;
            };
            match chunk_extent(state, hdr, f) {
                Some((_, end)) => end == t && contiguous(dom) == Some((f, t)),
                None => false,
            }
        }
        HeapAtom::PointsTo { at, val } => {
            let (Some(a), Some(v)) = (asg.loc(at), asg.ivars.get(&val)) else {
                return false;
            };
            contiguous(dom) == Some((a, a + 4)) && state.read_u32(a) == Some(*v)
        }
        HeapAtom::Hls { from, to, seq } => {
            let (Some(f), Some(t), Some(w)) = (asg.loc(from), asg.loc(to), asg.seqs.get(&seq))
            else {
                return false;
            };
            if w.is_empty() {
                return f == t && dom.is_empty();
            }
            match contiguous(dom) {
                Some((lo, hi)) => f == lo && t == hi && hls_word(state, hdr, lo, hi, w),
                None => false,
            }
        }
        HeapAtom::Hlsc { from, to, seq, lflag, rflag } => {
            let (Some(f), Some(t), Some(w)) = (asg.loc(from), asg.loc(to), asg.seqs.get(&seq))
            else {
                return false;
            };
            let (Some(&li), Some(&ri)) = (asg.ivars.get(&lflag), asg.ivars.get(&rflag)) else {
                return false;
            };
            if w.is_empty() {
                return f == t && dom.is_empty() && li == ri;
            }
            let Some((lo, hi)) = contiguous(dom) else {
                return false;
            };
            if f != lo || t != hi || !hls_word(state, hdr, lo, hi, w) {
                return false;
            }
            // early coalescing: no two consecutive free, counting the
            // predecessor flag; the right flag is the last element's.
            let mut prev = li;
            for &elem in w {
                let free = if state.free_shadow.contains(&elem) { 1 } else { 0 };
                if prev == 1 && free == 1 {
                    return false;
                }
                prev = free;
            }
            prev == ri
        }
    }
}

fn sat_free(
    state: &ConcreteState,
    hdr: i64,
    dom: &BTreeSet<i64>,
    atom: &FreeAtom,
    asg: &Assignment,
) -> bool {
    match *atom {
        FreeAtom::Fck { from, to } => {
            let (Some(f), Some(t)) = (asg.loc(from), asg.loc(to)) else {
                return false;
            };
            if !state.free_shadow.contains(&f) {
                return false;
            }
            match chunk_extent(state, hdr, f) {
                Some((_, end)) => {
                    contiguous(dom) == Some((f, end))
                        && state.read_field(f, Field::Fnx) == Some(t)
                }
                None => false,
            }
        }
        FreeAtom::Fls { from, to, seq } => {
            let (Some(f), Some(t), Some(w)) = (asg.loc(from), asg.loc(to), asg.seqs.get(&seq))
            else {
                return false;
            };
            match fls_footprint(state, hdr, f, t, w) {
                Some(expect) => expect == *dom,
                None => false,
            }
        }
        FreeAtom::Flso { from, to, seq, lbound, last } => {
            let (Some(f), Some(t), Some(w)) = (asg.loc(from), asg.loc(to), asg.seqs.get(&seq))
            else {
                return false;
            };
            let (Some(lb), Some(la)) = (asg.loc(lbound), asg.loc(last)) else {
                return false;
            };
            match fls_footprint(state, hdr, f, t, w) {
                Some(expect) if expect == *dom => {
                    // sorted above the bound; `last` names the final element
                    let mut prev = lb;
                    for &elem in w {
                        if elem <= prev {
                            return false;
                        }
                        prev = elem;
                    }
                    if w.is_empty() {
                        la == lb
                    } else {
                        la == *w.last().unwrap()
                    }
                }
                _ => false,
            }
        }
    }
}
