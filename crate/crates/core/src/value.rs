//! The top-level abstract domain: finite disjunctions of bindings
//! `(env, shape) ↦ pure`, ordered and joined up to shape isomorphism.

use crate::num::Dim;
use crate::pure::{PureValue, SeqItem};
use crate::shape::{
    isomorphic, rename_env, rename_shape, AbstractEnv, FreeAtom, HeapAtom, ShapeIso,
    TwoLevelShape,
};
use crate::sym::{Field, Gen, SeqVar};
use std::collections::BTreeSet;
use std::fmt;

/// One disjunct: an abstract environment and shape mapped to a pure value.
#[derive(Clone, PartialEq, Eq)]
pub struct Binding {
    pub env: AbstractEnv,
    pub shape: TwoLevelShape,
    pub pure: PureValue,
}

impl Binding {
    /// The initial binding: empty heap, no explicit constraints.
    pub fn empty() -> Binding {
        Binding {
            env: AbstractEnv::default(),
            shape: TwoLevelShape::empty(),
            pure: PureValue::top(),
        }
    }

    pub fn rename(&self, iso: &ShapeIso) -> Binding {
        Binding {
            env: rename_env(&self.env, iso),
            shape: rename_shape(&self.shape, iso),
            pure: self.pure.rename(iso),
        }
    }

    /// Joint well-formedness of the shape and the word equations.
    pub fn check_wf(&self) -> Result<(), String> {
        self.shape.check_wf()?;
        let heap_vars: Vec<SeqVar> = self.shape.heap.iter().filter_map(|a| a.seq()).collect();
        let free_vars: Vec<SeqVar> = self.shape.free.iter().filter_map(|a| a.seq()).collect();
        let wh_vars: Vec<SeqVar> = self.pure.seqs.wh.seqvars().collect();
        let wf_vars: Vec<SeqVar> = self.pure.seqs.wf.seqvars().collect();
        if heap_vars != wh_vars {
            return Err(format!(
                "heap word {:?} does not track heap segments {:?}",
                self.pure.seqs.wh, heap_vars
            ));
        }
        if free_vars != wf_vars {
            return Err(format!(
                "free word {:?} does not track free segments {:?}",
                self.pure.seqs.wf, free_vars
            ));
        }
        let bound: BTreeSet<SeqVar> = self.shape.seqvars().into_iter().collect();
        for (w, _) in self.pure.univs.keys() {
            if !bound.contains(w) {
                return Err(format!("universal entry on unbound {:?} (R1)", w));
            }
        }
        // Field dims only for locations materialized as chunk headers.
        let mut headed = BTreeSet::new();
        for a in &self.shape.heap {
            match a {
                HeapAtom::Chd { from, .. } | HeapAtom::Chk { from, .. } => {
                    headed.insert(*from);
                }
                _ => {}
            }
        }
        for a in &self.shape.free {
            if let FreeAtom::Fck { from, .. } = a {
                headed.insert(*from);
            }
        }
        for d in self.pure.exists.dims() {
            if let Dim::Fld(l, _) = d {
                if !headed.contains(&l) {
                    return Err(format!(
                        "field dim {:?} of a non-materialized location",
                        d
                    ));
                }
            }
        }
        Ok(())
    }

    /// The word literal positions of the heap level, in chain order.
    pub fn heap_word(&self) -> Vec<SeqItem> {
        self.pure.seqs.wh.0.clone()
    }
}

impl fmt::Debug for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "env {:?}", self.env)?;
        writeln!(f, "  {:?}", self.shape)?;
        for line in self.pure.dump_lines() {
            writeln!(f, "  {}", line)?;
        }
        Ok(())
    }
}

/// Finite disjunction of bindings, or the dedicated top element.
#[derive(Clone, PartialEq, Eq)]
pub enum AbstractValue {
    Top,
    Disj(Vec<Binding>),
}

impl AbstractValue {
    pub fn bottom() -> AbstractValue {
        AbstractValue::Disj(Vec::new())
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, AbstractValue::Disj(d) if d.is_empty())
    }

    pub fn is_top(&self) -> bool {
        matches!(self, AbstractValue::Top)
    }

    pub fn bindings(&self) -> &[Binding] {
        match self {
            AbstractValue::Top => &[],
            AbstractValue::Disj(d) => d,
        }
    }

    pub fn len(&self) -> usize {
        self.bindings().len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings().is_empty()
    }

    /// Inserts a binding, eagerly merging with an isomorphic disjunct.
    pub fn insert(&mut self, b: Binding) {
        let AbstractValue::Disj(ds) = self else {
            return;
        };
        if b.pure.is_bottom() {
            return;
        }
        for existing in ds.iter_mut() {
            if let Some(iso) = isomorphic(&b.env, &b.shape, &existing.env, &existing.shape) {
                existing.pure = b.pure.join(&existing.pure, &iso);
                return;
            }
        }
        ds.push(b);
    }

    pub fn of(bindings: Vec<Binding>) -> AbstractValue {
        let mut v = AbstractValue::bottom();
        for b in bindings {
            v.insert(b);
        }
        v
    }

    /// Sound ordering test (Top greatest, ⊥ least).
    pub fn leq(&self, other: &AbstractValue) -> bool {
        match (self, other) {
            (_, AbstractValue::Top) => true,
            (AbstractValue::Top, _) => false,
            (AbstractValue::Disj(a), AbstractValue::Disj(b)) => a.iter().all(|ba| {
                b.iter().any(|bb| {
                    isomorphic(&ba.env, &ba.shape, &bb.env, &bb.shape)
                        .map(|iso| ba.pure.leq(&bb.pure, &iso))
                        .unwrap_or(false)
                })
            }),
        }
    }

    pub fn join(&self, other: &AbstractValue) -> AbstractValue {
        match (self, other) {
            (AbstractValue::Top, _) | (_, AbstractValue::Top) => AbstractValue::Top,
            (AbstractValue::Disj(_), AbstractValue::Disj(b)) => {
                let mut out = self.clone();
                for bb in b {
                    out.insert(bb.clone());
                }
                out
            }
        }
    }

    /// Widening: pure parts of isomorphic pairs are widened, fresh shapes of
    /// `other` pass through; shapes themselves are never widened.
    pub fn widen(&self, other: &AbstractValue) -> AbstractValue {
        match (self, other) {
            (AbstractValue::Top, _) | (_, AbstractValue::Top) => AbstractValue::Top,
            (AbstractValue::Disj(a), AbstractValue::Disj(b)) => {
                let mut out = Vec::new();
                for bb in b {
                    let mut widened = None;
                    for ba in a {
                        if let Some(iso) = isomorphic(&ba.env, &ba.shape, &bb.env, &bb.shape) {
                            let mut nb = bb.clone();
                            nb.pure = ba.pure.widen(&bb.pure, &iso);
                            widened = Some(nb);
                            break;
                        }
                    }
                    out.push(widened.unwrap_or_else(|| bb.clone()));
                }
                AbstractValue::Disj(out)
            }
        }
    }

    /// Disjunct-cap enforcement: refold (hook supplied by the caller), then
    /// try merging pairs that become isomorphic after collapsing one segment
    /// boundary, then give up to Top with a warning.
    pub fn enforce_cap(
        &self,
        max_disjuncts: usize,
        gen: &mut Gen,
        mut refold: impl FnMut(&mut Binding),
    ) -> (AbstractValue, Vec<String>) {
        let AbstractValue::Disj(ds) = self else {
            return (AbstractValue::Top, Vec::new());
        };
        if ds.len() <= max_disjuncts {
            return (self.clone(), Vec::new());
        }
        let mut refolded = AbstractValue::bottom();
        for b in ds {
            let mut nb = b.clone();
            refold(&mut nb);
            refolded.insert(nb);
        }
        if refolded.len() <= max_disjuncts {
            return (refolded, Vec::new());
        }
        // Collapse one segment boundary per binding and re-merge.
        let mut collapsed = AbstractValue::bottom();
        for b in refolded.bindings() {
            let mut nb = b.clone();
            collapse_one_boundary(&mut nb, gen);
            collapsed.insert(nb);
        }
        if collapsed.len() <= max_disjuncts {
            return (collapsed, Vec::new());
        }
        (
            AbstractValue::Top,
            vec![format!(
                "disjunct cap {} exceeded ({} bindings); widened to Top",
                max_disjuncts,
                collapsed.len()
            )],
        )
    }
}

impl fmt::Debug for AbstractValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractValue::Top => write!(f, "TOP"),
            AbstractValue::Disj(ds) => {
                writeln!(f, "{} disjunct(s)", ds.len())?;
                for b in ds {
                    write!(f, "{:?}", b)?;
                }
                Ok(())
            }
        }
    }
}

/// Composes the first adjacent same-kind segment pair of the binding, both
/// at the heap level and the free level.
pub fn collapse_one_boundary(b: &mut Binding, gen: &mut Gen) {
    let heap = &mut b.shape.heap;
    for i in 0..heap.len().saturating_sub(1) {
        if let (
            HeapAtom::Hlsc { from, to, seq: s1, lflag, rflag: r1 },
            HeapAtom::Hlsc { from: f2, to: to2, seq: s2, lflag: l2, rflag },
        ) = (heap[i], heap[i + 1])
        {
            if to == f2 && r1 == l2 {
                let s3 = gen.seq();
                heap[i] = HeapAtom::Hlsc { from, to: to2, seq: s3, lflag, rflag };
                heap.remove(i + 1);
                b.pure.compose_entries(s1, s2, s3);
                // flags of the composed boundary stay as exists dims
                let mut kill = BTreeSet::new();
                kill.insert(Dim::IVar(r1));
                if !b.shape.ivars().contains(&r1) {
                    b.pure.project_dims(&kill);
                }
                return;
            }
        }
    }
    let free = &mut b.shape.free;
    for i in 0..free.len().saturating_sub(1) {
        if let (
            FreeAtom::Flso { from, to, seq: s1, lbound, last: y1 },
            FreeAtom::Flso { from: f2, to: to2, seq: s2, lbound: x2, last },
        ) = (free[i], free[i + 1])
        {
            if to == f2 && y1 == x2 {
                let s3 = gen.seq();
                free[i] = FreeAtom::Flso { from, to: to2, seq: s3, lbound, last };
                free.remove(i + 1);
                b.pure.compose_entries(s1, s2, s3);
                let mut kill = BTreeSet::new();
                kill.insert(Dim::Loc(y1));
                for f in Field::ALL {
                    kill.insert(Dim::Fld(y1, f));
                }
                if !b.shape.locs().contains(&y1) && !b.env.image().contains(&y1) {
                    b.pure.project_dims(&kill);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
#[path = "value_tests.rs"]
mod value_tests;
