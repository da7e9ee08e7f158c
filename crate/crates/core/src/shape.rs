//! The spatial side of the abstraction: a two-level symbolic heap
//! (heap-list atoms over free-list atoms), its Gaifman graph, rooted
//! isomorphism and cut-point computation.
//!
//! Atom lists are kept in chain order: heap atoms tile the arena from its
//! base to the current break, each atom ending where the next starts; free
//! atoms follow the fnx traversal and may have gaps while a chunk is
//! materialized at the heap level only.

use crate::sym::{Field, IVar, SeqVar, SymLoc, VarId};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Heap-list level atoms.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum HeapAtom {
    /// Untyped byte block `[from, to)`; may be empty (`from = to`).
    Blk { from: SymLoc, to: SymLoc },
    /// A chunk header occupying exactly `hdr_size_bytes`.
    Chd { from: SymLoc, to: SymLoc },
    /// A full chunk: header plus user block, `to - from = size * hdr`.
    Chk { from: SymLoc, to: SymLoc },
    /// Points-to of a single word value.
    PointsTo { at: SymLoc, val: IVar },
    /// Heap-list segment.
    Hls { from: SymLoc, to: SymLoc, seq: SeqVar },
    /// Heap-list segment with early coalescing flags: `lflag` is the isfree
    /// flag of the chunk preceding the segment, `rflag` of its last chunk.
    Hlsc { from: SymLoc, to: SymLoc, seq: SeqVar, lflag: IVar, rflag: IVar },
}

/// Free-list level atoms.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum FreeAtom {
    /// A free chunk with `from.fnx = to` and `from.isfree = 1`.
    Fck { from: SymLoc, to: SymLoc },
    /// Free-list segment.
    Fls { from: SymLoc, to: SymLoc, seq: SeqVar },
    /// Address-sorted free-list segment: `lbound` is a strict lower bound on
    /// all element addresses (predecessor free chunk or sentinel), `last`
    /// the address of its last element (`= lbound` when empty).
    Flso { from: SymLoc, to: SymLoc, seq: SeqVar, lbound: SymLoc, last: SymLoc },
}

impl HeapAtom {
    pub fn from(&self) -> SymLoc {
        match *self {
            HeapAtom::Blk { from, .. }
            | HeapAtom::Chd { from, .. }
            | HeapAtom::Chk { from, .. }
            | HeapAtom::Hls { from, .. }
            | HeapAtom::Hlsc { from, .. } => from,
            HeapAtom::PointsTo { at, .. } => at,
        }
    }

    pub fn to(&self) -> Option<SymLoc> {
        match *self {
            HeapAtom::Blk { to, .. }
            | HeapAtom::Chd { to, .. }
            | HeapAtom::Chk { to, .. }
            | HeapAtom::Hls { to, .. }
            | HeapAtom::Hlsc { to, .. } => Some(to),
            HeapAtom::PointsTo { .. } => None,
        }
    }

    pub fn seq(&self) -> Option<SeqVar> {
        match *self {
            HeapAtom::Hls { seq, .. } | HeapAtom::Hlsc { seq, .. } => Some(seq),
            _ => None,
        }
    }

    pub fn is_segment(&self) -> bool {
        self.seq().is_some()
    }

    pub fn label(&self) -> &'static str {
        match self {
            HeapAtom::Blk { .. } => "blk",
            HeapAtom::Chd { .. } => "chd",
            HeapAtom::Chk { .. } => "chk",
            HeapAtom::PointsTo { .. } => "pt",
            HeapAtom::Hls { .. } => "hls",
            HeapAtom::Hlsc { .. } => "hlsc",
        }
    }

    pub fn locs(&self) -> Vec<SymLoc> {
        match *self {
            HeapAtom::Blk { from, to }
            | HeapAtom::Chd { from, to }
            | HeapAtom::Chk { from, to }
            | HeapAtom::Hls { from, to, .. }
            | HeapAtom::Hlsc { from, to, .. } => vec![from, to],
            HeapAtom::PointsTo { at, .. } => vec![at],
        }
    }

    pub fn ivars(&self) -> Vec<IVar> {
        match *self {
            HeapAtom::Hlsc { lflag, rflag, .. } => vec![lflag, rflag],
            HeapAtom::PointsTo { val, .. } => vec![val],
            _ => vec![],
        }
    }
}

impl FreeAtom {
    pub fn from(&self) -> SymLoc {
        match *self {
            FreeAtom::Fck { from, .. }
            | FreeAtom::Fls { from, .. }
            | FreeAtom::Flso { from, .. } => from,
        }
    }

    pub fn to(&self) -> SymLoc {
        match *self {
            FreeAtom::Fck { to, .. } | FreeAtom::Fls { to, .. } | FreeAtom::Flso { to, .. } => to,
        }
    }

    pub fn seq(&self) -> Option<SeqVar> {
        match *self {
            FreeAtom::Fls { seq, .. } | FreeAtom::Flso { seq, .. } => Some(seq),
            FreeAtom::Fck { .. } => None,
        }
    }

    pub fn is_segment(&self) -> bool {
        self.seq().is_some()
    }

    pub fn label(&self) -> &'static str {
        match self {
            FreeAtom::Fck { .. } => "fck",
            FreeAtom::Fls { .. } => "fls",
            FreeAtom::Flso { .. } => "flso",
        }
    }

    pub fn locs(&self) -> Vec<SymLoc> {
        match *self {
            FreeAtom::Fck { from, to } | FreeAtom::Fls { from, to, .. } => vec![from, to],
            FreeAtom::Flso { from, to, lbound, last, .. } => vec![from, to, lbound, last],
        }
    }
}

/// The spatial formula `Σ_H ∋ Σ_F`.
#[derive(Clone, PartialEq, Eq, Default, Serialize)]
pub struct TwoLevelShape {
    pub heap: Vec<HeapAtom>,
    pub free: Vec<FreeAtom>,
}

impl TwoLevelShape {
    pub fn empty() -> TwoLevelShape {
        TwoLevelShape::default()
    }

    pub fn seqvars(&self) -> Vec<SeqVar> {
        self.heap
            .iter()
            .filter_map(|a| a.seq())
            .chain(self.free.iter().filter_map(|a| a.seq()))
            .collect()
    }

    pub fn ivars(&self) -> Vec<IVar> {
        let mut out = Vec::new();
        for a in &self.heap {
            out.extend(a.ivars());
        }
        out
    }

    pub fn locs(&self) -> BTreeSet<SymLoc> {
        let mut out = BTreeSet::new();
        for a in &self.heap {
            out.extend(a.locs());
        }
        for a in &self.free {
            out.extend(a.locs());
        }
        out
    }

    /// The heap atom starting at `l`, if any.
    pub fn heap_at(&self, l: SymLoc) -> Option<(usize, &HeapAtom)> {
        self.heap.iter().enumerate().find(|(_, a)| a.from() == l)
    }

    /// The free atom starting at `l`, if any.
    pub fn free_at(&self, l: SymLoc) -> Option<(usize, &FreeAtom)> {
        self.free.iter().enumerate().find(|(_, a)| a.from() == l)
    }

    /// Structural well-formedness; run under debug builds after transforms.
    pub fn check_wf(&self) -> Result<(), String> {
        let mut heap_starts = BTreeSet::new();
        for a in &self.heap {
            if a.from().is_nil() {
                return Err(format!("nil starts heap atom {:?}", a));
            }
            if !heap_starts.insert(a.from()) {
                return Err(format!("two heap atoms start at {:?}", a.from()));
            }
        }
        for w in self.heap.windows(2) {
            if w[0].to() != Some(w[1].from()) {
                return Err(format!("heap chain broken between {:?} and {:?}", w[0], w[1]));
            }
        }
        let mut free_starts = BTreeSet::new();
        for a in &self.free {
            if a.from().is_nil() {
                return Err(format!("nil starts free atom {:?}", a));
            }
            if !free_starts.insert(a.from()) {
                return Err(format!("two free atoms start at {:?}", a.from()));
            }
        }
        let mut seqs = BTreeSet::new();
        for s in self.seqvars() {
            if !seqs.insert(s) {
                return Err(format!("sequence variable {:?} bound twice (R1)", s));
            }
        }
        Ok(())
    }

    /// Paper-style surface syntax.
    pub fn surface(&self, hli: Option<SymLoc>) -> String {
        let loc = |l: SymLoc| -> String {
            if l.is_nil() {
                "nil".to_string()
            } else if Some(l) == hli {
                "hli".to_string()
            } else {
                format!("X{}", l.0)
            }
        };
        let heap: Vec<String> = self
            .heap
            .iter()
            .map(|a| match *a {
                HeapAtom::Blk { from, to } => format!("blk({}; {})", loc(from), loc(to)),
                HeapAtom::Chd { from, to } => format!("chd({}; {})", loc(from), loc(to)),
                HeapAtom::Chk { from, to } => format!("chk({}; {})", loc(from), loc(to)),
                HeapAtom::PointsTo { at, val } => format!("{} |-> {:?}", loc(at), val),
                HeapAtom::Hls { from, to, seq } => {
                    format!("hls({}; {})[{:?}]", loc(from), loc(to), seq)
                }
                HeapAtom::Hlsc { from, to, seq, lflag, rflag } => format!(
                    "hlsc({},{:?}; {},{:?})[{:?}]",
                    loc(from),
                    lflag,
                    loc(to),
                    rflag,
                    seq
                ),
            })
            .collect();
        let free: Vec<String> = self
            .free
            .iter()
            .map(|a| match *a {
                FreeAtom::Fck { from, to } => format!("fck({}; {})", loc(from), loc(to)),
                FreeAtom::Fls { from, to, seq } => {
                    format!("fls({}; {})[{:?}]", loc(from), loc(to), seq)
                }
                FreeAtom::Flso { from, to, seq, lbound, last } => format!(
                    "flso({},{}; {},{})[{:?}]",
                    loc(from),
                    loc(lbound),
                    loc(to),
                    loc(last),
                    seq
                ),
            })
            .collect();
        let h = if heap.is_empty() { "emp".to_string() } else { heap.join(" * ") };
        let f = if free.is_empty() { "emp".to_string() } else { free.join(" * ") };
        format!("{} -* ({})", h, f)
    }
}

impl fmt::Debug for TwoLevelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.surface(None))
    }
}

/// Abstract environment: address-typed program variables to locations.
/// The ghost break variable `hli` is always bound by the frontend.
#[derive(Clone, PartialEq, Eq, Default, Serialize)]
pub struct AbstractEnv {
    pub addr: BTreeMap<VarId, SymLoc>,
}

impl AbstractEnv {
    pub fn get(&self, v: VarId) -> Option<SymLoc> {
        self.addr.get(&v).copied()
    }

    pub fn bind(&mut self, v: VarId, l: SymLoc) {
        self.addr.insert(v, l);
    }

    pub fn unbind(&mut self, v: VarId) {
        self.addr.remove(&v);
    }

    pub fn image(&self) -> BTreeSet<SymLoc> {
        self.addr.values().copied().collect()
    }
}

impl fmt::Debug for AbstractEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self
            .addr
            .iter()
            .map(|(v, l)| format!("{:?}->{:?}", v, l))
            .collect();
        write!(f, "[{}]", items.join(", "))
    }
}

/// Gaifman graph node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize)]
pub enum GNode {
    Loc(SymLoc),
    Seq(SeqVar),
}

/// Labeled Gaifman graph of an (env, shape) pair.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Gaifman {
    pub nodes: BTreeSet<GNode>,
    /// (source node, label, parameter position, target node)
    pub edges: Vec<(GNode, &'static str, u8, GNode)>,
    /// program-variable roots
    pub roots: BTreeMap<VarId, SymLoc>,
}

impl Gaifman {
    pub fn incoming(&self, l: SymLoc) -> usize {
        self.edges
            .iter()
            .filter(|(_, _, _, t)| *t == GNode::Loc(l))
            .count()
    }
}

/// Builds the Gaifman graph: nodes are locations and sequence variables,
/// edges are atom parameter links, env bindings appear as roots.
pub fn gaifman(shape: &TwoLevelShape, env: &AbstractEnv) -> Gaifman {
    let mut g = Gaifman::default();
    g.nodes.insert(GNode::Loc(SymLoc::NIL));
    for (v, l) in &env.addr {
        g.nodes.insert(GNode::Loc(*l));
        g.roots.insert(*v, *l);
    }
    let mut edges: Vec<(GNode, &'static str, u8, GNode)> = Vec::new();
    for a in &shape.heap {
        let label = a.label();
        if let Some(to) = a.to() {
            edges.push((GNode::Loc(a.from()), label, 0, GNode::Loc(to)));
        }
        if let Some(w) = a.seq() {
            edges.push((GNode::Loc(a.from()), label, 1, GNode::Seq(w)));
        }
        if let HeapAtom::PointsTo { at, .. } = a {
            g.nodes.insert(GNode::Loc(*at));
        }
    }
    for a in &shape.free {
        let label = a.label();
        edges.push((GNode::Loc(a.from()), label, 0, GNode::Loc(a.to())));
        if let Some(w) = a.seq() {
            edges.push((GNode::Loc(a.from()), label, 1, GNode::Seq(w)));
        }
        if let FreeAtom::Flso { from, lbound, last, .. } = a {
            edges.push((GNode::Loc(*from), label, 2, GNode::Loc(*lbound)));
            edges.push((GNode::Loc(*from), label, 3, GNode::Loc(*last)));
        }
    }
    for (s, _, _, t) in &edges {
        g.nodes.insert(*s);
        g.nodes.insert(*t);
    }
    g.edges = edges;
    g
}

/// A level-wise shape isomorphism: bijections on locations, sequence
/// variables and flag variables.
#[derive(Clone, Debug, Default)]
pub struct ShapeIso {
    pub loc: BTreeMap<SymLoc, SymLoc>,
    pub seq: BTreeMap<SeqVar, SeqVar>,
    pub ivar: BTreeMap<IVar, IVar>,
}

impl ShapeIso {
    pub fn identity() -> ShapeIso {
        ShapeIso::default()
    }

    pub fn map_loc(&self, l: SymLoc) -> SymLoc {
        *self.loc.get(&l).unwrap_or(&l)
    }

    pub fn map_seq(&self, s: SeqVar) -> SeqVar {
        *self.seq.get(&s).unwrap_or(&s)
    }

    pub fn map_ivar(&self, i: IVar) -> IVar {
        *self.ivar.get(&i).unwrap_or(&i)
    }

    pub fn inverse(&self) -> ShapeIso {
        ShapeIso {
            loc: self.loc.iter().map(|(a, b)| (*b, *a)).collect(),
            seq: self.seq.iter().map(|(a, b)| (*b, *a)).collect(),
            ivar: self.ivar.iter().map(|(a, b)| (*b, *a)).collect(),
        }
    }

    pub fn compose(&self, then: &ShapeIso) -> ShapeIso {
        let mut out = ShapeIso::default();
        for (a, b) in &self.loc {
            out.loc.insert(*a, then.map_loc(*b));
        }
        for (a, b) in &self.seq {
            out.seq.insert(*a, then.map_seq(*b));
        }
        for (a, b) in &self.ivar {
            out.ivar.insert(*a, then.map_ivar(*b));
        }
        out
    }

    /// Renaming of numeric dimensions induced by the isomorphism.
    pub fn dim_map(&self) -> BTreeMap<crate::num::Dim, crate::num::Dim> {
        use crate::num::Dim;
        let mut map = BTreeMap::new();
        for (a, b) in &self.loc {
            if a != b {
                map.insert(Dim::Loc(*a), Dim::Loc(*b));
                for f in Field::ALL {
                    map.insert(Dim::Fld(*a, f), Dim::Fld(*b, f));
                }
            }
        }
        for (a, b) in &self.ivar {
            if a != b {
                map.insert(Dim::IVar(*a), Dim::IVar(*b));
            }
        }
        map
    }

    fn unify_loc(&mut self, rev: &mut BTreeMap<SymLoc, SymLoc>, a: SymLoc, b: SymLoc) -> bool {
        if a.is_nil() || b.is_nil() {
            return a == b;
        }
        match (self.loc.get(&a), rev.get(&b)) {
            (Some(x), _) if *x != b => false,
            (_, Some(y)) if *y != a => false,
            _ => {
                self.loc.insert(a, b);
                rev.insert(b, a);
                true
            }
        }
    }
}

/// Applies a renaming to a shape.
pub fn rename_shape(shape: &TwoLevelShape, iso: &ShapeIso) -> TwoLevelShape {
    let l = |x: SymLoc| iso.map_loc(x);
    let heap = shape
        .heap
        .iter()
        .map(|a| match *a {
            HeapAtom::Blk { from, to } => HeapAtom::Blk { from: l(from), to: l(to) },
            HeapAtom::Chd { from, to } => HeapAtom::Chd { from: l(from), to: l(to) },
            HeapAtom::Chk { from, to } => HeapAtom::Chk { from: l(from), to: l(to) },
            HeapAtom::PointsTo { at, val } => {
                HeapAtom::PointsTo { at: l(at), val: iso.map_ivar(val) }
            }
            HeapAtom::Hls { from, to, seq } => {
                HeapAtom::Hls { from: l(from), to: l(to), seq: iso.map_seq(seq) }
            }
            HeapAtom::Hlsc { from, to, seq, lflag, rflag } => HeapAtom::Hlsc {
                from: l(from),
                to: l(to),
                seq: iso.map_seq(seq),
                lflag: iso.map_ivar(lflag),
                rflag: iso.map_ivar(rflag),
            },
        })
        .collect();
    let free = shape
        .free
        .iter()
        .map(|a| match *a {
            FreeAtom::Fck { from, to } => FreeAtom::Fck { from: l(from), to: l(to) },
            FreeAtom::Fls { from, to, seq } => {
                FreeAtom::Fls { from: l(from), to: l(to), seq: iso.map_seq(seq) }
            }
            FreeAtom::Flso { from, to, seq, lbound, last } => FreeAtom::Flso {
                from: l(from),
                to: l(to),
                seq: iso.map_seq(seq),
                lbound: l(lbound),
                last: l(last),
            },
        })
        .collect();
    TwoLevelShape { heap, free }
}

pub fn rename_env(env: &AbstractEnv, iso: &ShapeIso) -> AbstractEnv {
    AbstractEnv {
        addr: env.addr.iter().map(|(v, l)| (*v, iso.map_loc(*l))).collect(),
    }
}

/// Rooted isomorphism test between two (env, shape) pairs. The walk is
/// anchored at the program-variable roots and the canonical chain order;
/// the candidate renaming is verified by relabeling `a` and comparing.
pub fn isomorphic(
    a_env: &AbstractEnv,
    a_shape: &TwoLevelShape,
    b_env: &AbstractEnv,
    b_shape: &TwoLevelShape,
) -> Option<ShapeIso> {
    if a_shape.heap.len() != b_shape.heap.len() || a_shape.free.len() != b_shape.free.len() {
        return None;
    }
    if a_env.addr.len() != b_env.addr.len() {
        return None;
    }
    let mut iso = ShapeIso::default();
    let mut rev = BTreeMap::new();
    for ((va, la), (vb, lb)) in a_env.addr.iter().zip(b_env.addr.iter()) {
        if va != vb {
            return None;
        }
        if !iso.unify_loc(&mut rev, *la, *lb) {
            return None;
        }
    }
    for (a, b) in a_shape.heap.iter().zip(b_shape.heap.iter()) {
        if a.label() != b.label() {
            return None;
        }
        for (la, lb) in a.locs().into_iter().zip(b.locs()) {
            if !iso.unify_loc(&mut rev, la, lb) {
                return None;
            }
        }
        if let (Some(wa), Some(wb)) = (a.seq(), b.seq()) {
            if let Some(prev) = iso.seq.insert(wa, wb) {
                if prev != wb {
                    return None;
                }
            }
        }
        for (ia, ib) in a.ivars().into_iter().zip(b.ivars()) {
            if let Some(prev) = iso.ivar.insert(ia, ib) {
                if prev != ib {
                    return None;
                }
            }
        }
    }
    for (a, b) in a_shape.free.iter().zip(b_shape.free.iter()) {
        if a.label() != b.label() {
            return None;
        }
        for (la, lb) in a.locs().into_iter().zip(b.locs()) {
            if !iso.unify_loc(&mut rev, la, lb) {
                return None;
            }
        }
        if let (Some(wa), Some(wb)) = (a.seq(), b.seq()) {
            if let Some(prev) = iso.seq.insert(wa, wb) {
                if prev != wb {
                    return None;
                }
            }
        }
    }
    // Injectivity of the seq map.
    let mut seen = BTreeSet::new();
    for w in iso.seq.values() {
        if !seen.insert(*w) {
            return None;
        }
    }
    // Verification: the relabeling must reproduce b exactly.
    if rename_shape(a_shape, &iso) != *b_shape || rename_env(a_env, &iso) != *b_env {
        return None;
    }
    Some(iso)
}

/// Cut-points: env image, nil and the break location, locations with two or
/// more incoming atom edges, and free-level atom starts (the ∋ anchoring).
pub fn cut_points(shape: &TwoLevelShape, env: &AbstractEnv) -> BTreeSet<SymLoc> {
    let mut cuts: BTreeSet<SymLoc> = env.image();
    cuts.insert(SymLoc::NIL);
    let g = gaifman(shape, env);
    let mut incoming: BTreeMap<SymLoc, usize> = BTreeMap::new();
    for (_, _, pos, t) in &g.edges {
        if let GNode::Loc(l) = t {
            // Only endpoint links count as references, not flso parameters.
            if *pos == 0 {
                *incoming.entry(*l).or_insert(0) += 1;
            }
        }
    }
    for (l, n) in incoming {
        if n >= 2 {
            cuts.insert(l);
        }
    }
    for a in &shape.free {
        cuts.insert(a.from());
    }
    cuts
}

#[cfg(test)]
#[path = "shape_tests.rs"]
mod shape_tests;
