//! Worklist-based forward abstract interpretation over the CFG: join at
//! merge points, widening at loop heads, a final post-fixpoint recheck.

use crate::memc::{Cfg, NodeId, Stmt};
use crate::num::{Dim, LinCons};
use crate::shape::AbstractEnv;
use crate::sym::Gen;
use crate::transfer::{post, AnalysisConfig, AnalysisError, Ctx, Tracer};
use crate::value::{AbstractValue, Binding};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

#[derive(Clone, Debug, Default)]
pub struct Stats {
    pub iterations: BTreeMap<NodeId, usize>,
    pub max_disjuncts: usize,
    pub max_heap_atoms: usize,
    pub max_free_atoms: usize,
    pub wall_ms: u128,
    pub precision_warnings: Vec<String>,
}

/// The per-location invariant table produced by the analysis.
pub struct InvariantTable {
    pub at: BTreeMap<NodeId, AbstractValue>,
    pub errors: Vec<AnalysisError>,
    pub stats: Stats,
    pub tracer: Tracer,
}

impl InvariantTable {
    pub fn value(&self, n: NodeId) -> AbstractValue {
        self.at.get(&n).cloned().unwrap_or_else(AbstractValue::bottom)
    }

    pub fn reached_top(&self) -> bool {
        self.at.values().any(|v| v.is_top())
    }
}

#[derive(Debug)]
pub enum AnalyzeFailure {
    IterationCapExceeded { node: NodeId, cap: usize },
}

impl std::fmt::Display for AnalyzeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnalyzeFailure::IterationCapExceeded { node, cap } => {
                write!(f, "loop head {} did not stabilize within {} iterations", node, cap)
            }
        }
    }
}

const ITERATION_CAP: usize = 100;

/// The initial abstract state: empty heap, the ghost break variable bound
/// to a positive fresh location; everything else is bound by the static
/// initializer edges the frontend emits.
pub fn initial_binding(cfg: &Cfg, gen: &mut Gen) -> Binding {
    let mut b = Binding::empty();
    let brk = gen.loc();
    let mut env = AbstractEnv::default();
    env.bind(cfg.hli, brk);
    b.env = env;
    b.pure.exists.meet_cons(LinCons::dim_ge(Dim::Loc(brk), 1));
    b
}

/// Runs the forward analysis to a post-fixpoint.
pub fn analyze(cfg: &Cfg, config: &AnalysisConfig) -> Result<InvariantTable, AnalyzeFailure> {
    let start = Instant::now();
    let mut gen = Gen::new();
    let mut tracer = Tracer { enabled: config.trace, ..Tracer::default() };
    let init = initial_binding(cfg, &mut gen);
    let mut table: BTreeMap<NodeId, AbstractValue> = BTreeMap::new();
    table.insert(cfg.entry, AbstractValue::Disj(vec![init]));

    let rpo_index: BTreeMap<NodeId, usize> =
        cfg.rpo.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut work: BTreeSet<(usize, NodeId)> = BTreeSet::new();
    work.insert((rpo_index[&cfg.entry], cfg.entry));
    let mut visits: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut errors: Vec<AnalysisError> = Vec::new();
    let mut stats = Stats::default();

    while let Some(&(ri, node)) = work.iter().next() {
        work.remove(&(ri, node));
        let val = table.get(&node).cloned().unwrap_or_else(AbstractValue::bottom);
        if val.is_bottom() {
            continue;
        }
        for ei in &cfg.out_edges[node] {
            let edge = &cfg.edges[*ei];
            let mut ctx = Ctx::new(cfg, config, &mut gen, &mut tracer);
            ctx.node = node;
            let mut out = post(&edge.stmt, &val, &mut ctx);
            errors.extend(std::mem::take(&mut ctx.errors));
            // bindings are already folded by post; the cap's refold hook is
            // the identity and the boundary-collapse fallback does the rest
            let (capped, warns) = out.enforce_cap(config.max_disjuncts, &mut gen, |_| {});
            stats.precision_warnings.extend(warns);
            out = capped;
            track_stats(&mut stats, &out);
            let dst = edge.dst;
            let old = table.get(&dst).cloned().unwrap_or_else(AbstractValue::bottom);
            let is_head = cfg.loop_heads.contains(&dst);
            let joined = old.join(&out);
            let candidate = if is_head {
                let v = visits.entry(dst).or_insert(0);
                *v += 1;
                if *v > ITERATION_CAP {
                    return Err(AnalyzeFailure::IterationCapExceeded {
                        node: dst,
                        cap: ITERATION_CAP,
                    });
                }
                if *v > config.widen_delay {
                    old.widen(&joined)
                } else {
                    joined
                }
            } else {
                joined
            };
            if !candidate.leq(&old) {
                table.insert(dst, candidate);
                if let Some(i) = rpo_index.get(&dst) {
                    work.insert((*i, dst));
                }
            }
        }
    }
    stats.iterations = visits;
    stats.wall_ms = start.elapsed().as_millis();
    Ok(InvariantTable { at: table, errors, stats, tracer })
}

fn track_stats(stats: &mut Stats, v: &AbstractValue) {
    stats.max_disjuncts = stats.max_disjuncts.max(v.len());
    for b in v.bindings() {
        stats.max_heap_atoms = stats.max_heap_atoms.max(b.shape.heap.len());
        stats.max_free_atoms = stats.max_free_atoms.max(b.shape.free.len());
    }
}

/// Independent verification pass: re-applies the transformers to the final
/// table and checks every edge lands below the stored post-state.
pub fn recheck(cfg: &Cfg, config: &AnalysisConfig, table: &InvariantTable) -> Result<(), String> {
    let mut gen = Gen::new();
    // fresh ids must not collide with the table's: continue far above
    for _ in 0..1_000_000 {
        gen.loc();
        gen.seq();
        gen.ivar();
    }
    let mut tracer = Tracer::default();
    for edge in &cfg.edges {
        let pre = table.value(edge.src);
        if pre.is_bottom() {
            continue;
        }
        let mut ctx = Ctx::new(cfg, config, &mut gen, &mut tracer);
        ctx.node = edge.src;
        let out = post(&edge.stmt, &pre, &mut ctx);
        let stored = table.value(edge.dst);
        if !out.leq(&stored) {
            return Err(format!(
                "edge {} -[{:?}]-> {} escapes the table",
                edge.src, edge.stmt, edge.dst
            ));
        }
    }
    Ok(())
}

/// Convenience: nodes marked with a source label, with their variable
/// scopes (one per inlined instance).
pub fn labeled_nodes<'c>(
    cfg: &'c Cfg,
    fun: &str,
    label: &str,
) -> Vec<(NodeId, &'c BTreeMap<String, crate::sym::VarId>)> {
    cfg.labels
        .get(&(fun.to_string(), label.to_string()))
        .map(|v| v.iter().map(|(n, s)| (*n, s)).collect())
        .unwrap_or_default()
}

/// Statement kinds that leave the state unchanged (used by trace replay).
pub fn is_passive(stmt: &Stmt) -> bool {
    matches!(stmt, Stmt::Nop | Stmt::Warning(_))
}
