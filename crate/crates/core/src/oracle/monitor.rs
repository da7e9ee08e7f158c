//! Runtime monitors for the structural allocator invariants: exact arena
//! tiling, early coalescing, free-list membership, ordering and acyclicity.

use super::ConcreteState;
use crate::corpus::ListOrder;
use crate::sym::Field;
use std::collections::BTreeSet;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Chunk {
    pub at: i64,
    pub size: i64,
    pub free: bool,
    pub fnx: i64,
}

/// Parses the heap-list from the arena base by following size fields.
/// Returns the chunk sequence or a description of the ill-formedness.
pub fn parse_heap_list(state: &ConcreteState, hdr: i64) -> Result<Vec<Chunk>, String> {
    let mut out = Vec::new();
    let mut a = state.base;
    while a < state.brk {
        let size = state
            .read_field(a, Field::Size)
            .ok_or_else(|| format!("unreadable header at {:#x}", a))?;
        if size < 1 {
            return Err(format!("chunk at {:#x} has size {}", a, size));
        }
        let fnx = state.read_field(a, Field::Fnx).unwrap_or(0);
        let free = state.free_shadow.contains(&a);
        let next = a + size * hdr;
        if next > state.brk {
            return Err(format!(
                "chunk at {:#x} (size {}) overruns the break {:#x}",
                a, size, state.brk
            ));
        }
        out.push(Chunk { at: a, size, free, fnx });
        a = next;
    }
    Ok(out)
}

/// Walks the free list from `head` (0 = empty), bounded by the chunk count.
pub fn walk_free_list(
    state: &ConcreteState,
    head: i64,
    max: usize,
) -> Result<Vec<i64>, String> {
    let mut out = Vec::new();
    let mut cur = head;
    while cur != 0 {
        if out.contains(&cur) {
            return Ok(out); // closed a cycle
        }
        out.push(cur);
        if out.len() > max + 1 {
            return Err("free list longer than the chunk count".into());
        }
        cur = state
            .read_field(cur, Field::Fnx)
            .ok_or_else(|| format!("free-list node {:#x} outside the arena", cur))?;
    }
    Ok(out)
}

/// Checks the structural invariants the allocators are expected to
/// maintain at client-level program points. Violations are data, not
/// errors; an empty vector means every monitor passed.
pub fn check_structural(
    state: &ConcreteState,
    order: ListOrder,
    head: i64,
    hdr: i64,
) -> Vec<String> {
    let mut viols = Vec::new();
    if state.brk == state.base {
        if head != 0 {
            viols.push("free-list head set before initialisation".into());
        }
        return viols;
    }
    let chunks = match parse_heap_list(state, hdr) {
        Ok(c) => c,
        Err(e) => {
            viols.push(format!("heap-list does not tile the arena: {}", e));
            return viols;
        }
    };
    for w in chunks.windows(2) {
        if w[0].free && w[1].free {
            viols.push(format!(
                "adjacent free chunks at {:#x} and {:#x} (early coalescing violated)",
                w[0].at, w[1].at
            ));
        }
    }
    let starts: BTreeSet<i64> = chunks.iter().map(|c| c.at).collect();
    let free_starts: BTreeSet<i64> =
        chunks.iter().filter(|c| c.free).map(|c| c.at).collect();
    let walked = match walk_free_list(state, head, chunks.len()) {
        Ok(w) => w,
        Err(e) => {
            viols.push(format!("free list ill-formed: {}", e));
            return viols;
        }
    };
    for &n in &walked {
        if !starts.contains(&n) {
            viols.push(format!("free-list node {:#x} is not a chunk", n));
        } else if !free_starts.contains(&n) {
            viols.push(format!("free-list node {:#x} is not marked free", n));
        }
    }
    let walked_set: BTreeSet<i64> = walked.iter().copied().collect();
    if walked_set.len() != walked.len() {
        viols.push("free list revisits a node".into());
    }
    for &f in &free_starts {
        if !walked_set.contains(&f) {
            viols.push(format!("free chunk {:#x} unreachable from the head", f));
        }
    }
    match order {
        ListOrder::SortedAcyclic => {
            // termination at NULL is implied by walk_free_list's cycle rule
            if let Some(last) = walked.last() {
                let fnx = state.read_field(*last, Field::Fnx).unwrap_or(-1);
                if fnx != 0 && walked_set.contains(&fnx) {
                    viols.push("free list is cyclic but should be acyclic".into());
                }
            }
            for w in walked.windows(2) {
                if w[0] >= w[1] {
                    viols.push(format!(
                        "free list not ascending: {:#x} before {:#x}",
                        w[0], w[1]
                    ));
                }
            }
        }
        ListOrder::CircularSorted => {
            if !walked.is_empty() {
                let last = *walked.last().unwrap();
                let fnx = state.read_field(last, Field::Fnx).unwrap_or(-1);
                if fnx != walked[0] {
                    viols.push("free list does not close a single cycle".into());
                }
                // circularly sorted: at most one descent around the cycle
                let mut descents = 0;
                for i in 0..walked.len() {
                    let a = walked[i];
                    let b = walked[(i + 1) % walked.len()];
                    if walked.len() > 1 && a >= b {
                        descents += 1;
                    }
                }
                if descents > 1 {
                    viols.push(format!(
                        "free list not circularly sorted ({} descents)",
                        descents
                    ));
                }
            }
        }
    }
    viols
}
