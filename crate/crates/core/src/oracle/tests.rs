use super::*;
use crate::corpus;
use crate::shape::{FreeAtom, HeapAtom};
use crate::sym::SymLoc;

fn run(bench: &str, client: &str) -> (crate::memc::Cfg, Trace) {
    let cfg = corpus::build_cfg(bench, client, 8).unwrap();
    let trace = exec(&cfg, 200_000).unwrap();
    assert!(trace.exited, "client must run to completion");
    (cfg, trace)
}

fn final_state(trace: &Trace) -> &ConcreteState {
    &trace.steps.last().unwrap().1
}

fn layout(state: &ConcreteState) -> Vec<(i64, i64, bool)> {
    parse_heap_list(state, 8)
        .unwrap()
        .into_iter()
        .map(|c| (c.at - state.base, c.size, c.free))
        .collect()
}

#[test]
fn minit_concrete_post_state() {
    let mut prog = crate::memc::parse(corpus::LA).unwrap();
    prog.entry = "minit".into();
    let cfg = crate::memc::lower(&prog).unwrap();
    // entry formal is havocked to 0; drive minit(1024) via a tiny client
    let client = "int main(void) { minit(1024); return 0; }";
    let (_, trace) = run(corpus::LA, client);
    let st = final_state(&trace);
    assert_eq!(st.brk - st.base, 1024);
    assert_eq!(layout(st), vec![(0, 128, true)]);
    assert_eq!(st.read_field(st.base, crate::sym::Field::Fnx), Some(0));
    let _ = cfg;
}

#[test]
fn la_fig2_golden_layout() {
    let (_, trace) = run(corpus::LA, corpus::CLIENT_FIG2);
    let st = final_state(&trace);
    let golden: Vec<(i64, i64, bool)> = vec![
        (0, 108, true),
        (864, 4, false),
        (896, 4, false),
        (928, 4, true),
        (960, 4, false),
        (992, 4, true),
    ];
    assert_eq!(layout(st), golden, "LA final heap-list layout");
    let expected = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/corpus/golden/LA_fig2.layout"
    ))
    .unwrap();
    let got: String = layout(st)
        .iter()
        .map(|(a, s, f)| format!("{} {} {}\n", a, s, if *f { "free" } else { "busy" }))
        .collect();
    assert_eq!(got, expected);
}

#[test]
fn budget_zero_trace() {
    let cfg = corpus::build_cfg(corpus::LA, corpus::CLIENT_FIG2, 8).unwrap();
    let trace = exec(&cfg, 0).unwrap();
    assert_eq!(trace.steps.len(), 1);
}

#[test]
fn monitors_pass_at_client_level() {
    for entry in corpus::BENCHMARKS {
        let (cfg, trace) = run(entry.source, corpus::CLIENT_FIG2);
        let frhd = cfg.var_named("frhd").unwrap();
        let mut checked = 0;
        for (node, state) in &trace.steps {
            if cfg.node_depth[*node] > 1 {
                continue; // monitors hold at client-level points
            }
            let head = state.var(frhd).unwrap_or(0);
            let viols = check_structural(state, entry.order, head, 8);
            assert!(
                viols.is_empty(),
                "{}: node {}: {:?}",
                entry.name,
                node,
                viols
            );
            checked += 1;
        }
        assert!(checked > 5, "{}: too few client-level points", entry.name);
    }
}

#[test]
fn monitor_flags_adjacent_free() {
    // hand-built state: two adjacent free chunks under a coalescing policy
    let mut st = ConcreteState::initial();
    st.brk = st.base + 64;
    for a in st.base..st.brk {
        st.heap.insert(a, 0);
    }
    st.write_field(st.base, crate::sym::Field::Size, 4);
    st.write_field(st.base, crate::sym::Field::Fnx, st.base + 32);
    st.write_field(st.base, crate::sym::Field::IsFree, 1);
    st.write_field(st.base + 32, crate::sym::Field::Size, 4);
    st.write_field(st.base + 32, crate::sym::Field::Fnx, 0);
    st.write_field(st.base + 32, crate::sym::Field::IsFree, 1);
    let viols = check_structural(&st, corpus::ListOrder::SortedAcyclic, st.base, 8);
    assert_eq!(viols.len(), 1, "{:?}", viols);
    assert!(viols[0].contains("adjacent free"));
}

#[test]
fn kr_circular_monitor_exercised() {
    let (cfg, trace) = run(corpus::KR, corpus::CLIENT_FIG2);
    let frhd = cfg.var_named("frhd").unwrap();
    let mut nontrivial = 0;
    for (node, state) in &trace.steps {
        if cfg.node_depth[*node] > 1 {
            continue;
        }
        let head = state.var(frhd).unwrap_or(0);
        if head != 0 {
            let walked = walk_free_list(state, head, 64).unwrap();
            if walked.len() >= 2 {
                nontrivial += 1;
            }
        }
        let viols = check_structural(state, corpus::ListOrder::CircularSorted, head, 8);
        assert!(viols.is_empty(), "KR node {}: {:?}", node, viols);
    }
    assert!(nontrivial > 0, "client must exercise a multi-chunk circle");
}

#[test]
fn random_clients_execute_and_monitor() {
    for seed in 1..=10u64 {
        let client = corpus::random_client(seed, 12);
        for entry in corpus::BENCHMARKS {
            let cfg = corpus::build_cfg(entry.source, &client, 8).unwrap();
            let trace = exec(&cfg, 400_000)
                .unwrap_or_else(|e| panic!("{} seed {}: {}", entry.name, seed, e));
            assert!(trace.exited, "{} seed {}", entry.name, seed);
            let frhd = cfg.var_named("frhd").unwrap();
            for (node, state) in &trace.steps {
                if cfg.node_depth[*node] > 1 {
                    continue;
                }
                let head = state.var(frhd).unwrap_or(0);
                let viols = check_structural(state, entry.order, head, 8);
                assert!(
                    viols.is_empty(),
                    "{} seed {} node {}: {:?}",
                    entry.name,
                    seed,
                    node,
                    viols
                );
            }
        }
    }
}

#[test]
fn sat_atom_chunk_and_emp() {
    let mut st = ConcreteState::initial();
    st.brk = st.base + 8;
    for a in st.base..st.brk {
        st.heap.insert(a, 0);
    }
    st.write_field(st.base, crate::sym::Field::Size, 1);
    let mut asg = Assignment::default();
    asg.locs.insert(SymLoc(2), st.base);
    asg.locs.insert(SymLoc(3), st.base + 8);
    let atom = HeapAtom::Chk { from: SymLoc(2), to: SymLoc(3) };
    let dom: std::collections::BTreeSet<i64> = (st.base..st.base + 8).collect();
    assert!(sat_atom(&st, 8, &dom, AtomRef::Heap(&atom), &asg));
    // emp only accepts the empty fragment
    assert!(sat_atom(&st, 8, &Default::default(), AtomRef::Emp, &asg));
    assert!(!sat_atom(&st, 8, &dom, AtomRef::Emp, &asg));
    // blk with X >= Y matches no nonempty fragment
    let blk = HeapAtom::Blk { from: SymLoc(3), to: SymLoc(2) };
    assert!(!sat_atom(&st, 8, &dom, AtomRef::Heap(&blk), &asg));
}

#[test]
fn sat_atom_fck_and_flso() {
    let mut st = ConcreteState::initial();
    st.brk = st.base + 48;
    for a in st.base..st.brk {
        st.heap.insert(a, 0);
    }
    // three chunks: free(2) busy(2) free(2)
    let (c0, c1, c2) = (st.base, st.base + 16, st.base + 32);
    for (c, fnx) in [(c0, c2), (c1, 0), (c2, 0)] {
        st.write_field(c, crate::sym::Field::Size, 2);
        st.write_field(c, crate::sym::Field::Fnx, fnx);
    }
    st.free_shadow.insert(c0);
    st.free_shadow.insert(c2);
    let mut asg = Assignment::default();
    asg.locs.insert(SymLoc(10), c0);
    asg.locs.insert(SymLoc(11), c2);
    asg.seqs.insert(crate::sym::SeqVar(0), vec![c0, c2]);
    let atom = FreeAtom::Flso {
        from: SymLoc(10),
        to: SymLoc::NIL,
        seq: crate::sym::SeqVar(0),
        lbound: SymLoc::NIL,
        last: SymLoc(11),
    };
    let dom: std::collections::BTreeSet<i64> =
        (c0..c0 + 16).chain(c2..c2 + 16).collect();
    assert!(sat_atom(&st, 8, &dom, AtomRef::Free(&atom), &asg));
    // unsorted word refuted
    let mut asg2 = asg.clone();
    asg2.seqs.insert(crate::sym::SeqVar(0), vec![c2, c0]);
    asg2.locs.insert(SymLoc(10), c2);
    asg2.locs.insert(SymLoc(11), c0);
    assert!(!sat_atom(&st, 8, &dom, AtomRef::Free(&atom), &asg2));
}
