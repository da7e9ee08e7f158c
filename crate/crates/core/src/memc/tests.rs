use super::lower::{rewrite_bitops, BitExpr, Cond, IntExpr, IntRhs, Stmt};
use super::*;
use crate::corpus;
use crate::sym::VarId;

#[test]
fn parse_minit_statement_shape() {
    let prog = parse(corpus::LA).unwrap();
    let minit = prog.function("minit").expect("minit defined");
    // declaration + 8 assignments, two of them sbrk calls, one ghost write
    assert_eq!(minit.body.len(), 9);
    let sbrks = minit
        .body
        .iter()
        .filter(|s| matches!(s, AStmt::Assign { rhs: Expr::Call(f, _), .. } if f == "sbrk"))
        .count();
    assert_eq!(sbrks, 2);
    let ghosts = minit
        .body
        .iter()
        .filter(|s| matches!(s, AStmt::Assign { ghost: true, .. }))
        .count();
    assert_eq!(ghosts, 1);
}

#[test]
fn parse_empty_is_error() {
    let err = parse("").unwrap_err();
    assert!(err.msg.contains("no entry function"));
}

#[test]
fn parse_client_calls() {
    let prog = parse(&format!("{}\n{}", corpus::LA, corpus::CLIENT_FIG2)).unwrap();
    assert_eq!(prog.entry, "main");
    let main = prog.function("main").unwrap();
    assert_eq!(main.body.len(), 12);
    let calls: Vec<&str> = main
        .body
        .iter()
        .filter_map(|s| match s {
            AStmt::ExprStmt(Expr::Call(f, _)) => Some(f.as_str()),
            AStmt::Assign { rhs: Expr::Call(f, _), .. } => Some(f.as_str()),
            _ => None,
        })
        .collect();
    assert!(calls.contains(&"minit"));
    assert!(calls.contains(&"malloc"));
    assert!(calls.contains(&"mfree"));
}

#[test]
fn pretty_parse_fixpoint_on_corpus() {
    for entry in corpus::BENCHMARKS {
        let p1 = parse(entry.source).unwrap();
        let s1 = pretty(&p1);
        let p2 = parse(&s1).unwrap();
        let s2 = pretty(&p2);
        assert_eq!(s1, s2, "{}: pretty∘parse not a fixpoint", entry.name);
    }
    let p1 = parse(&format!("{}\n{}", corpus::LA, corpus::CLIENT_FIG2)).unwrap();
    let s1 = pretty(&p1);
    let s2 = pretty(&parse(&s1).unwrap());
    assert_eq!(s1, s2);
}

#[test]
fn lower_counts_loops_after_inlining() {
    let cfg = corpus::build_cfg(corpus::LA, corpus::CLIENT_FIG2, 8).unwrap();
    // five inlined malloc scans plus two mfree scans
    assert_eq!(cfg.loop_heads.len(), 7);
}

#[test]
fn lower_minit_entry_is_straight_line() {
    let mut prog = parse(corpus::LA).unwrap();
    prog.entry = "minit".into();
    let cfg = lower(&prog).unwrap();
    assert_eq!(cfg.loop_heads.len(), 0);
}

#[test]
fn lower_rejects_recursion() {
    let src = "void f(void) { f(); } int main(void) { f(); return 0; }";
    let prog = parse(src).unwrap();
    match lower(&prog) {
        Err(LowerError::Recursion(chain)) => assert!(chain.iter().any(|f| f == "f")),
        other => panic!("expected recursion error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn lower_rejects_missing_function() {
    let src = "int main(void) { nothere(); return 0; }";
    let prog = parse(src).unwrap();
    assert!(matches!(lower(&prog), Err(LowerError::MissingFunction(_))));
}

#[test]
fn lower_edge_audit() {
    let cfg = corpus::build_cfg(corpus::LA, corpus::CLIENT_FIG2, 8).unwrap();
    let body_edges: usize = cfg.audit_bodies.iter().map(|(_, n)| n).sum();
    // everything except the static-initializer preamble is inside a body
    let globals = cfg.vars.iter().filter(|v| v.global && v.name != "hli").count();
    assert_eq!(cfg.edges.len(), body_edges + globals);
}

#[test]
fn labels_attach_to_loop_heads() {
    let cfg = corpus::build_cfg(corpus::LA, corpus::CLIENT_FIG2, 8).unwrap();
    let scans = cfg.labels.get(&("malloc".into(), "scan".into())).unwrap();
    assert_eq!(scans.len(), 5, "one scan label per inlined malloc");
    for (node, scope) in scans {
        assert!(cfg.loop_heads.contains(node), "scan label must mark the loop head");
        assert!(scope.contains_key("nunits"));
    }
    assert_eq!(cfg.labels.get(&("malloc".into(), "fit".into())).unwrap().len(), 5);
}

#[test]
fn request_size_vars_registered() {
    let cfg = corpus::build_cfg(corpus::LA, corpus::CLIENT_FIG2, 8).unwrap();
    assert_eq!(cfg.request_sizes.len(), 5);
    for v in &cfg.request_sizes {
        assert!(cfg.var(*v).name.starts_with("nunits#"));
    }
}

#[test]
fn bitops_alignment_idiom() {
    // align = (e) & ~7 with e = sz + 7
    let dst = VarId(7);
    let sz = VarId(3);
    let e = IntExpr { terms: vec![(1, super::lower::Term::Var(sz))], k: 7 };
    let bits = BitExpr::And(
        Box::new(BitExpr::Aff(e)),
        Box::new(BitExpr::Aff(IntExpr::constant(-8))),
    );
    let (stmts, warn) = rewrite_bitops(dst, &bits);
    assert!(warn.is_none());
    assert!(matches!(stmts[0], Stmt::Havoc(_)));
    assert!(matches!(
        stmts[1],
        Stmt::Assume(Cond::Cong { residue: 0, modulus: 8, .. })
    ));
    assert_eq!(stmts.len(), 4);
    // brute-force image check of the idiom over sz in [0, 1000]
    for szv in 0..=1000i64 {
        let al = (szv + 7) & !7;
        assert!(al % 8 == 0 && szv <= al && al < szv + 8);
    }
}

#[test]
fn bitops_and_zero_folds() {
    let dst = VarId(7);
    let bits = BitExpr::And(
        Box::new(BitExpr::Aff(IntExpr::var(VarId(3)))),
        Box::new(BitExpr::Aff(IntExpr::constant(0))),
    );
    let (stmts, warn) = rewrite_bitops(dst, &bits);
    assert!(warn.is_none());
    assert_eq!(
        stmts,
        vec![Stmt::AssignInt(dst, IntRhs::Expr(IntExpr::constant(0)))]
    );
}

#[test]
fn bitops_general_or_havocs() {
    let dst = VarId(7);
    let bits = BitExpr::Or(
        Box::new(BitExpr::Aff(IntExpr::var(VarId(3)))),
        Box::new(BitExpr::Aff(IntExpr::var(VarId(4)))),
    );
    let (stmts, warn) = rewrite_bitops(dst, &bits);
    assert!(warn.is_some());
    assert_eq!(stmts, vec![Stmt::Havoc(dst)]);
}

#[test]
fn all_benchmarks_lower() {
    for entry in corpus::BENCHMARKS {
        let cfg = corpus::build_cfg(entry.source, corpus::CLIENT_FIG2, 8)
            .unwrap_or_else(|e| panic!("{}: {}", entry.name, e));
        assert!(cfg.loop_heads.len() >= 2, "{} should have loops", entry.name);
        assert!(cfg.warnings.is_empty(), "{}: {:?}", entry.name, cfg.warnings);
    }
}

#[test]
fn random_clients_lower() {
    for seed in 1..=10u64 {
        let client = corpus::random_client(seed, 12);
        for entry in corpus::BENCHMARKS {
            corpus::build_cfg(entry.source, &client, 8)
                .unwrap_or_else(|e| panic!("{} seed {}: {}", entry.name, seed, e));
        }
    }
}
