//! Golden and determinism tests for the inspectable outputs (DOT graph and
//! pseudo-source). Identical inputs must produce byte-identical text.

use pushlog::frontend::parse_program;
use pushlog::plangen::emit_pseudo_source;
use pushlog::symbolic::to_dot;
use pushlog::{compile, compile_with, CompileOptions};

const CHAIN_DEAD_BRANCH: &str = "\
.edb e1(int)
.edb e2(int)
answer(X) :- q(X, c1).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(c2, X) :- e2(X).
";

#[test]
fn pseudo_source_matches_golden() {
    let program = parse_program(CHAIN_DEAD_BRANCH).unwrap();
    let compiled = compile(&program).unwrap();
    let source = emit_pseudo_source(&compiled.plan);
    assert_eq!(source, include_str!("golden/chain_dead_branch.txt"));
}

#[test]
fn source_shows_init_then_cont_in_skeleton_order() {
    let program = parse_program(".edb e(int)\nanswer(X) :- e(X).").unwrap();
    let compiled = compile(&program).unwrap();
    let source = emit_pseudo_source(&compiled.plan);
    let init = source.find("case L_INIT_").expect("INIT case present");
    let cont = source.find("case L_CONT_").expect("CONT case present");
    let fetch = source.find("while(c").expect("fetch loop present");
    assert!(init < cont && cont < fetch, "INIT, CONT, loop in order:\n{source}");
}

#[test]
fn outputs_are_deterministic_across_compilations() {
    let text = "\
.edb e(int, int) indexed(bf)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
";
    let render = || {
        let program = parse_program(text).unwrap();
        let compiled = compile_with(&program, &CompileOptions::default()).unwrap();
        (
            to_dot(&compiled.graph, &compiled.program),
            emit_pseudo_source(&compiled.plan),
        )
    };
    let (dot1, src1) = render();
    let (dot2, src2) = render();
    assert_eq!(dot1, dot2);
    assert_eq!(src1, src2);
}

#[test]
fn goto_to_the_next_case_is_elided_in_source() {
    let text = "\
.edb e(int)
p(X) :- e(X).
q(X) :- p(X).
answer(X) :- q(X).
";
    let program = parse_program(text).unwrap();
    let compiled = compile(&program).unwrap();
    let source = emit_pseudo_source(&compiled.plan);
    assert!(
        source.contains("// falls through to l_start_"),
        "adjacent forwarding pieces should fall through:\n{source}"
    );
    // The interpreted plan keeps the explicit goto.
    let forwarding = compiled.plan.pieces.iter().find(|p| p.rule_no == 2).unwrap();
    assert!(matches!(
        forwarding.body.last(),
        Some(pushlog::plangen::Instr::Goto { .. })
    ));
}

#[test]
fn empty_program_yields_empty_graph_and_init() {
    let program = parse_program(".edb e(int)\np(X) :- e(X).").unwrap();
    let compiled = compile(&program).unwrap();
    assert_eq!(compiled.graph.fact_count(), 0);
    assert!(compiled.plan.init.is_empty());
    let dot = to_dot(&compiled.graph, &compiled.program);
    assert!(dot.starts_with("digraph") && dot.lines().count() == 2);
}
