//! Shared corpus for the integration tests: a suite of programs with EDB
//! instance generators, plus differential helpers comparing the push engine
//! against the reference evaluator.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pushlog::engine::{self, RunOptions, RunOutcome};
use pushlog::frontend::parse_program;
use pushlog::oracle;
use pushlog::storage::{Database, Relation};
use pushlog::value::{ColType, Value};
use pushlog::{compile_with, CompileOptions, Compiled};

pub struct Case {
    pub name: &'static str,
    pub text: &'static str,
    pub instances: Vec<(String, Database)>,
}

pub fn rel_ints(name: &str, arity: usize, rows: &[Vec<i64>]) -> Relation {
    rel_ints_indexed(name, arity, rows, &[])
}

pub fn rel_ints_indexed(name: &str, arity: usize, rows: &[Vec<i64>], patterns: &[&str]) -> Relation {
    let patterns: Vec<_> = patterns
        .iter()
        .map(|p| pushlog::storage::BindingPattern::parse(p).unwrap())
        .collect();
    Relation::load(
        name,
        vec![ColType::Int; arity],
        &patterns,
        rows.iter()
            .map(|r| r.iter().map(|&n| Value::Int(n)).collect())
            .collect(),
    )
    .unwrap()
}

pub fn rel_strs(name: &str, arity: usize, rows: &[Vec<&str>], patterns: &[&str]) -> Relation {
    let patterns: Vec<_> = patterns
        .iter()
        .map(|p| pushlog::storage::BindingPattern::parse(p).unwrap())
        .collect();
    Relation::load(
        name,
        vec![ColType::Str; arity],
        &patterns,
        rows.iter()
            .map(|r| r.iter().map(|s| Value::str(s)).collect())
            .collect(),
    )
    .unwrap()
}

pub fn pairs(edges: &[(i64, i64)]) -> Vec<Vec<i64>> {
    edges.iter().map(|&(a, b)| vec![a, b]).collect()
}

pub fn line_graph(n: i64) -> Vec<(i64, i64)> {
    (0..n).map(|i| (i, i + 1)).collect()
}

pub fn cycle_graph(n: i64) -> Vec<(i64, i64)> {
    (0..n).map(|i| (i, (i + 1) % n)).collect()
}

pub fn random_graph(seed: u64, nodes: i64, edges: usize) -> Vec<(i64, i64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..edges)
        .map(|_| (rng.gen_range(0..nodes), rng.gen_range(0..nodes)))
        .collect()
}

fn edge_instances(rel: &str, patterns: &[&str]) -> Vec<(String, Database)> {
    let mk = |name: &str, edges: Vec<(i64, i64)>| {
        (
            name.to_string(),
            Database::new().with(rel_ints_indexed(rel, 2, &pairs(&edges), patterns)),
        )
    };
    vec![
        mk("empty", vec![]),
        mk("line", line_graph(4)),
        mk("cycle3", cycle_graph(3)),
        mk("dense", {
            let mut e = random_graph(7, 5, 12);
            e.extend(cycle_graph(5));
            e
        }),
    ]
}

/// The differential suite: every program family the compiler handles, each
/// with empty, acyclic, cyclic and random data.
pub fn suite() -> Vec<Case> {
    let mut cases = Vec::new();

    cases.push(Case {
        name: "chain_dead_branch",
        text: "\
.edb e1(int)
.edb e2(int)
answer(X) :- q(X, c1).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(c2, X) :- e2(X).
",
        instances: vec![
            (
                "empty".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[]))
                    .with(rel_ints("e2", 1, &[])),
            ),
            (
                "seven_eight_nine".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[vec![7], vec![8]]))
                    .with(rel_ints("e2", 1, &[vec![9]])),
            ),
            (
                "overlap".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[vec![1], vec![2], vec![3]]))
                    .with(rel_ints("e2", 1, &[vec![1], vec![2]])),
            ),
        ],
    });

    cases.push(Case {
        name: "tclosure",
        text: "\
.edb e(int, int)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
",
        instances: edge_instances("e", &[]),
    });

    cases.push(Case {
        name: "tclosure_indexed",
        text: "\
.edb e(int, int) indexed(bf)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
",
        instances: edge_instances("e", &["bf"]),
    });

    // Sliding window over edges: the recursive rule re-reads a variable it
    // also assigns, forcing copy-all compilation.
    cases.push(Case {
        name: "window",
        text: "\
.edb c(int, int)
p(X, Y) :- c(X, Y).
p(Y, Z) :- p(X, Y), c(Y, Z).
answer(X, Y) :- p(X, Y).
",
        instances: edge_instances("c", &[]),
    });

    cases.push(Case {
        name: "same_gen",
        text: "\
.edb flat(int, int)
.edb up(int, int)
.edb down(int, int)
sg(X, Y) :- flat(X, Y).
sg(X, Y) :- up(X, U), sg(U, V), down(V, Y).
answer(X, Y) :- sg(X, Y).
",
        instances: {
            let mk = |name: &str, flat: Vec<(i64, i64)>, up: Vec<(i64, i64)>, down: Vec<(i64, i64)>| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("flat", 2, &pairs(&flat)))
                        .with(rel_ints("up", 2, &pairs(&up)))
                        .with(rel_ints("down", 2, &pairs(&down))),
                )
            };
            vec![
                mk("empty", vec![], vec![], vec![]),
                mk(
                    "tree",
                    vec![(4, 5)],
                    vec![(1, 4), (2, 4), (3, 5)],
                    vec![(4, 1), (4, 2), (5, 3)],
                ),
                mk(
                    "cyclic",
                    vec![(0, 1)],
                    cycle_graph(3),
                    cycle_graph(3).into_iter().map(|(a, b)| (b, a)).collect(),
                ),
                mk(
                    "random",
                    random_graph(11, 5, 4),
                    random_graph(12, 5, 8),
                    random_graph(13, 5, 8),
                ),
            ]
        },
    });

    cases.push(Case {
        name: "pair_join",
        text: "\
.edb el(int, int)
.edb er(int, int)
l(X, Y) :- el(X, Y).
rgt(X, Y) :- er(X, Y).
d(X, Z) :- l(X, Y), rgt(Y, Z).
answer(X, Z) :- d(X, Z).
",
        instances: {
            let mk = |name: &str, el: Vec<(i64, i64)>, er: Vec<(i64, i64)>| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("el", 2, &pairs(&el)))
                        .with(rel_ints("er", 2, &pairs(&er))),
                )
            };
            vec![
                mk("empty", vec![], vec![]),
                mk("one_side_empty", line_graph(3), vec![]),
                mk("chain", line_graph(3), line_graph(3)),
                mk("random", random_graph(21, 5, 8), random_graph(22, 5, 8)),
            ]
        },
    });

    cases.push(Case {
        name: "path_join",
        text: "\
.edb e(int, int)
path(X, Y) :- e(X, Y).
path(X, Z) :- path(X, Y), path(Y, Z).
answer(X, Y) :- path(X, Y).
",
        instances: edge_instances("e", &[]),
    });

    cases.push(Case {
        name: "two_edb",
        text: "\
.edb a(int, int)
.edb b(int, int) indexed(bf)
p(X, Z) :- a(X, Y), b(Y, Z).
answer(X, Z) :- p(X, Z).
",
        instances: {
            let mk = |name: &str, a: Vec<(i64, i64)>, b: Vec<(i64, i64)>| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("a", 2, &pairs(&a)))
                        .with(rel_ints_indexed("b", 2, &pairs(&b), &["bf"])),
                )
            };
            vec![
                mk("empty", vec![], vec![]),
                mk("outer_empty", vec![], line_graph(3)),
                mk("chain", line_graph(4), line_graph(4)),
                mk("random", random_graph(31, 5, 9), random_graph(32, 5, 9)),
            ]
        },
    });

    cases.push(Case {
        name: "cross",
        text: "\
.edb a(int)
.edb b(string)
answer(X, Y) :- a(X), b(Y).
",
        instances: {
            let mk = |name: &str, a: &[i64], b: &[&str]| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("a", 1, &a.iter().map(|&n| vec![n]).collect::<Vec<_>>()))
                        .with(rel_strs(
                            "b",
                            1,
                            &b.iter().map(|&s| vec![s]).collect::<Vec<_>>(),
                            &[],
                        )),
                )
            };
            vec![
                mk("empty", &[], &[]),
                mk("left_only", &[1, 2], &[]),
                mk("full", &[1, 2, 3], &["x", "y"]),
            ]
        },
    });

    // Demand-driven reachability from a seed constant, in the shape magic
    // set rewritings produce: a ground seed fact and a recursive pair of
    // rules threading bindings through it.
    cases.push(Case {
        name: "reach_seeded",
        text: "\
.edb e(string, string) indexed(bf)
m(c1).
s(X, Y) :- m(X), e(X, Y).
m(Y) :- s(X, Y).
answer(Y) :- s(c1, Y).
",
        instances: {
            let mk = |name: &str, edges: &[(&str, &str)]| {
                (
                    name.to_string(),
                    Database::new().with(rel_strs(
                        "e",
                        2,
                        &edges.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>(),
                        &["bf"],
                    )),
                )
            };
            vec![
                mk("empty", &[]),
                mk("line", &[("c1", "c2"), ("c2", "c3")]),
                mk("cycle", &[("c1", "c2"), ("c2", "c3"), ("c3", "c1")]),
                mk(
                    "offshoot",
                    &[("c1", "c2"), ("c2", "c1"), ("c9", "c8"), ("c2", "c4")],
                ),
            ]
        },
    });

    cases.push(Case {
        name: "twin_chain",
        text: "\
.edb e1(int)
.edb e2(int)
answer(X) :- q(X, c1).
answer(X) :- q(X, c2).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(c2, X) :- e2(X).
",
        instances: vec![
            (
                "empty".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[]))
                    .with(rel_ints("e2", 1, &[])),
            ),
            (
                "disjoint".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[vec![7]]))
                    .with(rel_ints("e2", 1, &[vec![9]])),
            ),
            (
                "overlap".to_string(),
                Database::new()
                    .with(rel_ints("e1", 1, &[vec![1], vec![2]]))
                    .with(rel_ints("e2", 1, &[vec![2], vec![3]])),
            ),
        ],
    });

    cases.push(Case {
        name: "quad_guard",
        text: "\
.edb r4(int, int, int, int)
q(A, B) :- r4(A, B, C, C).
answer(A, B) :- q(A, B).
",
        instances: {
            let mk = |name: &str, rows: &[[i64; 4]]| {
                (
                    name.to_string(),
                    Database::new().with(rel_ints(
                        "r4",
                        4,
                        &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
                    )),
                )
            };
            vec![
                mk("empty", &[]),
                mk("mixed", &[[1, 2, 3, 3], [1, 2, 3, 4], [5, 6, 0, 0]]),
                mk("none_match", &[[1, 2, 3, 4], [4, 3, 2, 1]]),
            ]
        },
    });

    cases.push(Case {
        name: "diag",
        text: "\
.edb r(int, int)
p(X) :- r(X, X).
answer(X) :- p(X).
",
        instances: {
            let mk = |name: &str, edges: Vec<(i64, i64)>| {
                (
                    name.to_string(),
                    Database::new().with(rel_ints("r", 2, &pairs(&edges))),
                )
            };
            vec![
                mk("empty", vec![]),
                mk("with_diagonal", vec![(1, 1), (1, 2), (3, 3)]),
                mk("off_diagonal", vec![(1, 2), (2, 3)]),
            ]
        },
    });

    cases.push(Case {
        name: "self_loop",
        text: "\
.edb e0(int)
.edb e(int) indexed(b)
p(X) :- e0(X).
p(X) :- p(X), e(X).
answer(X) :- p(X).
",
        instances: {
            let mk = |name: &str, e0: &[i64], e: &[i64]| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("e0", 1, &e0.iter().map(|&n| vec![n]).collect::<Vec<_>>()))
                        .with(rel_ints_indexed(
                            "e",
                            1,
                            &e.iter().map(|&n| vec![n]).collect::<Vec<_>>(),
                            &["b"],
                        )),
                )
            };
            vec![
                mk("empty", &[], &[]),
                mk("looping", &[1, 2], &[1, 2, 3]),
                mk("disjoint", &[1], &[2]),
            ]
        },
    });

    // The recursive rule swaps the pair it received, so the copy-all entry
    // needs a temporary for the cyclic permutation.
    cases.push(Case {
        name: "swap_pairs",
        text: "\
.edb e0(int, int)
.edb e(string)
p(A, B, c0) :- e0(A, B).
p(B, A, C) :- p(A, B, c0), e(C).
answer(A, B, C) :- p(A, B, C).
",
        instances: {
            let mk = |name: &str, e0: Vec<(i64, i64)>, e: &[&str]| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("e0", 2, &pairs(&e0)))
                        .with(rel_strs(
                            "e",
                            1,
                            &e.iter().map(|&s| vec![s]).collect::<Vec<_>>(),
                            &[],
                        )),
                )
            };
            vec![
                mk("empty", vec![], &[]),
                mk("no_c0", vec![(1, 2)], &["x5", "x6"]),
                mk("with_c0", vec![(1, 2), (2, 1)], &["c0", "x5"]),
                mk("cyclic", cycle_graph(3), &["c0"]),
            ]
        },
    });

    // One side of the pair join can never reach the answer (its second
    // column is fixed to a rejected constant), so its rule application is
    // kept only to feed the side table the live side joins against.
    cases.push(Case {
        name: "partial_join",
        text: "\
.edb el(string, string)
l(X, Y) :- el(X, Y).
rgt(c1, c9).
rgt(c2, c5).
d(X, Z) :- l(X, Y), rgt(Y, Z).
answer(X) :- d(X, c5).
",
        instances: {
            let mk = |name: &str, el: &[(&str, &str)]| {
                (
                    name.to_string(),
                    Database::new().with(rel_strs(
                        "el",
                        2,
                        &el.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>(),
                        &[],
                    )),
                )
            };
            vec![
                mk("empty", &[]),
                mk("both_targets", &[("n7", "c1"), ("n8", "c2")]),
                mk("only_dead_target", &[("n7", "c1")]),
            ]
        },
    });

    // A ground program fact overlapping a rule-derived predicate.
    cases.push(Case {
        name: "fact_overlap",
        text: "\
.edb e(string)
p(c1).
p(X) :- e(X).
answer(X) :- p(X).
",
        instances: {
            let mk = |name: &str, e: &[&str]| {
                (
                    name.to_string(),
                    Database::new().with(rel_strs(
                        "e",
                        1,
                        &e.iter().map(|&s| vec![s]).collect::<Vec<_>>(),
                        &[],
                    )),
                )
            };
            vec![
                mk("empty", &[]),
                mk("duplicate_of_fact", &["c1", "c2"]),
                mk("disjoint", &["c3"]),
            ]
        },
    });

    // Join variables flowing both ways between the two scans.
    cases.push(Case {
        name: "two_edb_shared",
        text: "\
.edb a(int, int)
.edb b(int, int)
t(X) :- a(X, Y), b(Y, X).
answer(X) :- t(X).
",
        instances: {
            let mk = |name: &str, a: Vec<(i64, i64)>, b: Vec<(i64, i64)>| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints("a", 2, &pairs(&a)))
                        .with(rel_ints("b", 2, &pairs(&b))),
                )
            };
            vec![
                mk("empty", vec![], vec![]),
                mk("mutual", vec![(1, 2), (3, 4)], vec![(2, 1), (4, 5)]),
                mk("random", random_graph(41, 4, 8), random_graph(42, 4, 8)),
            ]
        },
    });

    cases.push(Case {
        name: "min_vars",
        text: "\
.edb r(int, int, int, int)
.edb eq(int)
p(A, B, c0) :- q(B), r(A, B, C, C).
q(B) :- eq(B).
answer(A, B, C) :- p(A, B, C).
",
        instances: {
            let mk = |name: &str, r: &[[i64; 4]], eq: &[i64]| {
                (
                    name.to_string(),
                    Database::new()
                        .with(rel_ints(
                            "r",
                            4,
                            &r.iter().map(|x| x.to_vec()).collect::<Vec<_>>(),
                        ))
                        .with(rel_ints("eq", 1, &eq.iter().map(|&n| vec![n]).collect::<Vec<_>>())),
                )
            };
            vec![
                mk("empty", &[], &[]),
                mk("matching", &[[10, 2, 3, 3], [11, 2, 4, 5]], &[2]),
                mk("no_join", &[[10, 2, 3, 3]], &[9]),
            ]
        },
    });

    cases
}

/// Compile and run a program against the push engine, compare the answer
/// set with the reference evaluator, and return the outcome for further
/// counter checks. Panics (with context) on any disagreement.
pub fn check_push_vs_oracle(
    label: &str,
    text: &str,
    db: &Database,
    options: &CompileOptions,
) -> (Compiled, RunOutcome) {
    let program = parse_program(text).unwrap_or_else(|e| panic!("{label}: parse: {e}"));
    let compiled =
        compile_with(&program, options).unwrap_or_else(|e| panic!("{label}: compile: {e}"));
    let outcome = engine::run(&compiled.plan, db, RunOptions { shadow_check: true })
        .unwrap_or_else(|e| panic!("{label}: run: {e}"));

    let push_set: BTreeSet<Vec<Value>> = outcome.answers.iter().cloned().collect();
    let oracle_set = oracle::naive_eval(&program, db).answers(&program);
    assert_eq!(
        push_set, oracle_set,
        "{label}: push answers differ from the reference evaluator"
    );
    assert_eq!(
        outcome.shadow_mismatches, 0,
        "{label}: value-protection shadow check failed"
    );
    (compiled, outcome)
}
