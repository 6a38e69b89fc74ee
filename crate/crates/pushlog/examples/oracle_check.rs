//! Differential testing: run the push engine and the reference bottom-up
//! evaluators over the same program and compare answer sets.
//!
//! ```bash
//! cargo run --example oracle_check
//! ```

use std::collections::BTreeSet;

use pushlog::engine::{run, RunOptions};
use pushlog::frontend::parse_program;
use pushlog::oracle::{naive_eval_stats, seminaive_eval_stats};
use pushlog::storage::{Database, Relation};
use pushlog::value::{ColType, Value};
use pushlog::compile;

fn main() {
    let text = "\
.edb flat(int, int)
.edb up(int, int)
.edb down(int, int)
sg(X, Y) :- flat(X, Y).
sg(X, Y) :- up(X, U), sg(U, V), down(V, Y).
answer(X, Y) :- sg(X, Y).
";
    let program = parse_program(text).expect("parses");

    let pairs = |name: &str, edges: &[(i64, i64)]| {
        Relation::load(
            name,
            vec![ColType::Int, ColType::Int],
            &[],
            edges
                .iter()
                .map(|&(a, b)| vec![Value::Int(a), Value::Int(b)])
                .collect(),
        )
        .unwrap()
    };
    let db = Database::new()
        .with(pairs("flat", &[(4, 5)]))
        .with(pairs("up", &[(1, 4), (2, 4), (3, 5)]))
        .with(pairs("down", &[(4, 1), (4, 2), (5, 3)]));

    let compiled = compile(&program).expect("compiles");
    let outcome = run(&compiled.plan, &db, RunOptions { shadow_check: true }).expect("runs");
    let push: BTreeSet<Vec<Value>> = outcome.answers.iter().cloned().collect();

    let (naive, naive_stats) = naive_eval_stats(&program, &db);
    let (semi, semi_stats) = seminaive_eval_stats(&program, &db);
    assert_eq!(naive, semi, "the two reference evaluators agree");
    assert_eq!(push, naive.answers(&program), "push agrees with the oracle");
    assert_eq!(outcome.shadow_mismatches, 0);

    println!("answers ({}):", push.len());
    for row in &push {
        println!("  ({}, {})", row[0], row[1]);
    }
    println!(
        "\nreference evaluator firings: naive {} vs semi-naive {}",
        naive_stats.rule_firings, semi_stats.rule_firings
    );
    println!("push derivations: {}", outcome.counters.derivations);
}
