//! Recursion end to end: transitive closure over a cyclic graph. The
//! compiler detects the cycle in the rule application graph, tables `p` to
//! cut duplicates, and evaluation terminates with the full closure.
//!
//! ```bash
//! cargo run --example transitive_closure
//! ```

use pushlog::engine::{run, RunOptions};
use pushlog::frontend::parse_program;
use pushlog::storage::{Database, Relation};
use pushlog::value::{ColType, Value};
use pushlog::compile;

fn main() {
    let text = "\
.edb e(int, int)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
";
    let program = parse_program(text).expect("parses");
    let compiled = compile(&program).expect("compiles");
    println!(
        "tabled to guarantee termination: {:?}",
        compiled.tabling.predicates.iter().collect::<Vec<_>>()
    );

    let edges = [(1, 2), (2, 3), (3, 1)];
    let rows = edges
        .iter()
        .map(|&(a, b)| vec![Value::Int(a), Value::Int(b)])
        .collect();
    let db = Database::new().with(
        Relation::load("e", vec![ColType::Int, ColType::Int], &[], rows).unwrap(),
    );

    let outcome = run(&compiled.plan, &db, RunOptions::default()).expect("terminates");
    println!(
        "closure of a 3-cycle: {} pairs (all {} possible)",
        outcome.answers.len(),
        3 * 3
    );
    println!(
        "materialized tuples: {} (the tabled extension), derivations: {}",
        outcome.counters.tuples_materialized, outcome.counters.derivations
    );
}
