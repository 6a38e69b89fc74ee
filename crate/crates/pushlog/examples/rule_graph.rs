//! Compile-time partial evaluation: the symbolic fixpoint, the rule
//! application graph, and pruning of paths that cannot reach an answer.
//!
//! ```bash
//! cargo run --example rule_graph
//! ```

use pushlog::frontend::parse_program;
use pushlog::symbolic::{prune_useless, recursive_nodes, symbolic_fixpoint, to_dot};

fn main() {
    // The branch through e2 derives p(c2, ...), which no consumer of the
    // query can ever match: it is dead code and pruned before codegen.
    let text = "\
.edb e1(int)
.edb e2(int)
answer(X) :- q(X, c1).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(c2, X) :- e2(X).
";
    let program = parse_program(text).expect("parses");

    let full = symbolic_fixpoint(&program);
    println!(
        "fixpoint: {} symbolic facts, {} rule applications",
        full.fact_count(),
        full.node_count()
    );
    for fact in &full.facts {
        println!("  {}", fact.fact);
    }

    let pruned = prune_useless(&full);
    println!(
        "\npruned: {} facts, {} rule applications, recursive nodes: {:?}",
        pruned.fact_count(),
        pruned.node_count(),
        recursive_nodes(&pruned)
    );

    println!("\nDOT of the pruned graph:");
    print!("{}", to_dot(&pruned, &program));
}
