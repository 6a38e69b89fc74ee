//! Pretty-print the generated code pieces of a recursive program in the
//! dispatch-loop skeleton, including the save/restore brackets recursion
//! needs.
//!
//! ```bash
//! cargo run --example emit_source
//! ```

use pushlog::frontend::parse_program;
use pushlog::plangen::emit_pseudo_source;
use pushlog::compile;

fn main() {
    let text = "\
.edb e(int, int) indexed(bf)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
";
    let program = parse_program(text).expect("parses");
    let compiled = compile(&program).expect("compiles");
    println!(
        "tabled predicates: {:?}",
        compiled.tabling.predicates.iter().collect::<Vec<_>>()
    );
    println!();
    print!("{}", emit_pseudo_source(&compiled.plan));
}
