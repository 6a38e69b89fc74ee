//! Parse a program, report validation issues, and binarize long rule bodies.
//!
//! ```bash
//! cargo run --example parse_and_validate
//! ```

use pushlog::frontend::{normalize_binary, parse_program, validate};

fn main() {
    let text = "\
% three body literals: the compiler only accepts two, so the rule is split
.edb a(int, int)
.edb b(int, int)
.edb c(int, int)
p(X, Z) :- a(X, Y), b(Y, W), c(W, Z).
answer(X, Z) :- p(X, Z).
";
    let program = parse_program(text).expect("parses");
    println!("parsed {} rules", program.rules.len());

    let violations = validate(&program);
    assert!(violations.is_empty());

    let normalized = normalize_binary(&program);
    println!("\nafter binarization:");
    print!("{normalized}");

    // Broken programs report every violation, not just the first.
    let broken = parse_program(".edb e(int)\np(X, Y) :- e(X).\ne(X) :- p(X, X).").unwrap();
    println!("\nviolations in a broken program:");
    for violation in validate(&broken) {
        println!("  {violation}");
    }
}
