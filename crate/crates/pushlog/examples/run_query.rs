//! End to end: load a program and CSV data from disk, compile, run, and
//! print answers plus instrumentation counters.
//!
//! ```bash
//! cargo run --example run_query
//! ```

use std::path::Path;

use pushlog::engine::{run, RunOptions};
use pushlog::frontend::parse_program;
use pushlog::storage::Database;
use pushlog::compile;

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/reach");
    let text = std::fs::read_to_string(data.join("program.dl")).expect("program file");
    let program = parse_program(&text).expect("parses");
    let compiled = compile(&program).expect("compiles");

    let db = Database::load_dir(&data, &compiled.plan.edb_schemas).expect("CSV data");
    let outcome = run(&compiled.plan, &db, RunOptions::default()).expect("runs");

    println!("answers:");
    for row in &outcome.answers {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        println!("  {}", cells.join(", "));
    }
    println!("\ncounters: {}", serde_json::to_string(&outcome.counters).unwrap());
}
