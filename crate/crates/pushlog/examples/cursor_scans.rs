//! The relation cursor interface: full scans, index-backed binding patterns,
//! and the save/restore stack recursive code pieces rely on.
//!
//! ```bash
//! cargo run --example cursor_scans
//! ```

use pushlog::storage::{BindingPattern, Relation};
use pushlog::value::{ColType, Value};

fn main() {
    let rows = [(1, 2), (2, 3), (1, 3), (3, 1)]
        .iter()
        .map(|&(a, b)| vec![Value::Int(a), Value::Int(b)])
        .collect();
    let rel = Relation::load(
        "e",
        vec![ColType::Int, ColType::Int],
        &[BindingPattern::parse("bf").unwrap()],
        rows,
    )
    .expect("loads");

    println!("full scan of e:");
    let mut scan = rel.cursor(BindingPattern::all_free(2));
    scan.open(vec![]);
    while scan.fetch() {
        println!("  ({}, {})", scan.col(0), scan.col(1));
    }

    println!("indexed scan e(1, ?):");
    let mut probe = rel.cursor(BindingPattern::parse("bf").unwrap());
    probe.open(vec![Value::Int(1)]);
    while probe.fetch() {
        println!("  ({}, {})", probe.col(0), probe.col(1));
    }

    // Save a scan mid-flight, reuse the cursor elsewhere, then resume.
    println!("save/restore:");
    probe.open(vec![Value::Int(1)]);
    assert!(probe.fetch());
    println!("  first match: ({}, {})", probe.col(0), probe.col(1));
    probe.push_state();

    probe.open(vec![Value::Int(3)]);
    while probe.fetch() {
        println!("  detour:      ({}, {})", probe.col(0), probe.col(1));
    }

    probe.pop_state();
    while probe.fetch() {
        println!("  resumed:     ({}, {})", probe.col(0), probe.col(1));
    }
}
