//! Property tests for the storage layer: every access path answers exactly
//! what a full scan plus filtering answers, and cursor save/restore behaves
//! like a recorded replay under arbitrary interleavings.

use proptest::prelude::*;

use pushlog::storage::{BindingPattern, Cursor, Relation};
use pushlog::value::{ColType, Value};

fn relation_with_index(rows: Vec<Vec<i64>>, mask: Vec<bool>) -> (Relation, BindingPattern) {
    let arity = 3;
    let pattern_text: String = mask.iter().map(|&b| if b { 'b' } else { 'f' }).collect();
    let pattern = BindingPattern::parse(&pattern_text).unwrap();
    let patterns = if pattern.is_all_free() {
        vec![]
    } else {
        vec![pattern.clone()]
    };
    let rel = Relation::load(
        "t",
        vec![ColType::Int; arity],
        &patterns,
        rows.into_iter()
            .map(|r| r.into_iter().map(Value::Int).collect())
            .collect(),
    )
    .unwrap();
    (rel, pattern)
}

fn drain(cursor: &mut Cursor<'_>, arity: usize) -> Vec<Vec<Value>> {
    let mut out = Vec::new();
    while cursor.fetch() {
        out.push((0..arity).map(|i| cursor.col(i).clone()).collect());
    }
    out
}

proptest! {
    /// Indexed access is scan-plus-filter, in insertion order.
    #[test]
    fn cursor_equals_filtered_scan(
        rows in proptest::collection::vec(proptest::collection::vec(0i64..4, 3), 0..20),
        mask in proptest::collection::vec(any::<bool>(), 3),
        probe in proptest::collection::vec(0i64..4, 3),
    ) {
        let (rel, pattern) = relation_with_index(rows, mask);
        let bound: Vec<Value> = pattern
            .bound_positions()
            .iter()
            .map(|&i| Value::Int(probe[i]))
            .collect();

        let mut cursor = rel.cursor(pattern.clone());
        cursor.open(bound.clone());
        let via_index = drain(&mut cursor, 3);

        let expected: Vec<Vec<Value>> = rel
            .rows()
            .iter()
            .filter(|row| {
                pattern
                    .bound_positions()
                    .iter()
                    .enumerate()
                    .all(|(k, &col)| row[col] == bound[k])
            })
            .cloned()
            .collect();
        prop_assert_eq!(via_index, expected);
    }

    /// Deterministic across runs given identical load order.
    #[test]
    fn scan_order_is_stable(
        rows in proptest::collection::vec(proptest::collection::vec(0i64..4, 3), 0..20),
    ) {
        let (rel, _) = relation_with_index(rows, vec![false, false, false]);
        let mut c1 = rel.cursor(BindingPattern::all_free(3));
        c1.open(vec![]);
        let first = drain(&mut c1, 3);
        let mut c2 = rel.cursor(BindingPattern::all_free(3));
        c2.open(vec![]);
        prop_assert_eq!(first, drain(&mut c2, 3));
    }
}

/// Operations for the save/restore replay model.
#[derive(Debug, Clone)]
enum Op {
    Open(i64),
    Fetch,
    Push,
    Pop,
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0i64..4).prop_map(Op::Open),
        Just(Op::Fetch),
        Just(Op::Push),
        Just(Op::Pop),
    ]
}

/// A trivially correct reference cursor: remembers the full observable state
/// (bound value and position) and replays it on pop.
#[derive(Debug, Clone, Default)]
struct ModelCursor {
    opened: Option<(i64, usize)>, // bound value, next index into matches
    saved: Vec<Option<(i64, usize)>>,
}

proptest! {
    /// Random interleavings of open/fetch/push/pop agree with the replay
    /// model on every fetch result and every observed tuple.
    #[test]
    fn push_pop_matches_replay_model(
        rows in proptest::collection::vec(proptest::collection::vec(0i64..4, 2), 0..12),
        ops in proptest::collection::vec(op_strategy(), 0..40),
    ) {
        let pattern = BindingPattern::parse("bf").unwrap();
        let rel = Relation::load(
            "t",
            vec![ColType::Int; 2],
            &[pattern.clone()],
            rows.iter()
                .map(|r| r.iter().map(|&n| Value::Int(n)).collect())
                .collect(),
        )
        .unwrap();
        let dedup: Vec<&Vec<Value>> = rel.rows().iter().collect();

        let matches_of = |key: i64| -> Vec<Vec<Value>> {
            dedup
                .iter()
                .filter(|r| r[0] == Value::Int(key))
                .map(|r| (*r).clone())
                .collect()
        };

        let mut cursor = rel.cursor(pattern);
        let mut model = ModelCursor::default();

        for op in ops {
            match op {
                Op::Open(key) => {
                    cursor.open(vec![Value::Int(key)]);
                    model.opened = Some((key, 0));
                }
                Op::Fetch => {
                    let Some((key, next)) = model.opened else { continue };
                    let matches = matches_of(key);
                    let expect = matches.get(next);
                    let got = cursor.fetch();
                    prop_assert_eq!(got, expect.is_some());
                    if let Some(expected_row) = expect {
                        prop_assert_eq!(cursor.col(0), &expected_row[0]);
                        prop_assert_eq!(cursor.col(1), &expected_row[1]);
                        model.opened = Some((key, next + 1));
                    }
                }
                Op::Push => {
                    if model.opened.is_some() {
                        cursor.push_state();
                        model.saved.push(model.opened);
                    }
                }
                Op::Pop => {
                    if let Some(saved) = model.saved.pop() {
                        cursor.pop_state();
                        model.opened = saved;
                    }
                }
            }
        }
    }
}
