//! Reference bottom-up evaluator: naive and semi-naive fixpoint over ground
//! facts. Deliberately simple and independent of the push pipeline; every
//! equivalence test compares engine output against this module.
//!
//! Both evaluators accept rules with any number of body literals, so the
//! original (pre-binarization) program can be evaluated directly.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{Literal, Program, Term};
use crate::storage::Database;
use crate::value::Value;

/// Predicate extensions of the (least) model, EDB relations included.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interpretation {
    pub relations: BTreeMap<String, BTreeSet<Vec<Value>>>,
}

impl Interpretation {
    pub fn get(&self, predicate: &str) -> BTreeSet<Vec<Value>> {
        self.relations.get(predicate).cloned().unwrap_or_default()
    }

    pub fn answers(&self, program: &Program) -> BTreeSet<Vec<Value>> {
        self.get(&program.answer_pred)
    }

    /// Restrict to the given predicates (used to compare a normalized
    /// program's model against the original, ignoring intermediates).
    pub fn restrict(&self, predicates: &BTreeSet<String>) -> Interpretation {
        Interpretation {
            relations: self
                .relations
                .iter()
                .filter(|(p, _)| predicates.contains(*p))
                .map(|(p, t)| (p.clone(), t.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Ground rule instantiations whose body was fully satisfied.
    pub rule_firings: u64,
    pub iterations: u64,
}

fn seed(program: &Program, db: &Database) -> Interpretation {
    let mut model = Interpretation::default();
    for rel in db.relations() {
        let tuples = model.relations.entry(rel.name().to_string()).or_default();
        for row in rel.rows() {
            tuples.insert(row.clone());
        }
    }
    for fact in &program.idb_facts {
        model
            .relations
            .entry(fact.predicate.clone())
            .or_insert_with(BTreeSet::new)
            .insert(fact.values.clone());
    }
    model
}

fn match_literal<'a>(
    lit: &'a Literal,
    tuple: &[Value],
    env: &BTreeMap<&'a str, Value>,
) -> Option<BTreeMap<&'a str, Value>> {
    let mut env = env.clone();
    for (term, value) in lit.args.iter().zip(tuple) {
        match term {
            Term::Const(c) => {
                if c != value {
                    return None;
                }
            }
            Term::Var(v) => match env.get(v.as_str()) {
                Some(bound) if bound != value => return None,
                Some(_) => {}
                None => {
                    env.insert(v, value.clone());
                }
            },
        }
    }
    Some(env)
}

fn instantiate_head(lit: &Literal, env: &BTreeMap<&str, Value>) -> Vec<Value> {
    lit.args
        .iter()
        .map(|term| match term {
            Term::Const(c) => c.clone(),
            Term::Var(v) => env
                .get(v.as_str())
                .cloned()
                .unwrap_or_else(|| panic!("unbound head variable {v}")),
        })
        .collect()
}

/// Enumerate all body matches of `rule`, taking tuples for literal `i` from
/// `source(i)`, and call `emit` with each instantiated head tuple.
fn fire_rule<'p>(
    body: &'p [Literal],
    head: &'p Literal,
    source: &dyn Fn(usize) -> BTreeSet<Vec<Value>>,
    stats: &mut EvalStats,
    emit: &mut dyn FnMut(Vec<Value>),
) {
    fn descend<'p>(
        body: &'p [Literal],
        head: &'p Literal,
        idx: usize,
        env: BTreeMap<&'p str, Value>,
        source: &dyn Fn(usize) -> BTreeSet<Vec<Value>>,
        stats: &mut EvalStats,
        emit: &mut dyn FnMut(Vec<Value>),
    ) {
        if idx == body.len() {
            stats.rule_firings += 1;
            emit(instantiate_head(head, &env));
            return;
        }
        for tuple in source(idx) {
            if let Some(next) = match_literal(&body[idx], &tuple, &env) {
                descend(body, head, idx + 1, next, source, stats, emit);
            }
        }
    }
    descend(body, head, 0, BTreeMap::new(), source, stats, emit);
}

/// Naive fixpoint: apply every rule against the whole model until nothing
/// new is derived.
pub fn naive_eval_stats(program: &Program, db: &Database) -> (Interpretation, EvalStats) {
    let mut model = seed(program, db);
    let mut stats = EvalStats::default();
    loop {
        stats.iterations += 1;
        let mut fresh: Vec<(String, Vec<Value>)> = Vec::new();
        for rule in &program.rules {
            let source = |i: usize| model.get(&rule.body[i].predicate);
            fire_rule(&rule.body, &rule.head, &source, &mut stats, &mut |tuple| {
                fresh.push((rule.head.predicate.clone(), tuple));
            });
        }
        let mut changed = false;
        for (pred, tuple) in fresh {
            if model.relations.entry(pred).or_default().insert(tuple) {
                changed = true;
            }
        }
        if !changed {
            return (model, stats);
        }
    }
}

pub fn naive_eval(program: &Program, db: &Database) -> Interpretation {
    naive_eval_stats(program, db).0
}

/// Semi-naive fixpoint: each round only considers body matches that use at
/// least one fact derived in the previous round. Equal to [`naive_eval`] on
/// every input; it just fires fewer rule instances.
pub fn seminaive_eval_stats(program: &Program, db: &Database) -> (Interpretation, EvalStats) {
    let mut stats = EvalStats::default();
    let mut total = seed(program, db);
    let mut delta = total.clone();

    loop {
        stats.iterations += 1;
        let mut fresh: Vec<(String, Vec<Value>)> = Vec::new();
        for rule in &program.rules {
            if rule.body.is_empty() {
                continue;
            }
            for delta_pos in 0..rule.body.len() {
                let delta_tuples = delta.get(&rule.body[delta_pos].predicate);
                if delta_tuples.is_empty() {
                    continue;
                }
                // Positions before the delta position see the previous total
                // to avoid re-deriving pairs twice within one round; later
                // positions see everything known so far.
                let source = |i: usize| {
                    if i == delta_pos {
                        delta_tuples.clone()
                    } else if i < delta_pos {
                        let pred = &rule.body[i].predicate;
                        total
                            .get(pred)
                            .difference(&delta.get(pred))
                            .cloned()
                            .collect()
                    } else {
                        total.get(&rule.body[i].predicate)
                    }
                };
                fire_rule(&rule.body, &rule.head, &source, &mut stats, &mut |tuple| {
                    fresh.push((rule.head.predicate.clone(), tuple));
                });
            }
        }
        let mut next_delta = Interpretation::default();
        for (pred, tuple) in fresh {
            if total
                .relations
                .entry(pred.clone())
                .or_default()
                .insert(tuple.clone())
            {
                next_delta.relations.entry(pred).or_default().insert(tuple);
            }
        }
        if next_delta.relations.values().all(|t| t.is_empty()) {
            return (total, stats);
        }
        delta = next_delta;
    }
}

pub fn seminaive_eval(program: &Program, db: &Database) -> Interpretation {
    seminaive_eval_stats(program, db).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{normalize_binary, parse_program};
    use crate::storage::Relation;
    use crate::value::ColType;

    fn edges(name: &str, pairs: &[(i64, i64)]) -> Relation {
        Relation::load(
            name,
            vec![ColType::Int, ColType::Int],
            &[],
            pairs
                .iter()
                .map(|&(a, b)| vec![Value::Int(a), Value::Int(b)])
                .collect(),
        )
        .unwrap()
    }

    const TC: &str = "\
.edb e(int, int)
p(X, Y) :- e(X, Y).
p(X, Z) :- p(X, Y), e(Y, Z).
answer(X, Y) :- p(X, Y).
";

    #[test]
    fn transitive_closure_of_three_cycle_has_nine_pairs() {
        let program = parse_program(TC).unwrap();
        let db = Database::new().with(edges("e", &[(1, 2), (2, 3), (3, 1)]));
        let model = naive_eval(&program, &db);
        assert_eq!(model.get("p").len(), 9);
        assert_eq!(model.answers(&program).len(), 9);
    }

    #[test]
    fn empty_database_leaves_only_program_facts() {
        let program = parse_program("m(c1).\nanswer(X) :- m(X).").unwrap();
        let model = naive_eval(&program, &Database::new());
        assert_eq!(model.get("m").len(), 1);
        assert_eq!(model.answers(&program), BTreeSet::from([vec![Value::str("c1")]]));
    }

    #[test]
    fn dead_branch_model_still_contains_unused_tuples() {
        // The full minimal model derives p(c2, 9) and q(9, c2) even though
        // they never reach an answer; the push engine will skip them.
        let text = "\
.edb e1(int)
.edb e2(int)
answer(X) :- q(X, c1).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(c2, X) :- e2(X).
";
        let program = parse_program(text).unwrap();
        let e1 = Relation::load(
            "e1",
            vec![ColType::Int],
            &[],
            vec![vec![Value::Int(7)], vec![Value::Int(8)]],
        )
        .unwrap();
        let e2 =
            Relation::load("e2", vec![ColType::Int], &[], vec![vec![Value::Int(9)]]).unwrap();
        let db = Database::new().with(e1).with(e2);
        let model = naive_eval(&program, &db);
        assert_eq!(
            model.answers(&program),
            BTreeSet::from([vec![Value::Int(7)], vec![Value::Int(8)]])
        );
        assert!(model.get("p").contains(&vec![Value::str("c2"), Value::Int(9)]));
        assert!(model.get("q").contains(&vec![Value::Int(9), Value::str("c2")]));
    }

    #[test]
    fn seminaive_equals_naive_and_fires_less_on_chains() {
        let program = parse_program(TC).unwrap();
        let chain: Vec<(i64, i64)> = (0..50).map(|i| (i, i + 1)).collect();
        let db = Database::new().with(edges("e", &chain));
        let (naive, naive_stats) = naive_eval_stats(&program, &db);
        let (semi, semi_stats) = seminaive_eval_stats(&program, &db);
        assert_eq!(naive, semi);
        assert!(
            semi_stats.rule_firings < naive_stats.rule_firings,
            "semi-naive {} vs naive {}",
            semi_stats.rule_firings,
            naive_stats.rule_firings
        );
    }

    #[test]
    fn normalization_preserves_the_model_on_original_predicates() {
        let text = "\
.edb a(int, int)
.edb b(int, int)
.edb c(int, int)
p(X, Z) :- a(X, Y), b(Y, W), c(W, Z).
answer(X, Z) :- p(X, Z).
";
        let program = parse_program(text).unwrap();
        let normalized = normalize_binary(&program);
        let db = Database::new()
            .with(edges("a", &[(1, 2), (5, 2)]))
            .with(edges("b", &[(2, 3), (2, 4)]))
            .with(edges("c", &[(3, 7), (4, 7)]));
        let original_preds: BTreeSet<String> =
            ["a", "b", "c", "p", "answer"].iter().map(|s| s.to_string()).collect();
        let full = naive_eval(&program, &db);
        let norm = naive_eval(&normalized, &db).restrict(&original_preds);
        assert_eq!(full.restrict(&original_preds), norm);
        // Both a-pairs route through Y=2 and both b-targets reach Z=7.
        assert_eq!(
            full.get("p"),
            BTreeSet::from([
                vec![Value::Int(1), Value::Int(7)],
                vec![Value::Int(5), Value::Int(7)]
            ])
        );
    }

    #[test]
    fn monotone_in_the_database() {
        let program = parse_program(TC).unwrap();
        let small = Database::new().with(edges("e", &[(1, 2)]));
        let big = Database::new().with(edges("e", &[(1, 2), (2, 3)]));
        let m1 = naive_eval(&program, &small);
        let m2 = naive_eval(&program, &big);
        for (pred, tuples) in &m1.relations {
            assert!(tuples.is_subset(&m2.get(pred)));
        }
    }
}
