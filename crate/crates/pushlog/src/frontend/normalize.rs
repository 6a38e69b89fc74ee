//! Binarization: rewrite rules with more than two body literals into chains
//! of rules with at most two, introducing fresh intermediate predicates.

use std::collections::HashSet;

use super::{Literal, Program, Rule, Term};

/// Rewrite every rule to at most two body literals by left-to-right pairwise
/// folding: the first two literals are split off into a fresh intermediate
/// rule `aux_<rule_no>_<k>` whose head carries exactly the variables shared
/// between the split-off pair and the rest of the rule (head included), in
/// first-occurrence order. Original rules keep their numbers; intermediate
/// rules get fresh numbers above the current maximum.
pub fn normalize_binary(program: &Program) -> Program {
    let mut out = program.clone();
    let mut next_no = out.max_rule_no() + 1;
    let mut used_preds: HashSet<String> = out
        .rules
        .iter()
        .flat_map(|r| {
            std::iter::once(r.head.predicate.clone())
                .chain(r.body.iter().map(|l| l.predicate.clone()))
        })
        .chain(out.edb.keys().cloned())
        .chain(out.idb_facts.iter().map(|f| f.predicate.clone()))
        .collect();

    let mut aux_rules = Vec::new();
    for rule in &mut out.rules {
        let mut k = 1;
        while rule.body.len() > 2 {
            let first = rule.body.remove(0);
            let second = rule.body.remove(0);

            // Variables of the pair that are still needed by the remainder or
            // the head, in first-occurrence order over the pair.
            let mut needed: Vec<String> = Vec::new();
            for lit in [&first, &second] {
                for var in lit.variables() {
                    let used_later = rule.body.iter().any(|l| l.has_var(var))
                        || rule.head.has_var(var);
                    if used_later && !needed.iter().any(|n| n == var) {
                        needed.push(var.to_string());
                    }
                }
            }

            let mut name = format!("aux_{}_{}", rule.rule_no, k);
            while used_preds.contains(&name) {
                name.push('_');
            }
            used_preds.insert(name.clone());
            k += 1;

            let aux_head = Literal {
                predicate: name.clone(),
                args: needed.iter().cloned().map(Term::Var).collect(),
            };
            aux_rules.push(Rule {
                rule_no: next_no,
                head: aux_head.clone(),
                body: vec![first, second],
            });
            next_no += 1;
            rule.body.insert(0, aux_head);
        }
    }
    out.rules.extend(aux_rules);
    out
}
