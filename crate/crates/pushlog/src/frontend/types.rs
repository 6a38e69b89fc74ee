//! Column type inference for IDB predicates.
//!
//! EDB column types are declared; IDB column types are propagated through
//! rule heads until a fixpoint. Mixing int and string in the same column or
//! comparing values of different types is rejected here, at compile time.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::value::ColType;

use super::{Program, Term};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypeError {
    #[error("type conflict for {predicate} column {col}: {a} vs {b}")]
    Column {
        predicate: String,
        col: usize,
        a: ColType,
        b: ColType,
    },
    #[error("rule {rule_no}: variable {var} used both as {a} and as {b}")]
    Variable {
        rule_no: u32,
        var: String,
        a: ColType,
        b: ColType,
    },
    #[error("rule {rule_no}: constant {token} does not fit {predicate} column {col} ({ty})")]
    Constant {
        rule_no: u32,
        predicate: String,
        col: usize,
        ty: ColType,
        token: String,
    },
}

/// Infer a column type vector for every predicate in the program.
/// Unconstrained IDB columns (only possible for underivable predicates)
/// default to int.
pub fn infer_types(program: &Program) -> Result<BTreeMap<String, Vec<ColType>>, TypeError> {
    let mut cols: BTreeMap<String, Vec<Option<ColType>>> = BTreeMap::new();
    for decl in program.edb.values() {
        cols.insert(decl.name.clone(), decl.types.iter().copied().map(Some).collect());
    }
    let ensure = |cols: &mut BTreeMap<String, Vec<Option<ColType>>>, pred: &str, arity: usize| {
        cols.entry(pred.to_string())
            .or_insert_with(|| vec![None; arity]);
    };

    for rule in &program.rules {
        ensure(&mut cols, &rule.head.predicate, rule.head.arity());
        for lit in &rule.body {
            ensure(&mut cols, &lit.predicate, lit.arity());
        }
    }
    for fact in &program.idb_facts {
        ensure(&mut cols, &fact.predicate, fact.values.len());
    }

    // Facts constrain their columns directly.
    for fact in &program.idb_facts {
        let slots = cols.get_mut(&fact.predicate).unwrap();
        for (i, value) in fact.values.iter().enumerate() {
            let ty = value.col_type();
            match slots[i] {
                None => slots[i] = Some(ty),
                Some(existing) if existing != ty => {
                    return Err(TypeError::Column {
                        predicate: fact.predicate.clone(),
                        col: i + 1,
                        a: existing,
                        b: ty,
                    })
                }
                Some(_) => {}
            }
        }
    }

    // Propagate through rules until nothing changes.
    loop {
        let mut changed = false;
        for rule in &program.rules {
            let mut vars: BTreeMap<&str, ColType> = BTreeMap::new();

            // Gather variable types and check constants against known columns.
            for lit in std::iter::once(&rule.head).chain(&rule.body) {
                let slots = cols.get(&lit.predicate).unwrap().clone();
                for (i, term) in lit.args.iter().enumerate() {
                    match (term, slots[i]) {
                        (Term::Const(c), Some(ty)) => {
                            if c.col_type() != ty {
                                return Err(TypeError::Constant {
                                    rule_no: rule.rule_no,
                                    predicate: lit.predicate.clone(),
                                    col: i + 1,
                                    ty,
                                    token: c.datalog_token(),
                                });
                            }
                        }
                        (Term::Const(_), None) => {}
                        (Term::Var(v), Some(ty)) => match vars.get(v.as_str()) {
                            None => {
                                vars.insert(v, ty);
                            }
                            Some(&known) if known != ty => {
                                return Err(TypeError::Variable {
                                    rule_no: rule.rule_no,
                                    var: v.clone(),
                                    a: known,
                                    b: ty,
                                })
                            }
                            Some(_) => {}
                        },
                        (Term::Var(_), None) => {}
                    }
                }
            }

            // Push constants and resolved variables back into unknown columns.
            for lit in std::iter::once(&rule.head).chain(&rule.body) {
                for (i, term) in lit.args.iter().enumerate() {
                    let new_ty = match term {
                        Term::Const(c) => Some(c.col_type()),
                        Term::Var(v) => vars.get(v.as_str()).copied(),
                    };
                    if let Some(ty) = new_ty {
                        let slots = cols.get_mut(&lit.predicate).unwrap();
                        if slots[i].is_none() {
                            slots[i] = Some(ty);
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    Ok(cols
        .into_iter()
        .map(|(pred, slots)| {
            let tys = slots.into_iter().map(|s| s.unwrap_or(ColType::Int)).collect();
            (pred, tys)
        })
        .collect())
}
