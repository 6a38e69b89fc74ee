//! Compile-time partial evaluation: symbolic facts, unification against body
//! literals, and derivation of head facts.
//!
//! A symbolic fact describes what is known at compile time about a fact that
//! will be derived at runtime: a constant where the value is fixed by the
//! program, otherwise the name of the runtime variable that will hold the
//! value. Runtime variables are written `v<rule>_<var>` and belong to exactly
//! one rule, which is the only rule whose code pieces ever assign them.

mod graph;

use std::collections::BTreeMap;
use std::fmt;

pub use graph::{
    choose_tabling, covers_all_cycles, prune_useless, recursive_nodes, symbolic_fixpoint, to_dot,
    FactId, FactNode, NodeId, NodeShape, RuleApplicationGraph, RuleNode, SaveNeeds, TablingPlan,
};

use crate::frontend::{Literal, Rule, Term};
use crate::value::Value;

/// A runtime variable, owned by the rule that introduced it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RtVar {
    pub rule_no: u32,
    pub var: String,
}

impl RtVar {
    pub fn new(rule_no: u32, var: &str) -> RtVar {
        RtVar {
            rule_no,
            var: var.to_string(),
        }
    }
}

impl fmt::Display for RtVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}_{}", self.rule_no, self.var)
    }
}

/// One argument slot of a symbolic fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Const(Value),
    Var(RtVar),
}

impl Slot {
    pub fn as_var(&self) -> Option<&RtVar> {
        match self {
            Slot::Var(v) => Some(v),
            Slot::Const(_) => None,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Const(c) => write!(f, "{}", c.datalog_token()),
            Slot::Var(v) => write!(f, "{v}"),
        }
    }
}

/// A predicate applied to compile-time slots. Structural equality is the
/// identity used by the fixpoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolicFact {
    pub predicate: String,
    pub slots: Vec<Slot>,
}

impl SymbolicFact {
    pub fn ground(predicate: &str, values: &[Value]) -> SymbolicFact {
        SymbolicFact {
            predicate: predicate.to_string(),
            slots: values.iter().cloned().map(Slot::Const).collect(),
        }
    }

    pub fn rt_vars(&self) -> impl Iterator<Item = &RtVar> {
        self.slots.iter().filter_map(Slot::as_var)
    }
}

impl fmt::Display for SymbolicFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, slot) in self.slots.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{slot}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Key {
    Logic(String),
    Rt(RtVar),
}

/// A most general unifier between a symbolic fact and a body literal.
///
/// Logic variables are always bound towards slots (constants or runtime
/// variables), never the reverse. Bindings *of* runtime variables cannot be
/// enforced at compile time; they are the residue that becomes runtime
/// equality guards at the entry of the generated code piece.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subst {
    map: BTreeMap<Key, Slot>,
}

impl Subst {
    /// Follow bindings until a constant or an unbound runtime variable.
    fn resolve(&self, slot: &Slot) -> Slot {
        let mut cur = slot.clone();
        loop {
            match &cur {
                Slot::Const(_) => return cur,
                Slot::Var(v) => match self.map.get(&Key::Rt(v.clone())) {
                    Some(next) => cur = next.clone(),
                    None => return cur,
                },
            }
        }
    }

    /// The slot a logic variable is bound to, if any.
    pub fn lookup(&self, var: &str) -> Option<Slot> {
        self.map
            .get(&Key::Logic(var.to_string()))
            .map(|s| self.resolve(s))
    }

    /// Apply to a term of the rule. Unbound logic variables stay `None`.
    pub fn apply(&self, term: &Term) -> Option<Slot> {
        match term {
            Term::Const(c) => Some(Slot::Const(c.clone())),
            Term::Var(v) => self.lookup(v),
        }
    }

    /// Runtime-variable bindings that must be checked at runtime:
    /// pairs `(v, s)` with `σ(v) = s` and `s ≠ v`, fully resolved.
    pub fn rt_residue(&self) -> Vec<(RtVar, Slot)> {
        let mut out = Vec::new();
        for key in self.map.keys() {
            if let Key::Rt(v) = key {
                let resolved = self.resolve(&Slot::Var(v.clone()));
                if resolved != Slot::Var(v.clone()) {
                    out.push((v.clone(), resolved));
                }
            }
        }
        out
    }

    fn bind(&mut self, key: Key, slot: Slot) -> bool {
        // Occurs checks are unnecessary: slots contain no structure.
        debug_assert!(!self.map.contains_key(&key));
        if let (Key::Rt(v), Slot::Var(w)) = (&key, &slot) {
            if v == w {
                return true;
            }
        }
        self.map.insert(key, slot);
        true
    }

    fn unify_slots(&mut self, a: &Slot, b: &Slot) -> bool {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (Slot::Const(x), Slot::Const(y)) => x == y,
            (Slot::Var(v), _) => self.bind(Key::Rt(v.clone()), b.clone()),
            (_, Slot::Var(w)) => self.bind(Key::Rt(w.clone()), a.clone()),
        }
    }
}

/// Unify a symbolic fact with a body literal of the same predicate and arity.
/// Returns the most general unifier, or `None` when the rule cannot apply to
/// this fact at all (so no code is generated for the pair).
pub fn unify_fact_literal(fact: &SymbolicFact, lit: &Literal) -> Option<Subst> {
    debug_assert_eq!(fact.predicate, lit.predicate);
    debug_assert_eq!(fact.slots.len(), lit.args.len());
    let mut subst = Subst::default();
    for (term, slot) in lit.args.iter().zip(&fact.slots) {
        let ok = match term {
            Term::Const(c) => subst.unify_slots(&Slot::Const(c.clone()), slot),
            Term::Var(v) => match subst.lookup(v) {
                Some(bound) => subst.unify_slots(&bound, slot),
                None => {
                    let resolved = subst.resolve(slot);
                    subst.bind(Key::Logic(v.clone()), resolved)
                }
            },
        };
        if !ok {
            return None;
        }
    }
    Some(subst)
}

/// Variables a code piece for this rule assigns from its EDB scan in normal
/// (non-copying) mode: head variables that do not occur in the selected IDB
/// body literal. With no IDB literal selected, every head variable.
pub fn assigned_vars<'r>(rule: &'r Rule, selected: Option<usize>) -> Vec<&'r str> {
    let idb_lit = selected.map(|i| &rule.body[i]);
    rule.head
        .variables()
        .into_iter()
        .filter(|v| idb_lit.is_none_or(|lit| !lit.has_var(v)))
        .collect()
}

/// A rule application conflicts when the incoming fact still carries a
/// runtime variable of this very rule that the rule would assign anew. Such
/// applications are compiled in copy-all mode: the piece gets its own
/// variable for every rule variable that carries data and copies the input
/// values over before they can be clobbered.
pub fn detect_conflict(rule: &Rule, selected: usize, fact: &SymbolicFact) -> bool {
    let assigned = assigned_vars(rule, Some(selected));
    fact.rt_vars()
        .any(|rt| rt.rule_no == rule.rule_no && assigned.iter().any(|a| *a == rt.var))
}

/// Compile a rule head into the derived symbolic fact.
///
/// Normal mode: constants stay, variables of the selected IDB literal take
/// their unified slot, all other head variables become fresh runtime
/// variables of this rule. Copy-all mode: every head variable becomes a
/// runtime variable of this rule.
pub fn derive_head(
    rule: &Rule,
    selected: Option<(usize, &Subst)>,
    copy_all: bool,
) -> SymbolicFact {
    let slots = rule
        .head
        .args
        .iter()
        .map(|term| match term {
            Term::Const(c) => Slot::Const(c.clone()),
            Term::Var(v) => {
                if copy_all {
                    return Slot::Var(RtVar::new(rule.rule_no, v));
                }
                match selected {
                    Some((idx, subst)) if rule.body[idx].has_var(v) => {
                        subst.lookup(v).unwrap_or_else(|| {
                            panic!(
                                "rule {}: head variable {v} unbound by the unifier",
                                rule.rule_no
                            )
                        })
                    }
                    _ => Slot::Var(RtVar::new(rule.rule_no, v)),
                }
            }
        })
        .collect();
    SymbolicFact {
        predicate: rule.head.predicate.clone(),
        slots,
    }
}
