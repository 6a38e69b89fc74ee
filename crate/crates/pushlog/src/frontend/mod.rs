//! Datalog frontend: the rule AST, parsing, validation, and binarization.
//!
//! The accepted dialect is basic Datalog: no negation, no function symbols,
//! terms are variables or constants. EDB predicates are declared with schema
//! directives (`.edb e(int,int) indexed(bf)`); everything else is IDB. The
//! predicate `answer` is the query and may only occur in rule heads.

mod normalize;
mod parser;
mod types;

use std::collections::BTreeMap;
use std::fmt;

pub use normalize::normalize_binary;
pub use parser::{parse_program, ParseError};
pub use types::{infer_types, TypeError};

use crate::storage::BindingPattern;
use crate::value::Value;

pub const ANSWER_PRED: &str = "answer";

/// A variable or a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Value),
}

impl Term {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self {
            Term::Var(_) => None,
            Term::Const(v) => Some(v),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{}", c.datalog_token()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Literal {
    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Variables in first-occurrence order.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for term in &self.args {
            if let Term::Var(v) = term {
                if !out.contains(&v.as_str()) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn has_var(&self, name: &str) -> bool {
        self.args.iter().any(|t| t.as_var() == Some(name))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, arg) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{arg}")?;
        }
        write!(f, ")")
    }
}

/// A rule `head :- body.` with a program-unique clause number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub rule_no: u32,
    pub head: Literal,
    pub body: Vec<Literal>,
}

impl Rule {
    /// Variables of the whole rule in first-occurrence order (head first).
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for lit in std::iter::once(&self.head).chain(&self.body) {
            for v in lit.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            write!(f, " :- ")?;
            for (i, lit) in self.body.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{lit}")?;
            }
        }
        write!(f, ".")
    }
}

/// A ground IDB fact given in the program text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundFact {
    pub rule_no: u32,
    pub predicate: String,
    pub values: Vec<Value>,
}

impl fmt::Display for GroundFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", v.datalog_token())?;
        }
        write!(f, ").")
    }
}

/// Declared schema of one EDB predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdbDecl {
    pub name: String,
    pub types: Vec<crate::value::ColType>,
    /// Extra index-backed patterns; the all-free scan is always available.
    pub patterns: Vec<BindingPattern>,
}

impl fmt::Display for EdbDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, ".edb {}(", self.name)?;
        for (i, ty) in self.types.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{ty}")?;
        }
        write!(f, ")")?;
        if !self.patterns.is_empty() {
            write!(f, " indexed(")?;
            for (i, p) in self.patterns.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A parsed program: rules, ground IDB facts, and EDB schema declarations.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub rules: Vec<Rule>,
    pub idb_facts: Vec<GroundFact>,
    pub edb: BTreeMap<String, EdbDecl>,
    pub answer_pred: String,
}

impl Program {
    pub fn is_edb(&self, predicate: &str) -> bool {
        self.edb.contains_key(predicate)
    }

    pub fn max_rule_no(&self) -> u32 {
        self.rules
            .iter()
            .map(|r| r.rule_no)
            .chain(self.idb_facts.iter().map(|f| f.rule_no))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for decl in self.edb.values() {
            writeln!(f, "{decl}")?;
        }
        // Clauses in original order: merge rules and facts by clause number.
        let mut clauses: Vec<(u32, String)> = self
            .rules
            .iter()
            .map(|r| (r.rule_no, r.to_string()))
            .chain(self.idb_facts.iter().map(|g| (g.rule_no, g.to_string())))
            .collect();
        clauses.sort_by_key(|(no, _)| *no);
        for (_, text) in clauses {
            writeln!(f, "{text}")?;
        }
        Ok(())
    }
}

/// One range-restriction or EDB/IDB violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A head variable that occurs in no body literal.
    UnboundHeadVar { rule_no: u32, var: String },
    /// An EDB predicate used as a rule or fact head.
    EdbInHead { rule_no: u32, predicate: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnboundHeadVar { rule_no, var } => {
                write!(f, "rule {rule_no}: head variable {var} does not occur in the body")
            }
            Violation::EdbInHead { rule_no, predicate } => {
                write!(f, "rule {rule_no}: EDB predicate {predicate} cannot be derived")
            }
        }
    }
}

/// Check range restriction and the EDB/IDB split. Returns every violation,
/// not just the first.
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    for rule in &program.rules {
        if program.is_edb(&rule.head.predicate) {
            out.push(Violation::EdbInHead {
                rule_no: rule.rule_no,
                predicate: rule.head.predicate.clone(),
            });
        }
        for var in rule.head.variables() {
            if !rule.body.iter().any(|lit| lit.has_var(var)) {
                out.push(Violation::UnboundHeadVar {
                    rule_no: rule.rule_no,
                    var: var.to_string(),
                });
            }
        }
    }
    for fact in &program.idb_facts {
        if program.is_edb(&fact.predicate) {
            out.push(Violation::EdbInHead {
                rule_no: fact.rule_no,
                predicate: fact.predicate.clone(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_reports_all_violations() {
        let text = "\
.edb e(int)
p(X, Y) :- e(X).
e(X) :- p(X, X).
q(X) :- e(X).
";
        let program = parse_program(text).unwrap();
        let violations = validate(&program);
        assert_eq!(violations.len(), 2);
        assert!(violations.contains(&Violation::UnboundHeadVar {
            rule_no: 1,
            var: "Y".to_string()
        }));
        assert!(violations.contains(&Violation::EdbInHead {
            rule_no: 2,
            predicate: "e".to_string()
        }));
    }

    #[test]
    fn validate_accepts_range_restricted_rule() {
        let program = parse_program(".edb e(int)\np(X) :- e(X).").unwrap();
        assert!(validate(&program).is_empty());
    }

    #[test]
    fn print_parse_round_trip() {
        let text = "\
.edb e1(int) indexed(b)
.edb r(int, string, int)
answer(X) :- q(X, c1).
q(X, Y) :- p(Y, X).
p(c1, X) :- e1(X).
p(\"odd name\", 4).
";
        let program = parse_program(text).unwrap();
        let printed = program.to_string();
        let reparsed = parse_program(&printed).unwrap();
        assert_eq!(program, reparsed);
    }
}
