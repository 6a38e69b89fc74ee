//! A Datalog compiler and runtime built around the push method: rules are
//! partially evaluated at compile time into symbolic facts and a rule
//! application graph, then translated into small label-addressed code pieces
//! executed by a backtrack-stack dispatch loop. Each derived tuple is pushed
//! straight into the rules that consume it, so intermediate results are only
//! materialized where duplicate elimination demands it.
//!
//! The pipeline:
//!
//! 1. [`frontend`] parses and validates the program and rewrites rules to at
//!    most two body literals.
//! 2. [`symbolic`] runs the compile-time fixpoint, builds the rule
//!    application graph, prunes paths that cannot reach `answer`, and picks
//!    the predicates to table.
//! 3. [`plangen`] turns each rule application into a code piece and assembles
//!    the dispatch program.
//! 4. [`engine`] interprets the program over EDB relations accessed through
//!    the [`storage`] cursor interface.
//! 5. [`oracle`] is an independent bottom-up reference evaluator used for
//!    differential testing.
//!
//! See the `examples/` directory for one runnable example per capability.

pub mod cli;
pub mod engine;
pub mod frontend;
pub mod oracle;
pub mod plangen;
pub mod storage;
pub mod symbolic;
pub mod value;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

pub use frontend::{parse_program, validate, Program};
pub use value::{ColType, Value};

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(#[from] frontend::ParseError),
    #[error("validation failed:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Validate(Vec<frontend::Violation>),
    #[error(transparent)]
    Type(#[from] frontend::TypeError),
    #[error("tabling override does not cover all cycles: a cycle through {{{0}}} remains")]
    TablingOverride(String),
    #[error(transparent)]
    Data(#[from] storage::DataError),
    #[error(transparent)]
    Runtime(#[from] engine::RuntimeError),
}

/// Compilation settings.
#[derive(Debug, Clone)]
pub struct CompileOptions {
    /// Use this tabling plan instead of the computed one. Must still cover
    /// every cycle of the rule application graph.
    pub tabling_override: Option<BTreeSet<String>>,
    /// Add the answer predicate to the tabling plan so the answer set is
    /// duplicate-free (the default). Disabling yields multiset answers.
    pub dedup_answers: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            tabling_override: None,
            dedup_answers: true,
        }
    }
}

/// Everything the compiler produced for one program.
#[derive(Debug, Clone)]
pub struct Compiled {
    /// The validated, binarized program the plan was generated from.
    pub program: Program,
    /// The pruned rule application graph.
    pub graph: symbolic::RuleApplicationGraph,
    /// Inferred column types per predicate.
    pub types: BTreeMap<String, Vec<ColType>>,
    /// Predicates materialized for duplicate elimination (answer included
    /// unless multiset output was requested).
    pub tabling: symbolic::TablingPlan,
    pub plan: plangen::Plan,
}

/// Compile with default options.
pub fn compile(program: &Program) -> Result<Compiled, Error> {
    compile_with(program, &CompileOptions::default())
}

/// Full compile pipeline: validate, binarize, infer types, run the symbolic
/// fixpoint, prune, select tabling, and assemble the dispatch plan.
pub fn compile_with(program: &Program, options: &CompileOptions) -> Result<Compiled, Error> {
    let violations = frontend::validate(program);
    if !violations.is_empty() {
        return Err(Error::Validate(violations));
    }
    let normalized = frontend::normalize_binary(program);
    let types = frontend::infer_types(&normalized)?;
    let graph = symbolic::prune_useless(&symbolic::symbolic_fixpoint(&normalized));

    let mut tabling = match &options.tabling_override {
        Some(predicates) => {
            let plan = symbolic::TablingPlan {
                predicates: predicates.clone(),
            };
            if !symbolic::covers_all_cycles(&graph, &plan.predicates) {
                return Err(Error::TablingOverride(uncovered_cycle(&graph, predicates)));
            }
            plan
        }
        None => symbolic::choose_tabling(&graph),
    };
    if options.dedup_answers {
        tabling.predicates.insert(program.answer_pred.clone());
    }

    let plan = plangen::assemble(&normalized, &graph, &types, &tabling.predicates);
    Ok(Compiled {
        program: normalized,
        graph,
        types,
        tabling,
        plan,
    })
}

/// Describe one cycle left uncovered by a tabling override, for diagnostics.
fn uncovered_cycle(graph: &symbolic::RuleApplicationGraph, tabled: &BTreeSet<String>) -> String {
    let mut preds: BTreeSet<&str> = BTreeSet::new();
    for (fid, fact) in graph.facts.iter().enumerate() {
        if tabled.contains(&fact.fact.predicate) {
            continue;
        }
        // A fact on an uncovered cycle: reachable from itself avoiding
        // tabled facts.
        let mut seen = vec![false; graph.facts.len()];
        let mut stack = vec![fid];
        let mut cyclic = false;
        while let Some(f) = stack.pop() {
            for &consumer in &graph.facts[f].consumers {
                if let Some(d) = graph.nodes[consumer].derived {
                    if d == fid {
                        cyclic = true;
                    }
                    if !seen[d] && !tabled.contains(&graph.facts[d].fact.predicate) {
                        seen[d] = true;
                        stack.push(d);
                    }
                }
            }
        }
        if cyclic {
            preds.insert(&fact.fact.predicate);
        }
    }
    preds.into_iter().collect::<Vec<_>>().join(", ")
}
