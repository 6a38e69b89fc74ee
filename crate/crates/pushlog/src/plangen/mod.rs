//! Translation of the pruned rule application graph into code pieces.
//!
//! Every rule node becomes one labeled code piece. A piece is entered either
//! by `goto` (the first consumer of a freshly derived tuple) or by popping
//! its label from the backtrack stack. The instruction set is a one-to-one
//! transcription of the statements the code templates emit; the engine
//! interprets it, and the pretty-printer renders it in the dispatch-loop
//! skeleton for inspection.

mod build;
mod printer;

use std::collections::{BTreeMap, BTreeSet};

use crate::storage::BindingPattern;
use crate::symbolic::NodeId;
use crate::value::{ColType, Value};

pub use build::{assemble, compile_answer_dispatch, select_binding_pattern, validate_plan};
pub use printer::emit_pseudo_source;

pub type LabelId = usize;
pub type VarId = usize;
pub type CursorId = usize;
pub type SideTableId = usize;
pub type DupTableId = usize;
pub type PieceId = usize;

/// A runtime-readable value source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RVal {
    Const(Value),
    /// A declared runtime variable.
    Var(VarId),
    /// Column `usize` (0-based) of the current tuple of a cursor; used for
    /// join values that never live in a variable.
    Col(CursorId, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnDup {
    /// Skip this tuple and continue the enclosing fetch loop.
    Continue,
    /// End the code piece.
    Break,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    /// Open the piece's cursor with the given bound arguments.
    OpenCursor { cursor: CursorId, bound: Vec<RVal> },
    /// `while(cursor.fetch()) { body }`. Falling off the end of the body
    /// continues the loop.
    Loop { cursor: CursorId, body: Vec<Instr> },
    /// Column/value equality filters; on failure fetch the next tuple.
    GuardColsEq {
        cursor: CursorId,
        checks: Vec<(usize, RVal)>,
    },
    /// Column/column equality for repeated variables; failure fetches next.
    GuardColsEqCols {
        cursor: CursorId,
        pairs: Vec<(usize, usize)>,
    },
    /// Runtime part of the unification at piece entry; failure ends the
    /// piece. Only ever appears before the first loop of a piece.
    GuardSlotsEq { checks: Vec<(RVal, RVal)> },
    /// Store a value in a runtime variable of this piece's rule.
    Assign { var: VarId, src: RVal },
    /// Insert the tuple into a duplicate hash table; on a hit apply `on_dup`.
    DupCheck {
        table: DupTableId,
        slots: Vec<RVal>,
        on_dup: OnDup,
    },
    /// Append the tuple to a two-IDB side table.
    InsertSide {
        table: SideTableId,
        slots: Vec<RVal>,
    },
    PushBacktrack { label: LabelId },
    Goto { label: LabelId },
    /// Save cursor state and/or variable values before this piece reuses
    /// them (recursive activations only).
    SaveState {
        cursor: Option<CursorId>,
        vars: Vec<VarId>,
    },
    /// Inverse of `SaveState`, popped in reverse order.
    RestoreState {
        cursor: Option<CursorId>,
        vars: Vec<VarId>,
    },
    EmitAnswer { slots: Vec<RVal> },
    /// End the piece; the main loop pops the next task.
    Break,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub rule_no: u32,
    /// Datalog variable this cell holds, or a scratch id for copy temps.
    pub var: String,
    pub name: String,
    pub ty: ColType,
    pub temp: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CursorTarget {
    Edb {
        relation: String,
        pattern: BindingPattern,
    },
    Side {
        table: SideTableId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CursorDecl {
    pub name: String,
    pub rule_no: u32,
    pub target: CursorTarget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideTableDecl {
    pub name: String,
    pub rule_no: u32,
    pub lit_pos: usize,
    pub types: Vec<ColType>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DupTableDecl {
    pub name: String,
    pub predicate: String,
    pub types: Vec<ColType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    /// Run the piece from the top (INIT and START labels).
    Entry,
    /// Resume the piece's innermost fetch loop (CONT labels).
    Resume,
    /// Run the piece's restore block (RESTORE labels).
    Restore,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDecl {
    pub name: String,
    pub piece: PieceId,
    pub entry: EntryKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompileMode {
    Normal,
    /// Variable-conflict fallback: the piece owns a variable for every rule
    /// variable that carries data and copies the input values in at entry.
    CopyAll,
}

#[derive(Debug, Clone)]
pub struct Piece {
    pub rule_no: u32,
    /// Graph node this piece implements; `None` for ground answer facts
    /// emitted at initialization.
    pub node: Option<NodeId>,
    pub mode: CompileMode,
    pub entry_label: LabelId,
    pub cont_label: Option<LabelId>,
    pub restore_label: Option<LabelId>,
    /// The slots of the input symbolic fact, for the value-protection
    /// shadow check. Empty for pieces without an input fact.
    pub input_slots: Vec<RVal>,
    pub body: Vec<Instr>,
    pub restore_body: Vec<Instr>,
    /// Human-readable description used by the pretty-printer.
    pub comment: String,
}

/// The assembled dispatch program.
#[derive(Debug, Clone)]
pub struct Plan {
    pub pieces: Vec<Piece>,
    pub labels: Vec<LabelDecl>,
    /// Labels pushed during initialization, in push order.
    pub init: Vec<LabelId>,
    pub vars: Vec<VarDecl>,
    pub cursors: Vec<CursorDecl>,
    pub side_tables: Vec<SideTableDecl>,
    pub dup_tables: Vec<DupTableDecl>,
    pub tabled: BTreeSet<String>,
    /// Ground program facts of tabled predicates, preloaded into their
    /// duplicate tables before the main loop starts.
    pub preload: Vec<(DupTableId, Vec<Value>)>,
    /// Relations the plan needs, with column types and extra index patterns.
    pub edb_schemas: BTreeMap<String, (Vec<ColType>, Vec<BindingPattern>)>,
    pub answer_types: Vec<ColType>,
}

impl Plan {
    pub fn label_name(&self, id: LabelId) -> &str {
        &self.labels[id].name
    }

    /// Runtime variables declared for one rule (temps excluded).
    pub fn rule_vars(&self, rule_no: u32) -> Vec<&VarDecl> {
        self.vars
            .iter()
            .filter(|v| v.rule_no == rule_no && !v.temp)
            .collect()
    }

    pub fn piece_for_node(&self, node: NodeId) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.node == Some(node))
    }
}
