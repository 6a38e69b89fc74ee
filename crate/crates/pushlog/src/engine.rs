//! The runtime: interprets an assembled plan over loaded EDB relations.
//!
//! The main loop pops code-piece labels from the backtrack stack and executes
//! them until the stack is empty. Newly derived tuples are never built as
//! records; their values sit in the runtime variables and cursor columns the
//! plan refers to. Duplicate tables (and two-IDB side tables) are the only
//! places tuples are materialized.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::plangen::{
    CursorId, CursorTarget, EntryKind, Instr, LabelId, OnDup, Plan, RVal, SideTableId,
};
use crate::storage::{Cursor, Database};
use crate::value::{ColType, Value};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("missing EDB relation {0}")]
    MissingRelation(String),
    #[error("EDB relation {relation}: plan expects columns ({expected}), found ({found})")]
    SchemaMismatch {
        relation: String,
        expected: String,
        found: String,
    },
    #[error("EDB relation {relation} has no access path for pattern {pattern}")]
    MissingAccessPath { relation: String, pattern: String },
}

/// Instrumentation counters, reported as a single JSON object under
/// `--stats`.
#[derive(Debug, Clone, Default, Serialize, PartialEq, Eq)]
pub struct Counters {
    /// Insertions into duplicate tables and two-IDB side tables; everything
    /// else flows through without being stored.
    pub tuples_materialized: u64,
    /// Value copies: variable assignments plus save/restore traffic.
    pub values_copied: u64,
    /// Derived tuples handed to consumers or emitted as answers.
    pub derivations: u64,
    pub max_backtrack_depth: usize,
    /// Cursor opens per EDB relation.
    pub cursor_opens: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Emitted answer tuples in emission order (deduplicated iff the answer
    /// predicate is tabled).
    pub answers: Vec<Vec<Value>>,
    pub counters: Counters,
    /// Final sizes of the duplicate tables, keyed by predicate.
    pub table_sizes: BTreeMap<String, usize>,
    /// Slot snapshot mismatches found by the shadow check (0 when disabled).
    pub shadow_mismatches: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record the input-fact slots of every pushed task and compare them
    /// when the task is popped.
    pub shadow_check: bool,
}

/// Control effect of one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    /// Fall through to the next instruction.
    Next,
    /// Next iteration of the enclosing fetch loop.
    Continue,
    /// End the code piece; the main loop pops the next task.
    Break,
    /// Transfer directly to another piece.
    Goto(LabelId),
}

#[derive(Debug, Clone)]
struct SideCursor {
    table: SideTableId,
    next: usize,
    /// Table length at open time: rows appended during the scan are not
    /// returned.
    limit: usize,
    current: Option<usize>,
    saved: Vec<(usize, usize, Option<usize>)>,
}

impl SideCursor {
    fn new(table: SideTableId) -> Self {
        SideCursor {
            table,
            next: 0,
            limit: 0,
            current: None,
            saved: Vec::new(),
        }
    }

    fn open(&mut self, limit: usize) {
        self.next = 0;
        self.limit = limit;
        self.current = None;
    }

    fn fetch(&mut self) -> bool {
        if self.next < self.limit {
            self.current = Some(self.next);
            self.next += 1;
            true
        } else {
            self.current = None;
            false
        }
    }

    fn push_state(&mut self) {
        self.saved.push((self.next, self.limit, self.current));
    }

    fn pop_state(&mut self) {
        let (next, limit, current) = self
            .saved
            .pop()
            .expect("side cursor: pop_state on empty state stack");
        self.next = next;
        self.limit = limit;
        self.current = current;
    }
}

enum AnyCursor<'db> {
    Edb(Cursor<'db>),
    Side(SideCursor),
}

/// One evaluation run. Single-threaded; distinct runs over the same database
/// may execute concurrently.
pub struct Engine<'p, 'db> {
    plan: &'p Plan,
    options: RunOptions,
    vars: Vec<Value>,
    cursors: Vec<AnyCursor<'db>>,
    side_tables: Vec<Vec<Vec<Value>>>,
    dup_tables: Vec<HashSet<Vec<Value>>>,
    int_stack: Vec<i64>,
    str_stack: Vec<String>,
    backtrack: Vec<LabelId>,
    shadow: Vec<Option<Vec<Value>>>,
    answers: Vec<Vec<Value>>,
    counters: Counters,
    shadow_mismatches: u64,
}

impl<'p, 'db> Engine<'p, 'db> {
    pub fn new(
        plan: &'p Plan,
        db: &'db Database,
        options: RunOptions,
    ) -> Result<Self, RuntimeError> {
        for (name, (types, _)) in &plan.edb_schemas {
            let rel = db
                .get(name)
                .ok_or_else(|| RuntimeError::MissingRelation(name.clone()))?;
            if rel.types() != types.as_slice() {
                return Err(RuntimeError::SchemaMismatch {
                    relation: name.clone(),
                    expected: types.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "),
                    found: rel
                        .types()
                        .iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join(", "),
                });
            }
        }

        let mut cursors = Vec::with_capacity(plan.cursors.len());
        for decl in &plan.cursors {
            match &decl.target {
                CursorTarget::Edb { relation, pattern } => {
                    let rel = db
                        .get(relation)
                        .ok_or_else(|| RuntimeError::MissingRelation(relation.clone()))?;
                    if !rel.supports(pattern) {
                        return Err(RuntimeError::MissingAccessPath {
                            relation: relation.clone(),
                            pattern: pattern.to_string(),
                        });
                    }
                    cursors.push(AnyCursor::Edb(rel.cursor(pattern.clone())));
                }
                CursorTarget::Side { table } => {
                    cursors.push(AnyCursor::Side(SideCursor::new(*table)));
                }
            }
        }

        // Variables start with type defaults, mirroring declared (but not yet
        // assigned) locals: save/restore may traffic them before first use.
        let vars = plan
            .vars
            .iter()
            .map(|v| match v.ty {
                ColType::Int => Value::Int(0),
                ColType::Str => Value::Str(String::new()),
            })
            .collect();

        let mut counters = Counters::default();
        for name in plan.edb_schemas.keys() {
            counters.cursor_opens.insert(name.clone(), 0);
        }

        Ok(Engine {
            plan,
            options,
            vars,
            cursors,
            side_tables: vec![Vec::new(); plan.side_tables.len()],
            dup_tables: vec![HashSet::new(); plan.dup_tables.len()],
            int_stack: Vec::new(),
            str_stack: Vec::new(),
            backtrack: Vec::new(),
            shadow: Vec::new(),
            answers: Vec::new(),
            counters,
            shadow_mismatches: 0,
        })
    }

    fn rval(&self, v: &RVal) -> Value {
        match v {
            RVal::Const(c) => c.clone(),
            RVal::Var(id) => self.vars[*id].clone(),
            RVal::Col(cursor, col) => self.cursor_col(*cursor, *col).clone(),
        }
    }

    fn cursor_col(&self, cursor: CursorId, col: usize) -> &Value {
        match &self.cursors[cursor] {
            AnyCursor::Edb(c) => c.col(col),
            AnyCursor::Side(sc) => {
                let row = sc
                    .current
                    .expect("side cursor: col before successful fetch");
                &self.side_tables[sc.table][row][col]
            }
        }
    }

    fn fetch(&mut self, cursor: CursorId) -> bool {
        match &mut self.cursors[cursor] {
            AnyCursor::Edb(c) => c.fetch(),
            AnyCursor::Side(sc) => sc.fetch(),
        }
    }

    fn push_label(&mut self, label: LabelId) {
        self.backtrack.push(label);
        self.counters.max_backtrack_depth =
            self.counters.max_backtrack_depth.max(self.backtrack.len());
        if self.options.shadow_check {
            let decl = &self.plan.labels[label];
            let piece = &self.plan.pieces[decl.piece];
            let snap = (decl.entry == EntryKind::Entry && !piece.input_slots.is_empty())
                .then(|| piece.input_slots.iter().map(|s| self.rval(s)).collect());
            self.shadow.push(snap);
        }
    }

    fn pop_label(&mut self) -> Option<LabelId> {
        let label = self.backtrack.pop()?;
        if self.options.shadow_check {
            if let Some(Some(snapshot)) = self.shadow.pop() {
                let piece = &self.plan.pieces[self.plan.labels[label].piece];
                let now: Vec<Value> = piece.input_slots.iter().map(|s| self.rval(s)).collect();
                if now != snapshot {
                    self.shadow_mismatches += 1;
                }
            }
        }
        Some(label)
    }

    fn set_var(&mut self, var: usize, value: Value) {
        debug_assert_eq!(self.plan.vars[var].ty, value.col_type());
        self.vars[var] = value;
        self.counters.values_copied += 1;
    }

    /// Record an answer tuple.
    pub fn emit_answer(&mut self, values: Vec<Value>) {
        debug_assert_eq!(values.len(), self.plan.answer_types.len());
        self.counters.derivations += 1;
        self.answers.push(values);
    }

    /// Execute one instruction and return its control effect. `Loop` runs to
    /// completion (or until a goto leaves it).
    pub fn step(&mut self, instr: &'p Instr) -> Effect {
        match instr {
            Instr::OpenCursor { cursor, bound } => {
                let values: Vec<Value> = bound.iter().map(|b| self.rval(b)).collect();
                match &self.cursors[*cursor] {
                    AnyCursor::Edb(_) => {
                        if let CursorTarget::Edb { relation, .. } =
                            &self.plan.cursors[*cursor].target
                        {
                            *self
                                .counters
                                .cursor_opens
                                .entry(relation.clone())
                                .or_insert(0) += 1;
                        }
                        match &mut self.cursors[*cursor] {
                            AnyCursor::Edb(c) => c.open(values),
                            AnyCursor::Side(_) => unreachable!(),
                        }
                    }
                    AnyCursor::Side(sc) => {
                        let limit = self.side_tables[sc.table].len();
                        match &mut self.cursors[*cursor] {
                            AnyCursor::Side(sc) => sc.open(limit),
                            AnyCursor::Edb(_) => unreachable!(),
                        }
                    }
                }
                Effect::Next
            }
            Instr::Loop { cursor, body } => self.run_loop(*cursor, body, false),
            Instr::GuardColsEq { cursor, checks } => {
                for (col, expect) in checks {
                    if *self.cursor_col(*cursor, *col) != self.rval(expect) {
                        return Effect::Continue;
                    }
                }
                Effect::Next
            }
            Instr::GuardColsEqCols { cursor, pairs } => {
                for (a, b) in pairs {
                    if self.cursor_col(*cursor, *a) != self.cursor_col(*cursor, *b) {
                        return Effect::Continue;
                    }
                }
                Effect::Next
            }
            Instr::GuardSlotsEq { checks } => {
                for (a, b) in checks {
                    if self.rval(a) != self.rval(b) {
                        return Effect::Break;
                    }
                }
                Effect::Next
            }
            Instr::Assign { var, src } => {
                let value = self.rval(src);
                self.set_var(*var, value);
                Effect::Next
            }
            Instr::DupCheck {
                table,
                slots,
                on_dup,
            } => {
                let tuple: Vec<Value> = slots.iter().map(|s| self.rval(s)).collect();
                if self.dup_tables[*table].insert(tuple) {
                    self.counters.tuples_materialized += 1;
                    Effect::Next
                } else {
                    match on_dup {
                        OnDup::Continue => Effect::Continue,
                        OnDup::Break => Effect::Break,
                    }
                }
            }
            Instr::InsertSide { table, slots } => {
                let tuple: Vec<Value> = slots.iter().map(|s| self.rval(s)).collect();
                self.side_tables[*table].push(tuple);
                self.counters.tuples_materialized += 1;
                Effect::Next
            }
            Instr::PushBacktrack { label } => {
                self.push_label(*label);
                Effect::Next
            }
            Instr::Goto { label } => {
                self.counters.derivations += 1;
                Effect::Goto(*label)
            }
            Instr::SaveState { cursor, vars } => {
                if let Some(c) = cursor {
                    match &mut self.cursors[*c] {
                        AnyCursor::Edb(cur) => cur.push_state(),
                        AnyCursor::Side(sc) => sc.push_state(),
                    }
                }
                for &v in vars {
                    match self.vars[v].clone() {
                        Value::Int(n) => self.int_stack.push(n),
                        Value::Str(s) => self.str_stack.push(s),
                    }
                    self.counters.values_copied += 1;
                }
                Effect::Next
            }
            Instr::RestoreState { cursor, vars } => {
                for &v in vars.iter().rev() {
                    let value = match self.plan.vars[v].ty {
                        ColType::Int => Value::Int(
                            self.int_stack
                                .pop()
                                .expect("value stack underflow on restore"),
                        ),
                        ColType::Str => Value::Str(
                            self.str_stack
                                .pop()
                                .expect("value stack underflow on restore"),
                        ),
                    };
                    self.set_var(v, value);
                }
                if let Some(c) = cursor {
                    match &mut self.cursors[*c] {
                        AnyCursor::Edb(cur) => cur.pop_state(),
                        AnyCursor::Side(sc) => sc.pop_state(),
                    }
                }
                Effect::Next
            }
            Instr::EmitAnswer { slots } => {
                let values: Vec<Value> = slots.iter().map(|s| self.rval(s)).collect();
                self.emit_answer(values);
                Effect::Next
            }
            Instr::Break => Effect::Break,
        }
    }

    fn exec_seq(&mut self, instrs: &'p [Instr]) -> Effect {
        for instr in instrs {
            match self.step(instr) {
                Effect::Next => {}
                other => return other,
            }
        }
        Effect::Next
    }

    /// Run a fetch loop. `resume` enters the loop nest where a continuation
    /// label left it: the innermost loop keeps fetching, outer loops take
    /// over when it is exhausted, and pre-loop instructions (opens, guards,
    /// saves, copies) are not repeated.
    fn run_loop(&mut self, cursor: CursorId, body: &'p [Instr], resume: bool) -> Effect {
        if resume {
            if let Some(Instr::Loop {
                cursor: inner,
                body: inner_body,
            }) = body.iter().find(|i| matches!(i, Instr::Loop { .. }))
            {
                match self.run_loop(*inner, inner_body, true) {
                    Effect::Next => {} // inner exhausted: continue this loop
                    other => return other,
                }
            }
        }
        loop {
            if !self.fetch(cursor) {
                return Effect::Next;
            }
            match self.exec_seq(body) {
                Effect::Next | Effect::Continue => {}
                other => return other,
            }
        }
    }

    fn exec_label(&mut self, label: LabelId) -> Effect {
        let plan = self.plan;
        let decl = &plan.labels[label];
        let piece = &plan.pieces[decl.piece];
        match decl.entry {
            EntryKind::Entry => self.exec_seq(&piece.body),
            EntryKind::Restore => self.exec_seq(&piece.restore_body),
            EntryKind::Resume => {
                let loop_pos = piece
                    .body
                    .iter()
                    .position(|i| matches!(i, Instr::Loop { .. }))
                    .expect("resumable piece has a fetch loop");
                let Instr::Loop { cursor, body } = &piece.body[loop_pos] else {
                    unreachable!()
                };
                match self.run_loop(*cursor, body, true) {
                    Effect::Next => self.exec_seq(&piece.body[loop_pos + 1..]),
                    other => other,
                }
            }
        }
    }

    fn into_outcome(self) -> RunOutcome {
        let mut table_sizes = BTreeMap::new();
        for (decl, table) in self.plan.dup_tables.iter().zip(&self.dup_tables) {
            table_sizes.insert(decl.predicate.clone(), table.len());
        }
        RunOutcome {
            answers: self.answers,
            counters: self.counters,
            table_sizes,
            shadow_mismatches: self.shadow_mismatches,
        }
    }
}

/// Execute a plan over a database: initialization pushes, then the dispatch
/// loop until the backtrack stack drains.
pub fn run(plan: &Plan, db: &Database, options: RunOptions) -> Result<RunOutcome, RuntimeError> {
    let mut engine = Engine::new(plan, db, options)?;

    for (table, tuple) in &plan.preload {
        if engine.dup_tables[*table].insert(tuple.clone()) {
            engine.counters.tuples_materialized += 1;
        }
    }
    for &label in &plan.init {
        engine.push_label(label);
    }

    while let Some(label) = engine.pop_label() {
        let mut current = label;
        loop {
            match engine.exec_label(current) {
                Effect::Goto(next) => current = next,
                _ => break,
            }
        }
    }
    Ok(engine.into_outcome())
}
