//! Code piece construction: one builder pass per rule node of the pruned
//! graph, then assembly into the dispatch program.

use std::collections::{BTreeMap, BTreeSet};

use crate::frontend::{Literal, Program, Rule, Term};
use crate::storage::BindingPattern;
use crate::symbolic::{
    NodeId, NodeShape, RtVar, RuleApplicationGraph, SaveNeeds, Slot, Subst, SymbolicFact,
};
use crate::value::ColType;

use super::{
    CompileMode, CursorDecl, CursorId, CursorTarget, DupTableDecl, DupTableId, EntryKind, Instr,
    LabelDecl, LabelId, OnDup, Piece, PieceId, Plan, RVal, SideTableDecl, SideTableId, VarDecl,
    VarId,
};

/// Choose an access path for an EDB literal: among the declared patterns
/// (plus the always-available full scan) keep those whose bound positions all
/// have known values, then prefer the most bound positions, then the
/// leftmost bound positions, then declaration order.
pub fn select_binding_pattern(
    declared: &[BindingPattern],
    lit: &Literal,
    known: &dyn Fn(&Term) -> bool,
) -> BindingPattern {
    let all_free = BindingPattern::all_free(lit.arity());
    let mut best: Option<(usize, Vec<usize>, usize, &BindingPattern)> = None;
    let candidates = declared.iter().chain(std::iter::once(&all_free));
    for (decl_idx, pattern) in candidates.enumerate() {
        let usable = pattern
            .bound_positions()
            .iter()
            .all(|&i| known(&lit.args[i]));
        if !usable {
            continue;
        }
        let count = pattern.bound_count();
        let positions = pattern.bound_positions();
        let better = match &best {
            None => true,
            Some((bc, bp, _, _)) => count > *bc || (count == *bc && positions < *bp),
        };
        if better {
            best = Some((count, positions, decl_idx, pattern));
        }
    }
    best.expect("full scan is always a candidate").3.clone()
}

/// The instruction that replaces consumer dispatch for `answer` facts.
pub fn compile_answer_dispatch(fact: &SymbolicFact, slot_rvals: Vec<RVal>) -> Instr {
    debug_assert_eq!(fact.slots.len(), slot_rvals.len());
    Instr::EmitAnswer { slots: slot_rvals }
}

fn col_of(lit: &Literal, var: &str) -> usize {
    lit.args
        .iter()
        .position(|t| t.as_var() == Some(var))
        .unwrap_or_else(|| panic!("variable {var} does not occur in {lit}"))
}

struct Builder<'a> {
    program: &'a Program,
    graph: &'a RuleApplicationGraph,
    types: &'a BTreeMap<String, Vec<ColType>>,
    saves: Vec<SaveNeeds>,
    plan: Plan,
    var_ids: BTreeMap<(u32, String), VarId>,
    dup_ids: BTreeMap<String, DupTableId>,
    side_ids: BTreeMap<(u32, usize), SideTableId>,
    node_piece: Vec<PieceId>,
    temp_count: BTreeMap<u32, usize>,
    cursor_count: BTreeMap<u32, usize>,
}

impl<'a> Builder<'a> {
    fn rule(&self, rule_no: u32) -> &'a Rule {
        self.program
            .rules
            .iter()
            .find(|r| r.rule_no == rule_no)
            .expect("graph references a program rule")
    }

    /// Column type a variable takes inside one rule: the type of the column
    /// of its first occurrence in the body.
    fn rule_var_type(&self, rule: &Rule, var: &str) -> ColType {
        for lit in &rule.body {
            for (i, term) in lit.args.iter().enumerate() {
                if term.as_var() == Some(var) {
                    return self.types[&lit.predicate][i];
                }
            }
        }
        panic!("rule {}: variable {var} not in body", rule.rule_no);
    }

    fn var_id(&mut self, rt: &RtVar) -> VarId {
        if let Some(&id) = self.var_ids.get(&(rt.rule_no, rt.var.clone())) {
            return id;
        }
        let rule = self.rule(rt.rule_no);
        let ty = self.rule_var_type(rule, &rt.var);
        let id = self.plan.vars.len();
        self.plan.vars.push(VarDecl {
            rule_no: rt.rule_no,
            var: rt.var.clone(),
            name: rt.to_string(),
            ty,
            temp: false,
        });
        self.var_ids.insert((rt.rule_no, rt.var.clone()), id);
        id
    }

    fn temp_id(&mut self, rule_no: u32, ty: ColType) -> VarId {
        let k = self.temp_count.entry(rule_no).or_insert(0);
        *k += 1;
        let name = format!("t{rule_no}_{k}");
        let id = self.plan.vars.len();
        self.plan.vars.push(VarDecl {
            rule_no,
            var: name.clone(),
            name,
            ty,
            temp: true,
        });
        id
    }

    fn slot_rval(&mut self, slot: &Slot) -> RVal {
        match slot {
            Slot::Const(c) => RVal::Const(c.clone()),
            Slot::Var(rt) => RVal::Var(self.var_id(rt)),
        }
    }

    /// Value of a rule term at runtime, after the entry of the piece. In
    /// copy-all mode the rule's own copies are used instead of the unified
    /// input slots.
    fn term_rval(&mut self, node: NodeId, term: &Term) -> RVal {
        let n = &self.graph.nodes[node];
        match term {
            Term::Const(c) => RVal::Const(c.clone()),
            Term::Var(v) => {
                if n.copy_all {
                    let rt = RtVar::new(n.rule_no, v);
                    RVal::Var(self.var_id(&rt))
                } else {
                    let slot = n
                        .subst
                        .as_ref()
                        .and_then(|s| s.lookup(v))
                        .unwrap_or_else(|| panic!("rule {}: no binding for {v}", n.rule_no));
                    self.slot_rval(&slot)
                }
            }
        }
    }

    fn fact_rvals(&mut self, fact: &SymbolicFact) -> Vec<RVal> {
        fact.slots.iter().map(|s| self.slot_rval(s)).collect()
    }

    fn new_cursor(&mut self, rule_no: u32, target: CursorTarget) -> CursorId {
        let k = self.cursor_count.entry(rule_no).or_insert(0);
        *k += 1;
        let name = if *k == 1 {
            format!("c{rule_no}")
        } else {
            format!("c{rule_no}_{k}")
        };
        let id = self.plan.cursors.len();
        self.plan.cursors.push(CursorDecl {
            name,
            rule_no,
            target,
        });
        id
    }

    /// Variables this piece writes, in deterministic (name) order.
    fn write_set(&mut self, node: NodeId) -> Vec<VarId> {
        let n = &self.graph.nodes[node];
        let rule = self.rule(n.rule_no);
        let mut vars: BTreeSet<String> = crate::symbolic::assigned_vars(rule, n.lit_pos)
            .into_iter()
            .map(str::to_string)
            .collect();
        if n.copy_all {
            for (target, source) in self.copy_pairs(node) {
                if source != Slot::Var(target.clone()) {
                    vars.insert(target.var.clone());
                }
            }
        }
        let rule_no = n.rule_no;
        vars.into_iter()
            .map(|v| self.var_id(&RtVar::new(rule_no, &v)))
            .collect()
    }

    /// Copy-all entry copies: one per variable of the selected IDB literal,
    /// from its unified input slot into the rule's own variable.
    fn copy_pairs(&self, node: NodeId) -> Vec<(RtVar, Slot)> {
        let n = &self.graph.nodes[node];
        let rule = self.rule(n.rule_no);
        let lit = &rule.body[n.lit_pos.expect("copy-all node has a selected literal")];
        let subst = n.subst.as_ref().expect("copy-all node has a unifier");
        lit.variables()
            .into_iter()
            .map(|v| {
                let source = subst.lookup(v).expect("literal variable is bound");
                (RtVar::new(n.rule_no, v), source)
            })
            .collect()
    }

    /// Sequence parallel copies, breaking cyclic permutations with one
    /// temporary each.
    fn emit_copies(&mut self, node: NodeId, out: &mut Vec<Instr>) {
        let mut pending: Vec<(VarId, RVal)> = Vec::new();
        for (target, source) in self.copy_pairs(node) {
            if source == Slot::Var(target.clone()) {
                continue; // the input slot already is this rule's variable
            }
            let tid = self.var_id(&target);
            let src = self.slot_rval(&source);
            pending.push((tid, src));
        }
        while !pending.is_empty() {
            // A copy is safe once no other pending copy still reads its target.
            let safe = pending.iter().position(|(target, _)| {
                !pending
                    .iter()
                    .any(|(t, s)| t != target && *s == RVal::Var(*target))
            });
            match safe {
                Some(i) => {
                    let (target, src) = pending.remove(i);
                    out.push(Instr::Assign { var: target, src });
                }
                None => {
                    // Pure cycle: save the first target, redirect its readers.
                    let (blocked, _) = pending[0];
                    let ty = self.plan.vars[blocked].ty;
                    let rule_no = self.plan.vars[blocked].rule_no;
                    let tmp = self.temp_id(rule_no, ty);
                    out.push(Instr::Assign {
                        var: tmp,
                        src: RVal::Var(blocked),
                    });
                    for (_, s) in pending.iter_mut() {
                        if *s == RVal::Var(blocked) {
                            *s = RVal::Var(tmp);
                        }
                    }
                }
            }
        }
    }

    fn dup_check(&mut self, node: NodeId, on_dup: OnDup) -> Option<Instr> {
        let n = &self.graph.nodes[node];
        let derived = n.derived?;
        let fact = self.graph.facts[derived].fact.clone();
        let table = *self.dup_ids.get(&fact.predicate)?;
        let slots = self.fact_rvals(&fact);
        Some(Instr::DupCheck {
            table,
            slots,
            on_dup,
        })
    }

    /// Consumer dispatch for a freshly derived tuple: push the continuation
    /// (inside loops), push every consumer but the first, jump to the first.
    /// Tuples of the answer predicate are emitted instead.
    fn dispatch(&mut self, node: NodeId, cont: Option<LabelId>) -> Vec<Instr> {
        let derived = self.graph.nodes[node]
            .derived
            .expect("dispatching node derives a fact");
        let fact = self.graph.facts[derived].fact.clone();
        if fact.predicate == self.graph.answer_pred {
            let slots = self.fact_rvals(&fact);
            let mut out = vec![compile_answer_dispatch(&fact, slots)];
            if cont.is_none() {
                out.push(Instr::Break);
            }
            return out;
        }
        let consumers = self.graph.facts[derived].consumers.clone();
        debug_assert!(
            !consumers.is_empty(),
            "pruned non-answer fact {fact} has no consumers"
        );
        let mut out = Vec::new();
        if let Some(cont) = cont {
            out.push(Instr::PushBacktrack { label: cont });
        }
        for &consumer in consumers.iter().skip(1) {
            let label = self.plan.pieces[self.node_piece[consumer]].entry_label;
            out.push(Instr::PushBacktrack { label });
        }
        match consumers.first() {
            Some(&first) => {
                let label = self.plan.pieces[self.node_piece[first]].entry_label;
                out.push(Instr::Goto { label });
            }
            None => {
                if cont.is_none() {
                    out.push(Instr::Break);
                }
            }
        }
        out
    }

    /// Entry guards from the runtime residue of the unifier.
    fn entry_guards(&mut self, subst: &Subst) -> Vec<Instr> {
        let residue = subst.rt_residue();
        if residue.is_empty() {
            return Vec::new();
        }
        let checks = residue
            .into_iter()
            .map(|(rt, slot)| {
                let left = RVal::Var(self.var_id(&rt));
                let right = self.slot_rval(&slot);
                (left, right)
            })
            .collect();
        vec![Instr::GuardSlotsEq { checks }]
    }

    /// In-loop filters for one scanned literal: known values on free
    /// positions, then column/column equality for repeated unknown variables.
    fn scan_guards(
        &mut self,
        cursor: CursorId,
        lit: &Literal,
        pattern: &BindingPattern,
        known: &dyn Fn(&Term) -> bool,
        mut value_of: impl FnMut(&mut Self, &Term) -> RVal,
    ) -> Vec<Instr> {
        let mut out = Vec::new();
        let mut checks = Vec::new();
        for i in pattern.free_positions() {
            let term = &lit.args[i];
            if known(term) {
                checks.push((i, value_of(self, term)));
            }
        }
        if !checks.is_empty() {
            out.push(Instr::GuardColsEq { cursor, checks });
        }

        let mut seen: Vec<&str> = Vec::new();
        for term in &lit.args {
            let Some(v) = term.as_var() else { continue };
            if known(term) || seen.contains(&v) {
                continue;
            }
            seen.push(v);
            let occ: Vec<usize> = lit
                .args
                .iter()
                .enumerate()
                .filter(|(_, t)| t.as_var() == Some(v))
                .map(|(i, _)| i)
                .collect();
            if occ.len() >= 2 {
                let pairs = occ.windows(2).map(|w| (w[0], w[1])).collect();
                out.push(Instr::GuardColsEqCols { cursor, pairs });
            }
        }
        out
    }

    fn piece_skeleton(&mut self, node: NodeId) -> PieceId {
        let n = &self.graph.nodes[node];
        let needs_cont = !matches!(n.shape, NodeShape::OneIdb)
            && !(n.shape == NodeShape::TwoIdb && n.derived.is_none());
        let needs_restore = needs_cont
            && (self.saves[node].cursor || self.saves[node].vars)
            && matches!(n.shape, NodeShape::IdbEdb | NodeShape::TwoIdb);

        let piece_id = self.plan.pieces.len();
        let entry_kind_name = if n.input.is_none() { "INIT" } else { "START" };
        let entry_label = self.new_label(piece_id, EntryKind::Entry, entry_kind_name);
        let cont_label = needs_cont.then(|| self.new_label(piece_id, EntryKind::Resume, "CONT"));
        let restore_label =
            needs_restore.then(|| self.new_label(piece_id, EntryKind::Restore, "RESTORE"));

        let comment = match n.input {
            Some(input) => format!("rule {} <- {}", n.rule_no, self.graph.facts[input].fact),
            None => format!("rule {}: {}", n.rule_no, self.rule(n.rule_no)),
        };
        let input_fact = n.input.map(|f| self.graph.facts[f].fact.clone());
        let input_slots = input_fact
            .map(|fact| self.fact_rvals(&fact))
            .unwrap_or_default();

        let copy_all = self.graph.nodes[node].copy_all;
        self.plan.pieces.push(Piece {
            rule_no: self.graph.nodes[node].rule_no,
            node: Some(node),
            mode: if copy_all {
                CompileMode::CopyAll
            } else {
                CompileMode::Normal
            },
            entry_label,
            cont_label,
            restore_label,
            input_slots,
            body: Vec::new(),
            restore_body: Vec::new(),
            comment,
        });
        piece_id
    }

    fn new_label(&mut self, piece: PieceId, entry: EntryKind, kind: &str) -> LabelId {
        let id = self.plan.labels.len();
        self.plan.labels.push(LabelDecl {
            name: format!("L_{kind}_{id}"),
            piece,
            entry,
        });
        id
    }

    /// Save/restore bracket for recursive pieces, placed before anything the
    /// piece overwrites.
    fn save_bracket(&mut self, node: NodeId, cursor: CursorId, piece: PieceId) -> Vec<Instr> {
        let needs = self.saves[node];
        if !needs.vars && !needs.cursor {
            return Vec::new();
        }
        let vars = if needs.vars {
            self.write_set(node)
        } else {
            Vec::new()
        };
        let cursor_opt = needs.cursor.then_some(cursor);
        if vars.is_empty() && cursor_opt.is_none() {
            return Vec::new();
        }
        let restore_label = self.plan.pieces[piece]
            .restore_label
            .expect("recursive piece has a restore label");
        self.plan.pieces[piece].restore_body = vec![
            Instr::RestoreState {
                cursor: cursor_opt,
                vars: vars.clone(),
            },
            Instr::Break,
        ];
        vec![
            Instr::SaveState {
                cursor: cursor_opt,
                vars,
            },
            Instr::PushBacktrack {
                label: restore_label,
            },
        ]
    }

    /// Rules with only EDB body literals: one or two nested scans, entered
    /// from the initialization section.
    fn compile_edb_only(&mut self, node: NodeId, piece: PieceId) {
        let n = self.graph.nodes[node].clone();
        let rule = self.rule(n.rule_no);
        let cont = self.plan.pieces[piece].cont_label;
        let known_const = |t: &Term| t.as_const().is_some();
        let const_val = |_: &mut Self, t: &Term| RVal::Const(t.as_const().cloned().expect("const"));

        match n.shape {
            NodeShape::OneEdb => {
                let lit = rule.body[0].clone();
                let decl = &self.program.edb[&lit.predicate];
                let pattern = select_binding_pattern(&decl.patterns, &lit, &known_const);
                let cursor = self.new_cursor(
                    n.rule_no,
                    CursorTarget::Edb {
                        relation: lit.predicate.clone(),
                        pattern: pattern.clone(),
                    },
                );
                let bound = pattern
                    .bound_positions()
                    .iter()
                    .map(|&i| RVal::Const(lit.args[i].as_const().unwrap().clone()))
                    .collect();

                let mut body = self.scan_guards(cursor, &lit, &pattern, &known_const, const_val);
                for v in rule.head.variables() {
                    let vid = self.var_id(&RtVar::new(n.rule_no, v));
                    body.push(Instr::Assign {
                        var: vid,
                        src: RVal::Col(cursor, col_of(&lit, v)),
                    });
                }
                if let Some(dup) = self.dup_check(node, OnDup::Continue) {
                    body.push(dup);
                }
                body.extend(self.dispatch(node, cont));

                self.plan.pieces[piece].body = vec![
                    Instr::OpenCursor { cursor, bound },
                    Instr::Loop { cursor, body },
                    Instr::Break,
                ];
            }
            NodeShape::TwoEdb => {
                let outer_lit = rule.body[0].clone();
                let inner_lit = rule.body[1].clone();
                let outer_decl = &self.program.edb[&outer_lit.predicate];
                let inner_decl = &self.program.edb[&inner_lit.predicate];
                let outer_pattern =
                    select_binding_pattern(&outer_decl.patterns, &outer_lit, &known_const);
                let known_inner = |t: &Term| {
                    t.as_const().is_some() || t.as_var().is_some_and(|v| outer_lit.has_var(v))
                };
                let inner_pattern =
                    select_binding_pattern(&inner_decl.patterns, &inner_lit, &known_inner);

                let outer = self.new_cursor(
                    n.rule_no,
                    CursorTarget::Edb {
                        relation: outer_lit.predicate.clone(),
                        pattern: outer_pattern.clone(),
                    },
                );
                let inner = self.new_cursor(
                    n.rule_no,
                    CursorTarget::Edb {
                        relation: inner_lit.predicate.clone(),
                        pattern: inner_pattern.clone(),
                    },
                );

                // A value known inside the inner scan: a constant or a column
                // of the current outer tuple.
                let outer_lit2 = outer_lit.clone();
                let outer_val = move |_: &mut Self, t: &Term| match t {
                    Term::Const(c) => RVal::Const(c.clone()),
                    Term::Var(v) => RVal::Col(outer, col_of(&outer_lit2, v)),
                };

                let outer_bound = outer_pattern
                    .bound_positions()
                    .iter()
                    .map(|&i| RVal::Const(outer_lit.args[i].as_const().unwrap().clone()))
                    .collect();
                let inner_bound = inner_pattern
                    .bound_positions()
                    .iter()
                    .map(|&i| match &inner_lit.args[i] {
                        Term::Const(c) => RVal::Const(c.clone()),
                        Term::Var(v) => RVal::Col(outer, col_of(&outer_lit, v)),
                    })
                    .collect();

                let mut outer_body =
                    self.scan_guards(outer, &outer_lit, &outer_pattern, &known_const, const_val);
                outer_body.push(Instr::OpenCursor {
                    cursor: inner,
                    bound: inner_bound,
                });

                let mut inner_body =
                    self.scan_guards(inner, &inner_lit, &inner_pattern, &known_inner, outer_val);
                for v in rule.head.variables() {
                    let vid = self.var_id(&RtVar::new(n.rule_no, v));
                    let src = if outer_lit.has_var(v) {
                        RVal::Col(outer, col_of(&outer_lit, v))
                    } else {
                        RVal::Col(inner, col_of(&inner_lit, v))
                    };
                    inner_body.push(Instr::Assign { var: vid, src });
                }
                if let Some(dup) = self.dup_check(node, OnDup::Continue) {
                    inner_body.push(dup);
                }
                inner_body.extend(self.dispatch(node, cont));

                outer_body.push(Instr::Loop {
                    cursor: inner,
                    body: inner_body,
                });
                self.plan.pieces[piece].body = vec![
                    Instr::OpenCursor {
                        cursor: outer,
                        bound: outer_bound,
                    },
                    Instr::Loop {
                        cursor: outer,
                        body: outer_body,
                    },
                    Instr::Break,
                ];
            }
            other => unreachable!("compile_edb_only on {other:?}"),
        }
    }

    /// One IDB body literal and nothing else: pure forwarding, no loop, no
    /// new variables.
    fn compile_one_idb(&mut self, node: NodeId, piece: PieceId) {
        let n = self.graph.nodes[node].clone();
        let mut body = self.entry_guards(n.subst.as_ref().expect("IDB node has a unifier"));
        if let Some(dup) = self.dup_check(node, OnDup::Break) {
            body.push(dup);
        }
        body.extend(self.dispatch(node, None));
        self.plan.pieces[piece].body = body;
    }

    /// One IDB and one EDB body literal: guards, optional save bracket, then
    /// a scan bound by the values the IDB fact supplies.
    fn compile_idb_edb(&mut self, node: NodeId, piece: PieceId) {
        let n = self.graph.nodes[node].clone();
        let rule = self.rule(n.rule_no);
        let idb_pos = n.lit_pos.expect("selected literal");
        let idb_lit = rule.body[idb_pos].clone();
        let edb_lit = rule.body[1 - idb_pos].clone();
        let decl = &self.program.edb[&edb_lit.predicate];
        let cont = self.plan.pieces[piece].cont_label;

        let known =
            |t: &Term| t.as_const().is_some() || t.as_var().is_some_and(|v| idb_lit.has_var(v));
        let pattern = select_binding_pattern(&decl.patterns, &edb_lit, &known);
        let cursor = self.new_cursor(
            n.rule_no,
            CursorTarget::Edb {
                relation: edb_lit.predicate.clone(),
                pattern: pattern.clone(),
            },
        );

        let mut body = self.entry_guards(n.subst.as_ref().expect("unifier"));
        body.extend(self.save_bracket(node, cursor, piece));
        if n.copy_all {
            self.emit_copies(node, &mut body);
        }
        let bound = pattern
            .bound_positions()
            .iter()
            .map(|&i| {
                let term = edb_lit.args[i].clone();
                self.term_rval(node, &term)
            })
            .collect();
        body.push(Instr::OpenCursor { cursor, bound });

        let mut loop_body = self.scan_guards(cursor, &edb_lit, &pattern, &known, |b, t| {
            b.term_rval(node, t)
        });
        for v in rule.head.variables() {
            if idb_lit.has_var(v) {
                continue;
            }
            let vid = self.var_id(&RtVar::new(n.rule_no, v));
            loop_body.push(Instr::Assign {
                var: vid,
                src: RVal::Col(cursor, col_of(&edb_lit, v)),
            });
        }
        if let Some(dup) = self.dup_check(node, OnDup::Continue) {
            loop_body.push(dup);
        }
        loop_body.extend(self.dispatch(node, cont));

        body.push(Instr::Loop {
            cursor,
            body: loop_body,
        });
        body.push(Instr::Break);
        self.plan.pieces[piece].body = body;
    }

    /// Two IDB body literals: append the arriving tuple to this literal's
    /// side table, then join it against the opposite table through a
    /// snapshot-bounded scan.
    fn compile_two_idb(&mut self, node: NodeId, piece: PieceId) {
        let n = self.graph.nodes[node].clone();
        let rule = self.rule(n.rule_no);
        let sel_pos = n.lit_pos.expect("selected literal");
        let sel_lit = rule.body[sel_pos].clone();
        let other_lit = rule.body[1 - sel_pos].clone();
        let cont = self.plan.pieces[piece].cont_label;

        let input_fact = self.graph.facts[n.input.expect("two-IDB node has input")]
            .fact
            .clone();
        let own_table = self.side_ids[&(n.rule_no, sel_pos)];
        let other_table = self.side_ids[&(n.rule_no, 1 - sel_pos)];

        let mut body = self.entry_guards(n.subst.as_ref().expect("unifier"));
        let slots = self.fact_rvals(&input_fact);
        body.push(Instr::InsertSide {
            table: own_table,
            slots,
        });

        if n.derived.is_none() {
            // The join result cannot reach an answer; this piece only feeds
            // the table its siblings read.
            body.push(Instr::Break);
            self.plan.pieces[piece].body = body;
            return;
        }

        let cursor = self.new_cursor(n.rule_no, CursorTarget::Side { table: other_table });
        body.extend(self.save_bracket(node, cursor, piece));
        if n.copy_all {
            self.emit_copies(node, &mut body);
        }
        body.push(Instr::OpenCursor {
            cursor,
            bound: Vec::new(),
        });

        let known =
            |t: &Term| t.as_const().is_some() || t.as_var().is_some_and(|v| sel_lit.has_var(v));
        let pattern = BindingPattern::all_free(other_lit.arity());
        let mut loop_body = self.scan_guards(cursor, &other_lit, &pattern, &known, |b, t| {
            b.term_rval(node, t)
        });
        for v in rule.head.variables() {
            if sel_lit.has_var(v) {
                continue;
            }
            let vid = self.var_id(&RtVar::new(n.rule_no, v));
            loop_body.push(Instr::Assign {
                var: vid,
                src: RVal::Col(cursor, col_of(&other_lit, v)),
            });
        }
        if let Some(dup) = self.dup_check(node, OnDup::Continue) {
            loop_body.push(dup);
        }
        loop_body.extend(self.dispatch(node, cont));
        body.push(Instr::Loop {
            cursor,
            body: loop_body,
        });
        body.push(Instr::Break);
        self.plan.pieces[piece].body = body;
    }
}

/// Assemble the dispatch program for a pruned graph.
///
/// `tabled` must cover every cycle of the graph (the caller validates); the
/// answer predicate may be included for set-semantics output.
pub fn assemble(
    program: &Program,
    graph: &RuleApplicationGraph,
    types: &BTreeMap<String, Vec<ColType>>,
    tabled: &BTreeSet<String>,
) -> Plan {
    let mut b = Builder {
        program,
        graph,
        types,
        saves: graph.save_needs(),
        plan: Plan {
            pieces: Vec::new(),
            labels: Vec::new(),
            init: Vec::new(),
            vars: Vec::new(),
            cursors: Vec::new(),
            side_tables: Vec::new(),
            dup_tables: Vec::new(),
            tabled: tabled.clone(),
            preload: Vec::new(),
            edb_schemas: BTreeMap::new(),
            answer_types: types
                .get(&program.answer_pred)
                .cloned()
                .unwrap_or_default(),
        },
        var_ids: BTreeMap::new(),
        dup_ids: BTreeMap::new(),
        side_ids: BTreeMap::new(),
        node_piece: Vec::new(),
        temp_count: BTreeMap::new(),
        cursor_count: BTreeMap::new(),
    };

    // Duplicate tables for tabled predicates that actually occur.
    for pred in tabled {
        if let Some(tys) = types.get(pred) {
            let id = b.plan.dup_tables.len();
            b.plan.dup_tables.push(DupTableDecl {
                name: format!("dup_{pred}"),
                predicate: pred.clone(),
                types: tys.clone(),
            });
            b.dup_ids.insert(pred.clone(), id);
        }
    }

    // Side tables for both literals of every two-IDB rule in the graph.
    for node in &graph.nodes {
        if node.shape != NodeShape::TwoIdb {
            continue;
        }
        let rule = b.rule(node.rule_no);
        for pos in 0..2 {
            let key = (node.rule_no, pos);
            if b.side_ids.contains_key(&key) {
                continue;
            }
            let id: SideTableId = b.plan.side_tables.len();
            b.plan.side_tables.push(SideTableDecl {
                name: format!("tab_{}_{}", node.rule_no, pos + 1),
                rule_no: node.rule_no,
                lit_pos: pos,
                types: types[&rule.body[pos].predicate].clone(),
            });
            b.side_ids.insert(key, id);
        }
    }

    // Phase 1: skeletons and labels, so dispatch can reference any piece.
    for node in 0..graph.nodes.len() {
        let piece = b.piece_skeleton(node);
        b.node_piece.push(piece);
    }

    // Extra emit pieces for ground answer facts.
    let mut answer_fact_pieces: BTreeMap<usize, LabelId> = BTreeMap::new();
    for (fid, fact) in graph.facts.iter().enumerate() {
        if fact.idb_fact_sources.is_empty() || fact.fact.predicate != graph.answer_pred {
            continue;
        }
        let piece_id = b.plan.pieces.len();
        let entry = b.new_label(piece_id, EntryKind::Entry, "START");
        let values: Vec<RVal> = b.fact_rvals(&fact.fact);
        let mut body = Vec::new();
        if let Some(&table) = b.dup_ids.get(&graph.answer_pred) {
            body.push(Instr::DupCheck {
                table,
                slots: values.clone(),
                on_dup: OnDup::Break,
            });
        }
        body.push(Instr::EmitAnswer { slots: values });
        body.push(Instr::Break);
        b.plan.pieces.push(Piece {
            rule_no: fact.idb_fact_sources[0],
            node: None,
            mode: CompileMode::Normal,
            entry_label: entry,
            cont_label: None,
            restore_label: None,
            input_slots: Vec::new(),
            body,
            restore_body: Vec::new(),
            comment: format!("fact {}", fact.fact),
        });
        answer_fact_pieces.insert(fid, entry);
    }

    // Phase 2: bodies.
    for node in 0..graph.nodes.len() {
        let piece = b.node_piece[node];
        match graph.nodes[node].shape {
            NodeShape::OneEdb | NodeShape::TwoEdb => b.compile_edb_only(node, piece),
            NodeShape::OneIdb => b.compile_one_idb(node, piece),
            NodeShape::IdbEdb => b.compile_idb_edb(node, piece),
            NodeShape::TwoIdb => b.compile_two_idb(node, piece),
        }
    }

    // Phase 3: initialization, ordered by clause number. Rules without IDB
    // body literals push their INIT label; ground facts push one START per
    // consumer, reversed so the first consumer runs first.
    let mut init_sources: Vec<(u32, Vec<LabelId>)> = Vec::new();
    for node in 0..graph.nodes.len() {
        let n = &graph.nodes[node];
        if n.input.is_none() {
            init_sources.push((
                n.rule_no,
                vec![b.plan.pieces[b.node_piece[node]].entry_label],
            ));
        }
    }
    for (fid, fact) in graph.facts.iter().enumerate() {
        if fact.idb_fact_sources.is_empty() {
            continue;
        }
        let clause = fact.idb_fact_sources[0];
        let labels = if let Some(&emit) = answer_fact_pieces.get(&fid) {
            vec![emit]
        } else {
            fact.consumers
                .iter()
                .rev()
                .map(|&c| b.plan.pieces[b.node_piece[c]].entry_label)
                .collect()
        };
        init_sources.push((clause, labels));
    }
    init_sources.sort_by_key(|(clause, _)| *clause);
    b.plan.init = init_sources.into_iter().flat_map(|(_, l)| l).collect();

    // Preload tabled ground facts so re-derivations are cut immediately.
    for fact in &graph.facts {
        if fact.idb_fact_sources.is_empty() || fact.fact.predicate == graph.answer_pred {
            continue;
        }
        if let Some(&table) = b.dup_ids.get(&fact.fact.predicate) {
            let values = fact
                .fact
                .slots
                .iter()
                .map(|s| match s {
                    Slot::Const(c) => c.clone(),
                    Slot::Var(_) => unreachable!("ground fact has constant slots"),
                })
                .collect();
            b.plan.preload.push((table, values));
        }
    }

    for decl in program.edb.values() {
        b.plan.edb_schemas.insert(
            decl.name.clone(),
            (decl.types.clone(), decl.patterns.clone()),
        );
    }

    let plan = b.plan;
    let issues = validate_plan(&plan);
    assert!(issues.is_empty(), "generated plan is ill-formed: {issues:?}");
    plan
}

/// Structural well-formedness checks over an assembled plan. Returns a list
/// of violations (empty when the plan is sound).
#[allow(clippy::needless_range_loop)]
pub fn validate_plan(plan: &Plan) -> Vec<String> {
    let mut issues = Vec::new();

    fn walk_labels(instrs: &[Instr], n_labels: usize, issues: &mut Vec<String>) {
        for instr in instrs {
            match instr {
                Instr::PushBacktrack { label } | Instr::Goto { label } => {
                    if *label >= n_labels {
                        issues.push(format!("dangling label reference {label}"));
                    }
                }
                Instr::Loop { body, .. } => walk_labels(body, n_labels, issues),
                _ => {}
            }
        }
    }
    for piece in &plan.pieces {
        walk_labels(&piece.body, plan.labels.len(), &mut issues);
        walk_labels(&piece.restore_body, plan.labels.len(), &mut issues);
    }

    // Single writer: a piece only assigns variables of its own rule.
    fn walk_assigns(instrs: &[Instr], out: &mut Vec<VarId>) {
        for instr in instrs {
            match instr {
                Instr::Assign { var, .. } => out.push(*var),
                Instr::Loop { body, .. } => walk_assigns(body, out),
                _ => {}
            }
        }
    }
    for piece in &plan.pieces {
        let mut assigned = Vec::new();
        walk_assigns(&piece.body, &mut assigned);
        for var in assigned {
            if plan.vars[var].rule_no != piece.rule_no {
                issues.push(format!(
                    "piece of rule {} assigns {} owned by rule {}",
                    piece.rule_no, plan.vars[var].name, plan.vars[var].rule_no
                ));
            }
        }
    }

    // Unification guards only at piece entry; the continuation push must
    // precede consumer pushes and the duplicate check must precede both.
    fn walk_order(instrs: &[Instr], in_loop: bool, issues: &mut Vec<String>) {
        let mut pushes_seen = false;
        for instr in instrs {
            match instr {
                Instr::GuardSlotsEq { .. } if in_loop => {
                    issues.push("unification guard inside a fetch loop".to_string());
                }
                Instr::Loop { body, .. } => walk_order(body, true, issues),
                Instr::PushBacktrack { .. } => pushes_seen = true,
                Instr::DupCheck { .. } if pushes_seen => {
                    issues.push("duplicate check after a backtrack push".to_string());
                }
                _ => {}
            }
        }
    }
    for piece in &plan.pieces {
        walk_order(&piece.body, false, &mut issues);
    }
    issues
}
