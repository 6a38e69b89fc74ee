//! Pretty-printer: renders an assembled plan as C++-flavoured pseudo-source
//! in the dispatch-loop skeleton (declarations, initialization, one switch
//! case per label). The output is purely for inspection and golden tests;
//! the engine interprets the plan directly.

use crate::value::ColType;

use super::{CursorTarget, Instr, Plan, RVal};

fn ty_name(ty: ColType) -> &'static str {
    match ty {
        ColType::Int => "int",
        ColType::Str => "string",
    }
}

fn rval(plan: &Plan, v: &RVal) -> String {
    match v {
        RVal::Const(c) => c.datalog_token(),
        RVal::Var(id) => plan.vars[*id].name.clone(),
        RVal::Col(cursor, col) => format!("{}.col_{}()", plan.cursors[*cursor].name, col + 1),
    }
}

fn stack_of(ty: ColType) -> &'static str {
    match ty {
        ColType::Int => "value_stack_int",
        ColType::Str => "value_stack_string",
    }
}

struct Printer<'p> {
    plan: &'p Plan,
    out: String,
    indent: usize,
    /// Continuation case label waiting to be placed before the innermost
    /// fetch loop of the current piece.
    pending_cont: Option<String>,
}

impl<'p> Printer<'p> {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn instrs(&mut self, instrs: &[Instr]) {
        for instr in instrs {
            self.instr(instr);
        }
    }

    fn instr(&mut self, instr: &Instr) {
        let plan = self.plan;
        match instr {
            Instr::OpenCursor { cursor, bound } => {
                let args: Vec<String> = bound.iter().map(|b| rval(plan, b)).collect();
                self.line(&format!(
                    "{}.open({});",
                    plan.cursors[*cursor].name,
                    args.join(", ")
                ));
            }
            Instr::Loop { cursor, body } => {
                let has_nested = body.iter().any(|i| matches!(i, Instr::Loop { .. }));
                if !has_nested {
                    if let Some(name) = self.pending_cont.take() {
                        self.indent -= 1;
                        self.line(&format!("case {name}:"));
                        self.indent += 1;
                    }
                }
                self.line(&format!("while({}.fetch()) {{", plan.cursors[*cursor].name));
                self.indent += 1;
                self.instrs(body);
                self.indent -= 1;
                self.line("}");
            }
            Instr::GuardColsEq { cursor, checks } => {
                let name = &plan.cursors[*cursor].name;
                let conds: Vec<String> = checks
                    .iter()
                    .map(|(col, v)| format!("{}.col_{}() != {}", name, col + 1, rval(plan, v)))
                    .collect();
                self.line(&format!("if({})", conds.join(" || ")));
                self.line("    continue;");
            }
            Instr::GuardColsEqCols { cursor, pairs } => {
                let name = &plan.cursors[*cursor].name;
                let conds: Vec<String> = pairs
                    .iter()
                    .map(|(a, b)| format!("{}.col_{}() != {}.col_{}()", name, a + 1, name, b + 1))
                    .collect();
                self.line(&format!("if({})", conds.join(" || ")));
                self.line("    continue;");
            }
            Instr::GuardSlotsEq { checks } => {
                let conds: Vec<String> = checks
                    .iter()
                    .map(|(a, b)| format!("{} != {}", rval(plan, a), rval(plan, b)))
                    .collect();
                self.line(&format!("if({})", conds.join(" || ")));
                self.line("    break;");
            }
            Instr::Assign { var, src } => {
                self.line(&format!("{} = {};", plan.vars[*var].name, rval(plan, src)));
            }
            Instr::DupCheck {
                table,
                slots,
                on_dup,
            } => {
                let args: Vec<String> = slots.iter().map(|s| rval(plan, s)).collect();
                self.line(&format!(
                    "if(!{}.insert({}))",
                    plan.dup_tables[*table].name,
                    args.join(", ")
                ));
                match on_dup {
                    super::OnDup::Continue => self.line("    continue;"),
                    super::OnDup::Break => self.line("    break;"),
                }
            }
            Instr::InsertSide { table, slots } => {
                let args: Vec<String> = slots.iter().map(|s| rval(plan, s)).collect();
                self.line(&format!(
                    "{}.append({});",
                    plan.side_tables[*table].name,
                    args.join(", ")
                ));
            }
            Instr::PushBacktrack { label } => {
                self.line(&format!(
                    "backtrack_stack.push({});",
                    plan.labels[*label].name
                ));
            }
            Instr::Goto { label } => {
                self.line(&format!("goto {};", goto_name(&plan.labels[*label].name)));
            }
            Instr::SaveState { cursor, vars } => {
                if let Some(c) = cursor {
                    self.line(&format!("{}.push();", plan.cursors[*c].name));
                }
                for &v in vars {
                    let decl = &plan.vars[v];
                    self.line(&format!("{}.push({});", stack_of(decl.ty), decl.name));
                }
            }
            Instr::RestoreState { cursor, vars } => {
                for &v in vars.iter().rev() {
                    let decl = &plan.vars[v];
                    self.line(&format!("{} = {}.pop();", decl.name, stack_of(decl.ty)));
                }
                if let Some(c) = cursor {
                    self.line(&format!("{}.pop();", plan.cursors[*c].name));
                }
            }
            Instr::EmitAnswer { slots } => {
                let args: Vec<String> = slots.iter().map(|s| rval(plan, s)).collect();
                self.line(&format!("emit_answer({});", args.join(", ")));
            }
            Instr::Break => self.line("break;"),
        }
    }
}

fn goto_name(label: &str) -> String {
    label.to_lowercase()
}

/// Render the whole plan in the dispatch-loop skeleton.
pub fn emit_pseudo_source(plan: &Plan) -> String {
    let mut p = Printer {
        plan,
        out: String::new(),
        indent: 0,
        pending_cont: None,
    };

    p.line("// declarations");
    for var in &plan.vars {
        p.line(&format!("{} {};", ty_name(var.ty), var.name));
    }
    for cursor in &plan.cursors {
        match &cursor.target {
            CursorTarget::Edb { relation, pattern } => {
                p.line(&format!("cursor_{relation}_{pattern} {};", cursor.name));
            }
            CursorTarget::Side { table } => {
                p.line(&format!(
                    "table_cursor<{}> {};",
                    plan.side_tables[*table].name, cursor.name
                ));
            }
        }
    }
    for table in &plan.dup_tables {
        let tys: Vec<&str> = table.types.iter().map(|&t| ty_name(t)).collect();
        p.line(&format!("hash_set<{}> {};", tys.join(", "), table.name));
    }
    for table in &plan.side_tables {
        let tys: Vec<&str> = table.types.iter().map(|&t| ty_name(t)).collect();
        p.line(&format!("table<{}> {};", tys.join(", "), table.name));
    }

    p.line("");
    p.line("// initialization");
    for &label in &plan.init {
        p.line(&format!("backtrack_stack.push({});", plan.labels[label].name));
    }

    p.line("");
    p.line("while(!backtrack_stack.is_empty()) {");
    p.indent += 1;
    p.line("switch(backtrack_stack.pop()) {");
    p.indent += 1;

    for (idx, piece) in plan.pieces.iter().enumerate() {
        let entry = &plan.labels[piece.entry_label];
        p.indent -= 1;
        p.line(&format!("case {}: // {}", entry.name, piece.comment));
        if piece.input_slots.is_empty() {
            p.indent += 1;
        } else {
            // Pieces reached by goto also carry a plain label.
            p.line(&format!("{}:", goto_name(&entry.name)));
            p.indent += 1;
        }
        // A trailing goto whose target is the very next case falls through.
        let next_entry = plan.pieces.get(idx + 1).map(|n| n.entry_label);
        print_piece_body(&mut p, piece, next_entry);
        if let Some(restore) = piece.restore_label {
            let name = plan.labels[restore].name.clone();
            p.indent -= 1;
            p.line(&format!("case {}: // undo {}", name, piece.comment));
            p.indent += 1;
            p.instrs(&piece.restore_body);
        }
    }

    p.indent -= 1;
    p.line("}");
    p.indent -= 1;
    p.line("}");
    p.out
}

/// Print the piece body; the continuation case label is placed directly in
/// front of the piece's innermost fetch loop (execution falls through).
fn print_piece_body(p: &mut Printer, piece: &super::Piece, next_entry: Option<usize>) {
    p.pending_cont = piece
        .cont_label
        .map(|id| p.plan.labels[id].name.clone());
    match piece.body.split_last() {
        Some((Instr::Goto { label }, rest)) if Some(*label) == next_entry => {
            p.instrs(rest);
            p.line(&format!(
                "// falls through to {}",
                goto_name(&p.plan.labels[*label].name)
            ));
        }
        _ => p.instrs(&piece.body),
    }
    p.pending_cont = None;
}
