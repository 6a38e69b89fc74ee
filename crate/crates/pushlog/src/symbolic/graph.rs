//! The rule application graph: the structure of the compile-time fixpoint.
//!
//! Fact nodes are symbolic facts, rule nodes are symbolic rule applications.
//! Edges run from each fact to every rule application consuming it and from
//! each rule application to the fact it derives. Cycles mark recursion;
//! parts with no path to an `answer` fact are useless and pruned before code
//! generation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use crate::frontend::{Program, Rule};
use crate::value::Value;

use super::{derive_head, detect_conflict, unify_fact_literal, Subst, SymbolicFact};

pub type FactId = usize;
pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct FactNode {
    pub fact: SymbolicFact,
    /// Rule nodes deriving this fact.
    pub producers: Vec<NodeId>,
    /// Rule nodes consuming this fact, sorted by (rule_no, literal position).
    pub consumers: Vec<NodeId>,
    /// Clause numbers of ground program facts this node stands for.
    pub idb_fact_sources: Vec<u32>,
}

/// The body shape a rule node is compiled as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeShape {
    OneEdb,
    TwoEdb,
    OneIdb,
    IdbEdb,
    TwoIdb,
}

#[derive(Debug, Clone)]
pub struct RuleNode {
    pub rule_no: u32,
    pub shape: NodeShape,
    /// Selected IDB body literal (index into the rule body), if any.
    pub lit_pos: Option<usize>,
    pub input: Option<FactId>,
    pub subst: Option<Subst>,
    /// The derived fact. `None` only for two-IDB nodes kept after pruning
    /// solely to feed their side table (their own join leads nowhere).
    pub derived: Option<FactId>,
    pub copy_all: bool,
}

#[derive(Debug, Clone)]
pub struct RuleApplicationGraph {
    pub facts: Vec<FactNode>,
    pub nodes: Vec<RuleNode>,
    pub answer_pred: String,
}

/// What a recursive code piece must save on entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SaveNeeds {
    /// The node can run while an earlier activation of a node of the same
    /// rule is pending, so the rule's variables it writes must be saved.
    pub vars: bool,
    /// The node can re-enter itself, so its cursor state must be saved.
    pub cursor: bool,
}

/// The set of IDB predicates materialized in hash tables for duplicate
/// elimination. Every cycle of the graph must contain a rule node whose
/// derived fact's predicate is in the plan, or evaluation may not terminate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TablingPlan {
    pub predicates: BTreeSet<String>,
}

impl RuleApplicationGraph {
    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn answer_facts(&self) -> impl Iterator<Item = FactId> + '_ {
        (0..self.facts.len()).filter(move |&f| self.facts[f].fact.predicate == self.answer_pred)
    }

    /// Sibling nodes of a two-IDB rule node: same rule, the other literal.
    pub fn siblings(&self, node: NodeId) -> Vec<NodeId> {
        let n = &self.nodes[node];
        if n.shape != NodeShape::TwoIdb {
            return Vec::new();
        }
        self.nodes
            .iter()
            .enumerate()
            .filter(|(i, m)| {
                *i != node && m.rule_no == n.rule_no && m.lit_pos != n.lit_pos
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Deterministic order: facts sorted structurally, nodes by
    /// (rule number, literal position, input fact).
    fn canonicalize(&mut self) {
        let mut fact_order: Vec<FactId> = (0..self.facts.len()).collect();
        fact_order.sort_by(|&a, &b| self.facts[a].fact.cmp(&self.facts[b].fact));
        let mut fact_new = vec![0; self.facts.len()];
        for (new, &old) in fact_order.iter().enumerate() {
            fact_new[old] = new;
        }

        let mut node_order: Vec<NodeId> = (0..self.nodes.len()).collect();
        node_order.sort_by_key(|&i| {
            let n = &self.nodes[i];
            (
                n.rule_no,
                n.lit_pos.map_or(0, |p| p + 1),
                n.input.map_or(0, |f| fact_new[f] + 1),
            )
        });
        let mut node_new = vec![0; self.nodes.len()];
        for (new, &old) in node_order.iter().enumerate() {
            node_new[old] = new;
        }

        let mut facts = Vec::with_capacity(self.facts.len());
        for &old in &fact_order {
            let mut f = self.facts[old].clone();
            f.producers = f.producers.iter().map(|&n| node_new[n]).collect();
            f.producers.sort_unstable();
            f.consumers = f.consumers.iter().map(|&n| node_new[n]).collect();
            f.consumers.sort_unstable();
            f.idb_fact_sources.sort_unstable();
            facts.push(f);
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for &old in &node_order {
            let mut n = self.nodes[old].clone();
            n.input = n.input.map(|f| fact_new[f]);
            n.derived = n.derived.map(|f| fact_new[f]);
            nodes.push(n);
        }
        self.facts = facts;
        self.nodes = nodes;
    }
}

fn rule_shape(program: &Program, rule: &Rule, lit_pos: Option<usize>) -> NodeShape {
    let idb_count = rule
        .body
        .iter()
        .filter(|l| !program.is_edb(&l.predicate))
        .count();
    match (rule.body.len(), idb_count, lit_pos) {
        (1, 0, None) => NodeShape::OneEdb,
        (2, 0, None) => NodeShape::TwoEdb,
        (1, 1, Some(_)) => NodeShape::OneIdb,
        (2, 1, Some(_)) => NodeShape::IdbEdb,
        (2, 2, Some(_)) => NodeShape::TwoIdb,
        other => panic!("rule {}: unsupported shape {other:?}", rule.rule_no),
    }
}

/// Upper bound on the number of symbolic facts: the slot alphabet is the
/// program's constants plus one runtime variable per (rule, variable) pair.
fn symbolic_fact_bound(program: &Program) -> u128 {
    let mut consts: BTreeSet<Value> = BTreeSet::new();
    let mut preds: BTreeSet<&str> = BTreeSet::new();
    let mut max_arity = 1usize;
    let mut rt_vars = 0u128;
    for rule in &program.rules {
        rt_vars += rule.variables().len() as u128;
        for lit in std::iter::once(&rule.head).chain(&rule.body) {
            preds.insert(&lit.predicate);
            max_arity = max_arity.max(lit.arity());
            for term in &lit.args {
                if let Some(c) = term.as_const() {
                    consts.insert(c.clone());
                }
            }
        }
    }
    for fact in &program.idb_facts {
        preds.insert(&fact.predicate);
        max_arity = max_arity.max(fact.values.len());
        consts.extend(fact.values.iter().cloned());
    }
    let alphabet = consts.len() as u128 + rt_vars;
    (preds.len() as u128).saturating_mul(alphabet.max(1).saturating_pow(max_arity as u32))
}

/// Run the compile-time fixpoint: starting from ground program facts and the
/// facts derived by rules without IDB body literals, apply every rule to
/// every matching symbolic fact until no new fact or rule application
/// appears. Terminates because the slot alphabet is finite.
pub fn symbolic_fixpoint(program: &Program) -> RuleApplicationGraph {
    let bound = symbolic_fact_bound(program);
    let mut graph = RuleApplicationGraph {
        facts: Vec::new(),
        nodes: Vec::new(),
        answer_pred: program.answer_pred.clone(),
    };
    let mut fact_index: HashMap<SymbolicFact, FactId> = HashMap::new();
    let mut node_index: HashMap<(u32, Option<usize>, Option<FactId>), NodeId> = HashMap::new();
    let mut worklist: VecDeque<FactId> = VecDeque::new();

    let intern = |graph: &mut RuleApplicationGraph,
                      worklist: &mut VecDeque<FactId>,
                      fact_index: &mut HashMap<SymbolicFact, FactId>,
                      fact: SymbolicFact|
     -> FactId {
        if let Some(&id) = fact_index.get(&fact) {
            return id;
        }
        let id = graph.facts.len();
        fact_index.insert(fact.clone(), id);
        graph.facts.push(FactNode {
            fact,
            producers: Vec::new(),
            consumers: Vec::new(),
            idb_fact_sources: Vec::new(),
        });
        assert!(
            (graph.facts.len() as u128) <= bound,
            "symbolic fixpoint exceeded its termination bound"
        );
        worklist.push_back(id);
        id
    };

    for ground in &program.idb_facts {
        let fact = SymbolicFact::ground(&ground.predicate, &ground.values);
        let id = intern(&mut graph, &mut worklist, &mut fact_index, fact);
        graph.facts[id].idb_fact_sources.push(ground.rule_no);
    }

    for rule in &program.rules {
        if rule.body.is_empty() || rule.body.iter().any(|l| !program.is_edb(&l.predicate)) {
            continue;
        }
        let derived = derive_head(rule, None, false);
        let fid = intern(&mut graph, &mut worklist, &mut fact_index, derived);
        let node_id = graph.nodes.len();
        graph.nodes.push(RuleNode {
            rule_no: rule.rule_no,
            shape: rule_shape(program, rule, None),
            lit_pos: None,
            input: None,
            subst: None,
            derived: Some(fid),
            copy_all: false,
        });
        node_index.insert((rule.rule_no, None, None), node_id);
        graph.facts[fid].producers.push(node_id);
    }

    while let Some(fid) = worklist.pop_front() {
        let fact = graph.facts[fid].fact.clone();
        for rule in &program.rules {
            for (pos, lit) in rule.body.iter().enumerate() {
                if program.is_edb(&lit.predicate)
                    || lit.predicate != fact.predicate
                    || lit.arity() != fact.slots.len()
                {
                    continue;
                }
                let key = (rule.rule_no, Some(pos), Some(fid));
                if node_index.contains_key(&key) {
                    continue;
                }
                let Some(subst) = unify_fact_literal(&fact, lit) else {
                    continue;
                };
                let copy_all = detect_conflict(rule, pos, &fact);
                let derived = derive_head(rule, Some((pos, &subst)), copy_all);
                let dfid = intern(&mut graph, &mut worklist, &mut fact_index, derived);
                let node_id = graph.nodes.len();
                graph.nodes.push(RuleNode {
                    rule_no: rule.rule_no,
                    shape: rule_shape(program, rule, Some(pos)),
                    lit_pos: Some(pos),
                    input: Some(fid),
                    subst: Some(subst),
                    derived: Some(dfid),
                    copy_all,
                });
                node_index.insert(key, node_id);
                graph.facts[fid].consumers.push(node_id);
                graph.facts[dfid].producers.push(node_id);
            }
        }
    }

    graph.canonicalize();
    graph
}

/// Remove every node without a path to an `answer` fact. For two-IDB rules a
/// node also counts as useful when a sibling node survives: it must keep
/// feeding the side table the sibling joins against, but it only emits join
/// code itself if its own derived fact is still reachable.
pub fn prune_useless(graph: &RuleApplicationGraph) -> RuleApplicationGraph {
    let mut live_fact = vec![false; graph.facts.len()];
    let mut live_node = vec![false; graph.nodes.len()];
    let mut work: VecDeque<FactId> = VecDeque::new();

    for f in graph.answer_facts() {
        live_fact[f] = true;
        work.push_back(f);
    }

    let mark_node = |n: NodeId,
                         live_node: &mut Vec<bool>,
                         live_fact: &mut Vec<bool>,
                         work: &mut VecDeque<FactId>,
                         graph: &RuleApplicationGraph| {
        if live_node[n] {
            return;
        }
        live_node[n] = true;
        if let Some(input) = graph.nodes[n].input {
            if !live_fact[input] {
                live_fact[input] = true;
                work.push_back(input);
            }
        }
    };

    // Backward closure from answer facts; sibling coupling handled by
    // re-scanning until stable (graphs are small).
    loop {
        while let Some(f) = work.pop_front() {
            for &producer in &graph.facts[f].producers {
                mark_node(producer, &mut live_node, &mut live_fact, &mut work, graph);
            }
        }
        let mut changed = false;
        for n in 0..graph.nodes.len() {
            if !live_node[n] {
                continue;
            }
            for sib in graph.siblings(n) {
                if !live_node[sib] {
                    mark_node(sib, &mut live_node, &mut live_fact, &mut work, graph);
                    changed = true;
                }
            }
        }
        if !changed && work.is_empty() {
            break;
        }
    }

    // Rebuild the surviving subgraph.
    let mut fact_new: Vec<Option<FactId>> = vec![None; graph.facts.len()];
    let mut facts = Vec::new();
    for (old, keep) in live_fact.iter().enumerate() {
        if *keep {
            fact_new[old] = Some(facts.len());
            let f = &graph.facts[old];
            facts.push(FactNode {
                fact: f.fact.clone(),
                producers: Vec::new(),
                consumers: Vec::new(),
                idb_fact_sources: f.idb_fact_sources.clone(),
            });
        }
    }
    let mut node_new: Vec<Option<NodeId>> = vec![None; graph.nodes.len()];
    let mut nodes = Vec::new();
    for (old, keep) in live_node.iter().enumerate() {
        if *keep {
            node_new[old] = Some(nodes.len());
            let n = &graph.nodes[old];
            let derived = n.derived.and_then(|f| fact_new[f]);
            nodes.push(RuleNode {
                rule_no: n.rule_no,
                shape: n.shape,
                lit_pos: n.lit_pos,
                input: n.input.map(|f| fact_new[f].expect("live node input kept")),
                subst: n.subst.clone(),
                derived,
                copy_all: n.copy_all,
            });
        }
    }
    for (new_id, node) in nodes.iter().enumerate() {
        if let Some(input) = node.input {
            facts[input].consumers.push(new_id);
        }
        if let Some(derived) = node.derived {
            facts[derived].producers.push(new_id);
        }
    }

    let mut pruned = RuleApplicationGraph {
        facts,
        nodes,
        answer_pred: graph.answer_pred.clone(),
    };
    pruned.canonicalize();
    pruned
}

/// Iterative Tarjan SCC over the bipartite graph. Vertex ids: facts first,
/// then rule nodes offset by the fact count.
fn strongly_connected_components(graph: &RuleApplicationGraph) -> Vec<Vec<usize>> {
    let nf = graph.facts.len();
    let total = nf + graph.nodes.len();
    let succ = |v: usize| -> Vec<usize> {
        if v < nf {
            graph.facts[v].consumers.iter().map(|&n| nf + n).collect()
        } else {
            graph.nodes[v - nf].derived.map(|f| vec![f]).unwrap_or_default()
        }
    };

    let mut index = vec![usize::MAX; total];
    let mut low = vec![0usize; total];
    let mut on_stack = vec![false; total];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut sccs: Vec<Vec<usize>> = Vec::new();

    for start in 0..total {
        if index[start] != usize::MAX {
            continue;
        }
        // Explicit DFS stack: (vertex, successor list, next successor).
        let mut call: Vec<(usize, Vec<usize>, usize)> = vec![(start, succ(start), 0)];
        index[start] = next_index;
        low[start] = next_index;
        next_index += 1;
        stack.push(start);
        on_stack[start] = true;

        while !call.is_empty() {
            let top = call.len() - 1;
            let v = call[top].0;
            let i = call[top].2;
            if i < call[top].1.len() {
                let w = call[top].1[i];
                call[top].2 += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, succ(w), 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(parent) = call.last() {
                    let p = parent.0;
                    low[p] = low[p].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    sccs.push(component);
                }
            }
        }
    }
    sccs
}

/// Rule nodes lying on a directed cycle. Exactly these can re-enter
/// themselves at runtime.
pub fn recursive_nodes(graph: &RuleApplicationGraph) -> BTreeSet<NodeId> {
    let nf = graph.facts.len();
    let mut out = BTreeSet::new();
    for scc in strongly_connected_components(graph) {
        if scc.len() >= 2 {
            // Bipartite with single-target rule nodes: no self loops exist,
            // so any SCC of two or more vertices contains a cycle.
            for v in scc {
                if v >= nf {
                    out.insert(v - nf);
                }
            }
        }
    }
    out
}

impl RuleApplicationGraph {
    /// Per-node save/restore requirements.
    ///
    /// A node must save the rule variables it writes whenever it can be
    /// activated while an earlier activation of any node of the same rule is
    /// still pending on the backtrack stack, i.e. when its input fact is
    /// reachable from a derived fact of the same rule. Its cursor only needs
    /// saving when the node can re-enter itself (it lies on a cycle).
    pub fn save_needs(&self) -> Vec<SaveNeeds> {
        let recursive = recursive_nodes(self);
        let mut needs = vec![SaveNeeds::default(); self.nodes.len()];

        let mut by_rule: BTreeMap<u32, Vec<NodeId>> = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            by_rule.entry(node.rule_no).or_default().push(id);
        }

        for (_, members) in by_rule {
            // Facts reachable from any fact derived by this rule's nodes.
            let mut reached = vec![false; self.facts.len()];
            let mut work: VecDeque<FactId> = VecDeque::new();
            for &n in &members {
                if let Some(d) = self.nodes[n].derived {
                    if !reached[d] {
                        reached[d] = true;
                        work.push_back(d);
                    }
                }
            }
            while let Some(f) = work.pop_front() {
                for &consumer in &self.facts[f].consumers {
                    if let Some(d) = self.nodes[consumer].derived {
                        if !reached[d] {
                            reached[d] = true;
                            work.push_back(d);
                        }
                    }
                }
            }
            for &n in &members {
                if let Some(input) = self.nodes[n].input {
                    needs[n].vars = reached[input];
                }
                needs[n].cursor = recursive.contains(&n);
            }
        }
        needs
    }
}

/// Greedy cycle cover: repeatedly table the predicate whose fact nodes sit in
/// the most remaining cyclic components, ties broken by smaller arity, then
/// name. Any cover is correct; this one just tends to be small.
pub fn choose_tabling(graph: &RuleApplicationGraph) -> TablingPlan {
    let mut plan = TablingPlan::default();
    let mut removed: BTreeSet<String> = BTreeSet::new();
    loop {
        let view = restrict(graph, &removed);
        let nf = view.facts.len();
        let cyclic: Vec<Vec<usize>> = strongly_connected_components(&view)
            .into_iter()
            .filter(|scc| scc.len() >= 2)
            .collect();
        if cyclic.is_empty() {
            break;
        }
        let mut score: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // pred -> (count, arity)
        for scc in &cyclic {
            let mut preds: BTreeSet<&str> = BTreeSet::new();
            for &v in scc {
                if v < nf {
                    preds.insert(&view.facts[v].fact.predicate);
                }
            }
            for pred in preds {
                let arity = view
                    .facts
                    .iter()
                    .find(|f| f.fact.predicate == pred)
                    .map(|f| f.fact.slots.len())
                    .unwrap_or(0);
                score.entry(pred).or_insert((0, arity)).0 += 1;
            }
        }
        let best = score
            .iter()
            .max_by(|(na, (ca, aa)), (nb, (cb, ab))| {
                ca.cmp(cb)
                    .then(ab.cmp(aa)) // smaller arity wins
                    .then(nb.cmp(na)) // lexicographically smaller name wins
            })
            .map(|(name, _)| name.to_string())
            .expect("cyclic component with no fact node");
        plan.predicates.insert(best.clone());
        removed.insert(best);
    }
    plan
}

/// Check that every cycle contains a rule node deriving a tabled predicate.
pub fn covers_all_cycles(graph: &RuleApplicationGraph, tabled: &BTreeSet<String>) -> bool {
    let view = restrict(graph, tabled);
    strongly_connected_components(&view)
        .into_iter()
        .all(|scc| scc.len() < 2)
}

/// A copy of the graph with the fact nodes of `removed` predicates cut out
/// (only edges matter here, so the facts are kept but disconnected).
fn restrict(graph: &RuleApplicationGraph, removed: &BTreeSet<String>) -> RuleApplicationGraph {
    let mut view = graph.clone();
    for fact in &mut view.facts {
        if removed.contains(&fact.fact.predicate) {
            fact.consumers.clear();
        }
    }
    for node in &mut view.nodes {
        if let Some(d) = node.derived {
            if removed.contains(&graph.facts[d].fact.predicate) {
                node.derived = None;
            }
        }
    }
    view
}

/// Render the graph in Graphviz DOT with stable node ids: fact nodes as
/// ellipses, rule nodes as boxes.
pub fn to_dot(graph: &RuleApplicationGraph, program: &Program) -> String {
    use std::fmt::Write;
    let rule_text = |no: u32| -> String {
        program
            .rules
            .iter()
            .find(|r| r.rule_no == no)
            .map(|r| r.to_string())
            .unwrap_or_else(|| format!("r{no}"))
    };
    let mut out = String::new();
    out.push_str("digraph rule_application_graph {\n");
    for (i, f) in graph.facts.iter().enumerate() {
        writeln!(out, "  f{i} [shape=ellipse, label=\"{}\"];", f.fact).unwrap();
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        let mut label = format!("r{}: {}", n.rule_no, rule_text(n.rule_no));
        if n.shape == NodeShape::TwoIdb {
            label.push_str(&format!(" [lit {}]", n.lit_pos.unwrap() + 1));
        }
        let label = label.replace('"', "\\\"");
        writeln!(out, "  r{i} [shape=box, label=\"{label}\"];").unwrap();
    }
    for (i, n) in graph.nodes.iter().enumerate() {
        if let Some(input) = n.input {
            writeln!(out, "  f{input} -> r{i};").unwrap();
        }
        if let Some(derived) = n.derived {
            writeln!(out, "  r{i} -> f{derived};").unwrap();
        }
    }
    out.push_str("}\n");
    out
}
