//! Finite class graph: a class fixes a state and, for every level up to the
//! state's level, a total preorder over that level's expression set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use num_traits::Signed;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expressions::{ExpressionError, ExpressionSets, ACTIVE, ZERO};
use crate::model::{Ita, Policy, StateId, TransitionId};
use crate::numerics::{Comparator, LinExpr, Rational};
use crate::semantics::Configuration;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassError {
    #[error(transparent)]
    Expressions(#[from] ExpressionError),
    #[error("class graph exceeds the cap of {0} classes")]
    CapExceeded(usize),
    #[error("expression `{expr}` has no counterpart in E_{level}")]
    MissingExpression { expr: String, level: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Caps {
    pub max_classes: usize,
    pub max_exprs: usize,
    pub jobs: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps { max_classes: 200_000, max_exprs: 2_000, jobs: 1 }
    }
}

/// Total preorder stored as a dense rank per expression index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Preorder {
    rank: Vec<u32>,
}

impl Preorder {
    pub fn from_keys<K: Ord>(keys: &[K]) -> Self {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|a, b| keys[*a].cmp(&keys[*b]));
        Self::from_sorted(&order, |a, b| keys[a].cmp(&keys[b]))
    }

    fn from_sorted(order: &[usize], cmp: impl Fn(usize, usize) -> Ordering) -> Self {
        let mut rank = vec![0u32; order.len()];
        let mut r = 0;
        for w in 0..order.len() {
            if w > 0 && cmp(order[w - 1], order[w]) != Ordering::Equal {
                r += 1;
            }
            rank[order[w]] = r;
        }
        Preorder { rank }
    }

    pub fn cmp(&self, i: usize, j: usize) -> Ordering {
        self.rank[i].cmp(&self.rank[j])
    }

    pub fn len(&self) -> usize {
        self.rank.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rank.is_empty()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let top = self.rank.iter().copied().max().map_or(0, |r| r as usize + 1);
        let mut out = vec![Vec::new(); top];
        for (i, r) in self.rank.iter().enumerate() {
            out[*r as usize].push(i);
        }
        out
    }

    /// The active clock shares its block with another expression.
    pub fn time_closed(&self) -> bool {
        let r = self.rank[ACTIVE];
        self.rank.iter().filter(|x| **x == r).count() > 1
    }

    /// Preorder after letting the active clock grow a little; `None` when it
    /// is already above every other expression.
    pub fn time_successor(&self) -> Option<Preorder> {
        let r = self.rank[ACTIVE];
        let mut rank = self.rank.clone();
        if self.time_closed() {
            for (i, x) in rank.iter_mut().enumerate() {
                if *x > r || i == ACTIVE {
                    *x += 1;
                }
            }
            return Some(Preorder { rank });
        }
        let top = *self.rank.iter().max().unwrap();
        if r == top {
            return None;
        }
        for (i, x) in rank.iter_mut().enumerate() {
            if i != ACTIVE && *x > r {
                *x -= 1;
            }
        }
        Some(Preorder { rank })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Open,
    /// Time has elapsed since entry (delayed states only).
    Plus,
    /// Entered by a discrete step and no time elapsed (delayed states only).
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassNode {
    pub state: StateId,
    /// `preorders[k-1]` orders `E_k`.
    pub preorders: Vec<Preorder>,
    pub tag: Tag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", content = "transition", rename_all = "lowercase")]
pub enum EdgeKind {
    Time,
    Discrete(TransitionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

/// Sign of a linear expression in a class, read off one preorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    Const(Ordering),
    Rank { level: usize, lhs: usize, rhs: usize, reverse: bool },
}

impl Probe {
    fn eval(&self, pre: &[Preorder]) -> Ordering {
        match *self {
            Probe::Const(o) => o,
            Probe::Rank { level, lhs, rhs, reverse } => {
                let o = pre[level - 1].cmp(lhs, rhs);
                if reverse {
                    o.reverse()
                } else {
                    o
                }
            }
        }
    }
}

/// How the preorder on `E_k` of the target is obtained from the source class.
#[derive(Debug, Clone)]
enum LevelMap {
    /// `E_k[i][u]` is `E_k[map[i]]`.
    Lookup(Vec<usize>),
    /// `probes[j][i]` (i < j) is the sign of `E_k[i][u] - E_k[j][u]`.
    Pairwise(Vec<Vec<Probe>>),
}

#[derive(Debug, Clone)]
struct CompiledTransition {
    guard: Vec<(Probe, Comparator)>,
    levels: Vec<LevelMap>,
}

/// Static data shared by every class computation for a model.
#[derive(Debug, Clone)]
pub struct Abstraction<'a> {
    pub model: &'a Ita,
    pub sets: ExpressionSets,
    compiled: Vec<CompiledTransition>,
    comparisons: Vec<LinExpr>,
    /// `comparison_probes[c][l-1]`: sign of comparison `c` at a level-`l` state.
    comparison_probes: Vec<Vec<Probe>>,
}

fn probe(sets: &ExpressionSets, d: &LinExpr, level: usize) -> Result<Probe, ClassError> {
    let mut l = level;
    loop {
        if d.is_constant() || l == 0 {
            return Ok(Probe::Const(d.constant_term().cmp(&Rational::from_integer(0.into()))));
        }
        let a = d.coeff(l);
        let set = sets.level(l);
        if a != Rational::from_integer(0.into()) {
            let c = d.without(l).scale(&a.recip()).neg();
            return match set.index_of(&c) {
                Some(idx) => Ok(Probe::Rank { level: l, lhs: ACTIVE, rhs: idx, reverse: a.is_negative() }),
                None => Err(ClassError::MissingExpression { expr: c.to_string(), level: l }),
            };
        }
        if let Some(idx) = set.index_of(&d.neg()) {
            return Ok(Probe::Rank { level: l, lhs: ZERO, rhs: idx, reverse: false });
        }
        l = d.max_var();
    }
}

impl<'a> Abstraction<'a> {
    pub fn new(model: &'a Ita, comparisons: &[LinExpr], caps: &Caps) -> Result<Self, ClassError> {
        let sets = ExpressionSets::build(model, comparisons, caps.max_exprs)?;
        let mut compiled = Vec::new();
        for t in &model.transitions {
            let (l, l2) = (model.level(t.source), model.level(t.target));
            let guard = t
                .guard
                .iter()
                .map(|a| Ok((probe(&sets, &a.expr, l)?, a.cmp)))
                .collect::<Result<Vec<_>, ClassError>>()?;
            let mut levels = Vec::new();
            for k in 1..=l2 {
                let set = sets.level(k);
                let images: Vec<LinExpr> = set.iter().map(|e| e.substitute(&t.update)).collect();
                if k <= l {
                    let map = images
                        .iter()
                        .map(|e| {
                            set.index_of(e)
                                .ok_or_else(|| ClassError::MissingExpression { expr: e.to_string(), level: k })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    levels.push(LevelMap::Lookup(map));
                } else {
                    let mut rows = Vec::new();
                    for j in 0..images.len() {
                        let row = (0..j)
                            .map(|i| probe(&sets, &images[i].sub(&images[j]), l))
                            .collect::<Result<Vec<_>, _>>()?;
                        rows.push(row);
                    }
                    levels.push(LevelMap::Pairwise(rows));
                }
            }
            compiled.push(CompiledTransition { guard, levels });
        }
        let comparison_probes = comparisons
            .iter()
            .map(|c| (1..=model.clocks).map(|l| probe(&sets, &c.truncate_above(l), l)).collect())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Abstraction { model, sets, compiled, comparisons: comparisons.to_vec(), comparison_probes })
    }

    fn tag_for(&self, state: StateId, pre: &[Preorder], elapsed: bool) -> Tag {
        let st = self.model.state(state);
        if st.policy == Policy::Delayed && pre[st.level - 1].time_closed() {
            if elapsed {
                Tag::Plus
            } else {
                Tag::Minus
            }
        } else {
            Tag::Open
        }
    }

    pub fn class_of(&self, c: &Configuration) -> ClassNode {
        let level = self.model.level(c.state);
        let preorders: Vec<Preorder> = (1..=level)
            .map(|k| {
                let vals: Vec<Rational> = self.sets.level(k).iter().map(|e| e.evaluate(&c.valuation)).collect();
                Preorder::from_keys(&vals)
            })
            .collect();
        let tag = self.tag_for(c.state, &preorders, c.elapsed);
        ClassNode { state: c.state, preorders, tag }
    }

    pub fn initial(&self) -> ClassNode {
        self.class_of(&Configuration::initial(self.model))
    }

    pub fn firable(&self, n: &ClassNode, t: TransitionId) -> bool {
        let tr = self.model.transition(t);
        tr.source == n.state
            && n.tag != Tag::Minus
            && self.compiled[t.0].guard.iter().all(|(p, c)| c.holds(p.eval(&n.preorders)))
    }

    pub fn discrete_successor(&self, n: &ClassNode, t: TransitionId) -> ClassNode {
        let tr = self.model.transition(t);
        let mut preorders = Vec::new();
        for (k0, lm) in self.compiled[t.0].levels.iter().enumerate() {
            let p = match lm {
                LevelMap::Lookup(map) => {
                    let keys: Vec<u32> = map.iter().map(|i| n.preorders[k0].rank[*i]).collect();
                    Preorder::from_keys(&keys)
                }
                LevelMap::Pairwise(rows) => {
                    let cmp = |i: usize, j: usize| match i.cmp(&j) {
                        Ordering::Equal => Ordering::Equal,
                        Ordering::Less => rows[j][i].eval(&n.preorders),
                        Ordering::Greater => rows[i][j].eval(&n.preorders).reverse(),
                    };
                    let mut order: Vec<usize> = (0..rows.len()).collect();
                    order.sort_by(|a, b| cmp(*a, *b));
                    Preorder::from_sorted(&order, cmp)
                }
            };
            preorders.push(p);
        }
        let tag = self.tag_for(tr.target, &preorders, false);
        ClassNode { state: tr.target, preorders, tag }
    }

    /// `None` for urgent states and when the class is its own time successor.
    pub fn time_successor(&self, n: &ClassNode) -> Option<ClassNode> {
        let st = self.model.state(n.state);
        if st.policy == Policy::Urgent {
            return None;
        }
        let l = st.level;
        let mut preorders = n.preorders.clone();
        match preorders[l - 1].time_successor() {
            Some(p) => preorders[l - 1] = p,
            None => {
                // Only the tag may still change: a delayed state entered at a
                // closed class moves to the same class with time elapsed.
                return (n.tag == Tag::Minus).then(|| ClassNode { tag: Tag::Plus, ..n.clone() });
            }
        }
        let tag = self.tag_for(n.state, &preorders, true);
        Some(ClassNode { state: n.state, preorders, tag })
    }

    /// Is the class a fixpoint of time elapsing (time may diverge inside it)?
    pub fn time_divergent(&self, n: &ClassNode) -> bool {
        let st = self.model.state(n.state);
        st.policy != Policy::Urgent && n.preorders[st.level - 1].time_successor().is_none()
    }

    pub fn comparison(&self, n: &ClassNode, index: usize) -> Ordering {
        let l = self.model.level(n.state);
        self.comparison_probes[index][l - 1].eval(&n.preorders)
    }

    pub fn comparisons(&self) -> &[LinExpr] {
        &self.comparisons
    }

    fn successors(&self, n: &ClassNode) -> Vec<(EdgeKind, ClassNode)> {
        let mut out = Vec::new();
        if let Some(s) = self.time_successor(n) {
            if s != *n {
                out.push((EdgeKind::Time, s));
            }
        }
        for t in self.model.outgoing(n.state) {
            if self.firable(n, *t) {
                out.push((EdgeKind::Discrete(*t), self.discrete_successor(n, *t)));
            }
        }
        out
    }

    /// Linear constraints `(e, ⋈)` meaning `e ⋈ 0` whose conjunction is the
    /// set of valuations of the class.
    pub fn constraints(&self, n: &ClassNode) -> Vec<(LinExpr, Comparator)> {
        let l = self.model.level(n.state);
        let mut out = Vec::new();
        for k in 1..=l {
            let set = self.sets.level(k);
            let blocks = n.preorders[k - 1].blocks();
            for (b, block) in blocks.iter().enumerate() {
                for w in block.windows(2) {
                    out.push((set.get(w[0]).sub(set.get(w[1])), Comparator::Eq));
                }
                if b + 1 < blocks.len() {
                    out.push((set.get(block[0]).sub(set.get(blocks[b + 1][0])), Comparator::Lt));
                }
            }
        }
        for i in (l + 1)..=self.model.clocks {
            out.push((LinExpr::var(i), Comparator::Eq));
        }
        out
    }

    pub fn describe(&self, n: &ClassNode) -> String {
        let mut s = self.model.state(n.state).name.clone();
        match n.tag {
            Tag::Open => {}
            Tag::Plus => s.push_str(" [+]"),
            Tag::Minus => s.push_str(" [-]"),
        }
        for (k0, p) in n.preorders.iter().enumerate() {
            let set = self.sets.level(k0 + 1);
            let blocks: Vec<String> = p
                .blocks()
                .iter()
                .map(|b| b.iter().map(|i| set.get(*i).to_string()).collect::<Vec<_>>().join(" = "))
                .collect();
            let _ = write!(s, "\n{}", blocks.join(" < "));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct ClassGraph<'a> {
    pub abs: Abstraction<'a>,
    pub nodes: Vec<ClassNode>,
    pub edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    index: HashMap<ClassNode, usize>,
}

impl<'a> ClassGraph<'a> {
    pub fn explore(model: &'a Ita, comparisons: &[LinExpr], caps: &Caps) -> Result<Self, ClassError> {
        let abs = Abstraction::new(model, comparisons, caps)?;
        let mut g = ClassGraph { abs, nodes: Vec::new(), edges: Vec::new(), out: Vec::new(), index: HashMap::new() };
        let init = g.abs.initial();
        g.add_node(init);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(caps.jobs.max(1)).build().ok();
        let mut frontier: Vec<usize> = vec![0];
        while !frontier.is_empty() {
            let nodes = &g.nodes;
            let abs = &g.abs;
            let expand = |i: &usize| abs.successors(&nodes[*i]);
            let succs: Vec<Vec<(EdgeKind, ClassNode)>> = match (&pool, caps.jobs > 1) {
                (Some(p), true) => p.install(|| frontier.par_iter().map(expand).collect()),
                _ => frontier.iter().map(expand).collect(),
            };
            let mut next = Vec::new();
            for (from, ss) in frontier.iter().zip(succs) {
                for (kind, s) in ss {
                    let to = match g.index.get(&s) {
                        Some(i) => *i,
                        None => {
                            if g.nodes.len() >= caps.max_classes {
                                return Err(ClassError::CapExceeded(caps.max_classes));
                            }
                            let i = g.add_node(s);
                            next.push(i);
                            i
                        }
                    };
                    g.out[*from].push(g.edges.len());
                    g.edges.push(Edge { from: *from, to, kind });
                }
            }
            frontier = next;
        }
        Ok(g)
    }

    fn add_node(&mut self, n: ClassNode) -> usize {
        let i = self.nodes.len();
        self.index.insert(n.clone(), i);
        self.nodes.push(n);
        self.out.push(Vec::new());
        i
    }

    pub fn model(&self) -> &'a Ita {
        self.abs.model
    }

    pub fn node_of(&self, n: &ClassNode) -> Option<usize> {
        self.index.get(n).copied()
    }

    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = &Edge> {
        self.out[i].iter().map(|e| &self.edges[*e])
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[i].iter().map(|e| self.edges[*e].to)
    }

    /// Shortest edge path from the initial class to a class satisfying `target`.
    pub fn reachable(&self, target: impl Fn(&ClassNode) -> bool) -> Option<Vec<Edge>> {
        let mut parent: Vec<Option<usize>> = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            if target(&self.nodes[i]) {
                let mut path = Vec::new();
                let mut cur = i;
                while let Some(e) = parent[cur] {
                    path.push(self.edges[e]);
                    cur = self.edges[e].from;
                }
                path.reverse();
                return Some(path);
            }
            for e in &self.out[i] {
                let to = self.edges[*e].to;
                if !seen[to] {
                    seen[to] = true;
                    parent[to] = Some(*e);
                    queue.push_back(to);
                }
            }
        }
        None
    }

    pub fn reachable_states(&self) -> BTreeSet<StateId> {
        self.nodes.iter().map(|n| n.state).collect()
    }

    pub fn untimed_automaton(&self) -> Nfa {
        let m = self.model();
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let letter = match e.kind {
                    EdgeKind::Time => None,
                    EdgeKind::Discrete(t) => m.transition(t).letter.clone(),
                };
                (e.from, letter, e.to)
            })
            .collect();
        let finals = (0..self.nodes.len()).filter(|i| m.state(self.nodes[*i].state).accepting).collect();
        Nfa { states: self.nodes.len(), initial: 0, finals, edges }
    }

    pub fn to_dot(&self) -> String {
        let m = self.model();
        let mut s = format!("digraph \"{}\" {{\n  rankdir=LR;\n", m.name);
        for (i, n) in self.nodes.iter().enumerate() {
            let shape = if m.state(n.state).accepting { "doublecircle" } else { "box" };
            let label = self.abs.describe(n).replace('"', "\\\"").replace('\n', "\\n");
            let _ = writeln!(s, "  n{i} [shape={shape}, label=\"{label}\"];");
        }
        for e in &self.edges {
            match e.kind {
                EdgeKind::Time => {
                    let _ = writeln!(s, "  n{} -> n{} [style=dashed, label=\"succ\"];", e.from, e.to);
                }
                EdgeKind::Discrete(t) => {
                    let l = m.transition(t).letter.clone().unwrap_or_else(|| "ε".into());
                    let _ = writeln!(s, "  n{} -> n{} [label=\"{} (t{})\"];", e.from, e.to, l, t.0);
                }
            }
        }
        s.push_str("}\n");
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let m = self.model();
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let pre: Vec<Vec<Vec<String>>> = n
                    .preorders
                    .iter()
                    .enumerate()
                    .map(|(k0, p)| {
                        let set = self.abs.sets.level(k0 + 1);
                        p.blocks().iter().map(|b| b.iter().map(|j| set.get(*j).to_string()).collect()).collect()
                    })
                    .collect();
                serde_json::json!({
                    "id": i,
                    "state": m.state(n.state).name,
                    "tag": n.tag,
                    "preorders": pre,
                })
            })
            .collect();
        let edges: Vec<serde_json::Value> = self
            .edges
            .iter()
            .map(|e| serde_json::json!({ "from": e.from, "to": e.to, "edge": e.kind }))
            .collect();
        serde_json::json!({
            "schema": 1,
            "model": m.name,
            "expressions": self.abs.sets.to_json()["levels"],
            "nodes": nodes,
            "edges": edges,
        })
    }
}

/// Finite automaton over letters, `None` being the empty word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nfa {
    pub states: usize,
    pub initial: usize,
    pub finals: BTreeSet<usize>,
    pub edges: Vec<(usize, Option<String>, usize)>,
}

impl Nfa {
    fn eps_closure(&self, from: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = from.clone();
        let mut stack: Vec<usize> = from.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for (a, l, b) in &self.edges {
                if *a == s && l.is_none() && seen.insert(*b) {
                    stack.push(*b);
                }
            }
        }
        seen
    }

    pub fn accepts(&self, word: &[&str]) -> bool {
        let mut cur = self.eps_closure(&BTreeSet::from([self.initial]));
        for w in word {
            let next: BTreeSet<usize> = self
                .edges
                .iter()
                .filter(|(a, l, _)| cur.contains(a) && l.as_deref() == Some(*w))
                .map(|(_, _, b)| *b)
                .collect();
            cur = self.eps_closure(&next);
        }
        cur.iter().any(|s| self.finals.contains(s))
    }

    /// Equivalent automaton without silent edges, trimmed to reachable states.
    pub fn eliminate_epsilon(&self) -> Nfa {
        let closures: Vec<BTreeSet<usize>> =
            (0..self.states).map(|s| self.eps_closure(&BTreeSet::from([s]))).collect();
        let mut edges = BTreeSet::new();
        for (s, cl) in closures.iter().enumerate() {
            for (a, l, b) in &self.edges {
                if let Some(l) = l {
                    if cl.contains(a) {
                        edges.insert((s, l.clone(), *b));
                    }
                }
            }
        }
        let finals_all: BTreeSet<usize> =
            (0..self.states).filter(|s| closures[*s].iter().any(|c| self.finals.contains(c))).collect();
        let mut renum: BTreeMap<usize, usize> = BTreeMap::new();
        renum.insert(self.initial, 0);
        let mut stack = vec![self.initial];
        while let Some(s) = stack.pop() {
            for (a, _, b) in &edges {
                if *a == s && !renum.contains_key(b) {
                    renum.insert(*b, renum.len());
                    stack.push(*b);
                }
            }
        }
        Nfa {
            states: renum.len(),
            initial: 0,
            finals: finals_all.iter().filter_map(|s| renum.get(s).copied()).collect(),
            edges: edges
                .into_iter()
                .filter(|(a, _, _)| renum.contains_key(a))
                .map(|(a, l, b)| (renum[&a], Some(l), renum[&b]))
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("states {}\ninitial {}\nfinal", self.states, self.initial);
        for f in &self.finals {
            let _ = write!(s, " {f}");
        }
        s.push('\n');
        for (a, l, b) in &self.edges {
            let _ = writeln!(s, "{a} -{}-> {b}", l.as_deref().unwrap_or("ε"));
        }
        s
    }
}
