use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::{Comparator, LinExpr, Orientation, Rational, Update, Valuation};
use crate::syntax::{quote_name, Parser, SyntaxError, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TransitionId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Lazy,
    Urgent,
    Delayed,
}

impl Policy {
    fn keyword(self) -> &'static str {
        match self {
            Policy::Lazy => "lazy",
            Policy::Urgent => "urgent",
            Policy::Delayed => "delayed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub name: String,
    pub level: usize,
    pub policy: Policy,
    pub labels: BTreeSet<String>,
    pub initial: bool,
    pub accepting: bool,
}

impl State {
    pub fn new(name: impl Into<String>, level: usize) -> Self {
        State {
            name: name.into(),
            level,
            policy: Policy::Lazy,
            labels: BTreeSet::new(),
            initial: false,
            accepting: false,
        }
    }

    pub fn has(&self, prop: &str) -> bool {
        self.labels.contains(prop)
    }
}

/// Guard atom `expr ⋈ 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub expr: LinExpr,
    pub cmp: Comparator,
}

impl Atom {
    pub fn new(expr: LinExpr, cmp: Comparator) -> Self {
        Atom { expr, cmp }
    }

    pub fn holds(&self, v: &Valuation) -> bool {
        self.cmp.holds(self.expr.evaluate(v).cmp(&Rational::zero()))
    }

    pub fn normalize(&self, level: usize) -> Result<Atom, crate::numerics::NumericsError> {
        let (e, o) = self.expr.normalize(level)?;
        let cmp = if o == Orientation::Flipped { self.cmp.flip() } else { self.cmp };
        Ok(Atom { expr: e, cmp })
    }

    pub fn substitute(&self, u: &Update) -> Atom {
        Atom { expr: self.expr.substitute(u), cmp: self.cmp }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.expr.is_constant() {
            return write!(f, "{} {} 0", self.expr, self.cmp);
        }
        let c = self.expr.constant_term();
        let lhs = self.expr.without(0);
        write!(f, "{} {} {}", lhs, self.cmp, LinExpr::constant(-c))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub source: StateId,
    pub target: StateId,
    /// `None` is the silent action.
    pub letter: Option<String>,
    pub guard: Vec<Atom>,
    pub update: Update,
}

impl Transition {
    pub fn new(source: StateId, target: StateId) -> Self {
        Transition { source, target, letter: None, guard: Vec::new(), update: Update::identity() }
    }

    pub fn guard_holds(&self, v: &Valuation) -> bool {
        self.guard.iter().all(|a| a.holds(v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ita {
    pub name: String,
    pub clocks: usize,
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    outgoing: Vec<Vec<TransitionId>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub state: Option<StateId>,
    pub transition: Option<TransitionId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.transition, self.state) {
            (Some(t), _) => write!(f, "transition {}: {}", t.0, self.message),
            (None, Some(s)) => write!(f, "state {}: {}", s.0, self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("invalid model:\n{}", .0.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl Ita {
    /// Clocks above the source level are zero whenever a transition fires, so
    /// they are made explicit resets here; every later stage can then read
    /// `C[u]` without special cases.
    pub fn new(name: impl Into<String>, clocks: usize, states: Vec<State>, mut transitions: Vec<Transition>) -> Self {
        for t in &mut transitions {
            if let Some(src) = states.get(t.source.0) {
                for i in (src.level + 1)..=clocks {
                    if t.update.is_identity_on(i) {
                        t.update.set(i, LinExpr::zero());
                    }
                }
            }
        }
        let mut outgoing = vec![Vec::new(); states.len()];
        for (i, t) in transitions.iter().enumerate() {
            outgoing[t.source.0].push(TransitionId(i));
        }
        Ita { name: name.into(), clocks, states, transitions, outgoing }
    }

    pub fn state(&self, q: StateId) -> &State {
        &self.states[q.0]
    }

    pub fn transition(&self, t: TransitionId) -> &Transition {
        &self.transitions[t.0]
    }

    pub fn level(&self, q: StateId) -> usize {
        self.states[q.0].level
    }

    pub fn outgoing(&self, q: StateId) -> &[TransitionId] {
        &self.outgoing[q.0]
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn transition_ids(&self) -> impl Iterator<Item = TransitionId> {
        (0..self.transitions.len()).map(TransitionId)
    }

    /// The (first) initial state.  `validate` reports models without exactly one.
    pub fn initial(&self) -> StateId {
        StateId(self.states.iter().position(|s| s.initial).unwrap_or(0))
    }

    pub fn find_state(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s.name == name).map(StateId)
    }

    pub fn alphabet(&self) -> BTreeSet<String> {
        self.transitions.iter().filter_map(|t| t.letter.clone()).collect()
    }

    pub fn propositions(&self) -> BTreeSet<String> {
        self.states.iter().flat_map(|s| s.labels.iter().cloned()).collect()
    }

    pub fn max_level(&self) -> usize {
        self.states.iter().map(|s| s.level).max().unwrap_or(0)
    }

    fn violation_t(&self, t: usize, message: String) -> Violation {
        Violation { state: None, transition: Some(TransitionId(t)), message }
    }

    /// Structural ITA conditions; an empty list means the model is well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let initial = self.states.iter().filter(|s| s.initial).count();
        if initial != 1 {
            out.push(Violation {
                state: None,
                transition: None,
                message: format!("expected exactly one initial state, found {initial}"),
            });
        }
        for (i, s) in self.states.iter().enumerate() {
            if s.level == 0 || s.level > self.clocks {
                out.push(Violation {
                    state: Some(StateId(i)),
                    transition: None,
                    message: format!("level {} outside 1..={}", s.level, self.clocks),
                });
            }
        }
        if !out.iter().all(|v| v.transition.is_none() && v.state.is_none()) {
            return out;
        }
        for (ti, t) in self.transitions.iter().enumerate() {
            let k = self.level(t.source);
            let k2 = self.level(t.target);
            for a in &t.guard {
                if a.expr.max_var() > k {
                    out.push(self.violation_t(ti, format!("guard `{a}` uses clock above level {k}")));
                }
            }
            for (i, e) in t.update.iter() {
                if i > self.clocks {
                    out.push(self.violation_t(ti, format!("update of undeclared clock {i}")));
                    continue;
                }
                let keep = k.min(k2);
                if i <= keep || (k <= k2 && i == k) {
                    if e.max_var() >= i {
                        out.push(self.violation_t(ti, format!("update of clock {i} uses clock ≥ {i}")));
                    }
                } else if k > k2 && i <= k {
                    if !e.is_zero() {
                        out.push(self.violation_t(ti, format!("clock {i} above target level must be reset to 0")));
                    }
                } else if !e.is_zero() {
                    out.push(self.violation_t(ti, format!("clock {i} above level must be reset to 0")));
                }
            }
            if k > k2 {
                for i in (k2 + 1)..=k {
                    if t.update.is_identity_on(i) {
                        out.push(self.violation_t(ti, format!("clock {i} above target level must be reset to 0")));
                    }
                }
            }
        }
        out
    }

    /// Additional conditions of the restricted subclass: a transition may only
    /// update the clock of its source level, and only when the level does not
    /// decrease.
    pub fn ita_minus_violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (ti, t) in self.transitions.iter().enumerate() {
            let k = self.level(t.source);
            let k2 = self.level(t.target);
            for (i, e) in t.update.iter() {
                let ok = if k <= k2 { i == k || (i > k && e.is_zero()) } else { i > k2 && e.is_zero() };
                if !ok {
                    out.push(self.violation_t(ti, format!("update of clock {i} not allowed from level {k} to {k2}")));
                }
            }
        }
        out
    }

    pub fn is_ita_minus(&self) -> bool {
        self.validate().is_empty() && self.ita_minus_violations().is_empty()
    }

    /// Every guard atom rewritten at its source level.
    pub fn normalize_guards(&self) -> Ita {
        let mut m = self.clone();
        for t in &mut m.transitions {
            let k = self.states[t.source.0].level;
            t.guard = t.guard.iter().map(|a| a.normalize(k).unwrap_or_else(|_| a.clone())).collect();
        }
        m
    }

    pub fn render(&self) -> String {
        let mut s = format!("ita {} {{\n  clocks {};\n", quote_name(&self.name), self.clocks);
        for st in &self.states {
            s.push_str(&format!("  state {} level {} policy {}", quote_name(&st.name), st.level, st.policy.keyword()));
            if st.initial {
                s.push_str(" initial");
            }
            if st.accepting {
                s.push_str(" final");
            }
            if !st.labels.is_empty() {
                let ls: Vec<String> = st.labels.iter().map(|l| quote_name(l)).collect();
                s.push_str(&format!(" labels {{{}}}", ls.join(", ")));
            }
            s.push_str(";\n");
        }
        for t in &self.transitions {
            s.push_str(&format!(
                "  trans {} -> {}",
                quote_name(&self.states[t.source.0].name),
                quote_name(&self.states[t.target.0].name)
            ));
            match &t.letter {
                Some(a) => s.push_str(&format!(" on {}", quote_name(a))),
                None => s.push_str(" on eps"),
            }
            if !t.guard.is_empty() {
                let g: Vec<String> = t.guard.iter().map(|a| a.to_string()).collect();
                s.push_str(&format!(" when {}", g.join(" && ")));
            }
            if !t.update.is_identity() {
                s.push_str(&format!(" do {}", t.update));
            }
            s.push_str(";\n");
        }
        s.push_str("}\n");
        s
    }
}

/// Reads the textual model format without checking the structural conditions.
pub fn parse_ita(src: &str) -> Result<Ita, ModelError> {
    let mut p = Parser::new(src)?;
    p.expect_keyword("ita")?;
    let name = p.name()?;
    p.expect_sym("{")?;
    p.expect_keyword("clocks")?;
    let clocks = p.natural()?;
    p.expect_sym(";")?;
    p.max_clock = Some(clocks);
    let mut states: Vec<State> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pending: Vec<(Transition, String, String, SyntaxError)> = Vec::new();
    while !p.eat_sym("}") {
        if p.eat_keyword("state") {
            let err = p.error("");
            let sname = p.name()?;
            if index.contains_key(&sname) {
                return Err(SyntaxError { message: format!("duplicate state `{sname}`"), ..err }.into());
            }
            let mut st = State::new(sname.clone(), 0);
            let mut has_level = false;
            while !p.eat_sym(";") {
                if p.eat_keyword("level") {
                    st.level = p.natural()?;
                    has_level = true;
                } else if p.eat_keyword("policy") {
                    st.policy = match p.name()?.as_str() {
                        "lazy" => Policy::Lazy,
                        "urgent" => Policy::Urgent,
                        "delayed" => Policy::Delayed,
                        other => return Err(p.error(format!("unknown policy `{other}`")).into()),
                    };
                } else if p.eat_keyword("initial") {
                    st.initial = true;
                } else if p.eat_keyword("final") {
                    st.accepting = true;
                } else if p.eat_keyword("labels") {
                    p.expect_sym("{")?;
                    if !p.eat_sym("}") {
                        loop {
                            st.labels.insert(p.name()?);
                            if p.eat_sym("}") {
                                break;
                            }
                            p.expect_sym(",")?;
                        }
                    }
                } else {
                    return Err(p.error(format!("unexpected {} in state declaration", p.peek())).into());
                }
            }
            if !has_level {
                return Err(SyntaxError { message: format!("state `{sname}` has no level"), ..err }.into());
            }
            index.insert(sname, states.len());
            states.push(st);
        } else if p.eat_keyword("trans") {
            let err = p.error("");
            let src = p.name()?;
            p.expect_sym("->")?;
            let dst = p.name()?;
            let mut t = Transition::new(StateId(0), StateId(0));
            if p.eat_keyword("on") {
                let a = p.name()?;
                t.letter = if a == "eps" { None } else { Some(a) };
            }
            if p.eat_keyword("when") && !p.eat_keyword("true") {
                loop {
                    let (e, c) = p.comparison()?;
                    t.guard.push(Atom::new(e, c));
                    if !p.eat_sym("&&") {
                        break;
                    }
                }
            }
            if p.eat_keyword("do") {
                loop {
                    let c = p.clock()?;
                    p.expect_sym(":=")?;
                    let e = p.linexpr()?;
                    if t.update.assigned(c).is_some() {
                        return Err(p.error(format!("clock x{c} assigned twice")).into());
                    }
                    t.update.set(c, e);
                    if !p.eat_sym(",") {
                        break;
                    }
                }
            }
            p.expect_sym(";")?;
            pending.push((t, src, dst, err));
        } else {
            return Err(p.error(format!("expected `state`, `trans` or `}}`, found {}", p.peek())).into());
        }
    }
    if !matches!(p.peek(), Tok::Eof) {
        return Err(p.error(format!("trailing input {}", p.peek())).into());
    }
    let mut transitions = Vec::new();
    for (mut t, src, dst, err) in pending {
        let look = |n: &str| {
            index
                .get(n)
                .copied()
                .ok_or_else(|| SyntaxError { message: format!("unknown state `{n}`"), ..err.clone() })
        };
        t.source = StateId(look(&src)?);
        t.target = StateId(look(&dst)?);
        transitions.push(t);
    }
    Ok(Ita::new(name, clocks, states, transitions))
}

/// Parses and checks the structural conditions.
pub fn load_ita(src: &str) -> Result<Ita, ModelError> {
    let m = parse_ita(src)?;
    let v = m.validate();
    if v.is_empty() {
        Ok(m)
    } else {
        Err(ModelError::Invalid(v))
    }
}
