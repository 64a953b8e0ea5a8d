//! Translation of an ITA into the restricted subclass where only the active
//! clock is ever updated.  Pending updates of lower clocks are memorized in
//! the state and applied when the level drops back.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use crate::model::{Atom, Ita, Policy, State, StateId, Transition, TransitionId, Violation};
use crate::numerics::{LinExpr, Update};
use crate::semantics::RunStep;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ItaMinusError {
    #[error("input is not a valid ITA ({} violations)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("expanded automaton exceeds the cap of {0} states")]
    CapExceeded(usize),
}

/// `F_{i,j}`: expressions that `x_j` may be updated to while the automaton
/// runs at levels up to `i`.
#[derive(Debug, Clone, Default)]
pub struct FSets {
    sets: BTreeMap<(usize, usize), Vec<LinExpr>>,
}

impl FSets {
    pub fn get(&self, i: usize, j: usize) -> &[LinExpr] {
        self.sets.get(&(i, j)).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Total number of memorizable expressions, the `E'` of the size bounds.
    pub fn total(&self) -> usize {
        self.sets.values().map(|v| v.len()).sum()
    }
}

fn push_unique(v: &mut Vec<LinExpr>, e: LinExpr) {
    if !v.contains(&e) {
        v.push(e);
    }
}

/// All substitutions of `x_k` (k < j) by members of `F_{i,k}`.
fn instances(e: &LinExpr, j: usize, i: usize, f: &FSets) -> Vec<LinExpr> {
    let mut out = vec![e.clone()];
    for k in 1..j {
        if !e.mentions(k) {
            continue;
        }
        let mut next = Vec::new();
        for partial in &out {
            for ek in f.get(i, k) {
                let u = Update::identity().with(k, ek.clone());
                push_unique(&mut next, partial.substitute(&u));
            }
        }
        out = next;
    }
    out
}

pub fn build_f_sets(m: &Ita) -> FSets {
    let n = m.clocks;
    let mut f = FSets::default();
    for i in 1..=n {
        f.sets.insert((i, i), vec![LinExpr::var(i)]);
        for j in 1..i {
            let mut set = f.get(i - 1, j).to_vec();
            for t in &m.transitions {
                let (k, k2) = (m.level(t.source), m.level(t.target));
                if k != i || j > k.min(k2) {
                    continue;
                }
                if let Some(e) = t.update.assigned(j) {
                    for inst in instances(e, j, i, &f) {
                        push_unique(&mut set, inst);
                    }
                }
            }
            f.sets.insert((i, j), set);
        }
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExpandedState {
    pub base: StateId,
    pub polarity: Polarity,
    /// Memorized values `e_1, e_2, ...` over the actual clocks.
    pub memo: Vec<LinExpr>,
}

impl ExpandedState {
    pub fn name(&self, m: &Ita) -> String {
        let sign = if self.polarity == Polarity::Plus { '+' } else { '-' };
        let es: Vec<String> = self.memo.iter().map(|e| e.to_string()).collect();
        format!("{}{}{{{}}}", m.state(self.base).name, sign, es.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedTransition {
    pub source: usize,
    pub target: usize,
    /// `None` for the silent catch-up transition leaving a minus state.
    pub origin: Option<TransitionId>,
    pub guard: Vec<Atom>,
    pub update: Update,
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub states: Vec<ExpandedState>,
    pub transitions: Vec<ExpandedTransition>,
}

fn memo_subst(memo: &[LinExpr]) -> Update {
    let mut u = Update::identity();
    for (j0, e) in memo.iter().enumerate() {
        u.set(j0 + 1, e.clone());
    }
    u
}

fn expand(m: &Ita, cap: usize) -> Result<Expansion, ItaMinusError> {
    let v = m.validate();
    if !v.is_empty() {
        return Err(ItaMinusError::Invalid(v));
    }
    let q0 = m.initial();
    let init = ExpandedState {
        base: q0,
        polarity: Polarity::Plus,
        memo: (1..m.level(q0)).map(LinExpr::var).collect(),
    };
    let mut states = vec![init.clone()];
    let mut index = HashMap::from([(init, 0usize)]);
    let mut transitions = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut intern = |s: ExpandedState,
                      states: &mut Vec<ExpandedState>,
                      queue: &mut VecDeque<usize>|
     -> Result<usize, ItaMinusError> {
        if let Some(i) = index.get(&s) {
            return Ok(*i);
        }
        if states.len() >= cap {
            return Err(ItaMinusError::CapExceeded(cap));
        }
        let i = states.len();
        index.insert(s.clone(), i);
        states.push(s);
        queue.push_back(i);
        Ok(i)
    };
    while let Some(si) = queue.pop_front() {
        let s = states[si].clone();
        if s.polarity == Polarity::Minus {
            let i = m.level(s.base);
            let update = Update::identity().with(i, s.memo[i - 1].clone());
            let target = ExpandedState { base: s.base, polarity: Polarity::Plus, memo: s.memo[..i - 1].to_vec() };
            let ti = intern(target, &mut states, &mut queue)?;
            transitions.push(ExpandedTransition { source: si, target: ti, origin: None, guard: vec![], update });
            continue;
        }
        let sigma = memo_subst(&s.memo);
        for t in m.outgoing(s.base) {
            let tr = m.transition(*t);
            let (i, i2) = (m.level(tr.source), m.level(tr.target));
            let guard: Vec<Atom> = tr.guard.iter().map(|a| a.substitute(&sigma)).collect();
            let image = |j: usize| tr.update.image(j).substitute(&sigma);
            let (target, update) = if i <= i2 {
                let mut memo: Vec<LinExpr> = (1..i).map(image).collect();
                memo.extend((i..i2).map(LinExpr::var));
                let mut u = Update::identity();
                for (j, e) in tr.update.iter() {
                    if j > i {
                        u.set(j, e.clone());
                    }
                }
                u.set(i, image(i));
                (ExpandedState { base: tr.target, polarity: Polarity::Plus, memo }, u)
            } else {
                let memo: Vec<LinExpr> = (1..=i2).map(image).collect();
                let mut u = Update::identity();
                for (j, e) in tr.update.iter() {
                    if j > i2 {
                        u.set(j, e.clone());
                    }
                }
                // A catch-up that would not change the clock is skipped, so
                // inputs already in the subclass come out unchanged.
                if memo[i2 - 1] == LinExpr::var(i2) {
                    let memo = memo[..i2 - 1].to_vec();
                    (ExpandedState { base: tr.target, polarity: Polarity::Plus, memo }, u)
                } else {
                    (ExpandedState { base: tr.target, polarity: Polarity::Minus, memo }, u)
                }
            };
            let ti = intern(target, &mut states, &mut queue)?;
            transitions.push(ExpandedTransition { source: si, target: ti, origin: Some(*t), guard, update });
        }
    }
    Ok(Expansion { states, transitions })
}

/// Number of reachable expanded states and transitions, without building
/// the output model.
pub fn count_expanded(m: &Ita, cap: usize) -> Result<(usize, usize), ItaMinusError> {
    let e = expand(m, cap)?;
    Ok((e.states.len(), e.transitions.len()))
}

#[derive(Debug, Clone)]
pub struct ItaMinus {
    pub model: Ita,
    pub expansion: Expansion,
}

pub fn to_ita_minus(m: &Ita, cap: usize) -> Result<ItaMinus, ItaMinusError> {
    let expansion = expand(m, cap)?;
    let states: Vec<State> = expansion
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let orig = m.state(s.base);
            State {
                name: s.name(m),
                level: orig.level,
                policy: if s.polarity == Polarity::Minus { Policy::Urgent } else { orig.policy },
                labels: orig.labels.clone(),
                initial: i == 0,
                accepting: orig.accepting && s.polarity == Polarity::Plus,
            }
        })
        .collect();
    let transitions: Vec<Transition> = expansion
        .transitions
        .iter()
        .map(|t| Transition {
            source: StateId(t.source),
            target: StateId(t.target),
            letter: t.origin.and_then(|o| m.transition(o).letter.clone()),
            guard: t.guard.clone(),
            update: t.update.clone(),
        })
        .collect();
    let model = Ita::new(format!("{}_minus", m.name), m.clocks, states, transitions);
    Ok(ItaMinus { model, expansion })
}

impl ItaMinus {
    /// Run of the source automaton corresponding to a run of the translation.
    pub fn project_run(&self, run: &[RunStep]) -> Vec<RunStep> {
        run.iter()
            .filter_map(|s| match s {
                RunStep::Time(d) => Some(RunStep::Time(d.clone())),
                RunStep::Fire(t) => self.expansion.transitions[t.0].origin.map(RunStep::Fire),
            })
            .collect()
    }

    /// Run of the translation following a run of the source automaton; the
    /// translation is deterministic in the source transition, so the lift is
    /// unique.  `None` if the run leaves the explored part.
    pub fn lift_run(&self, run: &[RunStep]) -> Option<Vec<RunStep>> {
        let mut cur = 0usize;
        let mut out = Vec::new();
        for s in run {
            match s {
                RunStep::Time(d) => out.push(RunStep::Time(d.clone())),
                RunStep::Fire(t) => {
                    let (ti, tr) = self
                        .expansion
                        .transitions
                        .iter()
                        .enumerate()
                        .find(|(_, e)| e.source == cur && e.origin == Some(*t))?;
                    out.push(RunStep::Fire(TransitionId(ti)));
                    cur = tr.target;
                    if self.expansion.states[cur].polarity == Polarity::Minus {
                        let (ci, c) =
                            self.expansion.transitions.iter().enumerate().find(|(_, e)| e.source == cur)?;
                        out.push(RunStep::Fire(TransitionId(ci)));
                        cur = c.target;
                    }
                }
            }
        }
        Some(out)
    }
}

/// `n` clocks, `n` levels; the self-loops on the level-`n` state write
/// `x_k := x_{k-1}` and `x_k := p_k * x_{k-1}` for the `k`-th prime `p_k`,
/// so the memorized values range over products of distinct primes.
pub fn prime_family(n: usize) -> Ita {
    let primes = [2i64, 3, 5, 7, 11, 13, 17, 19, 23, 29];
    let mut states = vec![State::new("init", n), State::new("loop", n)];
    states[0].initial = true;
    states[1].accepting = true;
    let mut ts = Vec::new();
    let mut reset = Transition::new(StateId(0), StateId(1));
    for k in 1..=n {
        reset.update.set(k, LinExpr::constant(crate::numerics::int(1)));
    }
    ts.push(reset);
    for k in 1..n {
        let prev = if k == 1 { LinExpr::constant(crate::numerics::int(1)) } else { LinExpr::var(k - 1) };
        for factor in [1, primes[k - 1]] {
            let mut t = Transition::new(StateId(1), StateId(1));
            t.letter = Some(format!("u{k}"));
            t.update.set(k, prev.scale(&crate::numerics::int(factor)));
            ts.push(t);
        }
    }
    let mut back = Transition::new(StateId(1), StateId(0));
    back.letter = Some("back".into());
    ts.push(back);
    Ita::new(format!("prime{n}"), n, states, ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numerics::int;
    use crate::semantics::{random_runs, replay};
    use crate::syntax::parse_linexpr;
    use crate::Comparator;
    use std::collections::BTreeSet;

    fn set(xs: &[LinExpr]) -> BTreeSet<String> {
        xs.iter().map(|e| e.to_string()).collect()
    }

    fn names(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| parse_linexpr(s).unwrap().to_string()).collect()
    }

    #[test]
    fn a2_f_sets() {
        let f = build_f_sets(&fixtures::a2());
        assert_eq!(set(f.get(1, 1)), names(&["x1"]));
        assert_eq!(set(f.get(2, 1)), names(&["x1", "2"]));
        assert_eq!(set(f.get(2, 2)), names(&["x2"]));
        assert_eq!(set(f.get(3, 1)), names(&["x1", "2", "1"]));
        assert_eq!(set(f.get(3, 2)), names(&["x2", "2*x1 + 1", "5", "3", "x1 + 1", "2"]));
        assert_eq!(set(f.get(3, 3)), names(&["x3"]));
    }

    #[test]
    fn a2_translation() {
        let m = fixtures::a2();
        let t = to_ita_minus(&m, 1000).unwrap();
        let a = &t.model;
        assert!(a.validate().is_empty(), "{:?}", a.validate());
        assert!(a.is_ita_minus(), "{:?}", a.ita_minus_violations());
        assert_eq!(count_expanded(&m, 1000).unwrap(), (12, 12));
        let five = LinExpr::constant(int(5));
        let minus = a
            .transitions
            .iter()
            .find(|tr| tr.update.assigned(2) == Some(&five) && tr.letter.is_none())
            .expect("catch-up x2 := 5");
        assert_eq!(a.state(minus.source).policy, Policy::Urgent);
        assert_eq!(a.state(minus.source).name, "q5-{1;5}");
        let rewritten = parse_linexpr("2*x2 + 2 - 3").unwrap();
        assert!(a.transitions.iter().any(|tr| tr.letter.as_deref() == Some("c")
            && tr.guard.contains(&Atom::new(rewritten.clone(), Comparator::Gt))));
        let other = parse_linexpr("2*x1 + 1").unwrap();
        assert!(a.transitions.iter().any(|tr| tr.letter.is_none() && tr.update.assigned(2) == Some(&other)));
    }

    #[test]
    fn subclass_input_is_unchanged() {
        for m in [fixtures::a1(), fixtures::a3(), fixtures::a4()] {
            let t = to_ita_minus(&m, 100).unwrap();
            assert_eq!(t.model.states.len(), m.states.len());
            assert_eq!(t.model.transitions.len(), m.transitions.len());
            for (a, b) in t.model.transitions.iter().zip(&m.transitions) {
                assert_eq!((a.guard.clone(), a.update.clone(), a.letter.clone()), (b.guard.clone(), b.update.clone(), b.letter.clone()));
            }
        }
    }

    #[test]
    fn rejects_invalid_input() {
        let m = crate::parse_ita("ita b { clocks 1; state a level 1 initial; trans a -> a do x1 := x1; trans a -> a when x1 < 1 do x1 := 2*x1; }").unwrap();
        assert!(matches!(to_ita_minus(&m, 10), Err(ItaMinusError::Invalid(_))));
    }

    #[test]
    fn prime_family_lower_bound() {
        let m = prime_family(3);
        assert!(m.validate().is_empty());
        let (states, _) = count_expanded(&m, 10_000).unwrap();
        assert!(states >= 8, "{states}");
    }

    #[test]
    fn runs_lift_and_project() {
        let m = fixtures::a2();
        let t = to_ita_minus(&m, 1000).unwrap();
        for run in random_runs(&m, 60, 6, 4) {
            let lifted = t.lift_run(&run).unwrap();
            let (c1, w1) = replay(&m, &run).unwrap();
            let (c2, w2) = replay(&t.model, &lifted).unwrap();
            assert_eq!(w1, w2);
            let s = &t.expansion.states[c2.state.0];
            assert_eq!(s.base, c1.state);
            for (j0, e) in s.memo.iter().enumerate() {
                assert_eq!(e.evaluate(&c2.valuation), c1.valuation.get(j0 + 1));
            }
            for j in (s.memo.len() + 1)..=m.clocks {
                assert_eq!(c2.valuation.get(j), c1.valuation.get(j));
            }
            assert_eq!(t.project_run(&lifted), run);
        }
        for run in random_runs(&t.model, 60, 6, 8) {
            let (c2, w2) = replay(&t.model, &run).unwrap();
            let (c1, w1) = replay(&m, &t.project_run(&run)).unwrap();
            assert_eq!(w1, w2);
            assert_eq!(t.expansion.states[c2.state.0].base, c1.state);
        }
    }
}
