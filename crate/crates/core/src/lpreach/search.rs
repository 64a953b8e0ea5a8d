//! Breadth-first symbolic exploration of paths, pruned by zone inclusion, and
//! the bounded reachability built on it.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{Pow, ToPrimitive};
use thiserror::Error;

use crate::model::{Ita, Policy, StateId, TransitionId};
use crate::numerics::{LinExpr, Rational};
use crate::semantics::RunStep;

use super::encode::{alternate, realize, EncodeError};
use super::fm::{Constraint, LpError};
use super::zone::{Relax, Zone};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("symbolic search exceeded {0} nodes")]
    NodeCap(usize),
    #[error("no concrete run realizes the symbolic path {0:?}")]
    Unrealizable(Vec<usize>),
}

/// What a search is looking for once a node is entered.
#[derive(Debug, Clone, Default)]
pub struct Goal {
    /// Constraints over clocks and time (variable `n+1`) at the end of the run.
    pub constraints: Vec<Constraint>,
    /// Let time elapse in the last state before the constraints apply.
    pub wait: bool,
    pub note: String,
}

impl Goal {
    pub fn note(note: impl Into<String>) -> Self {
        Goal { note: note.into(), ..Goal::default() }
    }
}

/// Result of `fire(state, mode, t)`: the next mode and constraints over
/// clocks and time at the firing instant.
pub type FireRule<'q> = dyn Fn(StateId, usize, TransitionId) -> Option<(usize, Vec<Constraint>)> + 'q;
pub type GoalRule<'q> = dyn Fn(StateId, usize, &Zone) -> Result<Option<Goal>, LpError> + 'q;

pub struct Query<'q> {
    /// Maximal number of discrete steps.
    pub depth: usize,
    pub relax: Relax,
    pub max_nodes: usize,
    pub fire: &'q FireRule<'q>,
    /// Checked on entering a node, with the zone of valuations on entry.
    pub goal: &'q GoalRule<'q>,
}

pub const DEFAULT_MAX_NODES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Found {
    pub path: Vec<TransitionId>,
    pub run: Vec<RunStep>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub found: Option<Found>,
    /// No node was left unexplored: the search is exhaustive.
    pub exhausted: bool,
    pub nodes: usize,
}

struct Node {
    state: StateId,
    mode: usize,
    zone: Zone,
    parent: Option<(usize, TransitionId, Vec<Constraint>)>,
}

fn path_to(nodes: &[Node], mut i: usize) -> (Vec<TransitionId>, Vec<Vec<Constraint>>) {
    let (mut ts, mut cs) = (Vec::new(), Vec::new());
    while let Some((p, t, c)) = &nodes[i].parent {
        ts.push(*t);
        cs.push(c.clone());
        i = *p;
    }
    ts.reverse();
    cs.reverse();
    (ts, cs)
}

fn conclude(m: &Ita, nodes: &[Node], i: usize, goal: Goal) -> Result<Found, SearchError> {
    let (path, fires) = path_to(nodes, i);
    let steps = alternate(&path, goal.wait);
    let at_fire = |idx: usize, _| if idx % 2 == 1 { fires[idx / 2].clone() } else { Vec::new() };
    match realize(m, &steps, at_fire, &goal.constraints)? {
        Some(run) => Ok(Found { path, run, note: goal.note }),
        None => Err(SearchError::Unrealizable(path.iter().map(|t| t.0).collect())),
    }
}

/// Zone of valuations from which the transitions of `q` may be taken.
pub fn dwell(m: &Ita, q: StateId, z: &Zone) -> Result<Zone, LpError> {
    let st = m.state(q);
    match st.policy {
        Policy::Urgent => Ok(z.clone()),
        Policy::Lazy => z.elapse(st.level, false),
        Policy::Delayed => z.elapse(st.level, true),
    }
}

pub fn explore(m: &Ita, q: &Query) -> Result<Outcome, SearchError> {
    let timed = q.relax != Relax::Forget;
    let mut nodes = vec![Node { state: m.initial(), mode: 0, zone: Zone::initial(m.clocks, timed), parent: None }];
    let mut seen: HashMap<(StateId, usize), Vec<Zone>> = HashMap::new();
    seen.insert((m.initial(), 0), vec![nodes[0].zone.relax(q.relax)?]);
    if let Some(g) = (q.goal)(nodes[0].state, 0, &nodes[0].zone)? {
        return Ok(Outcome { found: Some(conclude(m, &nodes, 0, g)?), exhausted: true, nodes: 1 });
    }
    let mut layer = vec![0usize];
    let mut depth = 0;
    while !layer.is_empty() && depth < q.depth {
        let mut next = Vec::new();
        for &i in &layer {
            let (state, mode) = (nodes[i].state, nodes[i].mode);
            let d = dwell(m, state, &nodes[i].zone)?;
            for &t in m.outgoing(state) {
                let Some((mode2, cs)) = (q.fire)(state, mode, t) else { continue };
                let tr = m.transition(t);
                let z = d.with(cs.iter().cloned()).with_guard(&tr.guard);
                if z.is_empty()? {
                    continue;
                }
                let z2 = z.update(&tr.update)?;
                if z2.is_empty()? {
                    continue;
                }
                let key = (tr.target, mode2);
                let r = z2.relax(q.relax)?;
                let stored = seen.entry(key).or_default();
                let mut covered = false;
                for old in stored.iter() {
                    if old.includes(&r)? {
                        covered = true;
                        break;
                    }
                }
                if covered {
                    continue;
                }
                let mut keep = Vec::with_capacity(stored.len() + 1);
                for old in stored.drain(..) {
                    if !r.includes(&old)? {
                        keep.push(old);
                    }
                }
                keep.push(r);
                *stored = keep;
                nodes.push(Node { state: tr.target, mode: mode2, zone: z2, parent: Some((i, t, cs)) });
                let j = nodes.len() - 1;
                if nodes.len() > q.max_nodes {
                    return Err(SearchError::NodeCap(q.max_nodes));
                }
                if let Some(g) = (q.goal)(tr.target, mode2, &nodes[j].zone)? {
                    return Ok(Outcome { found: Some(conclude(m, &nodes, j, g)?), exhausted: false, nodes: nodes.len() });
                }
                next.push(j);
            }
        }
        layer = next;
        depth += 1;
    }
    Ok(Outcome { found: None, exhausted: layer.is_empty(), nodes: nodes.len() })
}

/// `(E + n)^(3n)`: path length beyond which a run of the restricted subclass
/// always contains a removable or pumpable repetition.
pub fn compute_bound(transitions: usize, clocks: usize) -> BigUint {
    Pow::pow(BigUint::from(transitions + clocks), 3 * clocks as u32)
}

/// `(n + 2)^(12·b·E·n³)` as base and exponent; far too large to expand.
pub fn general_budget(transitions: usize, clocks: usize, bits: usize) -> (usize, BigUint) {
    let e = BigUint::from(12u32) * bits * transitions * BigUint::from(clocks).pow(3u32);
    (clocks + 2, e)
}

/// Number of bits of the largest numerator or denominator among the model's
/// constants.
pub fn constant_bits(m: &Ita) -> usize {
    let mut bits = 1;
    let mut see = |e: &crate::numerics::LinExpr| {
        for (_, a) in e.vars().chain(std::iter::once((0, &e.constant_term()))) {
            bits = bits.max(a.numer().bits() as usize).max(a.denom().bits() as usize);
        }
    };
    for t in &m.transitions {
        for a in &t.guard {
            see(&a.expr);
        }
        for (_, e) in t.update.iter() {
            see(e);
        }
    }
    bits
}

pub const DEFAULT_DEPTH_CAP: usize = 64;

/// `min(compute_bound, cap)` for the model.
pub fn default_depth(m: &Ita, cap: usize) -> usize {
    let b = compute_bound(m.transitions.len(), m.clocks);
    b.to_usize().map_or(cap, |b| b.min(cap))
}

/// Is a search to `depth` steps complete by the length bound?
pub fn depth_is_complete(m: &Ita, depth: usize) -> bool {
    m.is_ita_minus() && BigUint::from(depth) >= compute_bound(m.transitions.len(), m.clocks)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachResult {
    pub witness: Option<Found>,
    /// A miss is definitive.
    pub complete: bool,
    pub nodes: usize,
}

/// Is `target` reachable within `depth` discrete steps?
pub fn bounded_reach(m: &Ita, target: StateId, depth: usize) -> Result<ReachResult, SearchError> {
    bounded_reach_with(m, &|q| q == target, depth, DEFAULT_MAX_NODES)
}

pub fn bounded_reach_with(
    m: &Ita,
    target: &dyn Fn(StateId) -> bool,
    depth: usize,
    max_nodes: usize,
) -> Result<ReachResult, SearchError> {
    let fire = |_: StateId, _: usize, _: TransitionId| Some((0, Vec::new()));
    let goal = |q: StateId, _: usize, _: &Zone| Ok(target(q).then(|| Goal::note(m.state(q).name.clone())));
    let out = explore(m, &Query { depth, relax: Relax::Forget, max_nodes, fire: &fire, goal: &goal })?;
    let complete = out.found.is_some() || out.exhausted || depth_is_complete(m, depth);
    Ok(ReachResult { witness: out.found, complete, nodes: out.nodes })
}

/// Looks for an accepting run of `m` reading exactly `word`, with at most
/// `depth` transitions.  The search mode counts the letters read so far.
pub fn accepting_run_for(
    m: &Ita,
    word: &[(String, Rational)],
    depth: usize,
    max_nodes: usize,
) -> Result<Option<Found>, SearchError> {
    let now = |at: &Rational| LinExpr::var(m.clocks + 1).add_constant(&-at.clone());
    let fire = |_: StateId, read: usize, t: TransitionId| match &m.transition(t).letter {
        Some(a) => {
            let (b, at) = word.get(read)?;
            (a == b).then(|| (read + 1, vec![Constraint::eq(now(at))]))
        }
        None => Some((read, word.get(read).map(|(_, at)| Constraint::le(now(at))).into_iter().collect())),
    };
    let goal = |q: StateId, read: usize, _: &Zone| Ok((read == word.len() && m.state(q).accepting).then(|| Goal::note("accepted")));
    let out = explore(m, &Query { depth, relax: Relax::Exact, max_nodes, fire: &fire, goal: &goal })?;
    Ok(out.found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::numerics::int;
    use crate::semantics::replay;

    #[test]
    fn bounds() {
        assert_eq!(compute_bound(2, 2), BigUint::from(4096u32));
        assert_eq!(compute_bound(1, 1), BigUint::from(8u32));
        let (base, exp) = general_budget(2, 2, 2);
        assert_eq!(base, 4);
        assert_eq!(exp, BigUint::from(12u32 * 2 * 2 * 8));
        assert_eq!(default_depth(&fixtures::a1(), 64), 64);
    }

    #[test]
    fn a1_reach() {
        let m = fixtures::a1();
        let q2 = m.find_state("q2").unwrap();
        let r = bounded_reach(&m, q2, 4).unwrap();
        let w = r.witness.expect("reachable");
        let (end, word) = replay(&m, &w.run).unwrap();
        assert_eq!(end.state, q2);
        let tau = word[0].1.clone();
        assert!(tau >= int(0) && tau < int(1));
        assert_eq!(word[1].1, int(1) + tau / int(2));
        let miss = bounded_reach(&m, q2, 1).unwrap();
        assert!(miss.witness.is_none() && !miss.complete);
    }

    #[test]
    fn strengthened_a1_unreachable() {
        let m = fixtures::a1_strengthened();
        let q2 = m.find_state("q2").unwrap();
        let r = bounded_reach(&m, q2, default_depth(&m, 64)).unwrap();
        assert!(r.witness.is_none() && r.complete);
    }

    #[test]
    fn deeper_search_keeps_hits() {
        for m in [fixtures::a1(), fixtures::a2(), fixtures::a4()] {
            for q in m.state_ids() {
                let mut hit_at: Option<usize> = None;
                for depth in 0..6 {
                    let hit = bounded_reach(&m, q, depth).unwrap().witness.is_some();
                    if hit_at.is_some() {
                        assert!(hit, "{} {q:?} lost at depth {depth}", m.name);
                    } else if hit {
                        hit_at = Some(depth);
                    }
                }
            }
        }
    }

    #[test]
    fn word_membership() {
        let m = fixtures::a1();
        let w = |tau: Rational, t2: Rational| vec![("a".to_string(), tau), ("b".to_string(), t2)];
        let found = accepting_run_for(&m, &w(crate::numerics::rat(1, 3), crate::numerics::rat(7, 6)), 4, 1000).unwrap();
        let run = found.expect("in the language").run;
        assert!(crate::semantics::accepts(&m, &w(crate::numerics::rat(1, 3), crate::numerics::rat(7, 6)), &run));
        assert!(accepting_run_for(&m, &w(crate::numerics::rat(1, 3), int(1)), 4, 1000).unwrap().is_none());
        assert!(accepting_run_for(&m, &w(int(1), crate::numerics::rat(3, 2)), 4, 1000).unwrap().is_none());
        assert!(accepting_run_for(&m, &w(int(0), int(1)), 4, 1000).unwrap().is_some());
    }

    #[test]
    fn a4_loop_is_exhausted() {
        // Time grows along the loop but the untimed zone repeats.
        let m = fixtures::a4();
        let fire = |_: StateId, _: usize, _: TransitionId| Some((0, Vec::new()));
        let goal = |_: StateId, _: usize, _: &Zone| Ok(None);
        let out = explore(&m, &Query { depth: 50, relax: Relax::Forget, max_nodes: 1000, fire: &fire, goal: &goal })
            .unwrap();
        assert!(out.exhausted && out.nodes < 10);
    }
}
