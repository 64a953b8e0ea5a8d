//! Linear system of a symbolic path: one delay variable per gap between
//! discrete steps, clock values propagated as affine expressions of delays.

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{Ita, Policy, StateId, TransitionId};
use crate::numerics::{LinExpr, Rational};
use crate::semantics::RunStep;

use super::fm::{Constraint, LinSystem, LpError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStep {
    Delay,
    Fire(TransitionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("step {index}: transition {transition} does not leave the current state")]
    Chain { index: usize, transition: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone)]
pub struct PathEncoding {
    pub system: LinSystem,
    /// State in which each delay variable elapses.
    pub delay_states: Vec<StateId>,
    /// Delay variable of each path step (`None` for discrete steps).
    pub step_vars: Vec<Option<usize>>,
    /// Clock values at the end of the path, `clocks[i-1]` for `x_i`.
    pub clocks: Vec<LinExpr>,
    pub time: LinExpr,
    pub last: StateId,
}

impl PathEncoding {
    /// Rewrites a constraint over clocks `1..=n` and time `n+1` in terms of
    /// the delay variables at the end of the path.
    pub fn at_end(&self, c: &Constraint) -> Constraint {
        instantiate(c, &self.clocks, &self.time)
    }

    /// The run obtained by fixing every delay to `point`.
    pub fn run(&self, path: &[PathStep], point: &[Rational]) -> Vec<RunStep> {
        let mut out = Vec::new();
        let mut prev = None;
        for (s, v) in path.iter().zip(&self.step_vars) {
            match s {
                PathStep::Fire(t) => out.push(RunStep::Fire(*t)),
                PathStep::Delay => {
                    let v = v.expect("delay step has a variable");
                    if prev != Some(v) && point[v - 1].is_positive() {
                        out.push(RunStep::Time(point[v - 1].clone()));
                    }
                }
            }
            prev = *v;
        }
        out
    }
}

fn instantiate(c: &Constraint, clocks: &[LinExpr], time: &LinExpr) -> Constraint {
    let n = clocks.len();
    c.map_expr(|e| {
        e.substitute_with(|i| match i {
            i if i <= n => Some(clocks[i - 1].clone()),
            i if i == n + 1 => Some(time.clone()),
            _ => None,
        })
    })
}

pub fn encode_path(m: &Ita, path: &[PathStep]) -> Result<PathEncoding, EncodeError> {
    encode_with(m, path, |_, _| Vec::new())
}

/// As `encode_path`; `at_fire(step, state)` adds constraints over clocks and
/// time holding at the instant of each discrete step.
pub fn encode_with(
    m: &Ita,
    path: &[PathStep],
    at_fire: impl Fn(usize, StateId) -> Vec<Constraint>,
) -> Result<PathEncoding, EncodeError> {
    let n = m.clocks;
    let mut clocks = vec![LinExpr::zero(); n];
    let mut time = LinExpr::zero();
    let mut state = m.initial();
    let mut names = Vec::new();
    let mut cons = Vec::new();
    let mut delay_states = Vec::new();
    let mut step_vars = Vec::new();
    // Sum of the delays since the last discrete step, `None` if there were none.
    let mut since: Option<LinExpr> = None;
    let mut current: Option<usize> = None;
    for (index, s) in path.iter().enumerate() {
        match *s {
            PathStep::Delay => {
                let v = match current {
                    Some(v) => v,
                    None => {
                        names.push(format!("d{}", names.len() + 1));
                        let v = names.len();
                        delay_states.push(state);
                        let d = LinExpr::var(v);
                        if m.state(state).policy == Policy::Urgent {
                            cons.push(Constraint::eq(d.clone()));
                        } else {
                            cons.push(Constraint::le(d.neg()));
                        }
                        let l = m.level(state);
                        clocks[l - 1] = clocks[l - 1].add(&d);
                        time = time.add(&d);
                        since = Some(since.map_or(d.clone(), |s| s.add(&d)));
                        current = Some(v);
                        v
                    }
                };
                step_vars.push(Some(v));
            }
            PathStep::Fire(t) => {
                let tr = m.transition(t);
                if tr.source != state {
                    return Err(EncodeError::Chain { index, transition: t.0 });
                }
                if m.state(state).policy == Policy::Delayed {
                    let s = since.clone().unwrap_or_else(LinExpr::zero);
                    cons.push(Constraint::lt(s.neg()));
                }
                for c in at_fire(index, state) {
                    cons.push(instantiate(&c, &clocks, &time));
                }
                for a in &tr.guard {
                    cons.push(instantiate(&Constraint::new(a.expr.clone(), a.cmp), &clocks, &time));
                }
                let next: Vec<LinExpr> = (1..=n)
                    .map(|i| tr.update.image(i).substitute_with(|j| (j <= n).then(|| clocks[j - 1].clone())))
                    .collect();
                clocks = next;
                state = tr.target;
                since = None;
                current = None;
                step_vars.push(None);
            }
        }
    }
    let mut system = LinSystem::new(names);
    for c in cons {
        // Constant propagation leaves some constraints trivially true.
        if c.expr.is_constant() && holds_const(&c) {
            continue;
        }
        system.push(c);
    }
    Ok(PathEncoding { system, delay_states, step_vars, clocks, time, last: state })
}

fn holds_const(c: &Constraint) -> bool {
    c.holds_with(|_| Rational::zero())
}

/// Delays interleaved with `transitions`, optionally followed by a final delay.
pub fn alternate(transitions: &[TransitionId], trailing: bool) -> Vec<PathStep> {
    let mut p = Vec::new();
    for t in transitions {
        p.push(PathStep::Delay);
        p.push(PathStep::Fire(*t));
    }
    if trailing {
        p.push(PathStep::Delay);
    }
    p
}

/// Solves the encoding of `path` together with `extra` constraints at its end
/// and returns the corresponding concrete run.
pub fn realize(
    m: &Ita,
    path: &[PathStep],
    at_fire: impl Fn(usize, StateId) -> Vec<Constraint>,
    extra: &[Constraint],
) -> Result<Option<Vec<RunStep>>, EncodeError> {
    let mut enc = encode_with(m, path, at_fire)?;
    for c in extra {
        let c = enc.at_end(c);
        enc.system.push(c);
    }
    Ok(enc.system.feasible()?.map(|p| enc.run(path, &p)))
}
