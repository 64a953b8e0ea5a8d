//! Convex sets of clock valuations (optionally with the elapsed time `t`),
//! represented by their constraints.

use std::fmt;

use crate::model::Atom;
use crate::numerics::{clock_name, LinExpr, Update};

use super::fm::{is_feasible, project, simplify, Constraint, LpError, Rel, CONSTRAINT_CAP};

/// How zones are compared when pruning the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relax {
    /// Time is tracked and compared exactly.
    Exact,
    /// Reaching a valuation earlier is at least as good.
    Early,
    /// Reaching a valuation later is at least as good.
    Late,
    /// Time is not tracked.
    Forget,
}

/// Variables `1..=clocks` are the clocks, `clocks + 1` is the total elapsed
/// time when `timed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zone {
    clocks: usize,
    timed: bool,
    empty: bool,
    cons: Vec<Constraint>,
}

impl Zone {
    pub fn initial(clocks: usize, timed: bool) -> Self {
        let mut cons: Vec<Constraint> = (1..=clocks).map(|i| Constraint::eq(LinExpr::var(i))).collect();
        if timed {
            cons.push(Constraint::eq(LinExpr::var(clocks + 1)));
        }
        Zone { clocks, timed, empty: false, cons }
    }

    /// Every valuation (and every time).
    pub fn universe(clocks: usize, timed: bool) -> Self {
        Zone { clocks, timed, empty: false, cons: Vec::new() }
    }

    pub fn time_var(&self) -> usize {
        self.clocks + 1
    }

    pub fn is_timed(&self) -> bool {
        self.timed
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.cons
    }

    fn from(&self, cons: Option<Vec<Constraint>>) -> Zone {
        match cons {
            Some(cons) => Zone { clocks: self.clocks, timed: self.timed, empty: false, cons },
            None => Zone { clocks: self.clocks, timed: self.timed, empty: true, cons: Vec::new() },
        }
    }

    pub fn is_empty(&self) -> Result<bool, LpError> {
        Ok(self.empty || !is_feasible(&self.cons)?)
    }

    pub fn with(&self, extra: impl IntoIterator<Item = Constraint>) -> Zone {
        if self.empty {
            return self.clone();
        }
        self.from(simplify(self.cons.iter().cloned().chain(extra)))
    }

    pub fn with_guard(&self, guard: &[Atom]) -> Zone {
        self.with(guard.iter().map(|a| Constraint::new(a.expr.clone(), a.cmp)))
    }

    /// Lets time elapse at `level` by some `d ≥ 0` (`d > 0` when `strict`).
    pub fn elapse(&self, level: usize, strict: bool) -> Result<Zone, LpError> {
        if self.empty {
            return Ok(self.clone());
        }
        let d = self.clocks + 2;
        let t = self.time_var();
        let shift = |i: usize| {
            (i == level || (self.timed && i == t)).then(|| LinExpr::var(i).sub(&LinExpr::var(d)))
        };
        let mut cs: Vec<Constraint> = self.cons.iter().map(|c| c.map_expr(|e| e.substitute_with(shift))).collect();
        cs.push(Constraint { expr: LinExpr::var(d).neg(), rel: if strict { Rel::Lt } else { Rel::Le } });
        self.from(project(&cs, &[d], CONSTRAINT_CAP)?).reduced()
    }

    /// Image under a simultaneous update.
    pub fn update(&self, u: &Update) -> Result<Zone, LpError> {
        if self.empty || u.is_identity() {
            return Ok(self.clone());
        }
        let base = self.clocks + 2;
        let old = |i: usize| if u.assigned(i).is_some() { base + i } else { i };
        let mut cs: Vec<Constraint> = self.cons.iter().map(|c| c.map_expr(|e| e.rename(old))).collect();
        let mut fresh = Vec::new();
        for (i, e) in u.iter() {
            cs.push(Constraint::eq(LinExpr::var(i).sub(&e.rename(old))));
            fresh.push(base + i);
        }
        self.from(project(&cs, &fresh, CONSTRAINT_CAP)?).reduced()
    }

    /// Closure used for subsumption under the given relaxation.
    pub fn relax(&self, r: Relax) -> Result<Zone, LpError> {
        if self.empty || !self.timed || r == Relax::Exact {
            return Ok(self.clone());
        }
        let t = self.time_var();
        if r == Relax::Forget {
            let z = self.from(project(&self.cons, &[t], CONSTRAINT_CAP)?);
            return Ok(Zone { timed: false, ..z });
        }
        let s = self.clocks + 2;
        let mut cs: Vec<Constraint> =
            self.cons.iter().map(|c| c.map_expr(|e| e.rename(|i| if i == t { s } else { i }))).collect();
        // Early: some reachable time s ≤ t; Late: some s ≥ t.
        let diff = LinExpr::var(s).sub(&LinExpr::var(t));
        cs.push(Constraint::le(if r == Relax::Early { diff } else { diff.neg() }));
        self.from(project(&cs, &[s], CONSTRAINT_CAP)?).reduced()
    }

    /// Is `other` a subset of `self`?
    pub fn includes(&self, other: &Zone) -> Result<bool, LpError> {
        if other.empty {
            return Ok(true);
        }
        if self.empty {
            return other.is_empty();
        }
        for c in &self.cons {
            for n in c.negations() {
                let mut cs = other.cons.clone();
                cs.push(n);
                if is_feasible(&cs)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Drops constraints implied by the others.
    pub fn reduced(self) -> Result<Zone, LpError> {
        if self.empty {
            return Ok(self);
        }
        if !is_feasible(&self.cons)? {
            return Ok(self.from(None));
        }
        let mut cons = self.cons.clone();
        let mut i = 0;
        while i < cons.len() {
            let c = cons.remove(i);
            let mut implied = true;
            for n in c.negations() {
                let mut cs = cons.clone();
                cs.push(n);
                if is_feasible(&cs)? {
                    implied = false;
                    break;
                }
            }
            if !implied {
                cons.insert(i, c);
                i += 1;
            }
        }
        Ok(Zone { cons, ..self })
    }

    fn name(&self, i: usize) -> String {
        if self.timed && i == self.time_var() {
            "t".to_string()
        } else {
            clock_name(i)
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.empty {
            return write!(f, "false");
        }
        if self.cons.is_empty() {
            return write!(f, "true");
        }
        let names = |i: usize| self.name(i);
        let parts: Vec<String> = self.cons.iter().map(|c| c.display_with(&names).to_string()).collect();
        write!(f, "{}", parts.join(" && "))
    }
}
