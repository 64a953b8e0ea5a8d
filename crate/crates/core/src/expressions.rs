//! Per-level expression sets `E_1..E_n` whose pairwise order determines a
//! class of the abstraction.

use std::fmt;

use indexmap::IndexSet;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Ita, TransitionId};
use crate::numerics::LinExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "transition", rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Guard(usize),
    Formula,
    Update(usize),
    Difference(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpressionError {
    #[error("expression set E_{level} exceeds the cap of {cap} expressions")]
    CapExceeded { level: usize, cap: usize },
}

#[derive(Debug, Clone, Default)]
pub struct ExprSet {
    exprs: IndexSet<LinExpr>,
    provenance: Vec<Provenance>,
}

impl ExprSet {
    fn insert(&mut self, e: LinExpr, p: Provenance) -> bool {
        let (_, fresh) = self.exprs.insert_full(e);
        if fresh {
            self.provenance.push(p);
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.exprs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exprs.is_empty()
    }

    pub fn get(&self, i: usize) -> &LinExpr {
        &self.exprs[i]
    }

    pub fn index_of(&self, e: &LinExpr) -> Option<usize> {
        self.exprs.get_index_of(e)
    }

    pub fn contains(&self, e: &LinExpr) -> bool {
        self.exprs.contains(e)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinExpr> {
        self.exprs.iter()
    }

    pub fn provenance(&self, i: usize) -> Provenance {
        self.provenance[i]
    }
}

/// Index of the active clock `x_k` in `E_k`.
pub const ACTIVE: usize = 0;
/// Index of the constant `0` in `E_k`.
pub const ZERO: usize = 1;

#[derive(Debug, Clone)]
pub struct ExpressionSets {
    levels: Vec<ExprSet>,
}

/// Write `norm(C, k)` as `α·x_k + R` and return `-R`.
fn complement(c: &LinExpr, k: usize) -> LinExpr {
    let (n, _) = c.normalize(k).expect("expression within level");
    n.without(k).neg()
}

impl ExpressionSets {
    pub fn build(m: &Ita, comparisons: &[LinExpr], cap: usize) -> Result<Self, ExpressionError> {
        let n = m.clocks;
        let mut levels: Vec<ExprSet> = (1..=n)
            .map(|k| {
                let mut s = ExprSet::default();
                s.insert(LinExpr::var(k), Provenance::Initial);
                s.insert(LinExpr::zero(), Provenance::Initial);
                s
            })
            .collect();
        for k in (1..=n).rev() {
            for (ti, t) in m.transitions.iter().enumerate() {
                if m.level(t.source) != k {
                    continue;
                }
                for a in &t.guard {
                    levels[k - 1].insert(complement(&a.expr, k), Provenance::Guard(ti));
                }
            }
            for c in comparisons {
                levels[k - 1].insert(complement(&c.truncate_above(k), k), Provenance::Formula);
            }
            check(&levels, k, cap)?;
            let mut j = 0;
            while j < levels[k - 1].len() {
                let cj = levels[k - 1].get(j).clone();
                for (ti, t) in m.transitions.iter().enumerate() {
                    let (l, l2) = (m.level(t.source), m.level(t.target));
                    if l >= k && l2 >= k {
                        levels[k - 1].insert(cj.substitute(&t.update), Provenance::Update(ti));
                        check(&levels, k, cap)?;
                    } else if l < k && l2 >= k {
                        let cju = cj.substitute(&t.update);
                        for i in 0..j {
                            let d = levels[k - 1].get(i).substitute(&t.update).sub(&cju);
                            levels[l - 1].insert(complement(&d, l), Provenance::Difference(ti));
                            check(&levels, l, cap)?;
                        }
                    }
                }
                j += 1;
            }
        }
        Ok(ExpressionSets { levels })
    }

    pub fn level(&self, k: usize) -> &ExprSet {
        &self.levels[k - 1]
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn total(&self) -> usize {
        self.levels.iter().map(|s| s.len()).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let levels: Vec<serde_json::Value> = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let exprs: Vec<serde_json::Value> = s
                    .iter()
                    .enumerate()
                    .map(|(j, e)| serde_json::json!({ "expr": e.to_string(), "provenance": s.provenance(j) }))
                    .collect();
                serde_json::json!({ "level": i + 1, "expressions": exprs })
            })
            .collect();
        serde_json::json!({ "schema": 1, "levels": levels })
    }
}

fn check(levels: &[ExprSet], k: usize, cap: usize) -> Result<(), ExpressionError> {
    if levels[k - 1].len() > cap {
        Err(ExpressionError::CapExceeded { level: k, cap })
    } else {
        Ok(())
    }
}

impl fmt::Display for ExpressionSets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.levels.iter().enumerate() {
            let es: Vec<String> = s.iter().map(|e| e.to_string()).collect();
            writeln!(f, "E{} = {{{}}}", i + 1, es.join(", "))?;
        }
        Ok(())
    }
}

pub fn provenance_transition(p: Provenance) -> Option<TransitionId> {
    match p {
        Provenance::Guard(t) | Provenance::Update(t) | Provenance::Difference(t) => Some(TransitionId(t)),
        _ => None,
    }
}
