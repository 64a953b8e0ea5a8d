//! Exact feasibility of conjunctions of strict and non-strict linear
//! constraints by Fourier–Motzkin elimination.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::numerics::{Comparator, LinExpr, Rational};

/// Relation of a constraint `e ⋈ 0`; `>` and `≥` are stored negated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Lt,
    Le,
    Eq,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constraint {
    pub expr: LinExpr,
    pub rel: Rel,
}

impl Constraint {
    pub fn new(expr: LinExpr, cmp: Comparator) -> Self {
        match cmp {
            Comparator::Lt => Constraint { expr, rel: Rel::Lt },
            Comparator::Le => Constraint { expr, rel: Rel::Le },
            Comparator::Eq => Constraint { expr, rel: Rel::Eq },
            Comparator::Ge => Constraint { expr: expr.neg(), rel: Rel::Le },
            Comparator::Gt => Constraint { expr: expr.neg(), rel: Rel::Lt },
        }
    }

    pub fn lt(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Lt }
    }

    pub fn le(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Le }
    }

    pub fn eq(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Eq }
    }

    /// `lhs ⋈ rhs`.
    pub fn cmp(lhs: &LinExpr, cmp: Comparator, rhs: &LinExpr) -> Self {
        Constraint::new(lhs.sub(rhs), cmp)
    }

    pub fn holds_with(&self, f: impl Fn(usize) -> Rational) -> bool {
        rel_holds(self.rel, &self.expr.eval_with(f))
    }

    /// Constraints whose disjunction is the complement of `self`.
    pub fn negations(&self) -> Vec<Constraint> {
        match self.rel {
            Rel::Lt => vec![Constraint::le(self.expr.neg())],
            Rel::Le => vec![Constraint::lt(self.expr.neg())],
            Rel::Eq => vec![Constraint::lt(self.expr.clone()), Constraint::lt(self.expr.neg())],
        }
    }

    pub fn map_expr(&self, f: impl FnOnce(&LinExpr) -> LinExpr) -> Constraint {
        Constraint { expr: f(&self.expr), rel: self.rel }
    }

    pub fn display_with<'a>(&'a self, names: &'a dyn Fn(usize) -> String) -> impl fmt::Display + 'a {
        Shown { c: self, names }
    }

    /// Positive rescaling that makes structurally equal constraints compare equal.
    fn canonical(&self) -> Constraint {
        let mut e = self.expr.primitive();
        if self.rel == Rel::Eq && e.vars().next().is_some_and(|(_, a)| a.is_negative()) {
            e = e.neg();
        }
        Constraint { expr: e, rel: self.rel }
    }
}

fn rel_holds(rel: Rel, v: &Rational) -> bool {
    match rel {
        Rel::Lt => v.is_negative(),
        Rel::Le => !v.is_positive(),
        Rel::Eq => v.is_zero(),
    }
}

struct Shown<'a> {
    c: &'a Constraint,
    names: &'a dyn Fn(usize) -> String,
}

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Move the constant to the right-hand side for readability.
        let k = self.c.expr.constant_term();
        let lhs = self.c.expr.add_constant(&-k.clone());
        let shown = lhs.display_with(self.names).to_string();
        write!(f, "{shown} {} {}", self.c.rel.symbol(), crate::numerics::fmt_rational(&-k))
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(&crate::numerics::clock_name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear system grew to {size} constraints (cap {cap})")]
    TooLarge { size: usize, cap: usize },
}

/// Default bound on the number of constraints produced during elimination.
pub const CONSTRAINT_CAP: usize = 50_000;

/// Drops trivially true constraints, merges parallel ones and keeps only the
/// tightest.  `None` when some constraint is trivially false.
pub fn simplify(cs: impl IntoIterator<Item = Constraint>) -> Option<Vec<Constraint>> {
    let mut ineq: BTreeMap<LinExpr, (Rational, Rel)> = BTreeMap::new();
    let mut eqs: BTreeMap<LinExpr, Rational> = BTreeMap::new();
    for c in cs {
        if c.expr.is_constant() {
            if rel_holds(c.rel, &c.expr.constant_term()) {
                continue;
            }
            return None;
        }
        let c = c.canonical();
        let k = c.expr.constant_term();
        let key = c.expr.add_constant(&-k.clone());
        match c.rel {
            Rel::Eq => match eqs.get(&key) {
                Some(k0) if *k0 != k => return None,
                _ => {
                    eqs.insert(key, k);
                }
            },
            rel => {
                // `key + k ⋈ 0`: a larger `k` is a tighter bound.
                let tighter = match ineq.get(&key) {
                    None => true,
                    Some((k0, r0)) => k > *k0 || (k == *k0 && rel == Rel::Lt && *r0 == Rel::Le),
                };
                if tighter {
                    ineq.insert(key, (k, rel));
                }
            }
        }
    }
    let mut out: Vec<Constraint> = eqs.into_iter().map(|(e, k)| Constraint::eq(e.add_constant(&k))).collect();
    out.extend(ineq.into_iter().map(|(e, (k, rel))| Constraint { expr: e.add_constant(&k), rel }));
    Some(out)
}

fn mentioned(cs: &[Constraint]) -> BTreeSet<usize> {
    cs.iter().flat_map(|c| c.expr.vars().map(|(i, _)| i)).collect()
}

/// Next variable to eliminate: one fixed by an equality if possible, otherwise
/// the one producing the fewest new constraints.
fn pick(cs: &[Constraint], among: &BTreeSet<usize>) -> Option<usize> {
    for c in cs.iter().filter(|c| c.rel == Rel::Eq) {
        if let Some((v, _)) = c.expr.vars().find(|(v, _)| among.contains(v)) {
            return Some(v);
        }
    }
    among
        .iter()
        .copied()
        .min_by_key(|v| {
            let (mut lo, mut hi) = (0i64, 0i64);
            for c in cs {
                let a = c.expr.coeff(*v);
                if a.is_positive() {
                    hi += 1;
                } else if a.is_negative() {
                    lo += 1;
                }
            }
            lo * hi - lo - hi
        })
}

/// Projects `v` out of a simplified system.  `None` when the result is
/// trivially infeasible.
pub fn eliminate(cs: &[Constraint], v: usize, cap: usize) -> Result<Option<Vec<Constraint>>, LpError> {
    if let Some(k) = cs.iter().position(|c| c.rel == Rel::Eq && c.expr.mentions(v)) {
        let e = &cs[k].expr;
        let sol = e.without(v).scale(&(-e.coeff(v).recip()));
        let rest = cs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != k)
            .map(|(_, c)| c.map_expr(|x| x.substitute_with(|i| (i == v).then(|| sol.clone()))));
        return Ok(simplify(rest));
    }
    let (mut lower, mut upper, mut out) = (Vec::new(), Vec::new(), Vec::new());
    for c in cs {
        let a = c.expr.coeff(v);
        if a.is_positive() {
            upper.push((a, c));
        } else if a.is_negative() {
            lower.push((a, c));
        } else {
            out.push(c.clone());
        }
    }
    if out.len() + lower.len() * upper.len() > cap {
        return Err(LpError::TooLarge { size: out.len() + lower.len() * upper.len(), cap });
    }
    for (al, l) in &lower {
        for (au, u) in &upper {
            let expr = u.expr.scale(&-al.clone()).add(&l.expr.scale(au));
            let rel = if l.rel == Rel::Lt || u.rel == Rel::Lt { Rel::Lt } else { Rel::Le };
            out.push(Constraint { expr, rel });
        }
    }
    Ok(simplify(out))
}

/// Eliminates every variable in `vars`, returning the projection.
pub fn project(cs: &[Constraint], vars: &[usize], cap: usize) -> Result<Option<Vec<Constraint>>, LpError> {
    let Some(mut cur) = simplify(cs.iter().cloned()) else { return Ok(None) };
    let mut left: BTreeSet<usize> = vars.iter().copied().collect();
    while let Some(v) = pick(&cur, &left.intersection(&mentioned(&cur)).copied().collect()) {
        left.remove(&v);
        match eliminate(&cur, v, cap)? {
            Some(next) => cur = next,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

pub fn is_feasible(cs: &[Constraint]) -> Result<bool, LpError> {
    let vars: Vec<usize> = mentioned(cs).into_iter().collect();
    Ok(project(cs, &vars, CONSTRAINT_CAP)?.is_some())
}

/// A satisfying point for variables `1..=nvars` (index `i-1` holds variable
/// `i`), or `None` when the system is infeasible.
pub fn solve(cs: &[Constraint], nvars: usize) -> Result<Option<Vec<Rational>>, LpError> {
    let Some(mut cur) = simplify(cs.iter().cloned()) else { return Ok(None) };
    let mut left = mentioned(&cur);
    let mut stack = Vec::new();
    while let Some(v) = pick(&cur, &left) {
        left.remove(&v);
        let next = eliminate(&cur, v, CONSTRAINT_CAP)?;
        stack.push((v, std::mem::take(&mut cur)));
        match next {
            Some(n) => cur = n,
            None => return Ok(None),
        }
        left = left.intersection(&mentioned(&cur)).copied().collect();
    }
    let top = stack.iter().map(|(v, _)| *v).max().unwrap_or(0).max(nvars);
    let mut val = vec![Rational::zero(); top + 1];
    let mut known = vec![false; top + 1];
    while let Some((v, sys)) = stack.pop() {
        val[v] = choose(&sys, v, &val, &known);
        known[v] = true;
    }
    val.remove(0);
    val.truncate(nvars);
    Ok(Some(val))
}

/// Picks a value for `v` satisfying every constraint of `sys`, all other
/// variables being fixed (unknown ones do not occur in `sys` beyond `v`).
fn choose(sys: &[Constraint], v: usize, val: &[Rational], known: &[bool]) -> Rational {
    let mut lo: Option<(Rational, bool)> = None;
    let mut hi: Option<(Rational, bool)> = None;
    for c in sys {
        let a = c.expr.coeff(v);
        if a.is_zero() {
            continue;
        }
        let rest = c.expr.without(v).eval_with(|i| if known[i] { val[i].clone() } else { Rational::zero() });
        let b = -rest / &a;
        match c.rel {
            Rel::Eq => return b,
            rel => {
                let strict = rel == Rel::Lt;
                if a.is_positive() {
                    if hi.as_ref().is_none_or(|(h, s)| b < *h || (b == *h && strict && !*s)) {
                        hi = Some((b, strict));
                    }
                } else if lo.as_ref().is_none_or(|(l, s)| b > *l || (b == *l && strict && !*s)) {
                    lo = Some((b, strict));
                }
            }
        }
    }
    match (lo, hi) {
        (Some((l, _)), Some((h, _))) if l == h => l,
        (Some((l, _)), Some((h, _))) => (l + h) / Rational::from_integer(2.into()),
        (Some((l, false)), None) => l,
        (Some((l, true)), None) => l + Rational::one(),
        (None, Some((h, false))) => h,
        (None, Some((h, true))) => h - Rational::one(),
        (None, None) => Rational::zero(),
    }
}

/// A named-variable linear system, variables numbered from 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinSystem {
    pub names: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl LinSystem {
    pub fn new(names: Vec<String>) -> Self {
        LinSystem { names, constraints: Vec::new() }
    }

    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn name(&self, i: usize) -> String {
        self.names.get(i.wrapping_sub(1)).cloned().unwrap_or_else(|| format!("v{i}"))
    }

    /// Exact decision; on success an exact satisfying point.
    pub fn feasible(&self) -> Result<Option<Vec<Rational>>, LpError> {
        solve(&self.constraints, self.names.len())
    }

    pub fn satisfied_by(&self, point: &[Rational]) -> bool {
        let get = |i: usize| point.get(i - 1).cloned().unwrap_or_else(Rational::zero);
        self.constraints.iter().all(|c| c.holds_with(get))
    }
}

impl fmt::Display for LinSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |i: usize| self.name(i);
        for c in &self.constraints {
            writeln!(f, "{}", c.display_with(&names))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{int, rat};
    use crate::syntax::parse_linexpr;
    use proptest::prelude::*;

    fn c(src: &str) -> Constraint {
        let mut p = crate::syntax::Parser::new(src).unwrap();
        let (e, cmp) = p.comparison().unwrap();
        Constraint::new(e, cmp)
    }

    fn system(srcs: &[&str], n: usize) -> LinSystem {
        let mut s = LinSystem::new((1..=n).map(|i| format!("x{i}")).collect());
        for x in srcs {
            s.push(c(x));
        }
        s
    }

    #[test]
    fn open_interval() {
        let s = system(&["x1 > 0", "x1 < 1"], 1);
        let p = s.feasible().unwrap().expect("feasible");
        assert!(s.satisfied_by(&p));
        assert_eq!(p, vec![rat(1, 2)]);
    }

    #[test]
    fn contradiction() {
        assert_eq!(system(&["x1 >= 1", "x1 < 1"], 1).feasible().unwrap(), None);
        assert_eq!(system(&["x1 <= 1", "x1 >= 1"], 1).feasible().unwrap(), Some(vec![int(1)]));
    }

    #[test]
    fn delay_system_of_a1() {
        let s = system(&["x1 >= 0", "x2 >= 0", "x1 < 1", "x1 + 2*x2 = 2"], 2);
        let p = s.feasible().unwrap().expect("feasible");
        assert!(s.satisfied_by(&p));
        assert!(s.satisfied_by(&[rat(7, 10), rat(13, 20)]));
    }

    #[test]
    fn strictness_propagates() {
        // x < y, y < z, z <= x has no solution; with z < x + 1 it has.
        assert_eq!(system(&["x1 < x2", "x2 < x3", "x3 <= x1"], 3).feasible().unwrap(), None);
        let s = system(&["x1 < x2", "x2 < x3", "x3 < x1 + 1"], 3);
        assert!(s.satisfied_by(&s.feasible().unwrap().unwrap()));
    }

    #[test]
    fn simplify_keeps_tightest() {
        let out = simplify(vec![c("x1 < 3"), c("2*x1 <= 4"), c("x1 <= 2")]).unwrap();
        assert_eq!(out, vec![Constraint::le(parse_linexpr("x1 - 2").unwrap())]);
        assert!(simplify(vec![c("x1 = 1"), c("2*x1 = 3")]).is_none());
    }

    #[test]
    fn empty_system() {
        assert_eq!(LinSystem::default().feasible().unwrap(), Some(vec![]));
    }

    fn small_constraint(n: usize) -> impl Strategy<Value = Constraint> {
        (prop::collection::vec(-3i64..=3, n), -4i64..=4, 1i64..=4, 0usize..3).prop_map(move |(cs, k, d, r)| {
            let e = LinExpr::from_terms(cs.iter().enumerate().map(|(i, a)| (i + 1, int(*a)))).add_constant(&rat(k, d));
            Constraint { expr: e, rel: [Rel::Lt, Rel::Le, Rel::Eq][r] }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        // Any point found by sampling proves feasibility; any witness returned
        // must satisfy the system.
        #[test]
        fn agrees_with_sampling(cs in prop::collection::vec(small_constraint(3), 1..6)) {
            let s = LinSystem { names: vec!["a".into(), "b".into(), "c".into()], constraints: cs };
            let res = s.feasible().unwrap();
            if let Some(p) = &res {
                prop_assert!(s.satisfied_by(p));
            }
            let grid: Vec<Rational> = (-6..=6).map(|i| rat(i, 2)).collect();
            for a in &grid {
                for b in &grid {
                    for c0 in &grid {
                        if s.satisfied_by(&[a.clone(), b.clone(), c0.clone()]) {
                            prop_assert!(res.is_some());
                        }
                    }
                }
            }
        }
    }
}
