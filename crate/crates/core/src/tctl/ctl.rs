//! Fixpoint evaluation over the class graph, with comparisons read off the
//! classes.

use std::collections::VecDeque;

use crate::classgraph::{Caps, ClassGraph};
use crate::model::Ita;

use super::formula::{Formula, Quantifier};
use super::TctlError;

/// Can a run end in node `i`?  Either nothing follows it, or time may
/// diverge inside the class.
pub fn run_terminal(g: &ClassGraph, i: usize) -> bool {
    g.out_edges(i).next().is_none() || g.abs.time_divergent(&g.nodes[i])
}

fn predecessors(g: &ClassGraph) -> Vec<Vec<usize>> {
    let mut pred = vec![Vec::new(); g.nodes.len()];
    for e in &g.edges {
        pred[e.to].push(e.from);
    }
    pred
}

/// Nodes of `g` satisfying `f`.  Until follows run semantics: every position
/// before the witness satisfies `lhs ∨ rhs`, and universal until ranges over
/// maximal runs.
pub fn ctl_check(g: &ClassGraph, f: &Formula) -> Result<Vec<bool>, TctlError> {
    let n = g.nodes.len();
    let m = g.model();
    Ok(match f {
        Formula::True => vec![true; n],
        Formula::False => vec![false; n],
        Formula::Prop(p) => g.nodes.iter().map(|c| m.state(c.state).has(p)).collect(),
        Formula::Cmp(e, cmp) => {
            let idx = g
                .abs
                .comparisons()
                .iter()
                .position(|c| c == e)
                .ok_or_else(|| TctlError::UnlabeledComparison(f.to_string()))?;
            g.nodes.iter().map(|c| cmp.holds(g.abs.comparison(c, idx))).collect()
        }
        Formula::Not(a) => ctl_check(g, a)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let (x, y) = (ctl_check(g, a)?, ctl_check(g, b)?);
            x.iter().zip(&y).map(|(p, q)| *p && *q).collect()
        }
        Formula::Or(a, b) => {
            let (x, y) = (ctl_check(g, a)?, ctl_check(g, b)?);
            x.iter().zip(&y).map(|(p, q)| *p || *q).collect()
        }
        Formula::Until { q, lhs, rhs, bound } => {
            if bound.is_some() {
                return Err(TctlError::Fragment(format!("`{f}` has a duration bound")));
            }
            let (phi, psi) = (ctl_check(g, lhs)?, ctl_check(g, rhs)?);
            match q {
                Quantifier::Exists => exists_until(g, &phi, &psi),
                Quantifier::All => all_until(g, &phi, &psi),
            }
        }
    })
}

fn exists_until(g: &ClassGraph, phi: &[bool], psi: &[bool]) -> Vec<bool> {
    let pred = predecessors(g);
    let mut sat = psi.to_vec();
    let mut queue: VecDeque<usize> = (0..sat.len()).filter(|i| sat[*i]).collect();
    while let Some(i) = queue.pop_front() {
        for &p in &pred[i] {
            if !sat[p] && phi[p] {
                sat[p] = true;
                queue.push_back(p);
            }
        }
    }
    sat
}

fn all_until(g: &ClassGraph, phi: &[bool], psi: &[bool]) -> Vec<bool> {
    let n = g.nodes.len();
    let pred = predecessors(g);
    // Outgoing edges not yet known to lead into the result.
    let mut pending: Vec<usize> = (0..n).map(|i| g.out_edges(i).count()).collect();
    let terminal: Vec<bool> = (0..n).map(|i| run_terminal(g, i)).collect();
    let mut sat = psi.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|i| sat[*i]).collect();
    while let Some(i) = queue.pop_front() {
        for &p in &pred[i] {
            pending[p] -= 1;
            if !sat[p] && pending[p] == 0 && phi[p] && !terminal[p] {
                sat[p] = true;
                queue.push_back(p);
            }
        }
    }
    sat
}

#[derive(Debug, Clone)]
pub struct CintResult {
    pub holds: bool,
    pub nodes: usize,
    /// Truth of the formula in every class, indexed like the graph.
    pub table: Vec<bool>,
}

/// Builds the class graph refined by the formula's comparisons and evaluates
/// the formula at the initial class.
pub fn check_tctl_cint(m: &Ita, f: &Formula, caps: &Caps) -> Result<CintResult, TctlError> {
    for e in f.comparisons() {
        if e.max_var() > m.clocks {
            return Err(TctlError::Fragment(format!("comparison mentions clock x{} of a {}-clock model", e.max_var(), m.clocks)));
        }
    }
    let g = ClassGraph::explore(m, &f.comparisons(), caps)?;
    let table = ctl_check(&g, f)?;
    Ok(CintResult { holds: table[0], nodes: g.nodes.len(), table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classgraph::Caps;
    use crate::fixtures;
    use crate::model::load_ita;
    use crate::semantics::random_runs;
    use crate::semantics::trace;
    use crate::tctl::formula::parse_formula;

    fn check(m: &Ita, src: &str) -> bool {
        check_tctl_cint(m, &parse_formula(src).unwrap(), &Caps::default()).unwrap().holds
    }

    #[test]
    fn a1_formulas() {
        let m = fixtures::a1();
        assert!(check(&m, "EF (q1 && x2 > x1)"));
        assert!(!check(&m, "EF (q2 && x1 >= 1)"));
        assert!(check(&m, "true"));
        assert!(check(&m, "EF q2"));
        assert!(!check(&m, "AF q2"));
        assert!(check(&m, "AG (q2 -> x1 < 1)"));
    }

    #[test]
    fn chain() {
        let m = load_ita(
            "ita chain { clocks 1; state a level 1 policy urgent initial; state b level 1 policy lazy labels {r}; \
             trans a -> b; }",
        )
        .unwrap();
        let g = ClassGraph::explore(&m, &[], &Caps::default()).unwrap();
        let sat = ctl_check(&g, &parse_formula("E true U r").unwrap()).unwrap();
        assert!(sat.iter().all(|b| *b));
        // The urgent start must move on, so every maximal run meets r.
        assert!(ctl_check(&g, &parse_formula("A true U r").unwrap()).unwrap()[0]);
        // A psi-node satisfies the until immediately.
        assert!(ctl_check(&g, &parse_formula("A false U r").unwrap()).unwrap()[g.nodes.len() - 1]);
    }

    #[test]
    fn comparison_labels_match_concrete_values() {
        let m = fixtures::a1();
        let f = parse_formula("EF (q1 && x2 > x1)").unwrap();
        let g = ClassGraph::explore(&m, &f.comparisons(), &Caps::default()).unwrap();
        let cmp = parse_formula("x2 > x1").unwrap();
        let table = ctl_check(&g, &cmp).unwrap();
        let Formula::Cmp(e, c) = &cmp else { unreachable!() };
        for run in random_runs(&m, 100, 3, 11) {
            for conf in trace(&m, &run).unwrap() {
                let i = g.node_of(&g.abs.class_of(&conf)).unwrap();
                let concrete = c.holds(e.evaluate(&conf.valuation).cmp(&crate::numerics::int(0)));
                assert_eq!(table[i], concrete);
            }
        }
    }

    #[test]
    fn comparison_free_formulas_ignore_refinement() {
        for m in [fixtures::a1(), fixtures::a2(), fixtures::a4()] {
            for src in ["EF q2", "AF q1", "E true U q0", "AG !q3"] {
                let f = parse_formula(src).unwrap();
                let plain = check_tctl_cint(&m, &f, &Caps::default()).unwrap().holds;
                let extra = vec![crate::syntax::parse_linexpr("x1 - 1/2").unwrap()];
                let g = ClassGraph::explore(&m, &extra, &Caps::default()).unwrap();
                assert_eq!(ctl_check(&g, &f).unwrap()[0], plain, "{} {src}", m.name);
            }
        }
    }
}
