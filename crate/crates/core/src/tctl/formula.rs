//! Formulas: propositions, clock comparisons, boolean connectives and
//! (possibly duration-bounded) until.

use std::fmt;

use num_traits::Signed;

use crate::model::State;
use crate::numerics::{fmt_rational, Comparator, LinExpr, Rational};
use crate::syntax::{quote_name, Parser, SyntaxError, Tok};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantifier {
    Exists,
    All,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bound {
    pub cmp: Comparator,
    pub value: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Prop(String),
    /// `expr ⋈ 0` over the model's clocks.
    Cmp(LinExpr, Comparator),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until { q: Quantifier, lhs: Box<Formula>, rhs: Box<Formula>, bound: Option<Bound> },
}

/// Which checker a formula belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fragment {
    /// Comparisons over clocks, nested unbounded until.
    ClockComparisons,
    /// Duration-bounded until over propositions, no nesting.
    Durations,
}

impl Formula {
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(q: Quantifier, lhs: Formula, rhs: Formula, bound: Option<Bound>) -> Formula {
        Formula::Until { q, lhs: Box::new(lhs), rhs: Box::new(rhs), bound }
    }

    pub fn eu(lhs: Formula, rhs: Formula) -> Formula {
        Formula::until(Quantifier::Exists, lhs, rhs, None)
    }

    pub fn au(lhs: Formula, rhs: Formula) -> Formula {
        Formula::until(Quantifier::All, lhs, rhs, None)
    }

    pub fn prop(p: &str) -> Formula {
        Formula::Prop(p.to_string())
    }

    /// Boolean combination of propositions only.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => true,
            Formula::Not(a) => a.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) => a.is_propositional() && b.is_propositional(),
            Formula::Cmp(..) | Formula::Until { .. } => false,
        }
    }

    /// Truth of a propositional formula in a state.
    pub fn holds_in(&self, s: &State) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Prop(p) => s.has(p),
            Formula::Not(a) => !a.holds_in(s),
            Formula::And(a, b) => a.holds_in(s) && b.holds_in(s),
            Formula::Or(a, b) => a.holds_in(s) || b.holds_in(s),
            Formula::Cmp(..) | Formula::Until { .. } => panic!("`{self}` is not propositional"),
        }
    }

    /// Comparisons in order of first occurrence, without repetition.
    pub fn comparisons(&self) -> Vec<LinExpr> {
        let mut out = Vec::new();
        self.collect_comparisons(&mut out);
        out
    }

    fn collect_comparisons(&self, out: &mut Vec<LinExpr>) {
        match self {
            Formula::Cmp(e, _) => {
                if !out.contains(e) {
                    out.push(e.clone());
                }
            }
            Formula::Not(a) => a.collect_comparisons(out),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_comparisons(out);
                b.collect_comparisons(out);
            }
            Formula::Until { lhs, rhs, .. } => {
                lhs.collect_comparisons(out);
                rhs.collect_comparisons(out);
            }
            _ => {}
        }
    }

    fn has_bound(&self) -> bool {
        match self {
            Formula::Not(a) => a.has_bound(),
            Formula::And(a, b) | Formula::Or(a, b) => a.has_bound() || b.has_bound(),
            Formula::Until { bound, lhs, rhs, .. } => bound.is_some() || lhs.has_bound() || rhs.has_bound(),
            _ => false,
        }
    }

    /// Checks that every until is bounded with propositional arguments.
    fn durations_ok(&self) -> Result<(), String> {
        match self {
            Formula::True | Formula::False | Formula::Prop(_) => Ok(()),
            Formula::Cmp(..) => Err(format!("clock comparison `{self}` cannot be combined with duration bounds")),
            Formula::Not(a) => a.durations_ok(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.durations_ok()?;
                b.durations_ok()
            }
            Formula::Until { lhs, rhs, bound, .. } => {
                if bound.is_none() {
                    return Err(format!(
                        "unbounded until `{self}` cannot be combined with duration bounds (use U{{>=0}})"
                    ));
                }
                if !lhs.is_propositional() || !rhs.is_propositional() {
                    return Err(format!("arguments of `{self}` must be propositional"));
                }
                Ok(())
            }
        }
    }

    pub fn fragment(&self) -> Result<Fragment, String> {
        if !self.has_bound() {
            return Ok(Fragment::ClockComparisons);
        }
        self.durations_ok()?;
        Ok(Fragment::Durations)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}{}}}", self.cmp.symbol(), fmt_rational(&self.value))
    }
}

fn needs_parens(f: &Formula) -> bool {
    matches!(f, Formula::And(..) | Formula::Or(..) | Formula::Until { .. } | Formula::Cmp(..))
}

fn wrapped(f: &Formula) -> String {
    if needs_parens(f) {
        format!("({f})")
    } else {
        f.to_string()
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Prop(p) => write!(f, "{}", quote_name(p)),
            Formula::Cmp(e, c) => {
                let k = e.constant_term();
                write!(f, "{} {} {}", e.add_constant(&-k.clone()), c.symbol(), fmt_rational(&-k))
            }
            Formula::Not(a) => write!(f, "!{}", wrapped(a)),
            Formula::And(a, b) => write!(f, "{} && {}", wrapped(a), wrapped(b)),
            Formula::Or(a, b) => write!(f, "{} || {}", wrapped(a), wrapped(b)),
            Formula::Until { q, lhs, rhs, bound } => {
                let q = match q {
                    Quantifier::Exists => "E",
                    Quantifier::All => "A",
                };
                let b = bound.as_ref().map(|b| b.to_string()).unwrap_or_default();
                write!(f, "{q} {} U{b} {}", wrapped(lhs), wrapped(rhs))
            }
        }
    }
}

const KEYWORDS: &[&str] = &["E", "A", "EF", "AF", "EG", "AG", "U", "true", "false"];

pub fn parse_formula(src: &str) -> Result<Formula, SyntaxError> {
    parse_formula_for(src, None)
}

/// Parses with clock indices limited to `clocks` when given.
pub fn parse_formula_for(src: &str, clocks: Option<usize>) -> Result<Formula, SyntaxError> {
    let mut p = Parser::new(src)?;
    p.max_clock = clocks;
    let f = implication(&mut p)?;
    if !p.at_eof() {
        return Err(p.error(format!("unexpected {}", p.peek())));
    }
    Ok(f)
}

fn implication(p: &mut Parser) -> Result<Formula, SyntaxError> {
    let a = disjunction(p)?;
    if p.eat_sym("->") {
        let b = implication(p)?;
        return Ok(Formula::or(Formula::not(a), b));
    }
    Ok(a)
}

fn disjunction(p: &mut Parser) -> Result<Formula, SyntaxError> {
    let mut a = conjunction(p)?;
    while p.eat_sym("||") {
        a = Formula::or(a, conjunction(p)?);
    }
    Ok(a)
}

fn conjunction(p: &mut Parser) -> Result<Formula, SyntaxError> {
    let mut a = unary(p)?;
    while p.eat_sym("&&") {
        a = Formula::and(a, unary(p)?);
    }
    Ok(a)
}

fn bound(p: &mut Parser) -> Result<Option<Bound>, SyntaxError> {
    if !p.eat_sym("{") {
        return Ok(None);
    }
    let cmp = match p.comparator() {
        Some(Comparator::Eq) | None => return Err(p.error("expected one of `<`, `<=`, `>=`, `>` in a bound")),
        Some(c) => c,
    };
    let value = p.rational()?;
    if value.is_negative() {
        return Err(p.error("bounds must be nonnegative"));
    }
    p.expect_sym("}")?;
    Ok(Some(Bound { cmp, value }))
}

fn unary(p: &mut Parser) -> Result<Formula, SyntaxError> {
    if p.eat_sym("!") {
        return Ok(Formula::not(unary(p)?));
    }
    for (kw, q, globally) in [
        ("EF", Quantifier::Exists, false),
        ("AF", Quantifier::All, false),
        ("EG", Quantifier::Exists, true),
        ("AG", Quantifier::All, true),
    ] {
        if p.eat_keyword(kw) {
            let b = bound(p)?;
            if globally && b.is_some() {
                return Err(p.error(format!("`{kw}` does not take a bound")));
            }
            let a = unary(p)?;
            return Ok(if globally {
                // EG a = !A true U !a, AG a = !E true U !a.
                let dual = match q {
                    Quantifier::Exists => Quantifier::All,
                    Quantifier::All => Quantifier::Exists,
                };
                Formula::not(Formula::until(dual, Formula::True, Formula::not(a), None))
            } else {
                Formula::until(q, Formula::True, a, b)
            });
        }
    }
    for (kw, q) in [("E", Quantifier::Exists), ("A", Quantifier::All)] {
        if p.eat_keyword(kw) {
            let bracket = p.eat_sym("[");
            let lhs = if bracket { implication(p)? } else { disjunction(p)? };
            p.expect_keyword("U")?;
            let b = bound(p)?;
            let rhs = if bracket { implication(p)? } else { disjunction(p)? };
            if bracket {
                p.expect_sym("]")?;
            }
            return Ok(Formula::until(q, lhs, rhs, b));
        }
    }
    atom(p)
}

fn atom(p: &mut Parser) -> Result<Formula, SyntaxError> {
    if p.eat_keyword("true") {
        return Ok(Formula::True);
    }
    if p.eat_keyword("false") {
        return Ok(Formula::False);
    }
    if p.starts_expr() || p.is_sym("(") {
        let mark = p.mark();
        match p.comparison() {
            Ok((e, c)) => return Ok(Formula::Cmp(e, c)),
            Err(err) => {
                if !p.is_sym_at(mark, "(") {
                    return Err(err);
                }
                p.reset(mark);
            }
        }
        p.expect_sym("(")?;
        let f = implication(p)?;
        p.expect_sym(")")?;
        return Ok(f);
    }
    match p.peek().clone() {
        Tok::Ident(s) if KEYWORDS.contains(&s.as_str()) => Err(p.error(format!("unexpected keyword `{s}`"))),
        Tok::Ident(_) | Tok::Quoted(_) => Ok(Formula::Prop(p.name()?)),
        t => Err(p.error(format!("expected a formula, found {t}"))),
    }
}
