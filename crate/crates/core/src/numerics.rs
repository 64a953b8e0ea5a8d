use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub type Rational = num_rational::BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("expression mentions clock x{found} above level {level}")]
    ClockAboveLevel { level: usize, found: usize },
    #[error("malformed rational literal `{0}`")]
    BadLiteral(String),
    #[error("valuation has {len} clocks but clock x{clock} was requested")]
    MissingClock { clock: usize, len: usize },
}

/// Parses `3`, `-7/2` or `0.25` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, NumericsError> {
    let bad = || NumericsError::BadLiteral(s.to_string());
    let t = s.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((w, f)) = t.split_once('.') {
        if f.is_empty() || !f.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let neg = w.starts_with('-');
        let w = w.trim_start_matches(['-', '+']);
        let whole: BigInt = if w.is_empty() { BigInt::zero() } else { w.parse().map_err(|_| bad())? };
        let frac: BigInt = f.parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), f.len());
        let v = Rational::new(whole * &scale + frac, scale);
        return Ok(if neg { -v } else { v });
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

pub fn fmt_rational(r: &Rational) -> String {
    r.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparator {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Comparator {
    /// The comparator obtained when both sides are multiplied by a negative number.
    pub fn flip(self) -> Self {
        match self {
            Comparator::Lt => Comparator::Gt,
            Comparator::Le => Comparator::Ge,
            Comparator::Eq => Comparator::Eq,
            Comparator::Ge => Comparator::Le,
            Comparator::Gt => Comparator::Lt,
        }
    }

    /// Complement within `{<, <=, >=, >}`; `=` has no single complement.
    pub fn negate(self) -> Option<Self> {
        match self {
            Comparator::Lt => Some(Comparator::Ge),
            Comparator::Le => Some(Comparator::Gt),
            Comparator::Eq => None,
            Comparator::Ge => Some(Comparator::Lt),
            Comparator::Gt => Some(Comparator::Le),
        }
    }

    /// Does `lhs ⋈ rhs` hold, given `lhs.cmp(rhs)`?
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            Comparator::Lt => ord == Ordering::Less,
            Comparator::Le => ord != Ordering::Greater,
            Comparator::Eq => ord == Ordering::Equal,
            Comparator::Ge => ord != Ordering::Less,
            Comparator::Gt => ord == Ordering::Greater,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Eq => "=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Kept,
    Flipped,
}

/// Sparse linear expression `Σ a_i x_i + b`.  Index 0 holds the constant,
/// indices `1..` are clocks (or LP variables).  Zero coefficients are never
/// stored, so structural equality is semantic equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct LinExpr {
    terms: BTreeMap<usize, Rational>,
}

impl LinExpr {
    pub fn zero() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut e = LinExpr::zero();
        e.set(0, c);
        e
    }

    pub fn var(i: usize) -> Self {
        LinExpr::term(i, Rational::one())
    }

    pub fn term(i: usize, a: Rational) -> Self {
        let mut e = LinExpr::zero();
        e.set(i, a);
        e
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, Rational)>) -> Self {
        let mut e = LinExpr::zero();
        for (i, a) in terms {
            let cur = e.coeff(i);
            e.set(i, cur + a);
        }
        e
    }

    fn set(&mut self, i: usize, a: Rational) {
        if a.is_zero() {
            self.terms.remove(&i);
        } else {
            self.terms.insert(i, a);
        }
    }

    pub fn coeff(&self, i: usize) -> Rational {
        self.terms.get(&i).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coeff(0)
    }

    /// Variable terms (constant excluded), in increasing index.
    pub fn vars(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.terms.iter().filter(|(i, _)| **i != 0).map(|(i, a)| (*i, a))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.max_var() == 0
    }

    /// Largest variable index with a nonzero coefficient, 0 if constant.
    pub fn max_var(&self) -> usize {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    pub fn mentions(&self, i: usize) -> bool {
        i != 0 && self.terms.contains_key(&i)
    }

    pub fn scale(&self, k: &Rational) -> LinExpr {
        if k.is_zero() {
            return LinExpr::zero();
        }
        LinExpr { terms: self.terms.iter().map(|(i, a)| (*i, a * k)).collect() }
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut e = self.clone();
        for (i, a) in &other.terms {
            let cur = e.coeff(*i);
            e.set(*i, cur + a);
        }
        e
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        let mut e = self.clone();
        for (i, a) in &other.terms {
            let cur = e.coeff(*i);
            e.set(*i, cur - a);
        }
        e
    }

    pub fn neg(&self) -> LinExpr {
        LinExpr { terms: self.terms.iter().map(|(i, a)| (*i, -a)).collect() }
    }

    pub fn add_constant(&self, c: &Rational) -> LinExpr {
        let mut e = self.clone();
        let cur = e.coeff(0);
        e.set(0, cur + c);
        e
    }

    /// Drops the terms of every variable above `k`.
    pub fn truncate_above(&self, k: usize) -> LinExpr {
        LinExpr { terms: self.terms.iter().filter(|(i, _)| **i <= k).map(|(i, a)| (*i, a.clone())).collect() }
    }

    pub fn without(&self, i: usize) -> LinExpr {
        let mut e = self.clone();
        e.terms.remove(&i);
        e
    }

    /// Replaces each variable `i` by `f(i)` when it returns `Some`.
    pub fn substitute_with(&self, f: impl Fn(usize) -> Option<LinExpr>) -> LinExpr {
        let mut out = LinExpr::constant(self.constant_term());
        for (i, a) in self.vars() {
            match f(i) {
                Some(r) => out = out.add(&r.scale(a)),
                None => out = out.add(&LinExpr::term(i, a.clone())),
            }
        }
        out
    }

    /// `C[u]`: every clock replaced by its image under the update.
    pub fn substitute(&self, u: &Update) -> LinExpr {
        self.substitute_with(|i| u.assigned(i).cloned())
    }

    pub fn rename(&self, f: impl Fn(usize) -> usize) -> LinExpr {
        LinExpr::from_terms(self.terms.iter().map(|(i, a)| (if *i == 0 { 0 } else { f(*i) }, a.clone())))
    }

    pub fn evaluate(&self, v: &Valuation) -> Rational {
        self.eval_with(|i| v.get(i))
    }

    pub fn eval_with(&self, f: impl Fn(usize) -> Rational) -> Rational {
        let mut s = self.constant_term();
        for (i, a) in self.vars() {
            s += a * f(i);
        }
        s
    }

    /// Rewrites `C ⋈ 0` at level `k` as `a·x_k + R ⋈ 0 ⇒ x_k + R/a ⋈' 0`.
    /// When `x_k` is absent the expression is returned unchanged.
    pub fn normalize(&self, k: usize) -> Result<(LinExpr, Orientation), NumericsError> {
        let top = self.max_var();
        if top > k {
            return Err(NumericsError::ClockAboveLevel { level: k, found: top });
        }
        let a = self.coeff(k);
        if k == 0 || a.is_zero() {
            return Ok((self.clone(), Orientation::Kept));
        }
        let inv = a.recip();
        let o = if a.is_negative() { Orientation::Flipped } else { Orientation::Kept };
        Ok((self.scale(&inv), o))
    }

    /// Scales so that the coefficient of the lowest variable is ±1; used as a
    /// canonical key for constraints that are invariant under positive scaling.
    pub fn primitive(&self) -> LinExpr {
        match self.vars().next() {
            Some((_, a)) => self.scale(&a.abs().recip()),
            None => self.clone(),
        }
    }

    pub fn display_with<'a>(&'a self, names: &'a dyn Fn(usize) -> String) -> impl fmt::Display + 'a {
        Rendered { e: self, names }
    }
}

struct Rendered<'a> {
    e: &'a LinExpr,
    names: &'a dyn Fn(usize) -> String,
}

impl fmt::Display for Rendered<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<(bool, String)> = Vec::new();
        for (i, a) in self.e.vars() {
            let mag = a.abs();
            let body = if mag.is_one() { (self.names)(i) } else { format!("{}*{}", mag, (self.names)(i)) };
            parts.push((a.is_negative(), body));
        }
        let c = self.e.constant_term();
        if !c.is_zero() {
            parts.push((c.is_negative(), c.abs().to_string()));
        }
        if parts.is_empty() {
            return f.write_str("0");
        }
        for (n, (negative, body)) in parts.iter().enumerate() {
            match (n, negative) {
                (0, true) => write!(f, "-{body}")?,
                (0, false) => write!(f, "{body}")?,
                (_, true) => write!(f, " - {body}")?,
                (_, false) => write!(f, " + {body}")?,
            }
        }
        Ok(())
    }
}

pub fn clock_name(i: usize) -> String {
    format!("x{i}")
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(&clock_name))
    }
}

impl fmt::Debug for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinExpr({self})")
    }
}

/// Clock update: clocks absent from the map keep their value.
#[derive(Clone, PartialEq, Eq, Hash, Default, Debug)]
pub struct Update {
    assign: BTreeMap<usize, LinExpr>,
}

impl Update {
    pub fn identity() -> Self {
        Update::default()
    }

    pub fn set(&mut self, clock: usize, e: LinExpr) {
        if e == LinExpr::var(clock) {
            self.assign.remove(&clock);
        } else {
            self.assign.insert(clock, e);
        }
    }

    pub fn with(mut self, clock: usize, e: LinExpr) -> Self {
        self.set(clock, e);
        self
    }

    pub fn assigned(&self, clock: usize) -> Option<&LinExpr> {
        self.assign.get(&clock)
    }

    /// Image of `x_clock`, `x_clock` itself when untouched.
    pub fn image(&self, clock: usize) -> LinExpr {
        self.assign.get(&clock).cloned().unwrap_or_else(|| LinExpr::var(clock))
    }

    pub fn is_identity_on(&self, clock: usize) -> bool {
        !self.assign.contains_key(&clock)
    }

    pub fn is_identity(&self) -> bool {
        self.assign.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &LinExpr)> {
        self.assign.iter().map(|(i, e)| (*i, e))
    }

    /// Simultaneous application: every right-hand side reads the old valuation.
    pub fn apply(&self, v: &Valuation) -> Valuation {
        let mut out = v.clone();
        for (i, e) in &self.assign {
            out.values[*i - 1] = e.evaluate(v);
        }
        out
    }
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.assign.iter().map(|(i, e)| format!("x{i} := {e}")).collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Valuation {
    values: Vec<Rational>,
}

impl Valuation {
    pub fn zero(n: usize) -> Self {
        Valuation { values: vec![Rational::zero(); n] }
    }

    pub fn from_values(values: Vec<Rational>) -> Self {
        Valuation { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of clock `x_i` (1-based).  Index 0 reads as the constant 1 so that
    /// callers evaluating expressions never special-case it.
    pub fn get(&self, i: usize) -> Rational {
        if i == 0 {
            return Rational::one();
        }
        self.values[i - 1].clone()
    }

    pub fn try_get(&self, i: usize) -> Result<Rational, NumericsError> {
        if i > self.values.len() {
            return Err(NumericsError::MissingClock { clock: i, len: self.values.len() });
        }
        Ok(self.get(i))
    }

    pub fn set(&mut self, i: usize, r: Rational) {
        self.values[i - 1] = r;
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn advance(&self, clock: usize, d: &Rational) -> Valuation {
        let mut out = self.clone();
        out.values[clock - 1] += d;
        out
    }
}

impl fmt::Display for Valuation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> =
            self.values.iter().enumerate().map(|(i, v)| format!("x{}={}", i + 1, v)).collect();
        write!(f, "({})", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn x(i: usize) -> LinExpr {
        LinExpr::var(i)
    }

    fn c(n: i64, d: i64) -> LinExpr {
        LinExpr::constant(rat(n, d))
    }

    #[test]
    fn normalize_keeps_positive_leading_coefficient() {
        let e = x(1).scale(&int(-1)).add(&x(2).scale(&int(2))).add(&c(-2, 1));
        let (n, o) = e.normalize(2).unwrap();
        assert_eq!(o, Orientation::Kept);
        assert_eq!(n, x(2).sub(&x(1).scale(&rat(1, 2))).add(&c(-1, 1)));
    }

    #[test]
    fn normalize_flips_on_negative_leading_coefficient() {
        let e = x(1).scale(&int(3)).sub(&x(2).scale(&int(2))).add(&c(1, 1));
        let (n, o) = e.normalize(2).unwrap();
        assert_eq!(o, Orientation::Flipped);
        assert_eq!(n, x(2).sub(&x(1).scale(&rat(3, 2))).add(&c(-1, 2)));
        assert_eq!(Comparator::Lt.flip(), Comparator::Gt);
    }

    #[test]
    fn normalize_rejects_clock_above_level() {
        assert_eq!(
            x(3).normalize(2),
            Err(NumericsError::ClockAboveLevel { level: 2, found: 3 })
        );
    }

    #[test]
    fn normalize_without_top_clock_is_identity() {
        let e = x(1).add(&c(-1, 1));
        assert_eq!(e.normalize(2).unwrap(), (e.clone(), Orientation::Kept));
    }

    #[test]
    fn substitution_example() {
        let e = x(1).add(&x(2).scale(&int(2)));
        let u = Update::identity().with(2, LinExpr::zero());
        assert_eq!(e.substitute(&u), x(1));
    }

    #[test]
    fn rendering_is_canonical() {
        let e = x(1).scale(&rat(-1, 2)).add(&c(1, 1));
        assert_eq!(e.to_string(), "-1/2*x1 + 1");
        assert_eq!(LinExpr::zero().to_string(), "0");
        assert_eq!(x(2).sub(&x(1)).to_string(), "-x1 + x2");
        assert_eq!(c(-3, 4).to_string(), "-3/4");
    }

    #[test]
    fn literals() {
        assert_eq!(parse_rational("0.7").unwrap(), rat(7, 10));
        assert_eq!(parse_rational("-1.25").unwrap(), rat(-5, 4));
        assert_eq!(parse_rational("-7/2").unwrap(), rat(-7, 2));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn update_reads_old_values() {
        let u = Update::identity().with(1, x(2)).with(2, x(1));
        let v = Valuation::from_values(vec![int(1), int(2)]);
        assert_eq!(u.apply(&v), Valuation::from_values(vec![int(2), int(1)]));
    }

    fn small_rat() -> impl Strategy<Value = Rational> {
        (-8i64..=8, 1i64..=4).prop_map(|(n, d)| rat(n, d))
    }

    fn small_expr(n: usize) -> impl Strategy<Value = LinExpr> {
        (proptest::collection::vec(small_rat(), n), small_rat())
            .prop_map(|(cs, b)| LinExpr::from_terms(cs.into_iter().enumerate().map(|(i, a)| (i + 1, a))).add_constant(&b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn substitution_commutes_with_evaluation(
            e in small_expr(3),
            imgs in proptest::collection::vec(small_expr(3), 3),
            mask in proptest::collection::vec(any::<bool>(), 3),
            vals in proptest::collection::vec(small_rat(), 3),
        ) {
            let mut u = Update::identity();
            for (i, img) in imgs.into_iter().enumerate() {
                if mask[i] { u.set(i + 1, img); }
            }
            let v = Valuation::from_values(vals);
            prop_assert_eq!(e.substitute(&u).evaluate(&v), e.evaluate(&u.apply(&v)));
        }

        #[test]
        fn normalization_preserves_truth(
            e in small_expr(3),
            vals in proptest::collection::vec(small_rat(), 3),
        ) {
            let v = Valuation::from_values(vals);
            let (n, o) = e.normalize(3).unwrap();
            for cmp in [Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ge, Comparator::Gt] {
                let before = cmp.holds(e.evaluate(&v).cmp(&Rational::zero()));
                let cmp2 = if o == Orientation::Flipped { cmp.flip() } else { cmp };
                let after = cmp2.holds(n.evaluate(&v).cmp(&Rational::zero()));
                prop_assert_eq!(before, after);
            }
            if !e.coeff(3).is_zero() {
                prop_assert_eq!(n.coeff(3), Rational::one());
            }
        }

        #[test]
        fn arithmetic_laws(a in small_expr(3), b in small_expr(3)) {
            prop_assert_eq!(a.add(&b).sub(&b), a.clone());
            prop_assert!(a.sub(&a).is_zero());
            prop_assert_eq!(a.neg().neg(), a);
        }
    }
}
