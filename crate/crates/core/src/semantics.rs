use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Atom, Ita, Policy, StateId, TransitionId};
use crate::numerics::{Comparator, Rational, Valuation};
use crate::syntax::{Parser, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub valuation: Valuation,
    /// True when time has elapsed since the last discrete step.
    pub elapsed: bool,
}

impl Configuration {
    pub fn initial(m: &Ita) -> Self {
        Configuration { state: m.initial(), valuation: Valuation::zero(m.clocks), elapsed: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStep {
    Time(Rational),
    Fire(TransitionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("negative delay {0}")]
    NegativeDelay(Rational),
    #[error("time cannot elapse in urgent state `{0}`")]
    Urgent(String),
    #[error("transition {0} does not leave the current state")]
    WrongSource(usize),
    #[error("guard `{atom}` of transition {transition} is false")]
    Guard { transition: usize, atom: String },
    #[error("delayed state `{0}` must be left after a positive delay")]
    Delayed(String),
    #[error("unknown transition {0}")]
    UnknownTransition(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {index}: {error}")]
pub struct ReplayError {
    pub index: usize,
    pub error: StepError,
}

pub type TimedWord = Vec<(String, Rational)>;

pub fn time_step(m: &Ita, c: &Configuration, d: &Rational) -> Result<Configuration, StepError> {
    if d.is_negative() {
        return Err(StepError::NegativeDelay(d.clone()));
    }
    if d.is_zero() {
        return Ok(c.clone());
    }
    let st = m.state(c.state);
    if st.policy == Policy::Urgent {
        return Err(StepError::Urgent(st.name.clone()));
    }
    Ok(Configuration { state: c.state, valuation: c.valuation.advance(st.level, d), elapsed: true })
}

pub fn discrete_step(m: &Ita, c: &Configuration, t: TransitionId) -> Result<Configuration, StepError> {
    let tr = m.transitions.get(t.0).ok_or(StepError::UnknownTransition(t.0))?;
    if tr.source != c.state {
        return Err(StepError::WrongSource(t.0));
    }
    let st = m.state(c.state);
    if st.policy == Policy::Delayed && !c.elapsed {
        return Err(StepError::Delayed(st.name.clone()));
    }
    if let Some(a) = tr.guard.iter().find(|a| !a.holds(&c.valuation)) {
        return Err(StepError::Guard { transition: t.0, atom: a.to_string() });
    }
    Ok(Configuration { state: tr.target, valuation: tr.update.apply(&c.valuation), elapsed: false })
}

pub fn step(m: &Ita, c: &Configuration, s: &RunStep) -> Result<Configuration, StepError> {
    match s {
        RunStep::Time(d) => time_step(m, c, d),
        RunStep::Fire(t) => discrete_step(m, c, *t),
    }
}

/// Replays from the initial configuration; returns the last configuration and
/// the timed word read along the run.
pub fn replay(m: &Ita, run: &[RunStep]) -> Result<(Configuration, TimedWord), ReplayError> {
    let mut c = Configuration::initial(m);
    let mut now = Rational::zero();
    let mut word = Vec::new();
    for (index, s) in run.iter().enumerate() {
        c = step(m, &c, s).map_err(|error| ReplayError { index, error })?;
        match s {
            RunStep::Time(d) => now += d,
            RunStep::Fire(t) => {
                if let Some(a) = &m.transition(*t).letter {
                    word.push((a.clone(), now.clone()));
                }
            }
        }
    }
    Ok((c, word))
}

/// Configurations visited by the run, one per step (the initial one first).
pub fn trace(m: &Ita, run: &[RunStep]) -> Result<Vec<Configuration>, ReplayError> {
    let mut c = Configuration::initial(m);
    let mut out = vec![c.clone()];
    for (index, s) in run.iter().enumerate() {
        c = step(m, &c, s).map_err(|error| ReplayError { index, error })?;
        out.push(c.clone());
    }
    Ok(out)
}

pub fn total_time(run: &[RunStep]) -> Rational {
    run.iter().fold(Rational::zero(), |acc, s| match s {
        RunStep::Time(d) => acc + d,
        RunStep::Fire(_) => acc,
    })
}

/// Checks that `witness` is an accepting run of `m` reading exactly `word`.
pub fn accepts(m: &Ita, word: &[(String, Rational)], witness: &[RunStep]) -> bool {
    match replay(m, witness) {
        Ok((c, w)) => m.state(c.state).accepting && w == word,
        Err(_) => false,
    }
}

/// The word timestamps turned into a run that fires the given transitions.
/// Silent transitions fire without delay.
pub fn run_from_word(m: &Ita, word: &[(String, Rational)], transitions: &[TransitionId]) -> Vec<RunStep> {
    let mut run = Vec::new();
    let mut now = Rational::zero();
    let mut letters = word.iter();
    for t in transitions {
        if m.transition(*t).letter.is_some() {
            if let Some((_, at)) = letters.next() {
                let d = at - &now;
                if !d.is_zero() {
                    run.push(RunStep::Time(d));
                }
                now = at.clone();
            }
        }
        run.push(RunStep::Fire(*t));
    }
    run
}

pub fn render_run(run: &[RunStep]) -> String {
    let mut s = String::new();
    for st in run {
        match st {
            RunStep::Time(d) => s.push_str(&format!("time {d}\n")),
            RunStep::Fire(t) => s.push_str(&format!("fire {}\n", t.0)),
        }
    }
    s
}

pub fn parse_run(src: &str) -> Result<Vec<RunStep>, SyntaxError> {
    let mut p = Parser::new(src)?;
    let mut run = Vec::new();
    while !p.at_eof() {
        if p.eat_keyword("time") {
            run.push(RunStep::Time(p.rational()?));
        } else if p.eat_keyword("fire") {
            run.push(RunStep::Fire(TransitionId(p.natural()?)));
        } else {
            return Err(p.error(format!("expected `time` or `fire`, found {}", p.peek())));
        }
        p.eat_sym(";");
    }
    Ok(run)
}

pub fn render_word(w: &[(String, Rational)]) -> String {
    w.iter().map(|(a, t)| format!("({a},{t})")).collect()
}

impl fmt::Display for RunStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunStep::Time(d) => write!(f, "time {d}"),
            RunStep::Fire(t) => write!(f, "fire {}", t.0),
        }
    }
}

/// Interval of a real variable with optional, possibly strict, bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interval {
    pub lo: Option<(Rational, bool)>,
    pub hi: Option<(Rational, bool)>,
}

impl Interval {
    pub fn all() -> Self {
        Interval { lo: None, hi: None }
    }

    pub fn is_empty(&self) -> bool {
        match (&self.lo, &self.hi) {
            (Some((l, ls)), Some((h, hs))) => l > h || (l == h && (*ls || *hs)),
            _ => false,
        }
    }

    pub fn raise_lo(&mut self, v: Rational, strict: bool) {
        let replace = match &self.lo {
            None => true,
            Some((l, ls)) => v > *l || (v == *l && strict && !ls),
        };
        if replace {
            self.lo = Some((v, strict));
        }
    }

    pub fn lower_hi(&mut self, v: Rational, strict: bool) {
        let replace = match &self.hi {
            None => true,
            Some((h, hs)) => v < *h || (v == *h && strict && !hs),
        };
        if replace {
            self.hi = Some((v, strict));
        }
    }

    /// Restricts to the `d` with `a*d + b ⋈ 0`.
    pub fn restrict(&mut self, a: &Rational, b: &Rational, cmp: Comparator) {
        if a.is_zero() {
            if !cmp.holds(b.cmp(&Rational::zero())) {
                self.lo = Some((Rational::one(), false));
                self.hi = Some((Rational::zero(), false));
            }
            return;
        }
        let root = -b / a;
        let cmp = if a.is_negative() { cmp.flip() } else { cmp };
        match cmp {
            Comparator::Lt => self.lower_hi(root, true),
            Comparator::Le => self.lower_hi(root, false),
            Comparator::Eq => {
                self.lower_hi(root.clone(), false);
                self.raise_lo(root, false);
            }
            Comparator::Ge => self.raise_lo(root, false),
            Comparator::Gt => self.raise_lo(root, true),
        }
    }

    /// A member with small denominator, drawn at random.
    pub fn sample(&self, rng: &mut impl Rng, span: i64) -> Option<Rational> {
        if self.is_empty() {
            return None;
        }
        let den = BigInt::from(*[1i64, 2, 3, 4, 5, 10].choose(rng).unwrap());
        let (lo, hi) = match (&self.lo, &self.hi) {
            (Some((l, _)), Some((h, _))) if l == h => return Some(l.clone()),
            (Some((l, _)), Some((h, _))) => (l.clone(), h.clone()),
            (Some((l, _)), None) => (l.clone(), l + Rational::from_integer(span.into())),
            (None, Some((h, _))) => (h - Rational::from_integer(span.into()), h.clone()),
            (None, None) => (Rational::zero(), Rational::from_integer(span.into())),
        };
        for _ in 0..16 {
            let f: Rational = Rational::new(BigInt::from(rng.gen_range(0..=20i64)), BigInt::from(20));
            let raw = &lo + (&hi - &lo) * f;
            let snapped = (raw.clone() * Rational::from_integer(den.clone())).round() / Rational::from_integer(den.clone());
            for cand in [snapped, raw] {
                if self.contains(&cand) {
                    return Some(cand);
                }
            }
        }
        let mid = (&lo + &hi) / Rational::from_integer(2.into());
        self.contains(&mid).then_some(mid)
    }

    pub fn contains(&self, v: &Rational) -> bool {
        let lo_ok = match &self.lo {
            None => true,
            Some((l, s)) => v > l || (!s && v == l),
        };
        let hi_ok = match &self.hi {
            None => true,
            Some((h, s)) => v < h || (!s && v == h),
        };
        lo_ok && hi_ok
    }
}

/// Delays `d` after which transition `t` can fire from `c`.
pub fn enabling_delays(m: &Ita, c: &Configuration, t: TransitionId) -> Interval {
    let tr = m.transition(t);
    let st = m.state(c.state);
    let mut iv = Interval::all();
    iv.raise_lo(Rational::zero(), false);
    match st.policy {
        Policy::Urgent => iv.lower_hi(Rational::zero(), false),
        Policy::Delayed if !c.elapsed => iv.raise_lo(Rational::zero(), true),
        _ => {}
    }
    if tr.source != c.state {
        iv.lower_hi(-Rational::one(), false);
        return iv;
    }
    for Atom { expr, cmp } in &tr.guard {
        let a = expr.coeff(st.level);
        let b = expr.evaluate(&c.valuation);
        iv.restrict(&a, &b, *cmp);
    }
    iv
}

/// Seeded random runs.  Each run fires at most `max_steps` transitions,
/// choosing delays that enable the chosen transition exactly.
pub fn random_runs(m: &Ita, count: usize, max_steps: usize, seed: u64) -> Vec<Vec<RunStep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_run(m, max_steps, &mut rng)).collect()
}

pub fn random_run(m: &Ita, max_steps: usize, rng: &mut impl Rng) -> Vec<RunStep> {
    let mut c = Configuration::initial(m);
    let mut run = Vec::new();
    let steps = rng.gen_range(0..=max_steps);
    for _ in 0..steps {
        let mut options: Vec<(TransitionId, Interval)> = m
            .outgoing(c.state)
            .iter()
            .map(|t| (*t, enabling_delays(m, &c, *t)))
            .filter(|(_, iv)| !iv.is_empty())
            .collect();
        options.shuffle(rng);
        let Some((t, iv)) = options.into_iter().next() else { break };
        let Some(d) = iv.sample(rng, 3) else { break };
        if !d.is_zero() {
            run.push(RunStep::Time(d.clone()));
            c = time_step(m, &c, &d).expect("sampled delay is allowed");
        }
        run.push(RunStep::Fire(t));
        c = discrete_step(m, &c, t).expect("sampled delay enables the transition");
    }
    run
}

/// Random runs cut at their last visit to an accepting state; runs that never
/// accept are discarded, so fewer than `count` runs may be returned.
pub fn random_accepting_runs(m: &Ita, count: usize, max_steps: usize, seed: u64, tries: usize) -> Vec<Vec<RunStep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..tries {
        if out.len() == count {
            break;
        }
        let run = random_run(m, max_steps, &mut rng);
        let confs = trace(m, &run).expect("random runs replay");
        if let Some(last) = confs.iter().rposition(|c| m.state(c.state).accepting) {
            out.push(run[..last].to_vec());
        }
    }
    out
}
