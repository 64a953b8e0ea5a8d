//! Acceptance suite.  One PASS/FAIL line per criterion; a criterion passes
//! when every check holds and it finishes within its time limit.  All values
//! are exact rationals, so no numeric tolerance applies.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ita_core::classgraph::{Caps, ClassGraph, ClassNode, EdgeKind};
use ita_core::expressions::ExpressionSets;
use ita_core::fixtures;
use ita_core::itaminus::{build_f_sets, to_ita_minus};
use ita_core::lpreach::{accepting_run_for, bounded_reach, Constraint, LinSystem};
use ita_core::numerics::{int, rat};
use ita_core::semantics::{accepts, discrete_step, random_accepting_runs, random_runs, replay, time_step, total_time, trace};
use ita_core::syntax::parse_linexpr;
use ita_core::tctl::{check_tctl_cint, check_tctl_p, check_until, eu_above_pumping, parse_formula, Bound, Formula, Options, Quantifier};
use ita_core::{Atom, Comparator, LinExpr, Policy, Rational, TransitionId, Update, Valuation};

type Check = Result<(), String>;

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn strings<'a>(xs: impl IntoIterator<Item = &'a LinExpr>) -> BTreeSet<String> {
    xs.into_iter().map(|e| e.to_string()).collect()
}

fn parsed(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| parse_linexpr(s).unwrap().to_string()).collect()
}

fn expression_sets() -> Check {
    let e = ExpressionSets::build(&fixtures::a1(), &[], 1000).map_err(|e| e.to_string())?;
    let (e1, e2) = (strings(e.level(1).iter()), strings(e.level(2).iter()));
    ensure(e1 == parsed(&["x1", "0", "1", "2"]), || format!("E1 = {e1:?}"))?;
    ensure(e2 == parsed(&["x2", "0", "-1/2*x1 + 1"]), || format!("E2 = {e2:?}"))
}

fn extended_expression_sets() -> Check {
    let Formula::Cmp(c, _) = parse_formula("x2 > x1").map_err(|e| e.to_string())? else {
        return Err("not a comparison".into());
    };
    let e = ExpressionSets::build(&fixtures::a1(), &[c], 1000).map_err(|e| e.to_string())?;
    let (e1, e2) = (strings(e.level(1).iter()), strings(e.level(2).iter()));
    ensure(e1 == parsed(&["x1", "0", "1", "2/3", "2"]), || format!("E1 = {e1:?}"))?;
    ensure(e2 == parsed(&["x2", "0", "-1/2*x1 + 1", "x1"]), || format!("E2 = {e2:?}"))
}

fn class_graph_fidelity() -> Check {
    let m = fixtures::a1();
    let g = ClassGraph::explore(&m, &[], &Caps::default()).map_err(|e| e.to_string())?;
    let abs = &g.abs;
    let (a, b) = (TransitionId(0), TransitionId(1));
    let index = |n: &ClassNode| g.node_of(n).ok_or_else(|| format!("class missing:\n{}", abs.describe(n)));
    let has_edge = |from: usize, to: usize, kind: EdgeKind| g.edges.iter().any(|e| e.from == from && e.to == to && e.kind == kind);
    let line = |n: &ClassNode| abs.describe(n).lines().skip(1).collect::<Vec<_>>().join(" | ");

    // R0 (x1 = 0) then R0' (0 < x1 < 1), then a.
    let r0 = abs.initial();
    ensure(line(&r0) == "x1 = 0 < 1 < 2", || line(&r0))?;
    let r01 = abs.time_successor(&r0).ok_or("R0 has no time successor")?;
    ensure(line(&r01) == "0 < x1 < 1 < 2", || line(&r01))?;
    ensure(has_edge(index(&r0)?, index(&r01)?, EdgeKind::Time), || "missing R0 -> R0'".into())?;
    ensure(abs.firable(&r01, a), || "a not firable from 0 < x1 < 1".into())?;
    let mut cur = abs.discrete_successor(&r01, a);
    ensure(has_edge(index(&r01)?, index(&cur)?, EdgeKind::Discrete(a)), || "missing a edge".into())?;
    ensure(line(&cur).contains("x2 = 0 < -1/2*x1 + 1"), || line(&cur))?;
    // Time successors in q1 until b is firable.
    let mut steps = 0;
    while !abs.firable(&cur, b) {
        let next = abs.time_successor(&cur).ok_or("b never becomes firable")?;
        ensure(has_edge(index(&cur)?, index(&next)?, EdgeKind::Time), || "missing time edge in q1".into())?;
        cur = next;
        steps += 1;
        ensure(steps < 10, || "too many time steps in q1".into())?;
    }
    let last = abs.discrete_successor(&cur, b);
    ensure(has_edge(index(&cur)?, index(&last)?, EdgeKind::Discrete(b)), || "missing b edge".into())?;
    ensure(m.state(last.state).name == "q2", || "b does not lead to q2".into())?;
    ensure(line(&last).contains("0 < x1 < 1 < 2") && line(&last).contains("0 < x2 = -1/2*x1 + 1"), || line(&last))?;
    // Not firable at x1 = 1.
    let at_one = abs.time_successor(&r01).ok_or("no class x1 = 1")?;
    ensure(line(&at_one) == "0 < x1 = 1 < 2", || line(&at_one))?;
    index(&at_one)?;
    ensure(!abs.firable(&at_one, a), || "a firable at x1 = 1".into())
}

fn in_l1(word: &[(String, Rational)]) -> bool {
    match word {
        [(a, tau), (b, t2)] => a == "a" && b == "b" && *tau >= int(0) && *tau < int(1) && *t2 == int(1) + tau / int(2),
        _ => false,
    }
}

fn reachability_agrees() -> Check {
    for (m, expected) in [(fixtures::a1(), true), (fixtures::a1_strengthened(), false)] {
        let q2 = m.find_state("q2").ok_or("no q2")?;
        let g = ClassGraph::explore(&m, &[], &Caps::default()).map_err(|e| e.to_string())?;
        let by_classes = g.reachable(|n| n.state == q2).is_some();
        let r = bounded_reach(&m, q2, 8).map_err(|e| e.to_string())?;
        ensure(by_classes == expected, || format!("{}: class graph says {by_classes}", m.name))?;
        ensure(r.witness.is_some() == expected, || format!("{}: bounded search disagrees", m.name))?;
        ensure(r.complete, || format!("{}: bounded answer not definitive", m.name))?;
        if let Some(w) = r.witness {
            let (end, word) = replay(&m, &w.run).map_err(|e| e.to_string())?;
            ensure(end.state == q2 && in_l1(&word), || format!("witness word {word:?}"))?;
        }
    }
    Ok(())
}

fn oracle_corpus() -> Check {
    let (mut agreed, mut incomplete) = (0, 0);
    for seed in 0..25 {
        let m = fixtures::random_ita_minus(seed, 3, 6);
        let g = ClassGraph::explore(&m, &[], &Caps::default()).map_err(|e| e.to_string())?;
        let reachable = g.reachable_states();
        for q in m.state_ids() {
            let r = bounded_reach(&m, q, 24).map_err(|e| e.to_string())?;
            let hit = r.witness.is_some();
            if !hit && !r.complete {
                incomplete += 1;
            }
            ensure(!(hit && !reachable.contains(&q)), || format!("seed {seed}: {q:?} found only by search"))?;
            ensure(!(!hit && r.complete && reachable.contains(&q)), || format!("seed {seed}: definitive miss of {q:?}"))?;
            ensure(hit == reachable.contains(&q), || format!("seed {seed}: {q:?} missed at depth 24 (incomplete)"))?;
            if let Some(w) = r.witness {
                let (end, _) = replay(&m, &w.run).map_err(|e| e.to_string())?;
                ensure(end.state == q, || format!("seed {seed}: witness ends elsewhere"))?;
            }
            agreed += 1;
        }
    }
    println!("    {agreed} state queries agree, {incomplete} bounded misses reported incomplete");
    Ok(())
}

fn ita_minus_transformation() -> Check {
    let m = fixtures::a2();
    let f = build_f_sets(&m);
    let table: [(usize, usize, &[&str]); 6] = [
        (1, 1, &["x1"]),
        (2, 1, &["x1", "2"]),
        (2, 2, &["x2"]),
        (3, 1, &["x1", "2", "1"]),
        (3, 2, &["x2", "2*x1 + 1", "5", "3", "x1 + 1", "2"]),
        (3, 3, &["x3"]),
    ];
    for (i, j, expected) in table {
        let got = strings(f.get(i, j));
        ensure(got == parsed(expected), || format!("F[{i},{j}] = {got:?}"))?;
    }
    let t = to_ita_minus(&m, 1000).map_err(|e| e.to_string())?;
    let a = &t.model;
    ensure(a.is_ita_minus(), || format!("{:?}", a.ita_minus_violations()))?;
    let five = LinExpr::constant(int(5));
    ensure(
        a.transitions.iter().any(|tr| {
            tr.letter.is_none()
                && tr.update.assigned(2) == Some(&five)
                && a.state(tr.source).policy == Policy::Urgent
                && t.expansion.states[tr.source.0].polarity == ita_core::itaminus::Polarity::Minus
        }),
        || "no urgent minus state with x2 := 5".into(),
    )?;
    let rewritten = Atom::new(parse_linexpr("2*x2 + 2 - 3").unwrap(), Comparator::Gt);
    let q2 = m.find_state("q2").ok_or("no q2")?;
    let q3 = m.find_state("q3").ok_or("no q3")?;
    ensure(
        a.transitions.iter().enumerate().any(|(i, tr)| {
            let src = &t.expansion.states[tr.source.0];
            let origin = t.expansion.transitions[i].origin.map(|o| m.transition(o));
            origin.is_some_and(|o| o.source == q2 && o.target == q3)
                && src.memo.first() == Some(&LinExpr::constant(int(2)))
                && tr.guard.contains(&rewritten)
        }),
        || "q2 -> q3 guard not rewritten to 2*x2 + 2 > 3 in the x1 := 2 branch".into(),
    )
}

fn language_agreement() -> Check {
    let m = fixtures::a2();
    let t = to_ita_minus(&m, 1000).map_err(|e| e.to_string())?;
    for (from, to) in [(&m, &t.model), (&t.model, &m)] {
        let runs = random_accepting_runs(from, 50, 8, 2024, 20_000);
        ensure(runs.len() == 50, || format!("only {} accepting runs of {}", runs.len(), from.name))?;
        for run in runs {
            let (_, word) = replay(from, &run).map_err(|e| e.to_string())?;
            ensure(accepts(from, &word, &run), || "generated run does not accept its word".into())?;
            let found = accepting_run_for(to, &word, 4 * word.len() + 8, 100_000).map_err(|e| e.to_string())?;
            let other = found.ok_or_else(|| format!("{} rejects {word:?}", to.name))?;
            ensure(accepts(to, &word, &other.run), || "replay of the membership witness fails".into())?;
        }
    }
    Ok(())
}

fn tctl_cint() -> Check {
    let m = fixtures::a1();
    for (src, expected) in [("EF (q1 && x2 > x1)", true), ("EF (q2 && x1 >= 1)", false)] {
        let f = parse_formula(src).map_err(|e| e.to_string())?;
        let r = check_tctl_cint(&m, &f, &Caps::default()).map_err(|e| e.to_string())?;
        ensure(r.holds == expected, || format!("{src} gave {}", r.holds))?;
    }
    Ok(())
}

fn tctl_p() -> Check {
    let m = fixtures::a1();
    let o = Options::for_model(&m);
    for (src, expected) in [
        ("E true U{<=1} q2", true),
        ("E true U{<1} q2", false),
        ("E true U{>=1} q2", true),
        ("E true U{>=2} q2", false),
        ("A true U{>=0} q2", false),
    ] {
        let f = parse_formula(src).map_err(|e| e.to_string())?;
        let v = check_tctl_p(&m, &f, &o).map_err(|e| e.to_string())?;
        ensure(v.holds == expected && v.complete, || format!("{src}: holds {} complete {}", v.holds, v.complete))?;
        if let Some(run) = &v.run {
            replay(&m, run).map_err(|e| format!("{src}: witness does not replay: {e}"))?;
        }
    }
    let a4 = fixtures::a4();
    let q1 = Formula::prop("q1");
    let (run, _) = eu_above_pumping(&a4, &Formula::True, &q1, &int(5), false, 9, 10_000).map_err(|e| e.to_string())?;
    let run = run.ok_or("pumping found no witness on A4")?;
    let (end, _) = replay(&a4, &run).map_err(|e| e.to_string())?;
    ensure(a4.state(end.state).name == "q1" && total_time(&run) >= int(5), || "pumped run too short".into())
}

fn random_expr(rng: &mut ChaCha8Rng, clocks: usize) -> LinExpr {
    let mut e = LinExpr::constant(rat(rng.gen_range(-8..=8), rng.gen_range(1..=4)));
    for i in 1..=clocks {
        if rng.gen_bool(0.7) {
            e = e.add(&LinExpr::term(i, rat(rng.gen_range(-4..=4), rng.gen_range(1..=3))));
        }
    }
    e
}

fn random_valuation(rng: &mut ChaCha8Rng, clocks: usize) -> Valuation {
    Valuation::from_values((0..clocks).map(|_| rat(rng.gen_range(0..=12), rng.gen_range(1..=4))).collect())
}

const CASES: usize = 200;

fn property_suites() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Substitution: v(C[u]) = v[u](C).
    for _ in 0..CASES {
        let c = random_expr(&mut rng, 3);
        let mut u = Update::identity();
        for i in 1..=3 {
            if rng.gen_bool(0.5) {
                u.set(i, random_expr(&mut rng, i - 1));
            }
        }
        let v = random_valuation(&mut rng, 3);
        ensure(c.substitute(&u).evaluate(&v) == c.evaluate(&u.apply(&v)), || format!("substitution fails for {c}"))?;
    }
    // Normalization keeps satisfaction and flips the comparator on a
    // negative leading coefficient.
    let cmps = [Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ge, Comparator::Gt];
    for _ in 0..CASES {
        let k = rng.gen_range(1..=3);
        let atom = Atom::new(random_expr(&mut rng, k), cmps[rng.gen_range(0..5)]);
        let norm = atom.normalize(k).map_err(|e| e.to_string())?;
        let lead = atom.expr.coeff(k);
        if lead != int(0) {
            ensure(norm.expr.coeff(k) == int(1), || format!("{norm} not normalized"))?;
            let flipped = lead < int(0);
            ensure((norm.cmp == atom.cmp.flip()) == flipped || atom.cmp == Comparator::Eq, || format!("{atom} -> {norm}"))?;
        }
        for _ in 0..5 {
            let v = random_valuation(&mut rng, 3);
            ensure(atom.holds(&v) == norm.holds(&v), || format!("{atom} -> {norm} differ"))?;
        }
    }
    // Time-abstract bisimulation spot checks on classes.
    let mut models = vec![fixtures::a1(), fixtures::a2(), fixtures::a4()];
    models.extend((100..105).map(|s| fixtures::random_ita_minus(s, 3, 6)));
    let per_model = CASES.div_ceil(models.len());
    for m in &models {
        let g = ClassGraph::explore(m, &[], &Caps::default()).map_err(|e| e.to_string())?;
        for run in random_runs(m, per_model, 6, 31) {
            let confs = trace(m, &run).map_err(|e| e.to_string())?;
            for c in &confs {
                let k = g.abs.class_of(c);
                ensure(g.node_of(&k).is_some(), || format!("{}: configuration outside explored classes", m.name))?;
                for &t in m.outgoing(c.state) {
                    let concrete = discrete_step(m, c, t);
                    ensure(g.abs.firable(&k, t) == concrete.is_ok(), || format!("{}: firability of {t:?} differs", m.name))?;
                    if let Ok(next) = concrete {
                        ensure(g.abs.discrete_successor(&k, t) == g.abs.class_of(&next), || format!("{}: successor class differs", m.name))?;
                    }
                }
                if m.state(c.state).policy != Policy::Urgent {
                    let d = rat(rng.gen_range(1..=12), rng.gen_range(1..=4));
                    let later = g.abs.class_of(&time_step(m, c, &d).map_err(|e| e.to_string())?);
                    let mut cur = Some(k.clone());
                    let mut hit = false;
                    while let Some(n) = cur {
                        if n == later {
                            hit = true;
                            break;
                        }
                        cur = g.abs.time_successor(&n);
                    }
                    ensure(hit, || format!("{}: delayed class is not a time successor", m.name))?;
                }
            }
        }
    }
    // Fourier-Motzkin against grid sampling.
    for _ in 0..CASES {
        let cs: Vec<Constraint> = (0..rng.gen_range(1..6))
            .map(|_| {
                let mut e = LinExpr::constant(rat(rng.gen_range(-4..=4), rng.gen_range(1..=2)));
                for i in 1..=3 {
                    e = e.add(&LinExpr::term(i, int(rng.gen_range(-2..=2))));
                }
                Constraint::new(e, cmps[rng.gen_range(0..5)])
            })
            .collect();
        let s = LinSystem { names: vec!["a".into(), "b".into(), "c".into()], constraints: cs };
        let res = s.feasible().map_err(|e| e.to_string())?;
        if let Some(p) = &res {
            ensure(s.satisfied_by(p), || format!("witness violates {s}"))?;
        }
        let grid: Vec<Rational> = (-6..=6).map(|i| rat(i, 2)).collect();
        let sampled = grid
            .iter()
            .any(|a| grid.iter().any(|b| grid.iter().any(|c| s.satisfied_by(&[a.clone(), b.clone(), c.clone()]))));
        ensure(!sampled || res.is_some(), || format!("grid point satisfies infeasible {s}"))?;
    }
    // Every witness emitted replays.
    let mut witnesses = 0;
    for seed in 200.. {
        if witnesses >= CASES {
            break;
        }
        let m = fixtures::random_ita_minus(seed, 3, 6);
        for q in m.state_ids() {
            if let Some(w) = bounded_reach(&m, q, 12).map_err(|e| e.to_string())?.witness {
                let (end, _) = replay(&m, &w.run).map_err(|e| format!("seed {seed}: {e}"))?;
                ensure(end.state == q, || format!("seed {seed}: witness misses {q:?}"))?;
                witnesses += 1;
            }
            let within = Bound { cmp: Comparator::Le, value: int(3) };
            let o = Options { depth: 12, ..Options::for_model(&m) };
            let bounded = check_until(&m, Quantifier::Exists, &Formula::True, &Formula::prop(&m.state(q).name), &within, &o)
                .map_err(|e| e.to_string())?;
            if let Some(run) = bounded.run {
                let (end, _) = replay(&m, &run).map_err(|e| format!("seed {seed}: {e}"))?;
                ensure(end.state == q && total_time(&run) <= int(3), || format!("seed {seed}: bounded witness wrong"))?;
                witnesses += 1;
            }
        }
    }
    println!("    {witnesses} witnesses replayed");
    Ok(())
}

type Criterion = (&'static str, fn() -> Check, Duration);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("expression sets of A1", expression_sets, Duration::from_secs(1)),
        ("extended expression sets of A1", extended_expression_sets, Duration::from_secs(1)),
        ("class graph of A1", class_graph_fidelity, Duration::from_secs(1)),
        ("reachability by two procedures", reachability_agrees, Duration::from_secs(1)),
        ("random ITA- corpus", oracle_corpus, Duration::from_secs(60)),
        ("ITA- transformation of A2", ita_minus_transformation, Duration::from_secs(1)),
        ("language agreement A2 / ITA-", language_agreement, Duration::from_secs(30)),
        ("TCTL with clock comparisons", tctl_cint, Duration::from_secs(1)),
        ("TCTL with duration bounds", tctl_p, Duration::from_secs(5)),
        ("property suites", property_suites, Duration::from_secs(60)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let verdict = match (&outcome, took <= *limit) {
            (Ok(()), true) => "PASS".to_string(),
            (Ok(()), false) => format!("FAIL (over the {limit:?} limit)"),
            (Err(e), _) => format!("FAIL ({e})"),
        };
        println!("criterion {:>2}: {verdict}: {name} [{took:.2?}, limit {limit:?}]", i + 1);
        if !verdict.starts_with("PASS") {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
