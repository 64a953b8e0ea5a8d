//! Small reference automata used by tests, benches and the command line.

use crate::model::{load_ita, Ita};

pub const A1: &str = include_str!("../fixtures/a1.ita");
pub const A2: &str = include_str!("../fixtures/a2.ita");
pub const A3: &str = include_str!("../fixtures/a3.ita");
pub const A4: &str = include_str!("../fixtures/a4.ita");

fn load(src: &str) -> Ita {
    load_ita(src).expect("bundled fixture is valid")
}

pub fn a1() -> Ita {
    load(A1)
}

pub fn a2() -> Ita {
    load(A2)
}

pub fn a3() -> Ita {
    load(A3)
}

pub fn a4() -> Ita {
    load(A4)
}

/// `a1` with the extra conjunct `x1 >= 1` on the `b` transition.
pub fn a1_strengthened() -> Ita {
    load(&A1.replace("when x1 + 2*x2 = 2", "when x1 + 2*x2 = 2 && x1 >= 1").replace("ita A1", "ita A1s"))
}

pub fn by_name(name: &str) -> Option<Ita> {
    match name.to_ascii_lowercase().as_str() {
        "a1" => Some(a1()),
        "a2" => Some(a2()),
        "a3" => Some(a3()),
        "a4" => Some(a4()),
        _ => None,
    }
}

/// Seeded random ITA⁻ with up to `max_clocks` clocks and `max_transitions`
/// transitions; constants have denominators at most 4.
pub fn random_ita_minus(seed: u64, max_clocks: usize, max_transitions: usize) -> Ita {
    use crate::model::{Atom, Policy, State, StateId, Transition};
    use crate::numerics::{rat, Comparator, LinExpr};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(1..=max_clocks);
        let states: Vec<State> = (0..rng.gen_range(2..=4))
            .map(|i| {
                let mut s = State::new(format!("q{i}"), if i == 0 { 1 } else { rng.gen_range(1..=n) });
                s.policy = [Policy::Lazy, Policy::Lazy, Policy::Urgent, Policy::Delayed][rng.gen_range(0..4)];
                s.initial = i == 0;
                s.accepting = rng.gen_bool(0.3);
                s.labels.insert(s.name.clone());
                s
            })
            .collect();
        let constant = |rng: &mut rand_chacha::ChaCha8Rng| rat(rng.gen_range(0..=8), rng.gen_range(1..=4));
        let mut transitions = Vec::new();
        for _ in 0..rng.gen_range(1..=max_transitions) {
            let (s, t) = (rng.gen_range(0..states.len()), rng.gen_range(0..states.len()));
            let (k, k2) = (states[s].level, states[t].level);
            let mut tr = Transition::new(StateId(s), StateId(t));
            tr.letter = Some(["a", "b", "c"][rng.gen_range(0..3)].to_string());
            for _ in 0..rng.gen_range(0..=2) {
                let mut e = LinExpr::var(k);
                for i in 1..k {
                    e = e.add(&LinExpr::term(i, rat(rng.gen_range(-2..=2), rng.gen_range(1..=2))));
                }
                let cmp = [Comparator::Lt, Comparator::Le, Comparator::Eq, Comparator::Ge, Comparator::Gt][rng.gen_range(0..5)];
                tr.guard.push(Atom::new(e.add_constant(&-constant(&mut rng)), cmp));
            }
            if k <= k2 && rng.gen_bool(0.5) {
                let mut e = LinExpr::constant(constant(&mut rng) / rat(2, 1));
                for i in 1..k {
                    if rng.gen_bool(0.5) {
                        e = e.add(&LinExpr::term(i, rat(rng.gen_range(-1..=2), 1)));
                    }
                }
                tr.update.set(k, e);
            }
            transitions.push(tr);
        }
        let m = Ita::new(format!("R{seed}"), n, states, transitions);
        if m.is_ita_minus() {
            return m;
        }
    }
}
