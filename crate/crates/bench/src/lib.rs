//! Inputs shared by the benchmarks.

use ita_core::fixtures;
use ita_core::lpreach::Constraint;
use ita_core::numerics::{int, rat};
use ita_core::{Comparator, Ita, LinExpr};

/// The bundled automata together with a few seeded random ones.
pub fn models() -> Vec<Ita> {
    let mut out = vec![fixtures::a1(), fixtures::a2(), fixtures::a3(), fixtures::a4()];
    out.extend((0..4).map(|seed| fixtures::random_ita_minus(seed, 3, 6)));
    out
}

/// A chain `d_1 + ... + d_i <= i` with strict lower bounds, over `n` delays.
pub fn delay_chain(n: usize) -> Vec<Constraint> {
    let mut cs = Vec::new();
    let mut sum = LinExpr::zero();
    for i in 1..=n {
        sum = sum.add(&LinExpr::var(i));
        cs.push(Constraint::new(LinExpr::var(i), Comparator::Gt));
        cs.push(Constraint::new(sum.add_constant(&-int(i as i64)), Comparator::Le));
        cs.push(Constraint::new(LinExpr::var(i).sub(&LinExpr::var(i % n + 1)).add_constant(&rat(1, 2)), Comparator::Ge));
    }
    cs
}
