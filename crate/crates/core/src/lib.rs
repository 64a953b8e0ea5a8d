pub mod classgraph;
pub mod expressions;
pub mod fixtures;
pub mod itaminus;
pub mod lpreach;
pub mod model;
pub mod numerics;
pub mod semantics;
pub mod syntax;
pub mod tctl;

pub use model::{load_ita, parse_ita, Atom, Ita, ModelError, Policy, State, StateId, Transition, TransitionId};
pub use numerics::{Comparator, LinExpr, Rational, Update, Valuation};
