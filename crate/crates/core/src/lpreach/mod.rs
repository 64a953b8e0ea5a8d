//! Exact linear feasibility, path encodings and bounded symbolic search.

pub mod encode;
pub mod fm;
pub mod search;
pub mod zone;

pub use encode::{alternate, encode_path, encode_with, realize, EncodeError, PathEncoding, PathStep};
pub use fm::{Constraint, LinSystem, LpError, Rel};
pub use search::{
    bounded_reach, bounded_reach_with, compute_bound, constant_bits, default_depth, accepting_run_for, depth_is_complete, dwell, explore,
    general_budget, Found, Goal, Outcome, Query, ReachResult, SearchError, DEFAULT_DEPTH_CAP, DEFAULT_MAX_NODES,
};
pub use zone::{Relax, Zone};
