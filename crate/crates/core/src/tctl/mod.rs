//! Model checking: CTL with clock comparisons over the class graph, and
//! duration-bounded until by symbolic search.

pub mod bounded;
pub mod ctl;
pub mod formula;

use thiserror::Error;

use crate::classgraph::ClassError;
use crate::lpreach::{LpError, SearchError};
use crate::model::Ita;
use crate::syntax::SyntaxError;

pub use bounded::{
    check_au_above, check_au_below, check_eu_above, check_eu_below, check_tctl_p, check_until, eu_above_direct,
    eu_above_pumping, Options, Verdict,
};
pub use ctl::{check_tctl_cint, ctl_check, run_terminal, CintResult};
pub use formula::{parse_formula, parse_formula_for, Bound, Formula, Fragment, Quantifier};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TctlError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{0}")]
    Fragment(String),
    #[error("comparison `{0}` is not labeled in the class graph")]
    UnlabeledComparison(String),
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

impl From<LpError> for TctlError {
    fn from(e: LpError) -> Self {
        TctlError::Search(SearchError::Lp(e))
    }
}

/// Checks a formula with the procedure of its fragment.
pub fn check(m: &Ita, f: &Formula, o: &Options) -> Result<Verdict, TctlError> {
    match f.fragment().map_err(TctlError::Fragment)? {
        Fragment::ClockComparisons => {
            let r = check_tctl_cint(m, f, &o.caps)?;
            Ok(Verdict { holds: r.holds, complete: true, procedure: "class-graph".into(), run: None })
        }
        Fragment::Durations => check_tctl_p(m, f, o),
    }
}

impl From<crate::lpreach::EncodeError> for TctlError {
    fn from(e: crate::lpreach::EncodeError) -> Self {
        TctlError::Search(SearchError::Encode(e))
    }
}
