//! Group-fair, Pareto-efficient linear models.
//!
//! The lower level fits a weighted sum of group losses; the upper level moves
//! the group weights on the simplex to minimize an unfairness metric of the
//! fitted model. [`bilevel`] solves both levels in a single loop, [`twoloop`]
//! alternates exact lower-level solves with implicit-gradient outer steps.

pub mod baselines;
pub mod bilevel;
pub mod check;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod problem;
pub mod simplex;
pub mod sum;
pub mod trajectory;
pub mod twoloop;

pub use error::{Error, Result};
pub use problem::Problem;
