// NaN-rejecting guards are written as negated comparisons; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dd;
pub mod error;
pub mod geometry;
pub mod hna;
pub mod linalg;
pub mod oracles;
pub mod ops;
pub mod quad;
pub mod specfun;
pub mod unified;

pub use error::{HnaError, Result};
