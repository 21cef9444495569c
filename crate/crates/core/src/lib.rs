//! Renormalization dynamics on Laguerre entire functions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critical;
pub mod dynamics;
pub mod error;
pub mod laguerre;
pub mod limits;
pub mod precision;
pub mod quadrature;
pub mod semigroup;
pub mod series;

pub use error::{Error, Result};
pub use precision::{DoubleDouble, Precision, Real};
pub use series::{BNorm, LogDerivs, PowRoute, TruncatedSeries, DEFAULT_K};
