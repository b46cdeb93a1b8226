//! Exit-time asymptotics for small-noise diffusions started near a
//! repelling equilibrium, with Monte Carlo estimators to check them.

// `!(a > b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod exponents;
pub mod gauss;
pub mod harness;
pub mod sde;

pub use error::{ExitlabError, Result};
