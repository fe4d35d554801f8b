//! Random alternating shear flows on the two-torus.

// `!(x > 0.0)` style guards reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod ergodicity;
pub mod error;
pub mod flow;
pub mod jet;
pub mod lie;
pub mod lyapunov;
pub mod mixing;
pub mod observable;
pub mod profiles;
pub mod stats;
pub mod steering;

pub use error::{Error, Result};
pub use flow::{Direction, Jacobian2, Model, Schedule, TorusPoint};
pub use profiles::ShearProfile;
