//! Reverse-mode autodiff over dense float arrays, plus the handful of
//! neural building blocks the rest of the workspace trains with.
//!
//! Training code instantiates the tape at `f32`; gradient verification
//! re-runs the same ops at `f64` against central finite differences.

pub mod array;
pub mod check;
pub mod elem;
pub mod error;
pub mod kernels;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tape;

mod ops_basic;
mod ops_conv;
mod ops_loss;
mod ops_seq;

pub use array::Array;
pub use elem::Elem;
pub use error::{NumericsError, Result};
pub use ops_seq::{lstm_step, mhsa, AttnWeights, LstmWeights};
pub use params::{Init, ParamSet};
pub use tape::{Tape, VarId};
