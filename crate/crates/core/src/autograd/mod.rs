//! Reverse-mode automatic differentiation over dense tensors.

pub mod conv;
pub mod gradcheck;
mod ops;
pub mod reference;
mod tape;

pub use conv::ConvSpec;
pub use gradcheck::{grad_check, grad_check_sampled, relative_error, GradCheckReport, DEFAULT_STEP};
pub use ops::BatchStats;
pub use tape::{Tape, Var};
