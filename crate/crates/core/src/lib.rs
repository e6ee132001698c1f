//! Volumetric segmentation engine.
//!
//! A dense-tensor reverse-mode autograd core ([`autograd`], [`tensor`]) carries
//! a U-shaped 3-D segmentation network with dilated-convolution-pyramid
//! downsampling and dual (position + channel) self-attention ([`network`]).
//! Around it sit the patch pipeline and synthetic phantoms ([`volume`]),
//! Dice / average-surface-distance evaluation ([`metrics`]), Adam training with
//! leave-one-subject-out folds ([`training`]), and raw / NIfTI-1 volume I/O
//! ([`io`]).

pub mod autograd;
pub mod error;
pub mod par;
pub mod tensor;

pub use autograd::{ConvSpec, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
pub mod gradsuite;
pub mod io;
pub mod kv;
pub mod metrics;
pub mod network;
pub mod training;
pub mod volume;
