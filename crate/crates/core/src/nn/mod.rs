//! Reverse-mode differentiation, the convolutional denoiser, and its optimizer.

pub mod adam;
pub mod autodiff;
pub mod embed;
pub mod gradcheck;
pub mod net;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use autodiff::{Gradients, Tape, Var};
pub use embed::{TimeCondition, TimeEmbedding};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use net::{DenoiserConfig, DenoiserNet, NamedTensor};
