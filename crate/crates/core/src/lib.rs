//! Spectral regularization for diffusion models: a small autodiff engine and
//! denoiser, Fourier and wavelet transforms, DDPM/DDIM/EDM training and
//! sampling, and the checkerboard spectrum experiment.

pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod losses;
pub mod nn;
pub mod selfcheck;
pub mod tensor;
pub mod transforms;

pub use diffusion::{DiscreteSchedule, EdmSchedule, NoiseSchedule, SamplerKind, SamplerSpec};
pub use error::{Error, Result};
pub use experiments::{Checkpoint, CheckpointError, TrainConfig};
pub use losses::{LossBreakdown, SpectralLossKind};
pub use nn::{DenoiserConfig, DenoiserNet, Tape, TimeEmbedding};
pub use tensor::{SignalGrid, Tensor};
pub use transforms::{Spectrum, WaveletKind, WaveletPyramid};
