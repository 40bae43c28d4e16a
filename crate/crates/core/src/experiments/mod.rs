//! Checkerboard data, the training harness, spectral evaluation, and
//! persistence.

pub mod checkerboard;
pub mod checkpoint;
pub mod config;
pub mod metrics;
pub mod pgm;
pub mod train;

pub use checkerboard::{gen_checkerboard, CheckerboardConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::{Formulation, LambdaMode, SpectralChoice, TrainConfig};
pub use metrics::{evaluate_spectra, SpectralMetrics};
pub use pgm::{export_samples_pgm, load_pgm_dir, read_pgm, write_pgm};
pub use train::{draw_batch, train, Batch, LogRow, TrainOutput, Trainer};
