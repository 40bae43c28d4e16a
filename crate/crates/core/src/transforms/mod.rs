//! Discrete Fourier and wavelet analysis for 1-D and 2-D real signals.

pub mod fourier;
pub mod radial;
pub mod wavelet;

pub use fourier::{dft, idft, polar, Spectrum};
pub use radial::{radial_power_spectrum, RadialProfile};
pub use wavelet::{dwt, filter_bank, idwt, Band, FilterBank, Orientation, WaveletKind, WaveletPyramid};
