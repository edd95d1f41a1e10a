//! Simulation and reconstruction toolkit for dual-wavelength correlated
//! (ghost) imaging in color.
//!
//! An infrared probe beam and a visible beam share one random amplitude mask
//! per frame. The infrared beam is reflected by the object and integrated by a
//! single-pixel bucket detector; the visible beam goes straight to a camera.
//! The covariance between the camera pixels and the bucket signal, taken over
//! many frames, images the object in the visible color. Two such channel
//! pairs compose into a color image.
//!
//! * [`optics`] generates the masks and simulates both detector arms.
//! * [`correlator`] accumulates mergeable covariance sums and finalizes them.
//! * [`spectral`] composes channel maps into a color image.
//! * [`metrics`] scores images with PSNR, SSIM and the colorfulness index.
//! * [`harness`] wires everything into convergence and comparison studies.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod correlator;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod pipeline;
pub mod scenes;
pub mod spectral;

pub use correlator::{ChannelReconstruction, CorrelationAccumulator, FrameRecord, NormalizeMode};
pub use error::{Error, Result};
pub use grid::Grid;
pub use optics::{DetectorNoise, MaskParams, Psf, Scene, SpeckleMask, SpectralChannel};
pub use spectral::ColorImage;
