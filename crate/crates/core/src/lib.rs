//! Pitch-contour vibrato toolkit for singing voice synthesis.
//!
//! The crate covers the pitch side and the energy side of an expressive
//! singing pipeline:
//!
//! * [`contour`]: frame-level F0 and midi contours, note scores, and their file formats.
//! * [`analysis`]: 3–8 Hz band-pass decomposition into intonation and vibrato,
//!   analytic-signal depth/rate/phase extraction, and triangular smoothing.
//! * [`synthesis`]: intonation snapping to the score and note-gated vibrato synthesis.
//! * [`sim`]: simulated contours with known frame-level vibrato labels.
//! * [`labeler`]: a small perceptron trained on simulated data to label vibrato likeliness.
//! * [`energy`]: a bottleneck autoencoder for power-spectrogram frames plus the
//!   scalar-energy and no-energy baselines.
//! * [`metrics`]: F0 RMSE, F0 correlation and mel-cepstral distortion.
//!
//! Pitch is handled in midi semitones internally and converted to Hz at the
//! boundaries. The default analysis hop is 10 ms.

pub mod analysis;
pub mod contour;
pub mod energy;
mod error;
pub mod labeler;
pub mod metrics;
mod optim;
pub mod rng;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
