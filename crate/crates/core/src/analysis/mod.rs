//! Intonation/vibrato decomposition and vibrato parameter extraction.

mod filter;
mod hilbert;
mod smoothing;
mod vibrato;

pub use filter::{design_bandpass, fir_filter_aligned, BandpassSpec};
pub use hilbert::analytic_signal;
pub use smoothing::{
    smooth_triangular, triangular_kernel, triangular_smooth_values, window_frames,
};
pub use vibrato::{
    bandpass_vibrato, extract_vibrato_params, extract_vibrato_params_by_notes, Decomposition,
    PhaseSegment, VibratoParams, DEPTH_FLOOR, RATE_MEDIAN_FRAMES,
};
