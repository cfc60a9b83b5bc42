//! Reassembly of a final pitch contour: intonation snapped to the score plus
//! note-gated vibrato.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::analysis::{smooth_triangular, VibratoParams};
use crate::contour::{FrameNotes, MidiContour, NoteSpan};
use crate::{Error, Result};

/// Default triangular window for the smoothed intonation, in seconds.
pub const DEFAULT_INTONATION_WINDOW: f64 = 0.6;

/// Slack on the `l_mean >= epsilon` comparison so that exact ties survive
/// summation rounding.
pub const GATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// A note carries vibrato when its mean likeliness is at least this value.
    pub epsilon: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig { epsilon: 0.5 }
    }
}

impl GateConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(GateConfig { epsilon })
    }
}

/// Gate outcome for one note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteGate {
    pub note_index: usize,
    pub start: usize,
    pub end: usize,
    pub mean_likeliness: f64,
    pub vibrato: bool,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::invalid(format!(
            "{what} has {got} frames, expected {want}"
        )));
    }
    Ok(())
}

fn gate_span(likeliness: &[f64], span: &NoteSpan, epsilon: f64) -> NoteGate {
    let l = &likeliness[span.range()];
    let mean = l.iter().sum::<f64>() / l.len() as f64;
    NoteGate {
        note_index: span.note_index,
        start: span.start,
        end: span.end,
        mean_likeliness: mean,
        vibrato: mean + GATE_TOLERANCE >= epsilon,
    }
}

/// Per-note decision `mean(likeliness over the note) >= epsilon`.
pub fn note_gate_decision(
    likeliness: &[f64],
    frame_notes: &FrameNotes,
    epsilon: f64,
) -> Result<Vec<NoteGate>> {
    check_len("likeliness", likeliness.len(), frame_notes.len())?;
    Ok(frame_notes
        .spans()
        .iter()
        .map(|s| gate_span(likeliness, s, epsilon))
        .collect())
}

/// `i_post = i - ĩ + i_n` on note frames, where `ĩ` is the triangular
/// smoothing of `i`. Rest frames pass through unchanged.
pub fn postprocess_intonation(
    intonation: &MidiContour,
    frame_notes: &FrameNotes,
    window_seconds: f64,
) -> Result<MidiContour> {
    check_len("score", frame_notes.len(), intonation.len())?;
    let smoothed = smooth_triangular(intonation, window_seconds)?;
    let values = intonation
        .values()
        .iter()
        .zip(smoothed.values())
        .zip(frame_notes.note_midi())
        .map(|((&i, &s), note)| match note {
            Some(m) => *m as f64 + (i - s),
            None => i,
        })
        .collect();
    intonation.with_values(values)
}

/// Note-gated vibrato: for each note whose mean likeliness reaches epsilon,
/// `v_t = l_t e_t cos(2π r_t k / frame_rate + φ)` with `k` counted from the
/// note's first frame and `φ` taken from the phase segment covering that frame
/// (0 if none). Other notes and rest frames get 0.
pub fn synthesize_vibrato(
    params: &VibratoParams,
    frame_notes: &FrameNotes,
    frame_rate: f64,
    gate: &GateConfig,
) -> Result<Vec<f64>> {
    params.validate()?;
    check_len("score", frame_notes.len(), params.len())?;
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::invalid(format!(
            "frame rate must be positive, got {frame_rate}"
        )));
    }
    let likeliness = params
        .likeliness
        .as_deref()
        .ok_or_else(|| Error::invalid("vibrato likeliness is not set"))?;

    let mut v = vec![0.0; params.len()];
    for span in frame_notes.spans() {
        if !gate_span(likeliness, &span, gate.epsilon).vibrato {
            continue;
        }
        let phi = params.phase_at(span.start).unwrap_or(0.0);
        for (k, t) in span.range().enumerate() {
            let arg = 2.0 * PI * params.rate[t] * k as f64 / frame_rate + phi;
            v[t] = likeliness[t] * params.depth[t] * arg.cos();
        }
    }
    Ok(v)
}

/// Final pitch: `i_post + v`, keeping the voicing of `i_post`.
pub fn assemble_pitch(i_post: &MidiContour, vibrato: &[f64]) -> Result<MidiContour> {
    check_len("vibrato", vibrato.len(), i_post.len())?;
    let values = i_post
        .values()
        .iter()
        .zip(vibrato)
        .map(|(a, b)| a + b)
        .collect();
    i_post.with_values(values)
}
