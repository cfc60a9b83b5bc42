//! Frame-level pitch contours, note scores, and conversions between them.

mod io;

pub use io::{
    format_contour_csv, format_score_json, infer_frame_period, parse_contour_csv, parse_score_json,
    read_contour_csv, read_score_json, write_contour_csv,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Analysis hop used throughout, in seconds.
pub const DEFAULT_FRAME_PERIOD: f64 = 0.010;

/// Tolerance used when comparing frame times against note boundaries.
const TIME_EPS: f64 = 1e-9;

fn check_frame_period(frame_period: f64) -> Result<()> {
    if !(frame_period.is_finite() && frame_period > 0.0) {
        return Err(Error::invalid(format!(
            "frame period must be positive and finite, got {frame_period}"
        )));
    }
    Ok(())
}

/// F0 contour in Hz. Unvoiced frames carry exactly `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchContour {
    frames: Vec<f64>,
    voicing: Vec<bool>,
    frame_period: f64,
}

impl PitchContour {
    /// Builds a contour whose voicing is derived from the values (`0.0` = unvoiced).
    pub fn new(frames: Vec<f64>, frame_period: f64) -> Result<Self> {
        let voicing = frames.iter().map(|&f| f != 0.0).collect();
        Self::from_parts(frames, voicing, frame_period)
    }

    pub fn from_parts(frames: Vec<f64>, voicing: Vec<bool>, frame_period: f64) -> Result<Self> {
        check_frame_period(frame_period)?;
        if frames.len() != voicing.len() {
            return Err(Error::invalid(format!(
                "frame count {} does not match voicing count {}",
                frames.len(),
                voicing.len()
            )));
        }
        for (t, (&f, &v)) in frames.iter().zip(&voicing).enumerate() {
            if v && !(f.is_finite() && f > 0.0) {
                return Err(Error::invalid(format!(
                    "frame {t}: voiced f0 must be positive and finite, got {f}"
                )));
            }
            if !v && f != 0.0 {
                return Err(Error::invalid(format!(
                    "frame {t}: unvoiced frame must carry 0 Hz, got {f}"
                )));
            }
        }
        Ok(PitchContour {
            frames,
            voicing,
            frame_period,
        })
    }

    pub fn frames(&self) -> &[f64] {
        &self.frames
    }

    pub fn voicing(&self) -> &[bool] {
        &self.voicing
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_period
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Pitch contour in (fractional) midi semitones.
///
/// Values on unvoiced frames are unconstrained, which lets an interpolated
/// contour keep its original voicing mask for re-masking after filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct MidiContour {
    values: Vec<f64>,
    voicing: Vec<bool>,
    frame_period: f64,
}

impl MidiContour {
    pub fn new(values: Vec<f64>, voicing: Vec<bool>, frame_period: f64) -> Result<Self> {
        check_frame_period(frame_period)?;
        if values.len() != voicing.len() {
            return Err(Error::invalid(format!(
                "frame count {} does not match voicing count {}",
                values.len(),
                voicing.len()
            )));
        }
        for (t, (&m, &v)) in values.iter().zip(&voicing).enumerate() {
            if !m.is_finite() {
                return Err(Error::invalid(format!("frame {t}: non-finite midi value")));
            }
            if v && !(0.0..=127.0).contains(&m) {
                return Err(Error::invalid(format!(
                    "frame {t}: voiced midi value {m} outside [0, 127]"
                )));
            }
        }
        Ok(MidiContour {
            values,
            voicing,
            frame_period,
        })
    }

    /// A contour with every frame voiced.
    pub fn voiced(values: Vec<f64>, frame_period: f64) -> Result<Self> {
        let voicing = vec![true; values.len()];
        Self::new(values, voicing, frame_period)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn voicing(&self) -> &[bool] {
        &self.voicing
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_period
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same voicing and frame period, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.voicing.clone(), self.frame_period)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub fn hz_to_midi_value(hz: f64) -> f64 {
    69.0 + 12.0 * (hz / 440.0).log2()
}

pub fn midi_to_hz_value(midi: f64) -> f64 {
    440.0 * ((midi - 69.0) / 12.0).exp2()
}

/// Converts voiced frames with `midi = 69 + 12 log2(f0 / 440)`.
/// Unvoiced frames stay unvoiced with value `0.0`.
pub fn hz_to_midi(contour: &PitchContour) -> Result<MidiContour> {
    let mut values = Vec::with_capacity(contour.len());
    for (t, (&f, &v)) in contour.frames.iter().zip(&contour.voicing).enumerate() {
        if !v {
            values.push(0.0);
            continue;
        }
        if !f.is_finite() {
            return Err(Error::invalid(format!("frame {t}: non-finite f0")));
        }
        values.push(hz_to_midi_value(f));
    }
    MidiContour::new(values, contour.voicing.clone(), contour.frame_period)
}

/// Inverse of [`hz_to_midi`] on voiced frames; unvoiced frames become 0 Hz.
pub fn midi_to_hz(contour: &MidiContour) -> PitchContour {
    let frames = contour
        .values
        .iter()
        .zip(&contour.voicing)
        .map(|(&m, &v)| if v { midi_to_hz_value(m) } else { 0.0 })
        .collect();
    PitchContour {
        frames,
        voicing: contour.voicing.clone(),
        frame_period: contour.frame_period,
    }
}

/// One score note. The interval is half-open: `[onset, offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub midi: i32,
    #[serde(rename = "onset_s")]
    pub onset: f64,
    #[serde(rename = "offset_s")]
    pub offset: f64,
}

impl Note {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }
}

/// Sorted, non-overlapping score notes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoteSequence {
    notes: Vec<Note>,
}

impl NoteSequence {
    pub fn new(notes: Vec<Note>) -> Result<Self> {
        for (i, n) in notes.iter().enumerate() {
            if !(n.onset.is_finite() && n.offset.is_finite()) {
                return Err(Error::invalid(format!("note {i}: non-finite time")));
            }
            if n.onset >= n.offset {
                return Err(Error::invalid(format!(
                    "note {i}: onset {} is not before offset {}",
                    n.onset, n.offset
                )));
            }
            if !(0..=127).contains(&n.midi) {
                return Err(Error::invalid(format!(
                    "note {i}: midi {} outside [0, 127]",
                    n.midi
                )));
            }
        }
        for (i, pair) in notes.windows(2).enumerate() {
            if pair[1].onset < pair[0].offset {
                return Err(Error::invalid(format!(
                    "notes {i} and {} overlap or are out of order",
                    i + 1
                )));
            }
        }
        Ok(NoteSequence { notes })
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

/// Frames covered by one note.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteSpan {
    pub note_index: usize,
    pub midi: i32,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

impl NoteSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Score rasterized onto the contour's frame grid. `None` marks a rest frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameNotes {
    note_index: Vec<Option<usize>>,
    note_midi: Vec<Option<i32>>,
}

impl FrameNotes {
    pub fn len(&self) -> usize {
        self.note_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.note_index.is_empty()
    }

    pub fn note_index(&self) -> &[Option<usize>] {
        &self.note_index
    }

    pub fn note_midi(&self) -> &[Option<i32>] {
        &self.note_midi
    }

    pub fn is_rest(&self, t: usize) -> bool {
        self.note_index[t].is_none()
    }

    /// Contiguous frame runs per note, in frame order. Notes that cover no frame are absent.
    pub fn spans(&self) -> Vec<NoteSpan> {
        let mut spans: Vec<NoteSpan> = Vec::new();
        for (t, (idx, midi)) in self.note_index.iter().zip(&self.note_midi).enumerate() {
            let (Some(idx), Some(midi)) = (idx, midi) else {
                continue;
            };
            match spans.last_mut() {
                Some(s) if s.note_index == *idx && s.end == t => s.end = t + 1,
                _ => spans.push(NoteSpan {
                    note_index: *idx,
                    midi: *midi,
                    start: t,
                    end: t + 1,
                }),
            }
        }
        spans
    }
}

/// Frame `t` belongs to the note whose `[onset, offset)` contains `t * frame_period`.
pub fn rasterize_notes(notes: &NoteSequence, frame_count: usize, frame_period: f64) -> FrameNotes {
    let mut note_index = vec![None; frame_count];
    let mut note_midi = vec![None; frame_count];
    let mut cursor = 0;
    for t in 0..frame_count {
        let time = t as f64 * frame_period;
        while cursor < notes.notes.len() && notes.notes[cursor].offset - TIME_EPS <= time {
            cursor += 1;
        }
        if let Some(n) = notes.notes.get(cursor) {
            if n.onset - TIME_EPS <= time {
                note_index[t] = Some(cursor);
                note_midi[t] = Some(n.midi);
            }
        }
    }
    FrameNotes {
        note_index,
        note_midi,
    }
}

/// Fills unvoiced gaps by linear interpolation between voiced neighbours and
/// holds edge values outward. The voicing mask is carried over unchanged.
pub fn interpolate_unvoiced(contour: &MidiContour) -> Result<MidiContour> {
    let voiced: Vec<usize> = (0..contour.len()).filter(|&t| contour.voicing[t]).collect();
    let (Some(&first), Some(&last)) = (voiced.first(), voiced.last()) else {
        return Err(Error::invalid("contour has no voiced frame"));
    };
    let v = &contour.values;
    let mut out = v.clone();
    out[..first].fill(v[first]);
    out[last + 1..].fill(v[last]);
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > 1 {
            let span = (b - a) as f64;
            for (k, slot) in out[a + 1..b].iter_mut().enumerate() {
                let w = (k + 1) as f64 / span;
                *slot = v[a] + (v[b] - v[a]) * w;
            }
        }
    }
    Ok(MidiContour {
        values: out,
        voicing: contour.voicing.clone(),
        frame_period: contour.frame_period,
    })
}
