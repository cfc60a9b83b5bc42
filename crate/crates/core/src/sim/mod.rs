//! Simulated training data with known frame-level vibrato labels.
//!
//! A real contour is smoothed to strip its natural vibrato, then a random
//! half of its long notes receive a ramped sinusoid. The frames where the
//! injected envelope is positive are the positive labels.

mod corpus;

pub use corpus::{synthetic_performance, CorpusConfig};

use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::smooth_triangular;
use crate::contour::{rasterize_notes, MidiContour, NoteSequence};
use crate::{rng, Error, Result};

/// Probability that an eligible note receives vibrato.
pub const SELECTION_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub rate_hz: f64,
    pub depth_max_midi: f64,
    pub min_note_seconds: f64,
    pub smoothing_window_seconds: f64,
    pub ramp_seconds: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rate_hz: 6.0,
            depth_max_midi: 2.0,
            min_note_seconds: 1.0,
            smoothing_window_seconds: 0.6,
            ramp_seconds: 0.2,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rate_hz", self.rate_hz),
            ("depth_max_midi", self.depth_max_midi),
            ("min_note_seconds", self.min_note_seconds),
            ("smoothing_window_seconds", self.smoothing_window_seconds),
            ("ramp_seconds", self.ramp_seconds),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One note that received synthetic vibrato.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectedSegment {
    pub note_index: usize,
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub depth_peak: f64,
    pub rate_hz: f64,
    pub phase: f64,
    pub ramp_frames: usize,
}

impl InjectedSegment {
    /// Envelope at frame `k` of the segment: linear rise over `ramp_frames`,
    /// hold at the peak, linear fall to 0 at the last frame.
    pub fn envelope(&self, k: usize) -> f64 {
        let n = self.end_frame - self.start_frame;
        if k >= n {
            return 0.0;
        }
        let r = self.ramp_frames.max(1) as f64;
        let up = k as f64 / r;
        let down = (n - 1 - k) as f64 / r;
        self.depth_peak * up.min(down).min(1.0)
    }

    /// Injected deviation at frame `k` of the segment.
    pub fn deviation(&self, k: usize, frame_rate: f64) -> f64 {
        self.envelope(k) * (2.0 * PI * self.rate_hz * k as f64 / frame_rate + self.phase).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Indices of notes long enough to be considered.
    pub eligible_notes: Vec<usize>,
    pub segments: Vec<InjectedSegment>,
    /// Set when no note was long enough; labels are then all zero.
    pub no_eligible_notes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledContour {
    pub contour: MidiContour,
    /// 0 or 1 per frame.
    pub labels: Vec<u8>,
    pub provenance: Provenance,
}

impl LabeledContour {
    /// The injected deviation per frame, rebuilt from the provenance record.
    pub fn injected(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.contour.len()];
        let fr = self.contour.frame_rate();
        for s in &self.provenance.segments {
            for (k, t) in (s.start_frame..s.end_frame).enumerate() {
                out[t] = s.deviation(k, fr);
            }
        }
        out
    }
}

/// Builds one labeled contour from a gap-free contour and its score.
pub fn simulate(
    contour: &MidiContour,
    notes: &NoteSequence,
    cfg: &SimConfig,
) -> Result<LabeledContour> {
    cfg.validate()?;
    let smoothed = smooth_triangular(contour, cfg.smoothing_window_seconds)?;
    let fr = contour.frame_rate();
    let ramp_frames = ((cfg.ramp_seconds * fr).round() as usize).max(1);
    let spans = rasterize_notes(notes, contour.len(), contour.frame_period()).spans();

    let eligible: Vec<_> = spans
        .iter()
        .filter(|s| notes.notes()[s.note_index].duration() > cfg.min_note_seconds)
        .collect();

    let mut rng = rng::rng(cfg.seed);
    let mut segments = Vec::new();
    for span in &eligible {
        if rng.gen::<f64>() >= SELECTION_PROBABILITY {
            continue;
        }
        // (0, depth_max]
        let depth_peak = cfg.depth_max_midi * (1.0 - rng.gen::<f64>());
        let phase = 2.0 * PI * rng.gen::<f64>();
        segments.push(InjectedSegment {
            note_index: span.note_index,
            start_frame: span.start,
            end_frame: span.end,
            depth_peak,
            rate_hz: cfg.rate_hz,
            phase,
            ramp_frames,
        });
    }

    let mut values = smoothed.values().to_vec();
    let mut labels = vec![0u8; contour.len()];
    for s in &segments {
        for (k, t) in (s.start_frame..s.end_frame).enumerate() {
            values[t] += s.deviation(k, fr);
            if s.envelope(k) > 0.0 {
                labels[t] = 1;
            }
        }
    }

    if eligible.is_empty() {
        log::warn!(
            "no note longer than {} s; labels are all zero",
            cfg.min_note_seconds
        );
    }
    Ok(LabeledContour {
        contour: smoothed.with_values(values)?,
        labels,
        provenance: Provenance {
            seed: cfg.seed,
            eligible_notes: eligible.iter().map(|s| s.note_index).collect(),
            segments,
            no_eligible_notes: eligible.is_empty(),
        },
    })
}

/// Runs [`simulate`] on every item with seed `cfg.seed + index`.
pub fn dataset_from_corpus(
    corpus: &[(MidiContour, NoteSequence)],
    cfg: &SimConfig,
) -> Result<Vec<LabeledContour>> {
    corpus
        .iter()
        .enumerate()
        .map(|(index, (contour, notes))| {
            let item_cfg = SimConfig {
                seed: cfg.seed.wrapping_add(index as u64),
                ..*cfg
            };
            simulate(contour, notes, &item_cfg).map_err(|e| Error::Item {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
