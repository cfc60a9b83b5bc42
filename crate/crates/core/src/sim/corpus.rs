//! Synthetic "sung" performances for exercising the pipeline without a corpus.
//!
//! Notes follow a bounded random walk. The contour glides between notes,
//! drifts slowly, carries natural vibrato on some long notes, and has a
//! little frame jitter. Rests are unvoiced.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::triangular_smooth_values;
use crate::contour::{midi_to_hz_value, Note, NoteSequence, PitchContour};
use crate::{rng, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub duration_seconds: f64,
    pub frame_period: f64,
    /// Chance that a note lasts 1.1–2.5 s rather than 0.25–0.9 s.
    pub long_note_probability: f64,
    pub rest_probability: f64,
    /// Chance that a long note is sung with vibrato of its own.
    pub natural_vibrato_probability: f64,
    /// Standard deviation of the frame jitter, in semitones.
    pub jitter_midi: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            duration_seconds: 30.0,
            frame_period: 0.01,
            long_note_probability: 0.5,
            rest_probability: 0.2,
            natural_vibrato_probability: 0.4,
            jitter_midi: 0.03,
            seed: 0,
        }
    }
}

fn draw_notes(cfg: &CorpusConfig, rng: &mut rng::Rng) -> Vec<Note> {
    let mut notes = Vec::new();
    let mut time = 0.2;
    let mut midi: i32 = rng.gen_range(57..=67);
    let end = cfg.duration_seconds - 0.2;
    loop {
        let dur = if rng.gen::<f64>() < cfg.long_note_probability {
            rng.gen_range(1.1..2.5)
        } else {
            rng.gen_range(0.25..0.9)
        };
        if time + dur > end {
            break;
        }
        notes.push(Note {
            midi,
            onset: time,
            offset: time + dur,
        });
        time += dur;
        if rng.gen::<f64>() < cfg.rest_probability {
            time += rng.gen_range(0.1..0.4);
        }
        midi = (midi + rng.gen_range(-4..=4)).clamp(52, 74);
    }
    notes
}

/// One synthetic performance: an F0 contour in Hz and the score it follows.
pub fn synthetic_performance(cfg: &CorpusConfig) -> Result<(PitchContour, NoteSequence)> {
    let mut rng = rng::rng(cfg.seed);
    let notes = draw_notes(cfg, &mut rng);
    let n = (cfg.duration_seconds / cfg.frame_period).round() as usize;
    let fr = 1.0 / cfg.frame_period;

    // Step target held through rests, then smoothed into ~70 ms glides.
    let mut target = vec![notes.first().map_or(60.0, |n| n.midi as f64); n];
    let mut voiced = vec![false; n];
    let mut vibrato = vec![0.0; n];
    for note in &notes {
        let a = (note.onset * fr).round() as usize;
        let b = ((note.offset * fr).round() as usize).min(n);
        target[a..].fill(note.midi as f64);
        voiced[a..b].fill(true);
        if note.duration() > 1.0 && rng.gen::<f64>() < cfg.natural_vibrato_probability {
            let rate = rng.gen_range(5.0..7.0);
            let depth = rng.gen_range(0.2..0.8);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let delay = (0.3 * fr) as usize;
            for (k, v) in vibrato[a..b].iter_mut().enumerate() {
                let env = depth * ((k.saturating_sub(delay)) as f64 / (0.3 * fr)).min(1.0);
                *v = env * (2.0 * PI * rate * k as f64 / fr + phase).sin();
            }
        }
    }
    let glide = triangular_smooth_values(&target, 7)?;

    let drift_rate = rng.gen_range(0.15..0.4);
    let drift_phase = rng.gen_range(0.0..2.0 * PI);
    let jitter = Normal::new(0.0, cfg.jitter_midi.max(f64::MIN_POSITIVE)).expect("positive std");
    let noise: Vec<f64> = (0..n).map(|_| jitter.sample(&mut rng)).collect();
    let noise = triangular_smooth_values(&noise, 3)?;

    let frames = (0..n)
        .map(|t| {
            if !voiced[t] {
                return 0.0;
            }
            let drift = 0.1 * (2.0 * PI * drift_rate * t as f64 / fr + drift_phase).sin();
            midi_to_hz_value(glide[t] + drift + vibrato[t] + noise[t])
        })
        .collect();
    Ok((
        PitchContour::new(frames, cfg.frame_period)?,
        NoteSequence::new(notes)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{hz_to_midi, rasterize_notes};

    #[test]
    fn performance_follows_its_score() {
        let cfg = CorpusConfig {
            seed: 3,
            ..Default::default()
        };
        let (contour, notes) = synthetic_performance(&cfg).unwrap();
        assert_eq!(contour.len(), 3000);
        assert!(notes.len() > 10);
        assert!(notes.notes().iter().any(|n| n.duration() > 1.0));
        let midi = hz_to_midi(&contour).unwrap();
        let fnotes = rasterize_notes(&notes, contour.len(), 0.01);
        for span in fnotes.spans() {
            let mid = (span.start + span.end) / 2;
            assert!(midi.voicing()[mid]);
            assert!((midi.values()[mid] - span.midi as f64).abs() < 1.5);
        }
        assert_eq!(synthetic_performance(&cfg).unwrap(), (contour, notes));
    }
}
