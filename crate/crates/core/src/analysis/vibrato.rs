use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::filter::{design_bandpass, fir_filter_aligned, BandpassSpec};
use super::hilbert::analytic_signal;
use crate::contour::{FrameNotes, MidiContour};
use crate::{Error, Result};

/// Frames whose envelope is below this many semitones report a rate of 0.
pub const DEPTH_FLOOR: f64 = 0.01;

/// Width of the median filter applied to the instantaneous rate.
pub const RATE_MEDIAN_FRAMES: usize = 5;

/// A contour split into its intonation line and its vibrato-band signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub intonation: MidiContour,
    /// Per-frame deviation in semitones.
    pub vibrato_component: Vec<f64>,
}

impl Decomposition {
    pub fn new(intonation: MidiContour, vibrato_component: Vec<f64>) -> Result<Self> {
        if intonation.len() != vibrato_component.len() {
            return Err(Error::invalid(format!(
                "intonation has {} frames but vibrato component has {}",
                intonation.len(),
                vibrato_component.len()
            )));
        }
        Ok(Decomposition {
            intonation,
            vibrato_component,
        })
    }

    pub fn len(&self) -> usize {
        self.vibrato_component.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vibrato_component.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.intonation.frame_rate()
    }

    /// `intonation + vibrato_component`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.intonation
            .values()
            .iter()
            .zip(&self.vibrato_component)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Initial phase of one vibrato segment, in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSegment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub phase: f64,
}

/// Per-frame vibrato depth (semitones), rate (Hz) and likeliness, with one
/// initial phase per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct VibratoParams {
    pub depth: Vec<f64>,
    pub rate: Vec<f64>,
    pub phase: Vec<PhaseSegment>,
    /// Unset until a labeler or ground-truth labels provide it.
    pub likeliness: Option<Vec<f64>>,
}

impl VibratoParams {
    pub fn new(
        depth: Vec<f64>,
        rate: Vec<f64>,
        phase: Vec<PhaseSegment>,
        likeliness: Option<Vec<f64>>,
    ) -> Result<Self> {
        let p = VibratoParams {
            depth,
            rate,
            phase,
            likeliness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.depth.len();
        if self.rate.len() != n {
            return Err(Error::invalid(format!(
                "rate has {} frames, depth has {n}",
                self.rate.len()
            )));
        }
        if let Some(l) = &self.likeliness {
            if l.len() != n {
                return Err(Error::invalid(format!(
                    "likeliness has {} frames, depth has {n}",
                    l.len()
                )));
            }
            if let Some(t) = l.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "frame {t}: likeliness outside [0, 1]"
                )));
            }
        }
        if let Some(t) = self
            .depth
            .iter()
            .position(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::invalid(format!(
                "frame {t}: depth must be finite and non-negative"
            )));
        }
        if let Some(t) = self.rate.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid(format!(
                "frame {t}: rate must be finite and non-negative"
            )));
        }
        for s in &self.phase {
            if s.start >= s.end || s.end > n || !s.phase.is_finite() {
                return Err(Error::invalid(format!("bad phase segment {s:?}")));
            }
        }
        Ok(())
    }

    pub fn with_likeliness(mut self, likeliness: Vec<f64>) -> Result<Self> {
        self.likeliness = Some(likeliness);
        self.validate()?;
        Ok(self)
    }

    /// Phase of the segment that contains frame `t`.
    pub fn phase_at(&self, t: usize) -> Option<f64> {
        self.phase
            .iter()
            .find(|s| (s.start..s.end).contains(&t))
            .map(|s| s.phase)
    }
}

/// Splits a gap-free contour into intonation and the band-passed vibrato signal.
///
/// The vibrato component is the zero-delay FIR output; intonation is the
/// input minus that component.
pub fn bandpass_vibrato(contour: &MidiContour, spec: &BandpassSpec) -> Result<Decomposition> {
    let taps = design_bandpass(spec, contour.frame_rate())?;
    let vib = fir_filter_aligned(contour.values(), &taps)?;
    let intonation: Vec<f64> = contour
        .values()
        .iter()
        .zip(&vib)
        .map(|(x, v)| x - v)
        .collect();
    Decomposition::new(contour.with_values(intonation)?, vib)
}

fn median_filter(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut window = Vec::with_capacity(width);
    (0..x.len())
        .map(|t| {
            window.clear();
            window.extend_from_slice(&x[t.saturating_sub(half)..(t + half + 1).min(x.len())]);
            window.sort_by(f64::total_cmp);
            let m = window.len();
            if m % 2 == 1 {
                window[m / 2]
            } else {
                0.5 * (window[m / 2 - 1] + window[m / 2])
            }
        })
        .collect()
}

fn unwrap(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (t, &p) in phase.iter().enumerate() {
        if t > 0 {
            let d = p - phase[t - 1];
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
    }
    out
}

struct Instantaneous {
    depth: Vec<f64>,
    rate: Vec<f64>,
    phase: Vec<f64>,
}

fn instantaneous(vib: &[f64], frame_rate: f64) -> Result<Instantaneous> {
    if let Some(t) = vib.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "frame {t}: non-finite vibrato component"
        )));
    }
    let z = analytic_signal(vib)?;
    let depth: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    let phase: Vec<f64> = z.iter().map(|c| c.arg()).collect();
    let unwrapped = unwrap(&phase);
    let n = vib.len();
    let scale = frame_rate / (2.0 * PI);
    let raw: Vec<f64> = (0..n)
        .map(|t| {
            let d = if n < 2 {
                0.0
            } else if t == 0 {
                unwrapped[1] - unwrapped[0]
            } else if t == n - 1 {
                unwrapped[n - 1] - unwrapped[n - 2]
            } else {
                0.5 * (unwrapped[t + 1] - unwrapped[t - 1])
            };
            (d * scale).max(0.0)
        })
        .collect();
    let rate = median_filter(&raw, RATE_MEDIAN_FRAMES)
        .into_iter()
        .zip(&depth)
        .map(|(r, &d)| if d < DEPTH_FLOOR { 0.0 } else { r })
        .collect();
    Ok(Instantaneous { depth, rate, phase })
}

/// Depth, rate and phase from the analytic signal of the vibrato component.
///
/// Depth is the envelope magnitude; rate is the derivative of the unwrapped
/// phase in Hz, clamped at 0 and median-filtered over five frames. Segments
/// are maximal runs of frames whose depth reaches [`DEPTH_FLOOR`]; each
/// records the instantaneous phase at its first frame.
pub fn extract_vibrato_params(decomp: &Decomposition) -> Result<VibratoParams> {
    let inst = instantaneous(&decomp.vibrato_component, decomp.frame_rate())?;
    let mut segments: Vec<PhaseSegment> = Vec::new();
    for (t, &d) in inst.depth.iter().enumerate() {
        if d < DEPTH_FLOOR {
            continue;
        }
        match segments.last_mut() {
            Some(s) if s.end == t => s.end = t + 1,
            _ => segments.push(PhaseSegment {
                start: t,
                end: t + 1,
                phase: inst.phase[t],
            }),
        }
    }
    VibratoParams::new(inst.depth, inst.rate, segments, None)
}

/// Per-note parameters for note-gated synthesis, which evaluates
/// `cos(2π r k / frame_rate + φ)` with `k` counted from each note's first
/// frame. That form only stays in phase with the analysed vibrato when `r` is
/// constant over the note, so inside a note the rate is the depth²-weighted
/// mean of the instantaneous rate, and φ is the depth²-weighted circular mean
/// of `θ_t - 2π r k / frame_rate` (the note's vibrato phase carried back to
/// its onset). Depth stays per frame; rest frames keep the instantaneous rate.
pub fn extract_vibrato_params_by_notes(
    decomp: &Decomposition,
    frame_notes: &FrameNotes,
) -> Result<VibratoParams> {
    if frame_notes.len() != decomp.len() {
        return Err(Error::invalid(format!(
            "score covers {} frames but the contour has {}",
            frame_notes.len(),
            decomp.len()
        )));
    }
    let fr = decomp.frame_rate();
    let mut inst = instantaneous(&decomp.vibrato_component, fr)?;
    let mut segments = Vec::new();
    for s in frame_notes.spans() {
        let weight: f64 = inst.depth[s.range()].iter().map(|d| d * d).sum();
        let (rate, phase) = if weight > 0.0 {
            let rate = s
                .range()
                .map(|t| inst.rate[t] * inst.depth[t].powi(2))
                .sum::<f64>()
                / weight;
            let (mut re, mut im) = (0.0, 0.0);
            for (k, t) in s.range().enumerate() {
                let a = inst.phase[t] - 2.0 * PI * rate * k as f64 / fr;
                let w = inst.depth[t].powi(2);
                re += w * a.cos();
                im += w * a.sin();
            }
            (rate, im.atan2(re))
        } else {
            (0.0, 0.0)
        };
        inst.rate[s.range()].fill(rate);
        segments.push(PhaseSegment {
            start: s.start,
            end: s.end,
            phase,
        });
    }
    VibratoParams::new(inst.depth, inst.rate, segments, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt()
    }

    fn voiced(values: Vec<f64>) -> MidiContour {
        MidiContour::voiced(values, 0.01).unwrap()
    }

    fn decomp_of(vib: Vec<f64>) -> Decomposition {
        let n = vib.len();
        Decomposition::new(voiced(vec![60.0; n]), vib).unwrap()
    }

    const EDGE: usize = 128;

    #[test]
    fn isolates_the_vibrato_addend() {
        let n = 2000;
        let x: Vec<f64> = (0..n)
            .map(|t| {
                let t = t as f64;
                60.0 + (2.0 * PI * t / 100.0).cos() + 0.5 * (2.0 * PI * 6.0 * t / 100.0).cos()
            })
            .collect();
        let d = bandpass_vibrato(&voiced(x.clone()), &BandpassSpec::default()).unwrap();
        let err: Vec<f64> = (EDGE..n - EDGE)
            .map(|t| d.vibrato_component[t] - 0.5 * (2.0 * PI * 6.0 * t as f64 / 100.0).cos())
            .collect();
        assert!(rms(&err) < 0.05, "rms {}", rms(&err));
        for (r, x) in d.reconstruct().iter().zip(&x) {
            assert!((r - x).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_has_no_vibrato() {
        let d = bandpass_vibrato(&voiced(vec![63.2; 600]), &BandpassSpec::default()).unwrap();
        assert!(d.vibrato_component.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn twelve_hertz_is_rejected() {
        let n = 2000;
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * 12.0 * t as f64 / 100.0).sin())
            .collect();
        let d = bandpass_vibrato(
            &voiced(x.iter().map(|v| v + 60.0).collect()),
            &BandpassSpec::default(),
        )
        .unwrap();
        assert!(rms(&d.vibrato_component[EDGE..n - EDGE]) < 0.05 * rms(&x[EDGE..n - EDGE]));
    }

    #[test]
    fn short_contour_is_rejected() {
        assert!(bandpass_vibrato(&voiced(vec![60.0; 257]), &BandpassSpec::default()).is_err());
    }

    #[test]
    fn known_cosine_parameters() {
        let vib: Vec<f64> = (0..1000)
            .map(|t| 1.2 * (2.0 * PI * 5.0 * t as f64 / 100.0 + 0.3).cos())
            .collect();
        let p = extract_vibrato_params(&decomp_of(vib)).unwrap();
        for t in EDGE..1000 - EDGE {
            assert!((p.depth[t] - 1.2).abs() < 0.05);
            assert!((p.rate[t] - 5.0).abs() < 0.2);
        }
        assert_eq!(p.phase.len(), 1);
        assert!((p.phase[0].phase - 0.3).abs() < 0.1);
        assert!(p.likeliness.is_none());
    }

    #[test]
    fn zero_signal_convention() {
        let p = extract_vibrato_params(&decomp_of(vec![0.0; 300])).unwrap();
        assert!(p.depth.iter().all(|&d| d == 0.0));
        assert!(p.rate.iter().all(|&r| r == 0.0));
        assert!(p.phase.is_empty());
        assert!(extract_vibrato_params(&decomp_of(vec![])).is_err());
    }

    #[test]
    fn tracks_a_linear_envelope() {
        let n = 1000;
        let env = |t: usize| 2.0 * t as f64 / (n - 1) as f64;
        let vib: Vec<f64> = (0..n)
            .map(|t| env(t) * (2.0 * PI * 6.0 * t as f64 / 100.0).cos())
            .collect();
        let p = extract_vibrato_params(&decomp_of(vib)).unwrap();
        for t in EDGE..n - EDGE {
            assert!(
                (p.depth[t] - env(t)).abs() < 0.1,
                "frame {t}: {} vs {}",
                p.depth[t],
                env(t)
            );
        }
    }

    #[test]
    fn linearity() {
        let n = 600;
        let x: Vec<f64> = (0..n)
            .map(|t| 60.0 + ((t * 31) % 17) as f64 * 0.05)
            .collect();
        let y: Vec<f64> = (0..n).map(|t| 62.0 + (t as f64 * 0.37).sin()).collect();
        let (a, b) = (0.7, 0.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let spec = BandpassSpec::default();
        let bx = bandpass_vibrato(&voiced(x), &spec)
            .unwrap()
            .vibrato_component;
        let by = bandpass_vibrato(&voiced(y), &spec)
            .unwrap()
            .vibrato_component;
        let bm = bandpass_vibrato(&voiced(mix), &spec)
            .unwrap()
            .vibrato_component;
        for t in 0..n {
            assert!((bm[t] - (a * bx[t] + b * by[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_by_notes() {
        use crate::contour::{rasterize_notes, Note, NoteSequence};
        let n = 1000;
        let vib: Vec<f64> = (0..n)
            .map(|t| (2.0 * PI * 5.0 * t as f64 / 100.0).cos())
            .collect();
        let notes = NoteSequence::new(vec![Note {
            midi: 60,
            onset: 2.0,
            offset: 4.0,
        }])
        .unwrap();
        let fnotes = rasterize_notes(&notes, n, 0.01);
        let p = extract_vibrato_params_by_notes(&decomp_of(vib), &fnotes).unwrap();
        assert_eq!(p.phase.len(), 1);
        assert_eq!((p.phase[0].start, p.phase[0].end), (200, 400));
        // Frame 200 is exactly ten whole cycles in.
        assert!(p.phase[0].phase.abs() < 1e-6);
        assert!(p.rate[200..400].iter().all(|&r| r == p.rate[200]));
        assert!((p.rate[200] - 5.0).abs() < 1e-3);
        assert_eq!(p.phase_at(250), Some(p.phase[0].phase));
        assert_eq!(p.phase_at(100), None);
    }

    #[test]
    fn unwrap_removes_jumps() {
        let raw: Vec<f64> = (0..50)
            .map(|t| ((t as f64 * 0.9 + PI) % (2.0 * PI)) - PI)
            .collect();
        let u = unwrap(&raw);
        for w in u.windows(2) {
            assert!((w[1] - w[0] - 0.9).abs() < 1e-12);
        }
    }
}
