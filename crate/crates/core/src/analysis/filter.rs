use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Band-pass used to isolate vibrato from the intonation line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    pub taps: usize,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            low_cut: 3.0,
            high_cut: 8.0,
            taps: 257,
        }
    }
}

impl BandpassSpec {
    pub fn validate(&self, frame_rate: f64) -> Result<()> {
        if !(self.low_cut > 0.0 && self.low_cut < self.high_cut && self.high_cut < frame_rate / 2.0)
        {
            return Err(Error::invalid(format!(
                "band edges must satisfy 0 < {} < {} < {}",
                self.low_cut,
                self.high_cut,
                frame_rate / 2.0
            )));
        }
        if self.taps % 2 == 0 || self.taps < 3 {
            return Err(Error::invalid(format!(
                "tap count must be odd and at least 3, got {}",
                self.taps
            )));
        }
        Ok(())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hamming-windowed sinc band-pass taps (difference of two ideal low-passes).
///
/// The taps are mirrored so they are exactly symmetric (linear phase, delay
/// `(taps - 1) / 2` frames), and a scaled copy of the window is subtracted so
/// the DC gain is exactly zero: contours sit around midi 60, where even a
/// -60 dB leak would show up as a visible offset.
pub fn design_bandpass(spec: &BandpassSpec, frame_rate: f64) -> Result<Vec<f64>> {
    spec.validate(frame_rate)?;
    let n = spec.taps;
    let half = n / 2;
    let lo = spec.low_cut / frame_rate;
    let hi = spec.high_cut / frame_rate;
    let window: Vec<f64> = (0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k.min(n - 1 - k) as f64 / (n - 1) as f64).cos())
        .collect();
    let mut taps: Vec<f64> = (0..n)
        .map(|k| {
            let m = k.abs_diff(half) as f64;
            (2.0 * hi * sinc(2.0 * hi * m) - 2.0 * lo * sinc(2.0 * lo * m)) * window[k]
        })
        .collect();
    let dc = taps.iter().sum::<f64>() / window.iter().sum::<f64>();
    for (t, w) in taps.iter_mut().zip(&window) {
        *t -= dc * w;
    }
    Ok(taps)
}

/// Convolves `x` with the odd-length symmetric `taps` and removes the group
/// delay, so output frame `t` lines up with input frame `t`.
///
/// The signal is extended at each end by point reflection about the edge
/// sample (`2 x[0] - x[k]`), which keeps constants and linear trends intact
/// and keeps the operation linear in `x`.
pub fn fir_filter_aligned(x: &[f64], taps: &[f64]) -> Result<Vec<f64>> {
    let half = taps.len() / 2;
    if taps.len() % 2 == 0 {
        return Err(Error::invalid("tap count must be odd"));
    }
    if x.len() <= taps.len() {
        return Err(Error::invalid(format!(
            "contour of {} frames is not longer than the {}-tap filter",
            x.len(),
            taps.len()
        )));
    }
    let n = x.len();
    let mut padded = Vec::with_capacity(n + 2 * half);
    padded.extend((1..=half).rev().map(|k| 2.0 * x[0] - x[k]));
    padded.extend_from_slice(x);
    padded.extend((1..=half).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
    Ok((0..n)
        .map(|t| {
            padded[t..t + taps.len()]
                .iter()
                .zip(taps.iter().rev())
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect())
}
