use crate::contour::MidiContour;
use crate::{Error, Result};

/// Window length in frames: `window_seconds * frame_rate` rounded to the
/// nearest odd integer (ties go down).
pub fn window_frames(window_seconds: f64, frame_rate: f64) -> Result<usize> {
    let raw = window_seconds * frame_rate;
    if !raw.is_finite() || raw <= 0.0 {
        return Err(Error::invalid(format!(
            "invalid smoothing window {window_seconds} s"
        )));
    }
    let len = 2 * (raw / 2.0).floor() as usize + 1;
    if len < 3 {
        return Err(Error::invalid(format!(
            "smoothing window of {window_seconds} s is shorter than 3 frames"
        )));
    }
    Ok(len)
}

/// Integer triangle `1, 2, .., m, .., 2, 1` for odd `len = 2m - 1`; the weights sum to `m²`.
pub fn triangular_kernel(len: usize) -> Vec<f64> {
    let m = (len + 1) / 2;
    (0..len).map(|k| (m - k.abs_diff(m - 1)) as f64).collect()
}

/// Unit-area triangular smoothing with reflection padding (`x[-k] = x[k]`).
///
/// Each output is computed as `x[t] + Σ w (x[t+k] - x[t]) / Σ w`, so a
/// constant input comes back bit-for-bit unchanged.
pub fn triangular_smooth_values(x: &[f64], len: usize) -> Result<Vec<f64>> {
    if len % 2 == 0 || len < 3 {
        return Err(Error::invalid(format!(
            "window length {len} must be odd and at least 3"
        )));
    }
    if len > x.len() {
        return Err(Error::invalid(format!(
            "window of {len} frames is longer than the {}-frame contour",
            x.len()
        )));
    }
    let kernel = triangular_kernel(len);
    let total: f64 = kernel.iter().sum();
    let half = len / 2;
    let n = x.len() as isize;
    let at = |i: isize| -> f64 {
        let r = if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        };
        x[r as usize]
    };
    Ok((0..x.len())
        .map(|t| {
            let centre = x[t];
            let acc: f64 = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * (at(t as isize + k as isize - half as isize) - centre))
                .sum();
            centre + acc / total
        })
        .collect())
}

/// Triangular (Bartlett) smoothing of a contour over `window_seconds`.
pub fn smooth_triangular(contour: &MidiContour, window_seconds: f64) -> Result<MidiContour> {
    let len = window_frames(window_seconds, contour.frame_rate())?;
    let values = triangular_smooth_values(contour.values(), len)?;
    contour.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kernel_shape() {
        assert_eq!(triangular_kernel(3), vec![1.0, 2.0, 1.0]);
        assert_eq!(triangular_kernel(5), vec![1.0, 2.0, 3.0, 2.0, 1.0]);
        assert_eq!(window_frames(0.6, 100.0).unwrap(), 61);
        assert_eq!(window_frames(0.03, 100.0).unwrap(), 3);
        assert!(window_frames(0.01, 100.0).is_err());
    }

    #[test]
    fn constant_is_fixed_point() {
        let c = MidiContour::voiced(vec![61.37; 200], 0.01).unwrap();
        let s = smooth_triangular(&c, 0.6).unwrap();
        assert_eq!(s, c);
    }

    #[test]
    fn impulse_response_three_taps() {
        let mut x = vec![0.0; 11];
        x[5] = 1.0;
        let y = triangular_smooth_values(&x, 3).unwrap();
        let mut expect = vec![0.0; 11];
        expect[4] = 0.25;
        expect[5] = 0.5;
        expect[6] = 0.25;
        assert_eq!(y, expect);
    }

    #[test]
    fn suppresses_six_hertz() {
        let x: Vec<f64> = (0..2000)
            .map(|t| (2.0 * PI * 6.0 * t as f64 / 100.0).sin())
            .collect();
        let c = MidiContour::voiced(x.iter().map(|v| v + 60.0).collect(), 0.01).unwrap();
        let y = smooth_triangular(&c, 0.6).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
        let dev: Vec<f64> = y.values()[100..1900].iter().map(|v| v - 60.0).collect();
        assert!(rms(&dev) < 0.1 * rms(&x[100..1900]));
    }

    #[test]
    fn too_long_window() {
        let c = MidiContour::voiced(vec![60.0; 20], 0.01).unwrap();
        assert!(smooth_triangular(&c, 0.6).is_err());
    }

    #[test]
    fn shift_equivariance_away_from_edges() {
        let x: Vec<f64> = (0..300)
            .map(|t| ((t * 37) % 11) as f64 * 0.1 + 60.0)
            .collect();
        let k = 17;
        let shifted: Vec<f64> = x[k..].to_vec();
        let a = triangular_smooth_values(&x, 21).unwrap();
        let b = triangular_smooth_values(&shifted, 21).unwrap();
        for t in 10..(shifted.len() - 10) {
            assert_eq!(a[t + k], b[t]);
        }
    }
}
