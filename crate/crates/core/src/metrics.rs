//! Objective metrics: F0 RMSE (Hz), F0 Pearson correlation, and mel-cepstral distortion.

use std::f64::consts::{LN_10, SQRT_2};

use crate::contour::PitchContour;
use crate::{Error, Result};
use ndarray::{s, Array2, Axis};

/// `10 / ln 10 · √2`, the dB scale factor of MCD.
pub const MCD_SCALE: f64 = 10.0 / LN_10 * SQRT_2;

/// Reference and test contours compared on frames voiced in both.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Pair {
    reference: PitchContour,
    test: PitchContour,
    mask: Vec<bool>,
}

impl F0Pair {
    pub fn new(reference: PitchContour, test: PitchContour) -> Result<Self> {
        if reference.len() != test.len() {
            return Err(Error::invalid(format!(
                "reference has {} frames, test has {}",
                reference.len(),
                test.len()
            )));
        }
        let mask = reference
            .voicing()
            .iter()
            .zip(test.voicing())
            .map(|(a, b)| *a && *b)
            .collect();
        Ok(F0Pair {
            reference,
            test,
            mask,
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn frames_compared(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    fn masked(&self) -> (Vec<f64>, Vec<f64>) {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(t, _)| (self.reference.frames()[t], self.test.frames()[t]))
            .unzip()
    }
}

pub fn f0_rmse(pair: &F0Pair) -> Result<f64> {
    let (r, t) = pair.masked();
    if r.is_empty() {
        return Err(Error::UndefinedMetric(
            "F0 RMSE: no frame is voiced in both contours".into(),
        ));
    }
    let mse = r
        .iter()
        .zip(&t)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / r.len() as f64;
    Ok(mse.sqrt())
}

/// Pearson correlation over the shared voiced frames.
pub fn f0_corr(pair: &F0Pair) -> Result<f64> {
    let (r, t) = pair.masked();
    if r.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "F0 CORR needs at least 2 shared voiced frames, got {}",
            r.len()
        )));
    }
    let n = r.len() as f64;
    let mr = r.iter().sum::<f64>() / n;
    let mt = t.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in r.iter().zip(&t) {
        let (da, db) = (a - mr, b - mt);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "F0 CORR: a series is constant".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two `T × C` cepstral sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstraPair {
    pub reference: Array2<f64>,
    pub test: Array2<f64>,
}

impl CepstraPair {
    pub fn new(reference: Array2<f64>, test: Array2<f64>) -> Result<Self> {
        if reference.dim() != test.dim() {
            return Err(Error::invalid(format!(
                "cepstra shapes differ: {:?} vs {:?}",
                reference.dim(),
                test.dim()
            )));
        }
        if reference.ncols() < 2 {
            return Err(Error::invalid("MCD needs at least 2 cepstral coefficients"));
        }
        if reference.nrows() == 0 {
            return Err(Error::invalid("MCD needs at least one frame"));
        }
        if reference.iter().chain(test.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("cepstra must be finite"));
        }
        Ok(CepstraPair { reference, test })
    }
}

/// Mean over frames of `MCD_SCALE · ‖c_ref[1..] - c_test[1..]‖₂`, in dB.
pub fn mcd(pair: &CepstraPair) -> f64 {
    let diff = &pair.reference.slice(s![.., 1..]) - &pair.test.slice(s![.., 1..]);
    let total: f64 = diff
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    MCD_SCALE * total / diff.nrows() as f64
}
