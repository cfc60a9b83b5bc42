//! Frame-level vibrato likeliness labeler.
//!
//! A two-layer perceptron (5 inputs, `tanh` hidden layer, sigmoid output)
//! trained with binary cross-entropy on simulated contours whose vibrato
//! labels are known, then applied to real contours.

use serde::{Deserialize, Serialize};

use crate::analysis::{bandpass_vibrato, extract_vibrato_params, BandpassSpec};
use crate::contour::{FrameNotes, MidiContour};
use crate::optim::Adam;
use crate::synthesis::{note_gate_decision as gate, NoteGate};
use crate::{rng, Error, Result};

pub const FEATURE_DIM: usize = 5;
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "band_value",
    "band_local_rms",
    "hilbert_depth",
    "hilbert_rate",
    "note_position",
];
pub const DEFAULT_HIDDEN: usize = 16;
/// Centred window for the local RMS of the band signal.
pub const LOCAL_RMS_SECONDS: f64 = 0.25;
pub const MODEL_VERSION: u32 = 1;

/// Per-frame feature rows; `in_note` is false on rest frames, which are
/// excluded from training and always labeled 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub rows: Vec<[f64; FEATURE_DIM]>,
    pub in_note: Vec<bool>,
}

impl FrameFeatures {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn local_rms(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    (0..x.len())
        .map(|t| {
            let a = t.saturating_sub(half);
            let b = (t + half + 1).min(x.len());
            ((prefix[b] - prefix[a]).max(0.0) / (b - a) as f64).sqrt()
        })
        .collect()
}

pub fn featurize(contour: &MidiContour, frame_notes: &FrameNotes) -> Result<FrameFeatures> {
    featurize_with(contour, frame_notes, &BandpassSpec::default())
}

/// Features of a gap-free contour: band value, its local RMS, analytic
/// depth and rate, and the position within the note (0 at the first frame,
/// 1 at the last).
pub fn featurize_with(
    contour: &MidiContour,
    frame_notes: &FrameNotes,
    spec: &BandpassSpec,
) -> Result<FrameFeatures> {
    if frame_notes.len() != contour.len() {
        return Err(Error::invalid(format!(
            "score covers {} frames but the contour has {}",
            frame_notes.len(),
            contour.len()
        )));
    }
    let decomp = bandpass_vibrato(contour, spec)?;
    let params = extract_vibrato_params(&decomp)?;
    let band = &decomp.vibrato_component;
    let width = 2 * ((LOCAL_RMS_SECONDS * contour.frame_rate() / 2.0).round() as usize) + 1;
    let rms = local_rms(band, width);

    let mut position = vec![0.0; contour.len()];
    let mut in_note = vec![false; contour.len()];
    for span in frame_notes.spans() {
        let denom = (span.len() - 1).max(1) as f64;
        for (k, t) in span.range().enumerate() {
            position[t] = k as f64 / denom;
            in_note[t] = true;
        }
    }
    let rows = (0..contour.len())
        .map(|t| {
            [
                band[t],
                rms[t],
                params.depth[t],
                params.rate[t],
                position[t],
            ]
        })
        .collect();
    Ok(FrameFeatures { rows, in_note })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Share of sequences (taken from the end) held out for the report.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 300,
            seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

/// Perceptron parameters, flattened as `[W1 (hidden×5), b1, w2, b2]`, plus
/// the feature standardisation fitted on the training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelerModel {
    pub hidden: usize,
    params: Vec<f64>,
    pub feature_mean: [f64; FEATURE_DIM],
    pub feature_std: [f64; FEATURE_DIM],
    pub config: TrainConfig,
    /// Band-pass the features are computed with.
    pub bandpass: BandpassSpec,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on a logit, `max(z, 0) - z y + ln(1 + e^-|z|)`.
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl LabelerModel {
    fn param_count(hidden: usize) -> usize {
        hidden * FEATURE_DIM + 2 * hidden + 1
    }

    /// All parameters zero: every in-note frame scores exactly 0.5.
    pub fn zeros(hidden: usize, config: TrainConfig) -> Self {
        LabelerModel {
            hidden,
            params: vec![0.0; Self::param_count(hidden)],
            feature_mean: [0.0; FEATURE_DIM],
            feature_std: [1.0; FEATURE_DIM],
            config,
            bandpass: BandpassSpec::default(),
        }
    }

    /// Glorot-uniform weights drawn from `config.seed`.
    pub fn new(hidden: usize, config: TrainConfig) -> Self {
        use rand::Rng as _;
        let mut model = Self::zeros(hidden, config);
        let mut rng = rng::rng(rng::derive_seed(config.seed, "labeler-init", 0));
        let l1 = (6.0 / (FEATURE_DIM + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = hidden * FEATURE_DIM;
        for p in &mut model.params[..w1] {
            *p = rng.gen_range(-l1..l1);
        }
        for p in &mut model.params[w1 + hidden..w1 + 2 * hidden] {
            *p = rng.gen_range(-l2..l2);
        }
        model
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    fn standardise(&self, x: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            out[k] = (x[k] - self.feature_mean[k]) / self.feature_std[k];
        }
        out
    }

    /// Hidden activations and output logit for one feature row.
    fn forward(&self, params: &[f64], x: &[f64; FEATURE_DIM], hidden: &mut [f64]) -> f64 {
        let h = self.hidden;
        let (w1, rest) = params.split_at(h * FEATURE_DIM);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let xn = self.standardise(x);
        let mut z = b2[0];
        for j in 0..h {
            let row = &w1[j * FEATURE_DIM..(j + 1) * FEATURE_DIM];
            let a: f64 = b1[j] + row.iter().zip(&xn).map(|(w, v)| w * v).sum::<f64>();
            hidden[j] = a.tanh();
            z += w2[j] * hidden[j];
        }
        z
    }

    pub fn probability(&self, x: &[f64; FEATURE_DIM]) -> f64 {
        let mut hidden = vec![0.0; self.hidden];
        sigmoid(self.forward(&self.params, x, &mut hidden))
    }

    /// Mean binary cross-entropy over `(rows, targets)` and its gradient.
    pub fn loss_and_grad(&self, rows: &[[f64; FEATURE_DIM]], targets: &[f64]) -> (f64, Vec<f64>) {
        self.loss_and_grad_at(&self.params, rows, targets)
    }

    fn loss_and_grad_at(
        &self,
        params: &[f64],
        rows: &[[f64; FEATURE_DIM]],
        targets: &[f64],
    ) -> (f64, Vec<f64>) {
        let h = self.hidden;
        let m = rows.len().max(1) as f64;
        let mut grad = vec![0.0; params.len()];
        let mut hidden = vec![0.0; h];
        let mut total = 0.0;
        let w2_off = h * FEATURE_DIM + h;
        for (x, &y) in rows.iter().zip(targets) {
            let z = self.forward(params, x, &mut hidden);
            total += bce_logit(z, y);
            let g = (sigmoid(z) - y) / m;
            let xn = self.standardise(x);
            for j in 0..h {
                grad[w2_off + j] += g * hidden[j];
                let dh = g * params[w2_off + j] * (1.0 - hidden[j] * hidden[j]);
                for k in 0..FEATURE_DIM {
                    grad[j * FEATURE_DIM + k] += dh * xn[k];
                }
                grad[h * FEATURE_DIM + j] += dh;
            }
            grad[w2_off + h] += g;
        }
        (total / m, grad)
    }

    /// Likeliness per frame; rest frames are 0.
    pub fn predict(&self, features: &FrameFeatures) -> Vec<f64> {
        features
            .rows
            .iter()
            .zip(&features.in_note)
            .map(|(x, &inside)| if inside { self.probability(x) } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frames: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Accuracy, precision and recall at threshold 0.5 over in-note frames.
/// An empty denominator counts as 1.
pub fn evaluate(model: &LabelerModel, data: &[(FrameFeatures, Vec<u8>)]) -> FrameMetrics {
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (features, labels) in data {
        for ((x, &inside), &y) in features.rows.iter().zip(&features.in_note).zip(labels) {
            if !inside {
                continue;
            }
            match (model.probability(x) >= 0.5, y == 1) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let frames = tp + fp + tn + fn_;
    FrameMetrics {
        frames,
        accuracy: ratio(tp + tn, frames),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss after each epoch; non-increasing.
    pub losses: Vec<f64>,
    pub train_frames: usize,
    pub heldout: FrameMetrics,
    pub final_lr: f64,
}

fn collect_frames(data: &[(FrameFeatures, Vec<u8>)]) -> (Vec<[f64; FEATURE_DIM]>, Vec<f64>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (features, labels) in data {
        for ((x, &inside), &y) in features.rows.iter().zip(&features.in_note).zip(labels) {
            if inside {
                rows.push(*x);
                targets.push(y as f64);
            }
        }
    }
    (rows, targets)
}

/// Trains `model` (its current parameters are the starting point) with
/// full-batch Adam on mean binary cross-entropy.
///
/// A step that would raise the loss is discarded, the learning rate halved
/// and the Adam moments reset, so the recorded losses never increase. The last
/// `holdout_fraction` of the sequences is kept out of training and scored
/// in the report; with a single sequence the report scores the training data.
pub fn train(
    dataset: &[(FrameFeatures, Vec<u8>)],
    model: &LabelerModel,
) -> Result<(LabelerModel, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for (i, (features, labels)) in dataset.iter().enumerate() {
        if features.len() != labels.len() {
            return Err(Error::invalid(format!(
                "sequence {i}: {} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid(format!(
                "sequence {i}: labels must be 0 or 1"
            )));
        }
    }
    let cfg = model.config;
    let n = dataset.len();
    let held = if n < 2 || cfg.holdout_fraction <= 0.0 {
        0
    } else {
        ((n as f64 * cfg.holdout_fraction).round() as usize).clamp(1, n - 1)
    };
    let (train_set, heldout_set) = dataset.split_at(n - held);
    let heldout_set = if held == 0 { train_set } else { heldout_set };

    let (rows, targets) = collect_frames(train_set);
    if rows.is_empty() {
        return Err(Error::invalid("training set has no in-note frames"));
    }

    let mut model = model.clone();
    for k in 0..FEATURE_DIM {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / rows.len() as f64;
        model.feature_mean[k] = mean;
        model.feature_std[k] = if var > 1e-12 { var.sqrt() } else { 1.0 };
    }

    let mut params = model.params.clone();
    let (mut current, mut grad) = model.loss_and_grad_at(&params, &rows, &targets);
    if !current.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            loss: current,
        });
    }
    let mut opt = Adam::new(params.len(), cfg.lr);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut trial = params.clone();
        let mut trial_opt = opt.clone();
        trial_opt.step(&mut trial, &grad);
        let (value, trial_grad) = model.loss_and_grad_at(&trial, &rows, &targets);
        if !value.is_finite() {
            return Err(Error::Diverged { epoch, loss: value });
        }
        if value <= current {
            params = trial;
            opt = trial_opt;
            current = value;
            grad = trial_grad;
        } else {
            opt.lr *= 0.5;
            opt.reset();
        }
        losses.push(current);
    }
    model.params = params;
    let heldout = evaluate(&model, heldout_set);
    log::info!(
        "labeler trained: loss {:.4}, held-out accuracy {:.4}",
        current,
        heldout.accuracy
    );
    Ok((
        model,
        TrainReport {
            losses,
            train_frames: rows.len(),
            heldout,
            final_lr: opt.lr,
        },
    ))
}

/// Likeliness per frame of a gap-free contour.
pub fn label(
    contour: &MidiContour,
    frame_notes: &FrameNotes,
    model: &LabelerModel,
) -> Result<Vec<f64>> {
    let features = featurize_with(contour, frame_notes, &model.bandpass)?;
    Ok(model.predict(&features))
}

/// Per-note `l_mean >= epsilon` decisions, identical to the synthesis gate.
pub fn note_gate_decision(
    likeliness: &[f64],
    frame_notes: &FrameNotes,
    epsilon: f64,
) -> Result<Vec<NoteGate>> {
    gate(likeliness, frame_notes, epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureSpec {
    names: Vec<String>,
    mean: Vec<f64>,
    std: Vec<f64>,
    local_rms_seconds: f64,
    bandpass: BandpassSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    feature_spec: FeatureSpec,
    training: TrainConfig,
}

impl LabelerModel {
    /// Versioned JSON: `{version, dims, weights, biases, feature_spec, training}`.
    pub fn to_json(&self) -> String {
        let h = self.hidden;
        let w1 = h * FEATURE_DIM;
        let file = ModelFile {
            version: MODEL_VERSION,
            dims: vec![FEATURE_DIM, h, 1],
            weights: vec![
                self.params[..w1].to_vec(),
                self.params[w1 + h..w1 + 2 * h].to_vec(),
            ],
            biases: vec![
                self.params[w1..w1 + h].to_vec(),
                vec![self.params[w1 + 2 * h]],
            ],
            feature_spec: FeatureSpec {
                names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
                mean: self.feature_mean.to_vec(),
                std: self.feature_std.to_vec(),
                local_rms_seconds: LOCAL_RMS_SECONDS,
                bandpass: self.bandpass,
            },
            training: self.config,
        };
        serde_json::to_string_pretty(&file).expect("model always serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| Error::parse(origin, m);
        let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.version != MODEL_VERSION {
            return Err(bad(format!("unsupported model version {}", file.version)));
        }
        let [d, h, o] = file.dims[..] else {
            return Err(bad("dims must have three entries".into()));
        };
        if d != FEATURE_DIM || o != 1 || h == 0 {
            return Err(bad(format!("unsupported dims {:?}", file.dims)));
        }
        let shapes_ok = file.weights.len() == 2
            && file.biases.len() == 2
            && file.weights[0].len() == h * d
            && file.weights[1].len() == h
            && file.biases[0].len() == h
            && file.biases[1].len() == 1
            && file.feature_spec.mean.len() == d
            && file.feature_spec.std.len() == d;
        if !shapes_ok {
            return Err(bad("parameter arrays do not match dims".into()));
        }
        let mut params = Vec::with_capacity(Self::param_count(h));
        params.extend(&file.weights[0]);
        params.extend(&file.biases[0]);
        params.extend(&file.weights[1]);
        params.extend(&file.biases[1]);
        if params
            .iter()
            .chain(&file.feature_spec.mean)
            .any(|v| !v.is_finite())
            || file
                .feature_spec
                .std
                .iter()
                .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(bad(
                "non-finite parameter or non-positive feature scale".into()
            ));
        }
        let mut mean = [0.0; FEATURE_DIM];
        let mut std = [0.0; FEATURE_DIM];
        mean.copy_from_slice(&file.feature_spec.mean);
        std.copy_from_slice(&file.feature_spec.std);
        Ok(LabelerModel {
            hidden: h,
            params,
            feature_mean: mean,
            feature_std: std,
            config: file.training,
            bandpass: file.feature_spec.bandpass,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{rasterize_notes, Note, NoteSequence};

    fn features_from(rows: Vec<[f64; FEATURE_DIM]>) -> FrameFeatures {
        let n = rows.len();
        FrameFeatures {
            rows,
            in_note: vec![true; n],
        }
    }

    #[test]
    fn stable_bce() {
        assert!((bce_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(bce_logit(800.0, 1.0).abs() < 1e-300);
        assert!((bce_logit(-800.0, 1.0) - 800.0).abs() < 1e-9);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn zero_model_scores_one_half() {
        let m = LabelerModel::zeros(DEFAULT_HIDDEN, TrainConfig::default());
        let f = FrameFeatures {
            rows: vec![[1.0, 2.0, 3.0, 4.0, 0.5]; 3],
            in_note: vec![true, false, true],
        };
        assert_eq!(m.predict(&f), vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn separable_toy_set() {
        let make = |seed: u64| {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..200u64 {
                let positive = (i * 7 + seed) % 3 == 0;
                let jitter = ((i * 31 + seed) % 17) as f64 * 0.01;
                let rms = if positive { 1.0 } else { 0.0 };
                rows.push([
                    jitter - 0.08,
                    rms,
                    rms + jitter * 0.1,
                    6.0 * rms,
                    (i % 50) as f64 / 49.0,
                ]);
                labels.push(u8::from(positive));
            }
            (features_from(rows), labels)
        };
        let data = vec![make(0), make(1), make(2), make(5), make(9)];
        let cfg = TrainConfig {
            epochs: 200,
            ..Default::default()
        };
        let (model, report) = train(&data, &LabelerModel::new(DEFAULT_HIDDEN, cfg)).unwrap();
        assert_eq!(report.heldout.accuracy, 1.0);
        for w in report.losses.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let again = train(&data, &LabelerModel::new(DEFAULT_HIDDEN, cfg))
            .unwrap()
            .0;
        assert_eq!(model.params(), again.params());
    }

    #[test]
    fn all_negative_labels() {
        let rows: Vec<_> = (0..100)
            .map(|i| [i as f64 * 0.01, 0.1, 0.2, 3.0, 0.5])
            .collect();
        let data = vec![(features_from(rows.clone()), vec![0u8; 100])];
        let (model, _) = train(
            &data,
            &LabelerModel::new(DEFAULT_HIDDEN, TrainConfig::default()),
        )
        .unwrap();
        assert!(rows.iter().all(|r| model.probability(r) < 0.5));
    }

    #[test]
    fn rejects_bad_training_data() {
        let m = LabelerModel::zeros(4, TrainConfig::default());
        assert!(train(&[], &m).is_err());
        let f = features_from(vec![[0.0; 5]; 2]);
        assert!(train(&[(f.clone(), vec![0])], &m).is_err());
        assert!(train(&[(f, vec![0, 2])], &m).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut m = LabelerModel::new(DEFAULT_HIDDEN, TrainConfig::default());
        m.feature_mean = [0.1, 0.2, 0.3, 4.0, 0.5];
        m.feature_std = [1.0, 0.5, 0.25, 2.0, 0.3];
        let back = LabelerModel::from_json(&m.to_json(), "mem").unwrap();
        assert_eq!(back, m);
        assert!(LabelerModel::from_json("{}", "mem").is_err());
        let tampered = m.to_json().replace("\"version\": 1", "\"version\": 9");
        assert!(LabelerModel::from_json(&tampered, "mem").is_err());
    }

    #[test]
    fn constant_contour_features() {
        let c = MidiContour::voiced(vec![62.0; 600], 0.01).unwrap();
        let notes = NoteSequence::new(vec![Note {
            midi: 62,
            onset: 1.0,
            offset: 5.0,
        }])
        .unwrap();
        let fnotes = rasterize_notes(&notes, 600, 0.01);
        let f = featurize(&c, &fnotes).unwrap();
        for row in &f.rows {
            assert!(row[0].abs() < 1e-6 && row[1].abs() < 1e-6 && row[2].abs() < 1e-6);
        }
        assert_eq!(f.rows[100][4], 0.0);
        assert_eq!(f.rows[499][4], 1.0);
        assert!(!f.in_note[99] && f.in_note[100] && !f.in_note[500]);
    }
}
