//! Latent energy representation: a bottleneck autoencoder over power
//! spectrogram frames, and the scalar-energy and no-energy baselines it is
//! compared against.
//!
//! Frames are compressed with `ln(1 + x)` before coding (when enabled) and
//! all reconstruction losses are reported in that compressed domain. The
//! loss is the Frobenius norm of the difference, `‖S - Ŝ‖`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::optim::Adam;
use crate::{rng, Error, Result};

pub const DEFAULT_BINS: usize = 1025;
pub const DEFAULT_LATENT_DIM: usize = 256;

/// `T × D` matrix of non-negative power values.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrogram {
    frames: Array2<f64>,
    frame_period: f64,
}

impl PowerSpectrogram {
    pub fn new(frames: Array2<f64>, frame_period: f64) -> Result<Self> {
        if !(frame_period.is_finite() && frame_period > 0.0) {
            return Err(Error::invalid(format!(
                "frame period must be positive, got {frame_period}"
            )));
        }
        if let Some(((t, d), v)) = frames
            .indexed_iter()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::invalid(format!(
                "frame {t}, bin {d}: power must be finite and non-negative, got {v}"
            )));
        }
        Ok(PowerSpectrogram {
            frames,
            frame_period,
        })
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn bins(&self) -> usize {
        self.frames.ncols()
    }
}

/// Frobenius norm of `a - b`.
pub fn loss(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "shape {:?} does not match {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

fn compress(x: ArrayView2<f64>, log_compress: bool) -> Array2<f64> {
    if log_compress {
        x.mapv(f64::ln_1p)
    } else {
        x.to_owned()
    }
}

fn expand(y: Array2<f64>, log_compress: bool) -> Array2<f64> {
    if log_compress {
        y.mapv(|v| v.exp_m1().max(0.0))
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Linear => v,
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activated value.
    fn derivative_from_output(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - z * z,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::invalid(format!(
                "unknown activation {other:?} (expected linear or tanh)"
            ))),
        }
    }
}

/// Per-frame autoencoder: `E = act(X W_e + b_e)`, `Ŝ = max(E W_d + b_d, 0)`.
///
/// Parameters live in one flat vector laid out as
/// `[W_e (D×N, row-major), b_e (N), W_d (N×D, row-major), b_d (D)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyCodec {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub activation: Activation,
    pub log_compress: bool,
    /// Subtracted from each (compressed) frame before encoding; fitted by
    /// [`train_codec`].
    pub input_mean: Vec<f64>,
    params: Vec<f64>,
}

impl EnergyCodec {
    fn param_count(d: usize, n: usize) -> usize {
        2 * d * n + n + d
    }

    pub fn zeros(input_dim: usize, latent_dim: usize, activation: Activation) -> Self {
        EnergyCodec {
            input_dim,
            latent_dim,
            activation,
            log_compress: true,
            input_mean: vec![0.0; input_dim],
            params: vec![0.0; Self::param_count(input_dim, latent_dim)],
        }
    }

    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn random(input_dim: usize, latent_dim: usize, activation: Activation, seed: u64) -> Self {
        let mut codec = Self::zeros(input_dim, latent_dim, activation);
        let mut rng = rng::rng(seed);
        let limit = (6.0 / (input_dim + latent_dim) as f64).sqrt();
        let dn = input_dim * latent_dim;
        let (d, n) = (input_dim, latent_dim);
        for p in codec.params[..dn].iter_mut() {
            *p = rng.gen_range(-limit..limit);
        }
        for p in codec.params[dn + n..dn + n + dn].iter_mut() {
            *p = rng.gen_range(-limit..limit);
        }
        debug_assert_eq!(codec.params.len(), 2 * dn + n + d);
        codec
    }

    pub fn with_log_compress(mut self, on: bool) -> Self {
        self.log_compress = on;
        self
    }

    pub fn from_params(
        input_dim: usize,
        latent_dim: usize,
        activation: Activation,
        log_compress: bool,
        params: Vec<f64>,
    ) -> Result<Self> {
        let want = Self::param_count(input_dim, latent_dim);
        if params.len() != want {
            return Err(Error::invalid(format!(
                "expected {want} codec parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("codec parameters must be finite"));
        }
        Ok(EnergyCodec {
            input_dim,
            latent_dim,
            activation,
            log_compress,
            input_mean: vec![0.0; input_dim],
            params,
        })
    }

    pub fn with_input_mean(mut self, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "input mean has {} entries, codec expects {}",
                mean.len(),
                self.input_dim
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("input mean must be finite"));
        }
        self.input_mean = mean;
        Ok(self)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) {
        self.params.copy_from_slice(params);
    }

    fn views(
        &self,
    ) -> (
        ArrayView2<'_, f64>,
        ArrayView1<'_, f64>,
        ArrayView2<'_, f64>,
        ArrayView1<'_, f64>,
    ) {
        let (d, n) = (self.input_dim, self.latent_dim);
        let p = &self.params;
        let (we, rest) = p.split_at(d * n);
        let (be, rest) = rest.split_at(n);
        let (wd, bd) = rest.split_at(n * d);
        (
            ArrayView2::from_shape((d, n), we).expect("layout"),
            ArrayView1::from(be),
            ArrayView2::from_shape((n, d), wd).expect("layout"),
            ArrayView1::from(bd),
        )
    }

    fn check_bins(&self, bins: usize) -> Result<()> {
        if bins != self.input_dim {
            return Err(Error::invalid(format!(
                "spectrogram has {bins} bins, codec expects {}",
                self.input_dim
            )));
        }
        Ok(())
    }

    fn centre(&self, x: ArrayView2<f64>) -> Array2<f64> {
        &x - &ArrayView1::from(&self.input_mean[..])
    }

    fn encode_compressed(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let (we, be, _, _) = self.views();
        let act = self.activation;
        (self.centre(x).dot(&we) + &be).mapv(|v| act.apply(v))
    }

    fn decode_compressed(&self, z: ArrayView2<f64>) -> Array2<f64> {
        let (_, _, wd, bd) = self.views();
        (z.dot(&wd) + &bd).mapv(|v| v.max(0.0))
    }

    /// `T × N` latent matrix.
    pub fn encode(&self, spec: &PowerSpectrogram) -> Result<Array2<f64>> {
        self.check_bins(spec.bins())?;
        Ok(self.encode_compressed(compress(spec.frames.view(), self.log_compress).view()))
    }

    pub fn decode(&self, latent: ArrayView2<f64>, frame_period: f64) -> Result<PowerSpectrogram> {
        if latent.ncols() != self.latent_dim {
            return Err(Error::invalid(format!(
                "latent has {} columns, codec expects {}",
                latent.ncols(),
                self.latent_dim
            )));
        }
        let y = self.decode_compressed(latent);
        PowerSpectrogram::new(expand(y, self.log_compress), frame_period)
    }

    pub fn reconstruct(&self, spec: &PowerSpectrogram) -> Result<PowerSpectrogram> {
        let latent = self.encode(spec)?;
        self.decode(latent.view(), spec.frame_period)
    }

    /// Loss between the (compressed) input and its reconstruction.
    pub fn reconstruction_loss(&self, spec: &PowerSpectrogram) -> Result<f64> {
        self.check_bins(spec.bins())?;
        let x = compress(spec.frames.view(), self.log_compress);
        let y = self.decode_compressed(self.encode_compressed(x.view()).view());
        loss(x.view(), y.view())
    }

    /// Reconstruction loss and its gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, spec: &PowerSpectrogram) -> Result<(f64, Vec<f64>)> {
        self.check_bins(spec.bins())?;
        let x = compress(spec.frames.view(), self.log_compress);
        Ok(self.loss_and_grad_compressed(x.view()))
    }

    fn loss_and_grad_compressed(&self, x: ArrayView2<f64>) -> (f64, Vec<f64>) {
        let (_, _, wd, _) = self.views();
        let z = self.encode_compressed(x);
        let (_, _, _, bd) = self.views();
        let p = z.dot(&wd) + &bd;
        let mut r = p.mapv(|v| v.max(0.0)) - x;
        let value = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut grad = vec![0.0; self.params.len()];
        if value == 0.0 {
            return (value, grad);
        }

        // dL/dP = (Y - X) / L, masked where the clamp is active.
        r.zip_mut_with(&p, |g, &pre| *g = if pre > 0.0 { *g / value } else { 0.0 });
        let dp = r;
        let dwd = z.t().dot(&dp);
        let dbd = dp.sum_axis(Axis(0));
        let mut dh = dp.dot(&wd.t());
        let act = self.activation;
        dh.zip_mut_with(&z, |g, &zv| *g *= act.derivative_from_output(zv));
        let dwe = self.centre(x).t().dot(&dh);
        let dbe = dh.sum_axis(Axis(0));

        let flat = dwe
            .iter()
            .chain(dbe.iter())
            .chain(dwd.iter())
            .chain(dbd.iter());
        for (slot, g) in grad.iter_mut().zip(flat) {
            *slot = *g;
        }
        (value, grad)
    }
}

pub const CODEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CodecFile {
    version: u32,
    dims: [usize; 2],
    activation: Activation,
    log_compress: bool,
    input_mean: Vec<f64>,
    encoder_weight: Vec<f64>,
    encoder_bias: Vec<f64>,
    decoder_weight: Vec<f64>,
    decoder_bias: Vec<f64>,
}

impl EnergyCodec {
    /// Versioned JSON; weight matrices are stored row-major, `W_e` as D×N
    /// and `W_d` as N×D.
    pub fn to_json(&self) -> String {
        let (d, n) = (self.input_dim, self.latent_dim);
        let p = &self.params;
        let file = CodecFile {
            version: CODEC_VERSION,
            dims: [d, n],
            activation: self.activation,
            log_compress: self.log_compress,
            input_mean: self.input_mean.clone(),
            encoder_weight: p[..d * n].to_vec(),
            encoder_bias: p[d * n..d * n + n].to_vec(),
            decoder_weight: p[d * n + n..2 * d * n + n].to_vec(),
            decoder_bias: p[2 * d * n + n..].to_vec(),
        };
        serde_json::to_string(&file).expect("codec always serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| Error::parse(origin, m);
        let file: CodecFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.version != CODEC_VERSION {
            return Err(bad(format!("unsupported codec version {}", file.version)));
        }
        let [d, n] = file.dims;
        if d == 0 || n == 0 {
            return Err(bad("dims must be positive".into()));
        }
        let shapes_ok = file.encoder_weight.len() == d * n
            && file.encoder_bias.len() == n
            && file.decoder_weight.len() == n * d
            && file.decoder_bias.len() == d;
        if !shapes_ok {
            return Err(bad("parameter arrays do not match dims".into()));
        }
        let mut params = file.encoder_weight;
        params.extend(file.encoder_bias);
        params.extend(file.decoder_weight);
        params.extend(file.decoder_bias);
        Self::from_params(d, n, file.activation, file.log_compress, params)
            .and_then(|c| c.with_input_mean(file.input_mean))
            .map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Shuffles mini-batches; unused when training full-batch.
    pub seed: u64,
    /// Frames per Adam step; `None` trains on all frames at once.
    pub batch_frames: Option<usize>,
}

impl Default for CodecTrainConfig {
    fn default() -> Self {
        CodecTrainConfig {
            epochs: 500,
            lr: 1e-3,
            seed: 0,
            batch_frames: None,
        }
    }
}

/// Trains `codec` with Adam on the reconstruction loss.
///
/// Returns the trained codec and the loss history over the whole data set:
/// one entry per epoch (measured before that epoch's update) followed by the
/// final loss.
pub fn train_codec(
    data: &PowerSpectrogram,
    codec: &EnergyCodec,
    cfg: &CodecTrainConfig,
) -> Result<(EnergyCodec, Vec<f64>)> {
    if data.n_frames() == 0 {
        return Err(Error::invalid("cannot train on an empty spectrogram"));
    }
    codec.check_bins(data.bins())?;
    let x = compress(data.frames.view(), codec.log_compress);
    let t = x.nrows();
    let batch = cfg.batch_frames.unwrap_or(t).clamp(1, t);

    // Centre the encoder input on the data mean; a zero decoder bias starts
    // at that mean too, so training begins from the mean-frame reconstruction
    // rather than with most outputs clamped.
    let mut codec = codec.clone();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    codec.input_mean = mean.to_vec();
    let bd_start = codec.params.len() - codec.input_dim;
    if codec.params[bd_start..].iter().all(|&b| b == 0.0) {
        codec.params[bd_start..].copy_from_slice(&codec.input_mean);
    }
    let mut opt = Adam::new(codec.params.len(), cfg.lr);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut order: Vec<usize> = (0..t).collect();

    for epoch in 0..cfg.epochs {
        if batch == t {
            let (value, grad) = codec.loss_and_grad_compressed(x.view());
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            history.push(value);
            opt.step(&mut codec.params, &grad);
        } else {
            let value = loss(
                x.view(),
                codec
                    .decode_compressed(codec.encode_compressed(x.view()).view())
                    .view(),
            )?;
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            history.push(value);
            let mut rng = rng::rng(rng::derive_seed(cfg.seed, "codec-epoch", epoch as u64));
            for i in (1..t).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for chunk in order.chunks(batch) {
                let xb = x.select(Axis(0), chunk);
                let (_, grad) = codec.loss_and_grad_compressed(xb.view());
                opt.step(&mut codec.params, &grad);
            }
        }
    }
    let last = codec.reconstruction_loss(data)?;
    if !last.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            loss: last,
        });
    }
    history.push(last);
    Ok((codec, history))
}

/// Per-frame energy as the L2 norm of the amplitude frame, `sqrt(Σ power)`.
pub fn frame_energy(power_frame: ArrayView1<f64>) -> f64 {
    power_frame.sum().sqrt()
}

/// One scalar per frame times a learned amplitude shape: `Ŝ_t = (s_t u)²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarEnergyBaseline {
    pub decoder: Vec<f64>,
    pub log_compress: bool,
}

impl ScalarEnergyBaseline {
    pub fn energies(data: &PowerSpectrogram) -> Vec<f64> {
        data.frames.axis_iter(Axis(0)).map(frame_energy).collect()
    }

    pub fn reconstruct(&self, data: &PowerSpectrogram) -> Result<PowerSpectrogram> {
        if data.bins() != self.decoder.len() {
            return Err(Error::invalid(format!(
                "spectrogram has {} bins, baseline expects {}",
                data.bins(),
                self.decoder.len()
            )));
        }
        let s = Self::energies(data);
        let u = Array1::from(self.decoder.clone());
        let mut out = Array2::zeros(data.frames.raw_dim());
        for (mut row, e) in out.axis_iter_mut(Axis(0)).zip(&s) {
            row.assign(&u.mapv(|v| (e * v) * (e * v)));
        }
        PowerSpectrogram::new(out, data.frame_period)
    }

    pub fn reconstruction_loss(&self, data: &PowerSpectrogram) -> Result<f64> {
        let r = self.reconstruct(data)?;
        loss(
            compress(data.frames.view(), self.log_compress).view(),
            compress(r.frames.view(), self.log_compress).view(),
        )
    }
}

/// Least-squares fit of the amplitude shape against the per-frame energies:
/// `u = Σ s_t sqrt(S_t) / Σ s_t²`. Returns the baseline and its loss.
pub fn scalar_baseline_fit(
    data: &PowerSpectrogram,
    log_compress: bool,
) -> Result<(ScalarEnergyBaseline, f64)> {
    if data.n_frames() == 0 {
        return Err(Error::invalid(
            "cannot fit a baseline to an empty spectrogram",
        ));
    }
    let s = ScalarEnergyBaseline::energies(data);
    let denom: f64 = s.iter().map(|e| e * e).sum();
    let mut u = Array1::<f64>::zeros(data.bins());
    if denom > 0.0 {
        for (row, e) in data.frames.axis_iter(Axis(0)).zip(&s) {
            u.scaled_add(*e, &row.mapv(f64::sqrt));
        }
        u /= denom;
    }
    let baseline = ScalarEnergyBaseline {
        decoder: u.to_vec(),
        log_compress,
    };
    let value = baseline.reconstruction_loss(data)?;
    Ok((baseline, value))
}

/// Loss of the best energy-free reconstruction: every frame replaced by the
/// mean compressed frame.
pub fn no_energy_loss(data: &PowerSpectrogram, log_compress: bool) -> Result<f64> {
    if data.n_frames() == 0 {
        return Err(Error::invalid("empty spectrogram"));
    }
    let x = compress(data.frames.view(), log_compress);
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centred = &x - &mean;
    Ok(centred.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpecConfig {
    pub frames: usize,
    pub bins: usize,
    /// Rank of the log-compressed spectrogram before noise.
    pub rank: usize,
    /// Standard deviation of additive noise in the compressed domain.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpecConfig {
    fn default() -> Self {
        SyntheticSpecConfig {
            frames: 200,
            bins: DEFAULT_BINS,
            rank: 16,
            noise: 0.0,
            seed: 0,
        }
    }
}

/// Power spectrogram whose `ln(1 + S)` is `diag(g) W H`: `H` holds `r`
/// formant-like Gaussian bumps along frequency, `W` uniform activations in
/// [0, 1) and `g` per-frame gains in [0.3, 1.7). Without noise the compressed
/// matrix has rank exactly `r` (for `r` well below frames and bins).
pub fn synthetic_spectrogram(cfg: &SyntheticSpecConfig) -> Result<PowerSpectrogram> {
    if cfg.frames == 0 || cfg.bins == 0 || cfg.rank == 0 {
        return Err(Error::invalid("frames, bins and rank must all be positive"));
    }
    let mut rng = rng::rng(cfg.seed);
    let spacing = cfg.bins as f64 / cfg.rank as f64;
    let mut h = Array2::<f64>::zeros((cfg.rank, cfg.bins));
    for mut row in h.axis_iter_mut(Axis(0)) {
        let centre = rng.gen_range(0.0..cfg.bins as f64);
        let width = spacing * rng.gen_range(0.5..1.5);
        let height = rng.gen_range(1.0..3.0);
        for (d, v) in row.iter_mut().enumerate() {
            *v = height * (-0.5 * ((d as f64 - centre) / width).powi(2)).exp();
        }
    }
    let w = Array2::from_shape_fn((cfg.frames, cfg.rank), |_| rng.gen::<f64>());
    let gains = Array1::from_shape_fn(cfg.frames, |_| rng.gen_range(0.3..1.7));
    let mut l = w.dot(&h);
    for (mut row, g) in l.axis_iter_mut(Axis(0)).zip(gains.iter()) {
        row *= *g;
    }
    if cfg.noise > 0.0 {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, cfg.noise).map_err(|e| Error::invalid(e.to_string()))?;
        l.mapv_inplace(|v| (v + normal.sample(&mut rng)).max(0.0));
    }
    PowerSpectrogram::new(l.mapv(f64::exp_m1), crate::contour::DEFAULT_FRAME_PERIOD)
}
