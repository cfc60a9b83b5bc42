//! Run configuration: documented defaults, an optional TOML file, then flags.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use vibkit::analysis::BandpassSpec;
use vibkit::energy::{Activation, CodecTrainConfig};
use vibkit::labeler::TrainConfig;
use vibkit::sim::SimConfig;
use vibkit::synthesis::GateConfig;

use crate::CliError;

/// Every tunable parameter. Used twice: as flags (all optional) and as the
/// schema of the config file, where unknown keys are rejected.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Master seed; every random stream is derived from it [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Lower edge of the vibrato band in Hz [default: 3]
    #[arg(long)]
    pub low_cut_hz: Option<f64>,
    /// Upper edge of the vibrato band in Hz [default: 8]
    #[arg(long)]
    pub high_cut_hz: Option<f64>,
    /// Band-pass FIR length, odd [default: 257]
    #[arg(long)]
    pub taps: Option<usize>,

    /// A note gets vibrato when its mean likeliness is at least this [default: 0.5]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Triangular smoothing window for intonation snapping, seconds [default: 0.6]
    #[arg(long)]
    pub intonation_window_s: Option<f64>,

    /// Rate of the injected vibrato in Hz [default: 6]
    #[arg(long)]
    pub sim_rate_hz: Option<f64>,
    /// Peak depth of injected vibrato is drawn from (0, this], midi [default: 2]
    #[arg(long)]
    pub sim_depth_max_midi: Option<f64>,
    /// Shortest note that may receive vibrato, seconds [default: 1]
    #[arg(long)]
    pub sim_min_note_s: Option<f64>,
    /// Smoothing window that removes existing vibrato before injection, seconds [default: 0.6]
    #[arg(long)]
    pub sim_smoothing_window_s: Option<f64>,
    /// Rise and fall time of the injected depth envelope, seconds [default: 0.2]
    #[arg(long)]
    pub sim_ramp_s: Option<f64>,

    /// Hidden units of the likeliness labeler [default: 16]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Full-batch epochs for the labeler [default: 300]
    #[arg(long)]
    pub labeler_epochs: Option<usize>,
    /// Initial Adam step size for the labeler [default: 0.05]
    #[arg(long)]
    pub labeler_lr: Option<f64>,
    /// Share of simulated sequences held out for the training report [default: 0.2]
    #[arg(long)]
    pub holdout_fraction: Option<f64>,

    /// Size of the latent energy code [default: 256]
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Encoder activation, linear or tanh [default: tanh]
    #[arg(long)]
    pub activation: Option<String>,
    /// Code ln(1 + power) instead of raw power [default: true]
    #[arg(long)]
    pub log_compress: Option<bool>,
    /// Epochs for the energy codec [default: 500]
    #[arg(long)]
    pub codec_epochs: Option<usize>,
    /// Adam step size for the energy codec [default: 0.001]
    #[arg(long)]
    pub codec_lr: Option<f64>,
    /// Frames per codec update, 0 for full batch [default: 0]
    #[arg(long)]
    pub batch_frames: Option<usize>,
}

/// Fully resolved configuration, as printed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub seed: u64,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub taps: usize,
    pub epsilon: f64,
    pub intonation_window_s: f64,
    pub sim_rate_hz: f64,
    pub sim_depth_max_midi: f64,
    pub sim_min_note_s: f64,
    pub sim_smoothing_window_s: f64,
    pub sim_ramp_s: f64,
    pub hidden: usize,
    pub labeler_epochs: usize,
    pub labeler_lr: f64,
    pub holdout_fraction: f64,
    pub latent_dim: usize,
    pub activation: Activation,
    pub log_compress: bool,
    pub codec_epochs: usize,
    pub codec_lr: f64,
    pub batch_frames: usize,
}

impl Default for Config {
    fn default() -> Self {
        let sim = SimConfig::default();
        let band = BandpassSpec::default();
        let labeler = TrainConfig::default();
        let codec = CodecTrainConfig::default();
        Config {
            seed: 0,
            low_cut_hz: band.low_cut,
            high_cut_hz: band.high_cut,
            taps: band.taps,
            epsilon: GateConfig::default().epsilon,
            intonation_window_s: vibkit::synthesis::DEFAULT_INTONATION_WINDOW,
            sim_rate_hz: sim.rate_hz,
            sim_depth_max_midi: sim.depth_max_midi,
            sim_min_note_s: sim.min_note_seconds,
            sim_smoothing_window_s: sim.smoothing_window_seconds,
            sim_ramp_s: sim.ramp_seconds,
            hidden: vibkit::labeler::DEFAULT_HIDDEN,
            labeler_epochs: labeler.epochs,
            labeler_lr: labeler.lr,
            holdout_fraction: labeler.holdout_fraction,
            latent_dim: vibkit::energy::DEFAULT_LATENT_DIM,
            activation: Activation::Tanh,
            log_compress: true,
            codec_epochs: codec.epochs,
            codec_lr: codec.lr,
            batch_frames: 0,
        }
    }
}

/// Names accepted in a config file, for error messages.
pub const KEYS: [&str; 21] = [
    "seed",
    "low_cut_hz",
    "high_cut_hz",
    "taps",
    "epsilon",
    "intonation_window_s",
    "sim_rate_hz",
    "sim_depth_max_midi",
    "sim_min_note_s",
    "sim_smoothing_window_s",
    "sim_ramp_s",
    "hidden",
    "labeler_epochs",
    "labeler_lr",
    "holdout_fraction",
    "latent_dim",
    "activation",
    "log_compress",
    "codec_epochs",
    "codec_lr",
    "batch_frames",
];

pub fn parse_file(text: &str, origin: &str) -> Result<Overrides, CliError> {
    toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        if msg.starts_with("unknown field") {
            CliError::Usage(format!(
                "{origin}: {}; valid keys are: {}",
                msg.split(", expected").next().unwrap_or(&msg),
                KEYS.join(", ")
            ))
        } else {
            CliError::Usage(format!("{origin}: {msg}"))
        }
    })
}

pub fn load_file(path: &Path) -> Result<Overrides, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse_file(&text, &path.display().to_string())
}

/// Defaults, then `file`, then `flags`; the result is validated.
pub fn resolve(file: Option<&Overrides>, flags: &Overrides) -> Result<Config, CliError> {
    let empty = Overrides::default();
    let file = file.unwrap_or(&empty);
    let d = Config::default();
    macro_rules! pick {
        ($field:ident) => {
            flags.$field.clone().or(file.$field.clone())
        };
    }
    let activation = match pick!(activation) {
        Some(name) => name
            .parse()
            .map_err(|e: vibkit::Error| CliError::Usage(e.to_string()))?,
        None => d.activation,
    };
    let cfg = Config {
        seed: pick!(seed).unwrap_or(d.seed),
        low_cut_hz: pick!(low_cut_hz).unwrap_or(d.low_cut_hz),
        high_cut_hz: pick!(high_cut_hz).unwrap_or(d.high_cut_hz),
        taps: pick!(taps).unwrap_or(d.taps),
        epsilon: pick!(epsilon).unwrap_or(d.epsilon),
        intonation_window_s: pick!(intonation_window_s).unwrap_or(d.intonation_window_s),
        sim_rate_hz: pick!(sim_rate_hz).unwrap_or(d.sim_rate_hz),
        sim_depth_max_midi: pick!(sim_depth_max_midi).unwrap_or(d.sim_depth_max_midi),
        sim_min_note_s: pick!(sim_min_note_s).unwrap_or(d.sim_min_note_s),
        sim_smoothing_window_s: pick!(sim_smoothing_window_s).unwrap_or(d.sim_smoothing_window_s),
        sim_ramp_s: pick!(sim_ramp_s).unwrap_or(d.sim_ramp_s),
        hidden: pick!(hidden).unwrap_or(d.hidden),
        labeler_epochs: pick!(labeler_epochs).unwrap_or(d.labeler_epochs),
        labeler_lr: pick!(labeler_lr).unwrap_or(d.labeler_lr),
        holdout_fraction: pick!(holdout_fraction).unwrap_or(d.holdout_fraction),
        latent_dim: pick!(latent_dim).unwrap_or(d.latent_dim),
        activation,
        log_compress: pick!(log_compress).unwrap_or(d.log_compress),
        codec_epochs: pick!(codec_epochs).unwrap_or(d.codec_epochs),
        codec_lr: pick!(codec_lr).unwrap_or(d.codec_lr),
        batch_frames: pick!(batch_frames).unwrap_or(d.batch_frames),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            ));
        }
        if self.taps % 2 == 0 || self.taps < 3 {
            return bad(format!(
                "taps must be odd and at least 3, got {}",
                self.taps
            ));
        }
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz) {
            return bad(format!(
                "band edges must satisfy 0 < low_cut_hz < high_cut_hz, got {} and {}",
                self.low_cut_hz, self.high_cut_hz
            ));
        }
        let positive = [
            ("intonation_window_s", self.intonation_window_s),
            ("labeler_lr", self.labeler_lr),
            ("codec_lr", self.codec_lr),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.hidden == 0 || self.latent_dim == 0 {
            return bad("hidden and latent_dim must be positive".into());
        }
        self.sim()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn bandpass(&self) -> BandpassSpec {
        BandpassSpec {
            low_cut: self.low_cut_hz,
            high_cut: self.high_cut_hz,
            taps: self.taps,
        }
    }

    pub fn gate(&self) -> GateConfig {
        GateConfig {
            epsilon: self.epsilon,
        }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig {
            rate_hz: self.sim_rate_hz,
            depth_max_midi: self.sim_depth_max_midi,
            min_note_seconds: self.sim_min_note_s,
            smoothing_window_seconds: self.sim_smoothing_window_s,
            ramp_seconds: self.sim_ramp_s,
            seed: self.seed,
        }
    }

    pub fn labeler(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.labeler_lr,
            epochs: self.labeler_epochs,
            seed,
            holdout_fraction: self.holdout_fraction,
        }
    }

    pub fn codec(&self, seed: u64) -> CodecTrainConfig {
        CodecTrainConfig {
            epochs: self.codec_epochs,
            lr: self.codec_lr,
            seed,
            batch_frames: (self.batch_frames > 0).then_some(self.batch_frames),
        }
    }
}
