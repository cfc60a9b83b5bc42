use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use vibkit::analysis::{
    bandpass_vibrato, extract_vibrato_params, extract_vibrato_params_by_notes, Decomposition,
};
use vibkit::contour::{
    format_contour_csv, format_score_json, hz_to_midi, interpolate_unvoiced, midi_to_hz,
    parse_contour_csv, parse_score_json, rasterize_notes, FrameNotes, MidiContour, NoteSequence,
};
use vibkit::energy::{
    no_energy_loss, scalar_baseline_fit, train_codec, EnergyCodec, PowerSpectrogram,
};
use vibkit::labeler::{self, featurize_with, LabelerModel};
use vibkit::metrics::{f0_corr, f0_rmse, mcd, CepstraPair, F0Pair};
use vibkit::rng::derive_seed;
use vibkit::sim::{simulate as simulate_one, synthetic_performance, CorpusConfig, SimConfig};
use vibkit::synthesis::{
    assemble_pitch, note_gate_decision, postprocess_intonation, synthesize_vibrato, NoteGate,
};

use crate::config::{self, Config};
use crate::formats::{self, AnalysisTable};
use crate::manifest::{Manifest, Recorder};
use crate::{CliError, Common};

fn resolve(common: &Common) -> Result<Config, CliError> {
    let file = common
        .config
        .as_deref()
        .map(config::load_file)
        .transpose()?;
    config::resolve(file.as_ref(), &common.set)
}

/// Prefixes a library error with the file it came from, keeping its class.
fn at(path: &Path, e: vibkit::Error) -> CliError {
    match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        CliError::Numeric(m) => CliError::Numeric(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn read_score(path: &Path, rec: &mut Recorder) -> Result<NoteSequence, CliError> {
    rec.input(path);
    let text = formats::read_text(path)?;
    Ok(parse_score_json(&text, &path.display().to_string())?)
}

fn gates_json(gates: &[NoteGate]) -> String {
    serde_json::to_string_pretty(gates).expect("gates always serialize") + "\n"
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Contour CSV (time_s,f0_hz,voiced) or simulated CSV (time_s,midi,label)
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Analysis CSV to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

pub fn analyze(args: AnalyzeArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    rec.input(&args.input);
    let contour = formats::read_midi_input(&args.input)?;
    let decomp = bandpass_vibrato(&contour, &cfg.bandpass()).map_err(|e| at(&args.input, e))?;
    let params = extract_vibrato_params(&decomp).map_err(|e| at(&args.input, e))?;
    let table = AnalysisTable {
        frame_period: contour.frame_period(),
        intonation: decomp.intonation.values().to_vec(),
        vibrato: decomp.vibrato_component.clone(),
        depth: params.depth,
        rate: params.rate,
        voiced: contour.voicing().to_vec(),
    };
    rec.write(&args.out, formats::format_analysis_csv(&table))?;
    let summary = json!({
        "frames": contour.len(),
        "frame_period_s": contour.frame_period(),
        "voiced_frames": contour.voicing().iter().filter(|v| **v).count(),
    });
    rec.finish("analyze", cfg, summary)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Analysis CSV from `analyze`
    #[arg(long, value_name = "FILE")]
    pub analysis: PathBuf,
    /// Score JSON: [{"midi", "onset_s", "offset_s"}, ...]
    #[arg(long, value_name = "FILE")]
    pub score: PathBuf,
    /// Likeliness CSV from `label`; every frame counts as 1 without it
    #[arg(long, value_name = "FILE")]
    pub likeliness: Option<PathBuf>,
    /// Contour CSV to write; voiced exactly on note frames
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the per-note gate decisions as JSON
    #[arg(long, value_name = "FILE")]
    pub gates: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn synth(args: SynthArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    rec.input(&args.analysis);
    let origin = args.analysis.display().to_string();
    let table = formats::parse_analysis_csv(&formats::read_text(&args.analysis)?, &origin)?;
    let notes = read_score(&args.score, &mut rec)?;
    let n = table.intonation.len();
    let frame_notes = rasterize_notes(&notes, n, table.frame_period);

    let likeliness = match &args.likeliness {
        Some(path) => {
            rec.input(path);
            let text = formats::read_text(path)?;
            let (l, period) = formats::parse_likeliness_csv(&text, &path.display().to_string())?;
            if l.len() != n || (period - table.frame_period).abs() > 1e-9 {
                return Err(CliError::Input(format!(
                    "{}: {} frames at {period} s, analysis has {n} frames at {} s",
                    path.display(),
                    l.len(),
                    table.frame_period
                )));
            }
            l
        }
        None => vec![1.0; n],
    };

    let intonation = MidiContour::voiced(table.intonation, table.frame_period)
        .map_err(|e| at(&args.analysis, e))?;
    let decomp =
        Decomposition::new(intonation, table.vibrato).map_err(|e| at(&args.analysis, e))?;
    let params = extract_vibrato_params_by_notes(&decomp, &frame_notes)
        .and_then(|p| p.with_likeliness(likeliness.clone()))
        .map_err(|e| at(&args.analysis, e))?;
    let i_post = postprocess_intonation(&decomp.intonation, &frame_notes, cfg.intonation_window_s)?;
    let gate = cfg.gate();
    let v = synthesize_vibrato(&params, &frame_notes, decomp.frame_rate(), &gate)?;
    let pitch = assemble_pitch(&i_post, &v)?;
    let voicing: Vec<bool> = frame_notes
        .note_index()
        .iter()
        .map(Option::is_some)
        .collect();
    let out = MidiContour::new(pitch.into_values(), voicing, table.frame_period)?;
    rec.write(&args.out, format_contour_csv(&midi_to_hz(&out)))?;

    let gates = note_gate_decision(&likeliness, &frame_notes, gate.epsilon)?;
    if let Some(path) = &args.gates {
        rec.write(path, gates_json(&gates))?;
    }
    let summary = json!({
        "frames": n,
        "notes": gates.len(),
        "notes_with_vibrato": gates.iter().filter(|g| g.vibrato).count(),
        "epsilon": gate.epsilon,
    });
    rec.finish("synth", cfg, summary)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory of NAME.csv contours (time_s,f0_hz,voiced) with NAME.json scores
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// Generate this many synthetic performances instead of reading a corpus
    #[arg(long, value_name = "N", required_unless_present = "corpus")]
    pub synthetic: Option<usize>,
    /// Length of each synthetic performance, seconds
    #[arg(long, default_value_t = 30.0)]
    pub duration_s: f64,
    /// Directory for NAME.csv, NAME.json and NAME.provenance.json
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

struct CorpusItem {
    name: String,
    contour: MidiContour,
    notes: NoteSequence,
}

fn read_corpus(dir: &Path, rec: &mut Recorder) -> Result<Vec<CorpusItem>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no .csv contours",
            dir.display()
        )));
    }
    let mut items = Vec::with_capacity(csvs.len());
    for csv_path in csvs {
        let name = csv_path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        rec.input(&csv_path);
        let origin = csv_path.display().to_string();
        let hz = parse_contour_csv(&formats::read_text(&csv_path)?, &origin)?;
        let contour = hz_to_midi(&hz)
            .and_then(|m| interpolate_unvoiced(&m))
            .map_err(|e| at(&csv_path, e))?;
        let notes = read_score(&csv_path.with_extension("json"), rec)?;
        items.push(CorpusItem {
            name,
            contour,
            notes,
        });
    }
    Ok(items)
}

fn synthetic_corpus(count: usize, duration: f64, seed: u64) -> Result<Vec<CorpusItem>, CliError> {
    (0..count)
        .map(|i| {
            let cfg = CorpusConfig {
                duration_seconds: duration,
                seed: derive_seed(seed, "corpus", i as u64),
                ..Default::default()
            };
            let (hz, notes) = synthetic_performance(&cfg)?;
            let contour = interpolate_unvoiced(&hz_to_midi(&hz)?)?;
            Ok(CorpusItem {
                name: format!("sim_{i:04}"),
                contour,
                notes,
            })
        })
        .collect()
}

pub fn simulate(args: SimulateArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    let items = match (&args.corpus, args.synthetic) {
        (Some(dir), _) => read_corpus(dir, &mut rec)?,
        (None, Some(count)) => {
            if !(args.duration_s.is_finite() && args.duration_s >= 1.0) {
                return Err(CliError::Usage(format!(
                    "--duration-s must be at least 1, got {}",
                    args.duration_s
                )));
            }
            synthetic_corpus(count, args.duration_s, cfg.seed)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "one of --corpus or --synthetic is required".into(),
            ))
        }
    };

    let (mut frames, mut positives, mut segments) = (0usize, 0usize, 0usize);
    for (i, item) in items.iter().enumerate() {
        let sim_cfg = SimConfig {
            seed: derive_seed(cfg.seed, "simulate", i as u64),
            ..cfg.sim()
        };
        let lc = simulate_one(&item.contour, &item.notes, &sim_cfg)
            .map_err(|e| CliError::from(e).context(&item.name))?;
        frames += lc.labels.len();
        positives += lc.labels.iter().filter(|&&l| l == 1).count();
        segments += lc.provenance.segments.len();

        let dir = &args.out_dir;
        rec.write(
            &dir.join(format!("{}.csv", item.name)),
            formats::format_sim_csv(&lc.contour, &lc.labels),
        )?;
        rec.write(
            &dir.join(format!("{}.json", item.name)),
            format_score_json(&item.notes),
        )?;
        let provenance = json!({
            "name": item.name,
            "sim_config": sim_cfg,
            "provenance": lc.provenance,
        });
        rec.write(
            &dir.join(format!("{}.provenance.json", item.name)),
            serde_json::to_string_pretty(&provenance).expect("provenance serializes") + "\n",
        )?;
    }
    let summary = json!({
        "items": items.len(),
        "frames": frames,
        "positive_fraction": positives as f64 / frames.max(1) as f64,
        "injected_notes": segments,
    });
    rec.finish("simulate", cfg, summary)
}

impl CliError {
    fn context(self, what: &str) -> CliError {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Numeric(m) => CliError::Numeric(format!("{what}: {m}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainLabelerArgs {
    /// Output directory of `simulate`
    #[arg(long, value_name = "DIR")]
    pub sim_dir: PathBuf,
    /// Model JSON to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

/// Simulated contours (NAME.csv) with their scores (NAME.json), sorted by name.
fn read_sim_dir(
    dir: &Path,
    rec: &mut Recorder,
) -> Result<Vec<(formats::SimTrack, NoteSequence, PathBuf)>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    if csvs.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no simulated .csv files",
            dir.display()
        )));
    }
    csvs.into_iter()
        .map(|path| {
            rec.input(&path);
            let track =
                formats::parse_sim_csv(&formats::read_text(&path)?, &path.display().to_string())?;
            let notes = read_score(&path.with_extension("json"), rec)?;
            Ok((track, notes, path))
        })
        .collect()
}

pub fn train_labeler(args: TrainLabelerArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    let band = cfg.bandpass();
    let mut data = Vec::new();
    for (track, notes, path) in read_sim_dir(&args.sim_dir, &mut rec)? {
        let frame_notes =
            rasterize_notes(&notes, track.contour.len(), track.contour.frame_period());
        let features =
            featurize_with(&track.contour, &frame_notes, &band).map_err(|e| at(&path, e))?;
        data.push((features, track.labels));
    }
    let mut init = LabelerModel::new(cfg.hidden, cfg.labeler(derive_seed(cfg.seed, "labeler", 0)));
    init.bandpass = band;
    let (model, report) = labeler::train(&data, &init)?;
    rec.write(&args.out, model.to_json() + "\n")?;
    let summary = json!({
        "sequences": data.len(),
        "train_frames": report.train_frames,
        "epochs": report.losses.len(),
        "initial_loss": report.losses.first(),
        "final_loss": report.losses.last(),
        "final_lr": report.final_lr,
        "heldout": report.heldout,
    });
    rec.finish("train-labeler", cfg, summary)
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Contour CSV or simulated CSV
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Score JSON
    #[arg(long, value_name = "FILE")]
    pub score: PathBuf,
    /// Model JSON from `train-labeler`
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Likeliness CSV to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the per-note gate decisions as JSON
    #[arg(long, value_name = "FILE")]
    pub gates: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn label(args: LabelArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    rec.input(&args.input);
    let contour = formats::read_midi_input(&args.input)?;
    let notes = read_score(&args.score, &mut rec)?;
    rec.input(&args.model);
    let model = LabelerModel::from_json(
        &formats::read_text(&args.model)?,
        &args.model.display().to_string(),
    )?;
    let frame_notes: FrameNotes = rasterize_notes(&notes, contour.len(), contour.frame_period());
    let l = labeler::label(&contour, &frame_notes, &model).map_err(|e| at(&args.input, e))?;
    rec.write(
        &args.out,
        formats::format_likeliness_csv(&l, contour.frame_period()),
    )?;
    let gates = note_gate_decision(&l, &frame_notes, cfg.epsilon)?;
    if let Some(path) = &args.gates {
        rec.write(path, gates_json(&gates))?;
    }
    let in_note = frame_notes
        .note_index()
        .iter()
        .filter(|n| n.is_some())
        .count();
    let summary = json!({
        "frames": l.len(),
        "note_frames": in_note,
        "notes": gates.len(),
        "notes_with_vibrato": gates.iter().filter(|g| g.vibrato).count(),
        "epsilon": cfg.epsilon,
    });
    rec.finish("label", cfg, summary)
}

#[derive(Debug, Args)]
pub struct TrainEnergyArgs {
    /// Power spectrogram: headerless CSV (one frame per row) or .f32 with a .json sidecar
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Codec JSON to write
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

fn data_norm(spec: &PowerSpectrogram, log_compress: bool) -> f64 {
    spec.frames()
        .iter()
        .map(|&v| if log_compress { v.ln_1p() } else { v })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn energy_report(
    spec: &PowerSpectrogram,
    codec: &EnergyCodec,
) -> Result<serde_json::Value, CliError> {
    let codec_loss = codec.reconstruction_loss(spec)?;
    let (_, scalar) = scalar_baseline_fit(spec, codec.log_compress)?;
    let none = no_energy_loss(spec, codec.log_compress)?;
    let norm = data_norm(spec, codec.log_compress);
    Ok(json!({
        "frames": spec.n_frames(),
        "bins": spec.bins(),
        "latent_dim": codec.latent_dim,
        "codec_loss": codec_loss,
        "scalar_baseline_loss": scalar,
        "no_energy_loss": none,
        "data_norm": norm,
        "relative_loss": if norm > 0.0 { codec_loss / norm } else { 0.0 },
    }))
}

pub fn train_energy(args: TrainEnergyArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    rec.input(&args.spec);
    let spec = formats::read_spectrogram(&args.spec)?;
    let init = EnergyCodec::random(
        spec.bins(),
        cfg.latent_dim,
        cfg.activation,
        derive_seed(cfg.seed, "codec-init", 0),
    )
    .with_log_compress(cfg.log_compress);
    let train_cfg = cfg.codec(derive_seed(cfg.seed, "codec-batches", 0));
    let (codec, history) = train_codec(&spec, &init, &train_cfg).map_err(|e| at(&args.spec, e))?;
    rec.write(&args.out, codec.to_json() + "\n")?;
    let mut summary = energy_report(&spec, &codec)?;
    summary["epochs"] = json!(train_cfg.epochs);
    summary["initial_loss"] = json!(history.first());
    rec.finish("train-energy", cfg, summary)
}

#[derive(Debug, Args)]
pub struct EnergyEvalArgs {
    /// Power spectrogram, as for `train-energy`
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Codec JSON from `train-energy`
    #[arg(long, value_name = "FILE")]
    pub codec: PathBuf,
    /// Also write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn energy_eval(args: EnergyEvalArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    rec.input(&args.spec);
    rec.input(&args.codec);
    let spec = formats::read_spectrogram(&args.spec)?;
    let codec = EnergyCodec::from_json(
        &formats::read_text(&args.codec)?,
        &args.codec.display().to_string(),
    )?;
    let report =
        energy_report(&spec, &codec).map_err(|e| e.context(&args.spec.display().to_string()))?;
    if let Some(path) = &args.out {
        rec.write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    rec.finish("energy-eval", cfg, report)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference contour CSV (time_s,f0_hz,voiced)
    #[arg(long = "ref", value_name = "FILE")]
    pub reference: PathBuf,
    /// Test contour CSV, same frames as the reference
    #[arg(long, value_name = "FILE")]
    pub test: PathBuf,
    /// Reference cepstra, headerless CSV with one frame per row
    #[arg(long, value_name = "FILE", requires = "test_cep")]
    pub ref_cep: Option<PathBuf>,
    /// Test cepstra, same shape as the reference cepstra
    #[arg(long, value_name = "FILE", requires = "ref_cep")]
    pub test_cep: Option<PathBuf>,
    /// Also write the report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn eval(args: EvalArgs) -> Result<Manifest, CliError> {
    let cfg = resolve(&args.common)?;
    let mut rec = Recorder::from_env();
    let mut contour = |path: &Path| {
        rec.input(path);
        let text = formats::read_text(path)?;
        Ok::<_, CliError>(parse_contour_csv(&text, &path.display().to_string())?)
    };
    let reference = contour(&args.reference)?;
    let test = contour(&args.test)?;
    let pair = F0Pair::new(reference, test).map_err(|e| at(&args.test, e))?;
    let mut report = json!({
        "frames_compared": pair.frames_compared(),
        "f0_rmse_hz": f0_rmse(&pair)?,
        "f0_corr": f0_corr(&pair)?,
    });
    if let (Some(r), Some(t)) = (&args.ref_cep, &args.test_cep) {
        rec.input(r);
        rec.input(t);
        let (a, _) = formats::read_matrix(r)?;
        let (b, _) = formats::read_matrix(t)?;
        let pair = CepstraPair::new(a, b).map_err(|e| at(t, e))?;
        report["mcd_db"] = json!(mcd(&pair));
    }
    if let Some(path) = &args.out {
        rec.write(
            path,
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        )?;
    }
    rec.finish("eval", cfg, report)
}
