//! Tabular file formats used between subcommands.
//!
//! * contour CSV `time_s,f0_hz,voiced` (read and written by the library)
//! * simulated CSV `time_s,midi,label`
//! * analysis CSV `time_s,intonation_midi,vibrato_midi,depth_midi,rate_hz,voiced`
//! * likeliness CSV `time_s,likeliness`
//! * spectrograms and cepstra: headerless CSV, one frame per row, or raw
//!   little-endian f32 (`.f32`) with a `<file>.json` sidecar
//!   `{"frames", "bins", "frame_period_s"}`
//!
//! Floats are written with Rust's shortest round-trip formatting and times
//! with six decimals, so re-reading a file gives back the same values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use vibkit::contour::{
    hz_to_midi, infer_frame_period, interpolate_unvoiced, parse_contour_csv, MidiContour,
    DEFAULT_FRAME_PERIOD,
};
use vibkit::energy::PowerSpectrogram;

use crate::CliError;

pub const SIM_HEADER: [&str; 3] = ["time_s", "midi", "label"];
pub const ANALYSIS_HEADER: [&str; 6] = [
    "time_s",
    "intonation_midi",
    "vibrato_midi",
    "depth_midi",
    "rate_hz",
    "voiced",
];
pub const LIKELINESS_HEADER: [&str; 2] = ["time_s", "likeliness"];
const CONTOUR_HEADER: &str = "time_s,f0_hz,voiced";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn input_err(origin: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{origin}: {msg}"))
}

/// Rows of a headed CSV whose header must equal `expected`; every field is a
/// number.
fn numeric_table(text: &str, origin: &str, expected: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| input_err(origin, e))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(input_err(
            origin,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| input_err(origin, format!("row {line}: {e}")))?;
        let row = record
            .iter()
            .zip(expected)
            .map(|(field, column)| {
                field.parse::<f64>().map_err(|_| {
                    input_err(
                        origin,
                        format!("row {line}: column {column}: cannot parse {field:?}"),
                    )
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(input_err(origin, "no frames"));
    }
    Ok(rows)
}

fn period_of(rows: &[Vec<f64>], origin: &str) -> Result<f64, CliError> {
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    infer_frame_period(&times, origin).map_err(CliError::from)
}

fn binary_flag(v: f64, origin: &str, line: usize, column: &str) -> Result<bool, CliError> {
    match v {
        x if x == 0.0 => Ok(false),
        x if x == 1.0 => Ok(true),
        other => Err(input_err(
            origin,
            format!("row {line}: {column} must be 0 or 1, got {other}"),
        )),
    }
}

fn time(t: usize, period: f64) -> String {
    format!("{:.6}", t as f64 * period)
}

/// A simulated contour with its frame labels.
#[derive(Debug)]
pub struct SimTrack {
    pub contour: MidiContour,
    pub labels: Vec<u8>,
}

pub fn format_sim_csv(contour: &MidiContour, labels: &[u8]) -> String {
    let mut out = SIM_HEADER.join(",") + "\n";
    for (t, (v, l)) in contour.values().iter().zip(labels).enumerate() {
        let _ = writeln!(out, "{},{v},{l}", time(t, contour.frame_period()));
    }
    out
}

pub fn parse_sim_csv(text: &str, origin: &str) -> Result<SimTrack, CliError> {
    let rows = numeric_table(text, origin, &SIM_HEADER)?;
    let period = period_of(&rows, origin)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        labels.push(u8::from(binary_flag(r[2], origin, i + 2, "label")?));
    }
    let values = rows.iter().map(|r| r[1]).collect();
    let contour = MidiContour::voiced(values, period).map_err(|e| input_err(origin, e))?;
    Ok(SimTrack { contour, labels })
}

/// A gap-free midi contour from either a contour CSV (unvoiced gaps are
/// interpolated) or a simulated CSV, told apart by the header.
pub fn read_midi_input(path: &Path) -> Result<MidiContour, CliError> {
    let origin = path.display().to_string();
    let text = read_text(path)?;
    let header = text.lines().next().unwrap_or("").trim();
    if header == SIM_HEADER.join(",") {
        return Ok(parse_sim_csv(&text, &origin)?.contour);
    }
    if header != CONTOUR_HEADER {
        return Err(input_err(
            &origin,
            format!(
                "expected header {CONTOUR_HEADER:?} or {:?}, found {header:?}",
                SIM_HEADER.join(",")
            ),
        ));
    }
    let hz = parse_contour_csv(&text, &origin)?;
    let midi = hz_to_midi(&hz).map_err(|e| input_err(&origin, e))?;
    interpolate_unvoiced(&midi).map_err(|e| input_err(&origin, e))
}

/// Per-frame analysis results.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisTable {
    pub frame_period: f64,
    pub intonation: Vec<f64>,
    pub vibrato: Vec<f64>,
    pub depth: Vec<f64>,
    pub rate: Vec<f64>,
    pub voiced: Vec<bool>,
}

pub fn format_analysis_csv(a: &AnalysisTable) -> String {
    let mut out = ANALYSIS_HEADER.join(",") + "\n";
    for t in 0..a.intonation.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            time(t, a.frame_period),
            a.intonation[t],
            a.vibrato[t],
            a.depth[t],
            a.rate[t],
            u8::from(a.voiced[t])
        );
    }
    out
}

pub fn parse_analysis_csv(text: &str, origin: &str) -> Result<AnalysisTable, CliError> {
    let rows = numeric_table(text, origin, &ANALYSIS_HEADER)?;
    let frame_period = period_of(&rows, origin)?;
    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    let mut voiced = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        voiced.push(binary_flag(r[5], origin, i + 2, "voiced")?);
    }
    Ok(AnalysisTable {
        frame_period,
        intonation: column(1),
        vibrato: column(2),
        depth: column(3),
        rate: column(4),
        voiced,
    })
}

pub fn format_likeliness_csv(likeliness: &[f64], frame_period: f64) -> String {
    let mut out = LIKELINESS_HEADER.join(",") + "\n";
    for (t, l) in likeliness.iter().enumerate() {
        let _ = writeln!(out, "{},{l}", time(t, frame_period));
    }
    out
}

pub fn parse_likeliness_csv(text: &str, origin: &str) -> Result<(Vec<f64>, f64), CliError> {
    let rows = numeric_table(text, origin, &LIKELINESS_HEADER)?;
    let period = period_of(&rows, origin)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        if !(0.0..=1.0).contains(&r[1]) {
            return Err(input_err(
                origin,
                format!("row {}: likeliness {} outside [0, 1]", i + 2, r[1]),
            ));
        }
        out.push(r[1]);
    }
    Ok((out, period))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSidecar {
    frames: usize,
    bins: usize,
    #[serde(default = "default_period")]
    frame_period_s: f64,
}

fn default_period() -> f64 {
    DEFAULT_FRAME_PERIOD
}

/// A `T × D` matrix of finite values plus its frame period. CSV input
/// carries no timing, so it is assumed to use the default 10 ms hop.
pub fn read_matrix(path: &Path) -> Result<(Array2<f64>, f64), CliError> {
    let origin = path.display().to_string();
    if path.extension().is_some_and(|e| e == "f32") {
        let sidecar_path = format!("{origin}.json");
        let sidecar: RawSidecar = serde_json::from_str(&read_text(Path::new(&sidecar_path))?)
            .map_err(|e| input_err(&sidecar_path, e))?;
        let bytes = fs::read(path).map_err(|e| input_err(&origin, e))?;
        let want = sidecar.frames * sidecar.bins * 4;
        if bytes.len() != want {
            return Err(input_err(
                &origin,
                format!(
                    "{} bytes, sidecar declares {} × {} f32 values ({want} bytes)",
                    bytes.len(),
                    sidecar.frames,
                    sidecar.bins
                ),
            ));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(input_err(
                &origin,
                format!("frame {}: non-finite value", i / sidecar.bins),
            ));
        }
        let m = Array2::from_shape_vec((sidecar.frames, sidecar.bins), values)
            .map_err(|e| input_err(&origin, e))?;
        return Ok((m, sidecar.frame_period_s));
    }

    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut width = None;
    let mut frames = 0;
    for (t, record) in reader.records().enumerate() {
        let record = record.map_err(|e| input_err(&origin, format!("frame {t}: {e}")))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(input_err(
                &origin,
                format!(
                    "frame {t}: {} values, expected {}",
                    record.len(),
                    width.unwrap()
                ),
            ));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| input_err(&origin, format!("frame {t}: cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(input_err(&origin, format!("frame {t}: non-finite value")));
            }
            values.push(v);
        }
        frames += 1;
    }
    let Some(width) = width else {
        return Err(input_err(&origin, "no frames"));
    };
    let m = Array2::from_shape_vec((frames, width), values).map_err(|e| input_err(&origin, e))?;
    Ok((m, DEFAULT_FRAME_PERIOD))
}

pub fn read_spectrogram(path: &Path) -> Result<PowerSpectrogram, CliError> {
    let (m, period) = read_matrix(path)?;
    PowerSpectrogram::new(m, period).map_err(|e| input_err(&path.display().to_string(), e))
}
