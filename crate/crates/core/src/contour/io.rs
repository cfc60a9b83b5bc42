//! Contour CSV (`time_s,f0_hz,voiced`) and score JSON formats.

use std::fs;
use std::path::Path;

use super::{Note, NoteSequence, PitchContour, DEFAULT_FRAME_PERIOD};
use crate::{Error, Result};

const CONTOUR_HEADER: [&str; 3] = ["time_s", "f0_hz", "voiced"];

/// Consecutive time stamps must agree with the inferred period to this tolerance.
const PERIOD_TOL: f64 = 1e-6;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Frame period from a column of time stamps: the mean step, rounded to the
/// nanosecond, with every individual step required to match it.
pub fn infer_frame_period(times: &[f64], origin: &str) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::parse(origin, "no frames"));
    }
    if times[0].abs() > PERIOD_TOL {
        return Err(Error::parse(
            origin,
            format!("first frame must be at time 0, got {}", times[0]),
        ));
    }
    if times.len() == 1 {
        return Ok(DEFAULT_FRAME_PERIOD);
    }
    let n = times.len() - 1;
    let period = ((times[n] - times[0]) / n as f64 * 1e9).round() / 1e9;
    if !(period > 0.0) {
        return Err(Error::parse(origin, "time stamps are not increasing"));
    }
    for (t, pair) in times.windows(2).enumerate() {
        if ((pair[1] - pair[0]) - period).abs() > PERIOD_TOL {
            return Err(Error::parse(
                origin,
                format!(
                    "row {}: time step {} differs from frame period {period}",
                    t + 2,
                    pair[1] - pair[0]
                ),
            ));
        }
    }
    Ok(period)
}

pub(crate) fn parse_f64(field: &str, origin: &str, row: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            origin,
            format!("row {row}: column {column}: cannot parse {field:?} as a number"),
        )
    })
}

/// Reads CSV rows after checking the header matches `expected` exactly.
pub(crate) fn csv_rows(text: &str, origin: &str, expected: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(origin, e.to_string()))?
        .clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::parse(
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
        let record = record.map_err(|e| Error::parse(origin, format!("row {}: {e}", i + 2)))?;
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

pub fn parse_contour_csv(text: &str, origin: &str) -> Result<PitchContour> {
    let rows = csv_rows(text, origin, &CONTOUR_HEADER)?;
    let mut times = Vec::with_capacity(rows.len());
    let mut frames = Vec::with_capacity(rows.len());
    let mut voicing = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        times.push(parse_f64(&row[0], origin, line, "time_s")?);
        let f0 = parse_f64(&row[1], origin, line, "f0_hz")?;
        let voiced = match row[2].as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(
                    origin,
                    format!("row {line}: voiced must be 0 or 1, got {other:?}"),
                ))
            }
        };
        if voiced != (f0 != 0.0) {
            return Err(Error::parse(
                origin,
                format!("row {line}: voiced flag {voiced} inconsistent with f0 {f0}"),
            ));
        }
        frames.push(f0);
        voicing.push(voiced);
    }
    let period = infer_frame_period(&times, origin)?;
    PitchContour::from_parts(frames, voicing, period)
        .map_err(|e| Error::parse(origin, e.to_string()))
}

pub(crate) fn format_time(t: usize, frame_period: f64) -> String {
    format!("{:.6}", t as f64 * frame_period)
}

pub fn format_contour_csv(contour: &PitchContour) -> String {
    let mut out = String::with_capacity(contour.len() * 24 + 32);
    out.push_str(&CONTOUR_HEADER.join(","));
    out.push('\n');
    for (t, (&f, &v)) in contour.frames().iter().zip(contour.voicing()).enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            format_time(t, contour.frame_period()),
            f,
            u8::from(v)
        ));
    }
    out
}

pub fn read_contour_csv(path: impl AsRef<Path>) -> Result<PitchContour> {
    let path = path.as_ref();
    parse_contour_csv(&read_text(path)?, &path.display().to_string())
}

pub fn write_contour_csv(path: impl AsRef<Path>, contour: &PitchContour) -> Result<()> {
    write_text(path.as_ref(), &format_contour_csv(contour))
}

pub fn parse_score_json(text: &str, origin: &str) -> Result<NoteSequence> {
    let notes: Vec<Note> =
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
    NoteSequence::new(notes).map_err(|e| Error::parse(origin, e.to_string()))
}

pub fn format_score_json(notes: &NoteSequence) -> String {
    serde_json::to_string_pretty(notes.notes()).expect("notes always serialize")
}

pub fn read_score_json(path: impl AsRef<Path>) -> Result<NoteSequence> {
    let path = path.as_ref();
    parse_score_json(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_a_small_file() {
        let text = "time_s,f0_hz,voiced\n0.000000,220.5,1\n0.010000,0,0\n0.020000,221,1\n";
        let c = parse_contour_csv(text, "mem").unwrap();
        assert_eq!(c.frames(), &[220.5, 0.0, 221.0]);
        assert_eq!(c.voicing(), &[true, false, true]);
        assert!((c.frame_period() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(parse_contour_csv("t,f0,v\n0,1,1\n", "mem").is_err());
        assert!(parse_contour_csv("time_s,f0_hz,voiced\n0,100,0\n", "mem").is_err());
        assert!(parse_contour_csv("time_s,f0_hz,voiced\n0,100,2\n", "mem").is_err());
        assert!(parse_contour_csv("time_s,f0_hz,voiced\n0,abc,1\n", "mem").is_err());
        // Irregular hop.
        let text = "time_s,f0_hz,voiced\n0,100,1\n0.01,100,1\n0.03,100,1\n";
        let err = parse_contour_csv(text, "f.csv").unwrap_err();
        assert!(err.to_string().contains("f.csv"));
    }

    #[test]
    fn score_json() {
        let text = r#"[{"midi": 60, "onset_s": 0.0, "offset_s": 0.5},
                       {"midi": 62, "onset_s": 0.5, "offset_s": 1.25}]"#;
        let notes = parse_score_json(text, "mem").unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes.notes()[1].midi, 62);
        let again = parse_score_json(&format_score_json(&notes), "mem").unwrap();
        assert_eq!(again, notes);
        assert!(
            parse_score_json(r#"[{"midi": 60, "onset_s": 1.0, "offset_s": 0.5}]"#, "m").is_err()
        );
    }

    proptest! {
        #[test]
        fn contour_csv_round_trip(
            raw in proptest::collection::vec(prop_oneof![Just(0.0f64), 50.0f64..1500.0], 1..200),
            period_ms in 1u32..50,
        ) {
            let period = period_ms as f64 / 1000.0;
            let c = PitchContour::new(raw, period).unwrap();
            let loaded = parse_contour_csv(&format_contour_csv(&c), "a").unwrap();
            let text = format_contour_csv(&loaded);
            let reloaded = parse_contour_csv(&text, "b").unwrap();
            prop_assert_eq!(&loaded, &reloaded);
            prop_assert_eq!(loaded.frames(), c.frames());
            prop_assert_eq!(text, format_contour_csv(&reloaded));
        }
    }
}
