mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};

use common::{ok, run, run_in, s};

fn hashes_match_disk(manifest: &Value) {
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(entry["path"].as_str().unwrap()).unwrap();
        assert_eq!(
            entry["sha256"].as_str().unwrap(),
            hex::encode(Sha256::digest(&bytes))
        );
    }
}

/// Contour CSV with an unvoiced gap: 8 s of vibrato around midi 62.
fn write_contour(path: &Path) {
    let mut text = String::from("time_s,f0_hz,voiced\n");
    for t in 0..800 {
        let s = t as f64 / 100.0;
        if (150..170).contains(&t) {
            text += &format!("{s:.6},0,0\n");
        } else {
            let midi = 62.0 + 0.5 * (2.0 * std::f64::consts::PI * 5.5 * s).cos();
            text += &format!("{s:.6},{},1\n", 440.0 * ((midi - 69.0) / 12.0f64).exp2());
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn pipeline_gates_match_the_injected_notes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = d.join("train");
    let test = d.join("test");
    let model = d.join("model.json");
    ok(&[
        "simulate",
        "--synthetic",
        "30",
        "--duration-s",
        "30",
        "--seed",
        "1",
        "--out-dir",
        &s(&train),
    ]);
    let m = ok(&[
        "train-labeler",
        "--sim-dir",
        &s(&train),
        "--out",
        &s(&model),
        "--seed",
        "1",
    ]);
    hashes_match_disk(&m);
    ok(&[
        "simulate",
        "--synthetic",
        "4",
        "--duration-s",
        "30",
        "--seed",
        "2",
        "--out-dir",
        &s(&test),
    ]);

    let (mut checked, mut injected) = (0, 0);
    for i in 0..4 {
        let name = format!("sim_{i:04}");
        let sim = test.join(format!("{name}.csv"));
        let score = test.join(format!("{name}.json"));
        let analysis = d.join(format!("{name}.analysis.csv"));
        let likeliness = d.join(format!("{name}.l.csv"));
        let out = d.join(format!("{name}.out.csv"));
        let gates = d.join(format!("{name}.gates.json"));
        ok(&["analyze", "--in", &s(&sim), "--out", &s(&analysis)]);
        ok(&[
            "label",
            "--in",
            &s(&sim),
            "--score",
            &s(&score),
            "--model",
            &s(&model),
            "--out",
            &s(&likeliness),
        ]);
        let m = ok(&[
            "synth",
            "--analysis",
            &s(&analysis),
            "--score",
            &s(&score),
            "--likeliness",
            &s(&likeliness),
            "--out",
            &s(&out),
            "--gates",
            &s(&gates),
        ]);
        hashes_match_disk(&m);

        let provenance: Value = serde_json::from_str(
            &fs::read_to_string(test.join(format!("{name}.provenance.json"))).unwrap(),
        )
        .unwrap();
        let depth: HashMap<u64, f64> = provenance["provenance"]["segments"]
            .as_array()
            .unwrap()
            .iter()
            .map(|seg| {
                (
                    seg["note_index"].as_u64().unwrap(),
                    seg["depth_peak"].as_f64().unwrap(),
                )
            })
            .collect();
        let gates: Value = serde_json::from_str(&fs::read_to_string(&gates).unwrap()).unwrap();
        let mut note_frame = vec![false; 3000];
        for g in gates.as_array().unwrap() {
            let note = g["note_index"].as_u64().unwrap();
            let (a, b) = (
                g["start"].as_u64().unwrap() as usize,
                g["end"].as_u64().unwrap() as usize,
            );
            note_frame[a..b].fill(true);
            match depth.get(&note) {
                Some(&d) if d < 0.5 => continue,
                Some(_) => {
                    injected += 1;
                    assert!(
                        g["vibrato"].as_bool().unwrap(),
                        "{name} note {note}: injected but gated off"
                    );
                }
                None => assert!(
                    !g["vibrato"].as_bool().unwrap(),
                    "{name} note {note}: gated on without injection"
                ),
            }
            checked += 1;
        }

        // The final contour is voiced exactly on note frames.
        let text = fs::read_to_string(&out).unwrap();
        let voiced: Vec<bool> = text.lines().skip(1).map(|l| l.ends_with(",1")).collect();
        assert_eq!(voiced, note_frame);
    }
    assert!(
        checked > 40 && injected > 10,
        "{checked} notes, {injected} injected"
    );
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Value> = ["a", "b", "c"]
        .iter()
        .zip(["7", "7", "8"])
        .map(|(name, seed)| {
            run_in(
                dir.path(),
                &[
                    "simulate",
                    "--synthetic",
                    "3",
                    "--duration-s",
                    "10",
                    "--seed",
                    seed,
                    "--out-dir",
                    name,
                ],
            )
            .manifest()
        })
        .collect();
    let hashes = |m: &Value| -> Vec<String> {
        m["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["sha256"].as_str().unwrap().to_owned())
            .collect()
    };
    assert_eq!(hashes(&runs[0]), hashes(&runs[1]));
    assert_ne!(hashes(&runs[0]), hashes(&runs[2]));
    for f in common::files_under(&dir.path().join("a")) {
        assert_eq!(
            fs::read(dir.path().join("a").join(&f)).unwrap(),
            fs::read(dir.path().join("b").join(&f)).unwrap()
        );
    }
    hashes_match_disk(&runs[0]);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let contour = dir.path().join("c.csv");
    write_contour(&contour);
    let cfg = dir.path().join("cfg.toml");
    let out = s(&dir.path().join("a.csv"));
    let analyze = |extra: &[&str]| {
        let mut args = vec![
            "analyze",
            "--in",
            contour.to_str().unwrap(),
            "--out",
            out.as_str(),
        ];
        args.extend_from_slice(extra);
        run(&args)
    };

    fs::write(&cfg, "").unwrap();
    let m = analyze(&["--config", cfg.to_str().unwrap()]).manifest();
    let c = &m["config"];
    assert_eq!(c["epsilon"], 0.5);
    assert_eq!(
        (c["low_cut_hz"].as_f64(), c["high_cut_hz"].as_f64()),
        (Some(3.0), Some(8.0))
    );
    assert_eq!(c["sim_rate_hz"], 6.0);
    assert_eq!(c["sim_depth_max_midi"], 2.0);
    assert_eq!(c["sim_min_note_s"], 1.0);
    assert_eq!(c["latent_dim"], 256);
    assert_eq!(m["summary"]["frame_period_s"], 0.01);

    fs::write(&cfg, "epsilon = 0.5\n").unwrap();
    let m = analyze(&["--config", cfg.to_str().unwrap(), "--epsilon", "0.6"]).manifest();
    assert_eq!(m["config"]["epsilon"], 0.6);

    fs::write(&cfg, "epsilon = 1.5\n").unwrap();
    let r = analyze(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("epsilon"), "{}", r.stderr);

    fs::write(&cfg, "epsilon = 0.5\nlatent_size = 3\n").unwrap();
    let r = analyze(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(
        r.stderr.contains("latent_size") && r.stderr.contains("latent_dim"),
        "{}",
        r.stderr
    );
}

#[test]
fn analyze_writes_one_row_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let contour = dir.path().join("c.csv");
    write_contour(&contour);
    let out = dir.path().join("a.csv");
    let m = ok(&["analyze", "--in", &s(&contour), "--out", &s(&out)]);
    hashes_match_disk(&m);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "time_s,intonation_midi,vibrato_midi,depth_midi,rate_hz,voiced"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 800);
    assert_eq!(rows[160][5], 0.0);
    // Frames clear of the gap and the edges see the 0.5 semitone, 5.5 Hz vibrato.
    for r in &rows[300..670] {
        assert!(
            (r[3] - 0.5).abs() < 0.1 && (r[4] - 5.5).abs() < 0.3,
            "{r:?}"
        );
    }
}

#[test]
fn exit_codes_follow_the_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    assert_eq!(run(&["analyze", "--in"]).code, 1);
    assert_eq!(run(&["transmogrify"]).code, 1);
    assert_eq!(run(&["--help"]).code, 0);

    let missing = d.join("nope.csv");
    let r = run(&[
        "analyze",
        "--in",
        &s(&missing),
        "--out",
        &s(&d.join("a.csv")),
    ]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("nope.csv"), "{}", r.stderr);

    let broken = d.join("broken.csv");
    fs::write(
        &broken,
        "time_s,f0_hz,voiced\n0.000000,220,1\n0.010000,abc,1\n",
    )
    .unwrap();
    let r = run(&[
        "analyze",
        "--in",
        &s(&broken),
        "--out",
        &s(&d.join("a.csv")),
    ]);
    assert_eq!(r.code, 2);
    assert!(
        r.stderr.contains("broken.csv") && r.stderr.contains("row 3"),
        "{}",
        r.stderr
    );

    // No frame voiced in both: RMSE is undefined.
    let a = d.join("ref.csv");
    let b = d.join("test.csv");
    fs::write(&a, "time_s,f0_hz,voiced\n0.000000,220,1\n0.010000,0,0\n").unwrap();
    fs::write(&b, "time_s,f0_hz,voiced\n0.000000,0,0\n0.010000,230,1\n").unwrap();
    let r = run(&["eval", "--ref", &s(&a), "--test", &s(&b)]);
    assert_eq!(r.code, 3, "{}", r.stderr);

    let spec = d.join("spec.csv");
    common::write_matrix(
        &spec,
        &ndarray::Array2::from_shape_fn((6, 4), |(t, k)| (t + k) as f64),
    );
    let r = run(&[
        "train-energy",
        "--spec",
        &s(&spec),
        "--out",
        &s(&d.join("codec.json")),
        "--latent-dim",
        "2",
        "--codec-epochs",
        "20",
        "--codec-lr",
        "1e300",
    ]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("diverged"), "{}", r.stderr);
}

#[test]
fn help_documents_defaults() {
    let r = run(&["synth", "--help"]);
    assert_eq!(r.code, 0);
    for needle in [
        "[default: 0.5]",
        "[default: 3]",
        "[default: 8]",
        "[default: 6]",
        "[default: 256]",
    ] {
        assert!(r.stdout.contains(needle), "synth --help lacks {needle}");
    }
}

#[test]
fn out_dir_override_applies_to_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let contour = dir.path().join("c.csv");
    write_contour(&contour);
    let r = run_in(
        &dir.path().join("outputs"),
        &["analyze", "--in", &s(&contour), "--out", "nested/a.csv"],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(dir.path().join("outputs/nested/a.csv").is_file());
    hashes_match_disk(&r.manifest());
}

#[test]
fn eval_reports_all_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let a = d.join("ref.csv");
    let b = d.join("test.csv");
    fs::write(
        &a,
        "time_s,f0_hz,voiced\n0.000000,0,0\n0.010000,0,0\n0.020000,100,1\n0.030000,200,1\n",
    )
    .unwrap();
    fs::write(
        &b,
        "time_s,f0_hz,voiced\n0.000000,0,0\n0.010000,150,1\n0.020000,103,1\n0.030000,196,1\n",
    )
    .unwrap();
    let ca = d.join("ref_cep.csv");
    let cb = d.join("test_cep.csv");
    fs::write(&ca, "7,0,0,0\n").unwrap();
    fs::write(&cb, "0,1,0,0\n").unwrap();
    let report = d.join("report.json");
    let m = ok(&[
        "eval",
        "--ref",
        &s(&a),
        "--test",
        &s(&b),
        "--ref-cep",
        &s(&ca),
        "--test-cep",
        &s(&cb),
        "--out",
        &s(&report),
    ]);
    let sum = &m["summary"];
    assert_eq!(sum["frames_compared"], 2);
    assert!((sum["f0_rmse_hz"].as_f64().unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
    assert!((sum["mcd_db"].as_f64().unwrap() - 10.0 / 10f64.ln() * 2f64.sqrt()).abs() < 1e-12);
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(&on_disk, sum);
}

#[test]
fn simulate_reads_a_corpus_directory() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    write_contour(&corpus.join("take.csv"));
    fs::write(
        corpus.join("take.json"),
        r#"[{"midi": 62, "onset_s": 0.2, "offset_s": 1.4}, {"midi": 62, "onset_s": 2.0, "offset_s": 7.5}]"#,
    )
    .unwrap();
    let out = dir.path().join("sim");
    let m = ok(&[
        "simulate",
        "--corpus",
        &s(&corpus),
        "--out-dir",
        &s(&out),
        "--seed",
        "4",
    ]);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["summary"]["items"], 1);
    hashes_match_disk(&m);
    let text = fs::read_to_string(out.join("take.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time_s,midi,label");
    assert_eq!(text.lines().count(), 801);
    assert!(out.join("take.json").is_file() && out.join("take.provenance.json").is_file());

    let r = run(&[
        "simulate",
        "--corpus",
        &s(&dir.path().join("missing")),
        "--out-dir",
        &s(&out),
    ]);
    assert_eq!(r.code, 2);
    assert_eq!(run(&["simulate", "--out-dir", &s(&out)]).code, 1);
}
