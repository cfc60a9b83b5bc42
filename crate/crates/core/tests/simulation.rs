use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vibkit::analysis::{bandpass_vibrato, BandpassSpec};
use vibkit::contour::{hz_to_midi, interpolate_unvoiced, MidiContour, Note, NoteSequence};
use vibkit::sim::{dataset_from_corpus, simulate, synthetic_performance, CorpusConfig, SimConfig};

/// 30 s of back-to-back long notes with a little natural vibrato.
fn long_note_item(seed: u64) -> (MidiContour, NoteSequence) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    let mut time = 0.0;
    while time < 28.0 {
        let dur = rng.gen_range(1.2..2.5);
        notes.push(Note {
            midi: rng.gen_range(55..70),
            onset: time,
            offset: time + dur,
        });
        time += dur;
    }
    let notes = NoteSequence::new(notes).unwrap();
    let n = (time * 100.0).round() as usize;
    let mut values = vec![0.0; n];
    for note in notes.notes() {
        let a = (note.onset * 100.0).round() as usize;
        let b = ((note.offset * 100.0).round() as usize).min(n);
        for (k, v) in values[a..b].iter_mut().enumerate() {
            *v = note.midi as f64
                + 0.3 * (2.0 * std::f64::consts::PI * 5.5 * k as f64 / 100.0).sin();
        }
    }
    (MidiContour::voiced(values, 0.01).unwrap(), notes)
}

fn rms<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    (sum / count.max(1) as f64).sqrt()
}

#[test]
fn label_balance_over_fifty_seeds() {
    let mut positives = 0usize;
    let mut frames = 0usize;
    let mut per_run = Vec::new();
    for seed in 0..50 {
        let (contour, notes) = long_note_item(seed);
        let lc = simulate(
            &contour,
            &notes,
            &SimConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let p = lc.labels.iter().filter(|&&l| l == 1).count();
        per_run.push(p as f64 / lc.labels.len() as f64);
        positives += p;
        frames += lc.labels.len();
    }
    let overall = positives as f64 / frames as f64;
    assert!(
        (0.2..=0.8).contains(&overall),
        "overall positive fraction {overall}"
    );
    per_run.sort_by(f64::total_cmp);
    let median = per_run[per_run.len() / 2];
    assert!(
        (0.2..=0.8).contains(&median),
        "median positive fraction {median}"
    );
}

#[test]
fn injected_vibrato_dominates_the_band() {
    let mut checked = 0;
    for seed in 0..20 {
        let (contour, notes) = long_note_item(100 + seed);
        let lc = simulate(
            &contour,
            &notes,
            &SimConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let band = bandpass_vibrato(&lc.contour, &BandpassSpec::default())
            .unwrap()
            .vibrato_component;
        let edge = 128;
        let interior = edge..band.len() - edge;
        let strong: Vec<f64> = lc
            .provenance
            .segments
            .iter()
            .filter(|s| s.depth_peak >= 0.5)
            .flat_map(|s| {
                (s.start_frame..s.end_frame)
                    .filter(|t| interior.contains(t))
                    .map(|t| band[t])
            })
            .collect();
        let quiet: Vec<f64> = interior
            .clone()
            .filter(|&t| lc.labels[t] == 0)
            .map(|t| band[t])
            .collect();
        if strong.is_empty() || quiet.is_empty() {
            continue;
        }
        let ratio = rms(strong.iter()) / rms(quiet.iter());
        assert!(ratio > 5.0, "seed {seed}: ratio {ratio}");
        checked += 1;
    }
    assert!(checked >= 15);
}

#[test]
fn labels_stay_inside_selected_notes() {
    for seed in 0..10 {
        let (hz, notes) = synthetic_performance(&CorpusConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let contour = interpolate_unvoiced(&hz_to_midi(&hz).unwrap()).unwrap();
        let lc = simulate(
            &contour,
            &notes,
            &SimConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let mut allowed = vec![false; lc.labels.len()];
        for s in &lc.provenance.segments {
            allowed[s.start_frame..s.end_frame].fill(true);
        }
        for (t, (&l, &ok)) in lc.labels.iter().zip(&allowed).enumerate() {
            assert!(
                ok || l == 0,
                "seed {seed}: label outside a selected note at frame {t}"
            );
        }
        let injected = lc.injected();
        for (t, &ok) in allowed.iter().enumerate() {
            if !ok {
                assert_eq!(injected[t], 0.0);
            }
        }
    }
}

#[test]
fn dataset_keeps_order_and_is_reproducible() {
    let corpus: Vec<_> = (0..3).map(long_note_item).collect();
    let cfg = SimConfig {
        seed: 9,
        ..Default::default()
    };
    let a = dataset_from_corpus(&corpus, &cfg).unwrap();
    let b = dataset_from_corpus(&corpus, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    for (i, (item, (contour, notes))) in a.iter().zip(&corpus).enumerate() {
        assert_eq!(item.provenance.seed, 9 + i as u64);
        assert_eq!(
            item,
            &simulate(
                contour,
                notes,
                &SimConfig {
                    seed: 9 + i as u64,
                    ..cfg
                }
            )
            .unwrap()
        );
    }
}
