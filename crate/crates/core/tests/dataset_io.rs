use vahf::harness::dataset::{read_ground_truth, read_wav, write_wav};
use vahf::harness::*;
use vahf::preprocess::{preprocess_session, PreprocessConfig};
use vahf::simulate::{default_plans, make_session, SimConfig};
use vahf::{ChannelName, Error, Exec};

#[test]
fn wav_round_trip_quantises_to_16_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let seg =
        vahf::dsp::AudioSegment::new((0..480).map(|i| (i as f64 * 0.05).sin() * 0.5).collect(), 48_000.0).unwrap();
    write_wav(&path, &seg).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate(), 48_000.0);
    assert_eq!(back.samples().len(), 480);
    for (a, b) in seg.samples().iter().zip(back.samples()) {
        assert!((a - b).abs() <= 1.0 / 32767.0);
    }
}

#[test]
fn missing_root_is_a_dataset_error() {
    let err = list_sessions(std::path::Path::new("/nonexistent/vahf")).unwrap_err();
    assert!(matches!(err, Error::Dataset { .. }));
    let dir = tempfile::tempdir().unwrap();
    assert!(list_sessions(dir.path()).is_err());
}

#[test]
fn session_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plans: Vec<_> = default_plans(1, 2).into_iter().take(2).collect();
    let sim = SimConfig::default();
    simulate_dataset(dir.path(), &plans, &sim, Exec::Sequential).unwrap();
    let sessions = list_sessions(dir.path()).unwrap();
    assert_eq!(sessions.len(), 2);
    assert_eq!(sessions[0], session_dir(dir.path(), 0, plans[0].session));
    for name in ChannelName::ALL {
        assert!(sessions[0].join(format!("{name}.wav")).is_file(), "{name}");
    }
    for f in ["imu.csv", "ticks.json", "meta.json", "ground_truth.json"] {
        assert!(sessions[0].join(f).is_file(), "{f}");
    }
    let (meta, rec) = read_session(&sessions[0]).unwrap();
    assert_eq!(meta.label, plans[0].label);
    assert_eq!(meta.commands, plans[0].commands);
    assert!(read_ground_truth(&sessions[0]).unwrap().is_some());

    let (orig, _) = make_session(&plans[0], &sim).unwrap();
    assert_eq!(rec.ticks, orig.ticks);
    assert_eq!(rec.imu.rows.len(), orig.imu.rows.len());

    // Segmentation survives the 16-bit round trip.
    let pre = PreprocessConfig::default();
    let a = preprocess_session(&orig, 0, meta.label, meta.posture, &meta.commands, &pre).unwrap();
    let b = preprocess_session(&rec, 0, meta.label, meta.posture, &meta.commands, &pre).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.start - y.start).abs() < 0.02 && (x.end - y.end).abs() < 0.02);
    }

    let out = dir.path().join("samples");
    let n = preprocess_dataset(dir.path(), &out, &pre, Exec::Parallel).unwrap();
    assert_eq!(n, 20);
    let dirs = list_samples(&out).unwrap();
    assert_eq!(dirs.len(), 20);
    let s = read_sample(&dirs[0]).unwrap();
    assert_eq!(s.vocal.len(), b[0].vocal.len());
    assert_eq!(s.command_id, b[0].command_id);
    let feats = samples_features(&out, &Default::default(), Exec::Sequential).unwrap();
    assert_eq!(feats.len(), 20);
}
