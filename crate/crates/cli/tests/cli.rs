use std::path::Path;
use std::process::{Command, Output};

fn avsync(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avsync"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&avsync(&["sim", "run"], dir.path())), 1);
    assert_eq!(code(&avsync(&["bogus"], dir.path())), 1);
    assert_eq!(code(&avsync(&["sim", "run", "--seed", "x", "--out", "o"], dir.path())), 1);
    assert_eq!(code(&avsync(&["--help"], dir.path())), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.wav"), b"not a wav file").unwrap();
    let o = avsync(&["mel", "dump", "--wav", "bad.wav", "--out", "m.csv"], dir.path());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(dir.path().join("raw.json"), b"{").unwrap();
    assert_eq!(code(&avsync(&["sim", "report", "--in", "raw.json", "--out", "r.json"], dir.path())), 2);
    let o = avsync(&["sim", "run", "--seed", "1", "--config", "missing.json", "--out", "o.json"], dir.path());
    assert_ne!(code(&o), 0);
}

#[test]
fn sim_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"population": {"n_listeners": 4}}"#).unwrap();
    let o = avsync(&["sim", "run", "--config", "c.json", "--seed", "5", "--out", "raw.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = avsync(
        &["sim", "report", "--in", "raw.json", "--out", "report.json", "--csv", "report.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["n_listeners"], 4);
    assert!(report["conditions"]["AVNoiseClosed"]["mean"].is_number());
}

#[test]
fn ltc_encode_decode_align() {
    let dir = tempfile::tempdir().unwrap();
    let o = avsync(
        &["ltc", "encode", "--start", "01:00:00:00", "--frames", "30", "--out", "ltc.wav"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&avsync(&["ltc", "decode", "--wav", "ltc.wav", "--out", "f.csv"], dir.path())), 0);
    let frames = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    assert_eq!(frames.lines().count(), 31);
    assert!(frames.contains("01:00:01:04"));

    std::fs::write(dir.path().join("s.csv"), "sentence_id,timecode\ns001,01:00:00:10\n").unwrap();
    let o = avsync(
        &["ltc", "align", "--wav", "ltc.wav", "--schedule", "s.csv", "--out", "a.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let aligned = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(aligned.contains("s001,19200"), "{aligned}");
    assert_eq!(code(&avsync(&["ltc", "decode", "--wav", "ltc.wav", "--channel", "1", "--out", "x.csv"], dir.path())), 1);
}

#[test]
fn sync_pipeline_on_synthetic_corpus() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("synth.json"),
        r#"{"n_sentences": 3, "takes_per_sentence": 2, "sample_rate": 16000}"#,
    )
    .unwrap();
    let o = avsync(
        &["sync", "synth", "--out-dir", "corpus", "--config", "synth.json", "--outliers", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = "corpus/manifest.csv";
    assert_eq!(code(&avsync(&["sync", "scan", "--manifest", manifest, "--out", "scores.csv"], dir.path())), 0);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("scores.csv")).unwrap().lines().count(),
        7
    );
    let o = avsync(&["sync", "select", "--manifest", manifest, "--out", "sel.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sel: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sel.json")).unwrap()).unwrap();
    let records = sel["records"].as_array().unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[2]["corrected"], true);
    assert_eq!(code(&avsync(&["sync", "sensitivity", "--manifest", manifest, "--out", "sens.json", "--mismatched", "sample:0.5"], dir.path())), 0);
    assert_eq!(code(&avsync(&["sync", "sensitivity", "--manifest", manifest, "--out", "s.json", "--mismatched", "sometimes"], dir.path())), 1);
}

#[test]
fn mst_lists_and_mel_dump() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&avsync(&["mst", "lists", "--n", "2", "--seed", "1", "--out", "lists.csv"], dir.path())), 0);
    let lists = std::fs::read_to_string(dir.path().join("lists.csv")).unwrap();
    assert_eq!(lists.lines().count(), 41);
    assert_eq!(code(&avsync(&["ltc", "encode", "--start", "00:00:00:00", "--frames", "25", "--rate", "16000", "--out", "x.wav"], dir.path())), 0);
    assert_eq!(code(&avsync(&["mel", "dump", "--wav", "x.wav", "--out", "mel.csv"], dir.path())), 0);
    let mel = std::fs::read_to_string(dir.path().join("mel.csv")).unwrap();
    assert_eq!(mel.lines().count(), 1 + 42);
}
