use avsync::audio::{read_wav_file, write_wav_file, AudioBuffer};
use avsync::ltc::{align_session, decode_ltc, encode_ltc, write_frames_csv, PlaybackSchedule, Timecode};

#[test]
fn stereo_session_file_aligns_schedule() {
    let rate = 48000;
    let lead = 3_217;
    let start = Timecode::parse("10:59:59:20", 25).unwrap();
    let ltc = encode_ltc(start, 60, rate).unwrap().delay_frames(lead);
    let speech = AudioBuffer::mono(rate, vec![0.0; ltc.len()]).unwrap();
    let session = AudioBuffer::interleave(&[speech, ltc]).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.wav");
    write_wav_file(&path, &session).unwrap();
    let carrier = read_wav_file(&path).unwrap().extract_channel(1).unwrap();
    let frames = decode_ltc(&carrier).unwrap();
    assert_eq!(frames.len(), 60);
    assert_eq!(frames[5].timecode.to_string(), "11:00:00:00");

    let schedule = PlaybackSchedule::from_csv(
        "sentence_id,timecode\ns001,11:00:00:00\ns002,11:00:01:03\n".as_bytes(),
        25,
    )
    .unwrap();
    let aligned = align_session(&frames, &schedule).unwrap();
    let want = |k: usize| (lead + k * 1920) as f64;
    assert!((aligned.get("s001").unwrap().unwrap() - want(5)).abs() <= 1.0);
    assert!((aligned.get("s002").unwrap().unwrap() - want(33)).abs() <= 1.0);
    assert_eq!(aligned.get("s404"), None);

    let mut csv = Vec::new();
    write_frames_csv(&frames, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 61);
}

#[test]
fn silence_decodes_to_nothing() {
    let silent = AudioBuffer::mono(48000, vec![0.0; 48000]).unwrap();
    assert!(decode_ltc(&silent).unwrap().is_empty());
}
