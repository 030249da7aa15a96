//! Python module `avsync`.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use avsync::adaptive::{clamp_srt as core_clamp_srt, init_track, AdaptiveConfig, Condition};
use avsync::align::{self as core_align, DtwConfig, OffsetSearch};
use avsync::audio::{self as core_audio, AudioBuffer};
use avsync::experiment::{self as core_experiment, ExperimentConfig, RawResults};
use avsync::ltc::{self as core_ltc, Timecode};
use avsync::mel::{self as core_mel, MelParams};
use avsync::selection::{analyze_corpus as core_analyze, MismatchMode, TakeCorpus};
use avsync::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn mel_params(json: Option<&str>) -> PyResult<MelParams> {
    match json {
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(MelParams::default()),
    }
}

/// Multichannel audio with samples in [-1, 1).
#[pyclass(name = "Audio", module = "avsync", frozen)]
struct PyAudio {
    inner: AudioBuffer,
}

#[pymethods]
impl PyAudio {
    #[new]
    fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> PyResult<Self> {
        let inner = AudioBuffer::new(sample_rate, channels).map_err(py_err)?;
        Ok(PyAudio { inner })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        let inner = core_audio::read_wav_file(path).map_err(py_err)?;
        Ok(PyAudio { inner })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        core_audio::write_wav_file(path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn channel(&self, index: usize) -> PyResult<Vec<f64>> {
        Ok(self.inner.extract_channel(index).map_err(py_err)?.channel(0).to_vec())
    }

    fn delay(&self, seconds: f64) -> PyResult<Self> {
        Ok(PyAudio { inner: self.inner.delay(seconds).map_err(py_err)? })
    }
}

/// Band-mean-normalized log mel spectrogram.
#[pyclass(name = "MelSpectrogram", module = "avsync", frozen)]
struct PyMel {
    inner: core_mel::MelSpectrogram,
}

#[pymethods]
impl PyMel {
    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    #[getter]
    fn n_bands(&self) -> usize {
        self.inner.n_bands()
    }

    #[getter]
    fn hop(&self) -> f64 {
        self.inner.hop()
    }

    fn frames(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n_frames()).map(|i| self.inner.frame(i).to_vec()).collect()
    }
}

/// Mel spectrogram of one channel; `params` is optional JSON.
#[pyfunction]
#[pyo3(signature = (audio, channel = 0, params = None))]
fn mel_spectrogram(audio: &PyAudio, channel: usize, params: Option<&str>) -> PyResult<PyMel> {
    let mono = audio.inner.extract_channel(channel).map_err(py_err)?;
    let inner = core_mel::compute_mel_spectrogram(&mono, &mel_params(params)?).map_err(py_err)?;
    Ok(PyMel { inner })
}

/// DTW alignment; returns a dict with cost, path, warp_fn and the asynchrony score.
#[pyfunction]
fn align(py: Python<'_>, original: &PyMel, recording: &PyMel) -> PyResult<Py<PyAny>> {
    let r = core_align::align(&original.inner, &recording.inner).map_err(py_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("cost", r.cost)?;
    d.set_item("path", r.path.pairs().to_vec())?;
    d.set_item("warp_fn", r.warp_fn)?;
    d.set_item("async_frames", r.async_frames)?;
    d.set_item("async_seconds", r.async_seconds)?;
    Ok(d.into_any().unbind())
}

/// Best whole-hop shift of `take`; returns (offset_hops, offset_seconds, async_seconds).
#[pyfunction]
#[pyo3(signature = (original, take, max_offset = 2.0))]
fn find_best_offset(original: &PyMel, take: &PyMel, max_offset: f64) -> PyResult<(i64, f64, f64)> {
    let search = OffsetSearch { min: -max_offset, max: max_offset, ..Default::default() };
    let r = core_align::find_best_offset(&original.inner, &take.inner, &search, &DtwConfig::default())
        .map_err(py_err)?;
    Ok((r.offset_hops, r.offset_seconds, r.alignment.async_seconds))
}

/// RMS deviation of a warp function from the diagonal; returns (frames, seconds).
#[pyfunction]
fn asynchrony_score(warp_fn: Vec<f64>, hop: f64) -> PyResult<(f64, f64)> {
    let s = core_align::asynchrony_score(&warp_fn, hop).map_err(py_err)?;
    Ok((s.frames, s.seconds))
}

#[pyfunction]
#[pyo3(signature = (start, n_frames, sample_rate = 48000, fps = 25))]
fn encode_ltc(start: &str, n_frames: usize, sample_rate: u32, fps: u8) -> PyResult<PyAudio> {
    let tc = Timecode::parse(start, fps).map_err(py_err)?;
    Ok(PyAudio { inner: core_ltc::encode_ltc(tc, n_frames, sample_rate).map_err(py_err)? })
}

/// Decoded frames as (timecode, start_sample) pairs.
#[pyfunction]
#[pyo3(signature = (audio, channel = 0, fps = 25))]
fn decode_ltc(audio: &PyAudio, channel: usize, fps: u8) -> PyResult<Vec<(String, usize)>> {
    let mono = audio.inner.extract_channel(channel).map_err(py_err)?;
    let out = core_ltc::LtcDecoder::new(fps).decode(&mono).map_err(py_err)?;
    Ok(out.frames.iter().map(|f| (f.timecode.to_string(), f.start_sample)).collect())
}

/// Score, select and correct a corpus listed in a manifest; returns report JSON.
#[pyfunction]
#[pyo3(signature = (manifest, threshold = 0.060, mismatched = "exact", seed = 0))]
fn analyze_corpus(manifest: &str, threshold: f64, mismatched: &str, seed: u64) -> PyResult<String> {
    let corpus = TakeCorpus::from_manifest_file(manifest).map_err(py_err)?;
    let mode: MismatchMode = mismatched.parse().map_err(py_err)?;
    let report = core_analyze(
        &corpus.load(),
        &MelParams::default(),
        threshold,
        &OffsetSearch::default(),
        mode,
        seed,
    )
    .map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Adaptive 80% track for one condition, e.g. "AVNoiseClosed".
#[pyclass(name = "AdaptiveTrack", module = "avsync")]
struct PyTrack {
    inner: avsync::adaptive::AdaptiveTrack,
}

#[pymethods]
impl PyTrack {
    #[new]
    fn new(condition: &str) -> PyResult<Self> {
        let c: Condition = condition.parse().map_err(py_err)?;
        Ok(PyTrack { inner: init_track(c, &AdaptiveConfig::default()) })
    }

    #[getter]
    fn current_level(&self) -> Option<f64> {
        self.inner.current_level()
    }

    #[getter]
    fn levels(&self) -> Vec<f64> {
        self.inner.levels().to_vec()
    }

    #[getter]
    fn reversals(&self) -> u32 {
        self.inner.reversals()
    }

    fn update(&mut self, words_correct: u8) -> PyResult<f64> {
        self.inner.update_level(words_correct).map_err(py_err)
    }

    /// (srt_raw, srt_clamped, clamped)
    fn estimate_srt(&self) -> PyResult<(f64, f64, bool)> {
        let e = self.inner.estimate_srt().map_err(py_err)?;
        Ok((e.srt_raw, e.srt_clamped, e.clamped))
    }
}

/// (srt_clamped, clamped) for a raw SRT in "noise" or "quiet".
#[pyfunction]
fn clamp_srt(srt_raw: f64, background: &str) -> PyResult<(f64, bool)> {
    let c: Condition = match background {
        "noise" => "AONoiseClosed",
        "quiet" => "AOQuietClosed",
        other => return Err(PyValueError::new_err(format!("unknown background '{other}'"))),
    }
    .parse()
    .map_err(py_err)?;
    let e = core_clamp_srt(srt_raw, c.background(), &AdaptiveConfig::default());
    Ok((e.srt_clamped, e.clamped))
}

#[pyfunction]
fn pearson_r(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    avsync::stats::pearson_r(&x, &y).map_err(py_err)
}

/// Simulate the full experiment; returns the raw results JSON.
#[pyfunction]
#[pyo3(signature = (seed, config = None))]
fn run_experiment(py: Python<'_>, seed: u64, config: Option<&str>) -> PyResult<String> {
    let cfg = match config {
        Some(s) => ExperimentConfig::from_json(s).map_err(py_err)?,
        None => ExperimentConfig::default(),
    };
    let raw = py
        .detach(|| core_experiment::run_experiment(&cfg, seed))
        .map_err(py_err)?;
    raw.to_json().map_err(py_err)
}

/// Summary report JSON from raw results JSON.
#[pyfunction]
fn summarize(raw: &str) -> PyResult<String> {
    let raw = RawResults::from_json(raw).map_err(py_err)?;
    core_experiment::summarize(&raw).to_json().map_err(py_err)
}

#[pymodule(name = "avsync")]
fn avsync_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}

/// Add every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAudio>()?;
    m.add_class::<PyMel>()?;
    m.add_class::<PyTrack>()?;
    m.add_function(wrap_pyfunction!(mel_spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(find_best_offset, m)?)?;
    m.add_function(wrap_pyfunction!(asynchrony_score, m)?)?;
    m.add_function(wrap_pyfunction!(encode_ltc, m)?)?;
    m.add_function(wrap_pyfunction!(decode_ltc, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(clamp_srt, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
