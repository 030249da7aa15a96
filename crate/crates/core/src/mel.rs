//! Log mel spectrogram features for the asynchrony analysis.
//!
//! Each frame is Hann windowed, zero padded to the next power of two and
//! transformed; power spectra are pooled by unit-area triangular filters spaced
//! evenly on the HTK mel scale, log compressed, and finally each band has its
//! mean over the utterance removed so that level differences between recordings
//! do not register as distance.

use std::io;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MelParams {
    /// Analysis window in seconds.
    pub window: f64,
    /// Frame shift in seconds.
    pub hop: f64,
    pub n_bands: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Added to every band energy before the logarithm.
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        MelParams {
            window: 0.046,
            hop: 0.023,
            n_bands: 64,
            f_min: 50.0,
            f_max: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelParams {
    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window * f64::from(rate)).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop * f64::from(rate)).round() as usize
    }

    pub fn validate(&self, rate: u32) -> Result<()> {
        let nyquist = f64::from(rate) / 2.0;
        if !(self.hop > 0.0 && self.hop <= self.window) {
            return Err(Error::Argument(format!(
                "need 0 < hop <= window, got hop {} window {}",
                self.hop, self.window
            )));
        }
        if self.hop_samples(rate) == 0 {
            return Err(Error::Argument("hop shorter than one sample".into()));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::Argument(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {}..{}",
                self.f_min, self.f_max
            )));
        }
        if self.n_bands < 2 {
            return Err(Error::Argument("at least two mel bands are required".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Argument("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// Number of whole frames in a signal of `length` samples; the tail is not padded.
pub fn frame_count(length: usize, params: &MelParams, rate: u32) -> usize {
    let w = params.window_samples(rate);
    let h = params.hop_samples(rate);
    if h == 0 || length < w {
        0
    } else {
        (length - w) / h + 1
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters over the bins of an `n_fft`-point spectrum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Per band: first bin index and the weights from there on.
    filters: Vec<(usize, Vec<f64>)>,
    centers: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(params: &MelParams, rate: u32, n_fft: usize) -> Self {
        let n_bins = n_fft / 2 + 1;
        let bin_hz = f64::from(rate) / n_fft as f64;
        let (m_lo, m_hi) = (hz_to_mel(params.f_min), hz_to_mel(params.f_max));
        let step = (m_hi - m_lo) / (params.n_bands + 1) as f64;
        let edges: Vec<f64> = (0..params.n_bands + 2)
            .map(|k| mel_to_hz(m_lo + step * k as f64))
            .collect();

        let mut filters = Vec::with_capacity(params.n_bands);
        for b in 0..params.n_bands {
            let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let height = 2.0 / (hi - lo);
            let first = (lo / bin_hz).floor() as usize;
            let last = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
            let mut weights: Vec<f64> = (first..=last)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    };
                    w * height
                })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                // band narrower than a bin: take the bin nearest the center
                let k = ((c / bin_hz).round() as usize).clamp(first, last);
                weights[k - first] = height;
            }
            filters.push((first, weights));
        }
        MelFilterbank {
            filters,
            centers: edges[1..=params.n_bands].to_vec(),
            n_bins,
        }
    }

    pub fn n_bands(&self) -> usize {
        self.filters.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Center frequency of each band in Hz.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        let (first, w) = &self.filters[band];
        bin.checked_sub(*first)
            .and_then(|k| w.get(k))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (first, w)) in out.iter_mut().zip(&self.filters) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// A frames × bands matrix of per-band mean-normalized log energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Vec<f64>,
    band_means: Vec<f64>,
    n_frames: usize,
    params: MelParams,
    sample_rate: u32,
}

impl MelSpectrogram {
    /// Build from raw log energies (frame-major), normalizing each band.
    pub fn from_log_energies(
        log_energies: Vec<f64>,
        n_frames: usize,
        params: MelParams,
        sample_rate: u32,
    ) -> Result<Self> {
        let n_bands = params.n_bands;
        if log_energies.len() != n_frames * n_bands {
            return Err(Error::Argument(format!(
                "expected {} values for {n_frames} frames of {n_bands} bands, got {}",
                n_frames * n_bands,
                log_energies.len()
            )));
        }
        let mut values = log_energies;
        let mut band_means = vec![0.0; n_bands];
        if n_frames > 0 {
            // mean as first row plus mean deviation, so constant bands come out exactly zero
            let first = values[..n_bands].to_vec();
            for row in values.chunks_exact(n_bands) {
                for ((m, v), f) in band_means.iter_mut().zip(row).zip(&first) {
                    *m += v - f;
                }
            }
            for (m, f) in band_means.iter_mut().zip(&first) {
                *m = f + *m / n_frames as f64;
            }
            for row in values.chunks_exact_mut(n_bands) {
                for (v, m) in row.iter_mut().zip(&band_means) {
                    *v -= m;
                }
            }
        }
        Ok(MelSpectrogram {
            values,
            band_means,
            n_frames,
            params,
            sample_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bands(&self) -> usize {
        self.params.n_bands
    }

    pub fn is_empty(&self) -> bool {
        self.n_frames == 0
    }

    pub fn params(&self) -> &MelParams {
        &self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frame shift in seconds.
    pub fn hop(&self) -> f64 {
        self.params.hop
    }

    /// Normalized values of frame `i`.
    pub fn frame(&self, i: usize) -> &[f64] {
        let b = self.n_bands();
        &self.values[i * b..(i + 1) * b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn band_means(&self) -> &[f64] {
        &self.band_means
    }

    /// Log energies before mean removal.
    pub fn log_energies(&self) -> Vec<f64> {
        let b = self.n_bands();
        self.values
            .chunks_exact(b)
            .flat_map(|row| row.iter().zip(&self.band_means).map(|(v, m)| v + m))
            .collect()
    }

    /// Shift in time by whole frames: positive `frames` prepends silent frames,
    /// negative drops leading frames. Bands are renormalized afterwards.
    pub fn shifted(&self, frames: i64) -> MelSpectrogram {
        let b = self.n_bands();
        let raw = self.log_energies();
        let (data, n) = if frames >= 0 {
            let k = frames as usize;
            let mut data = vec![self.params.log_floor.ln(); k * b];
            data.extend_from_slice(&raw);
            (data, self.n_frames + k)
        } else {
            let k = (frames.unsigned_abs() as usize).min(self.n_frames);
            (raw[k * b..].to_vec(), self.n_frames - k)
        };
        MelSpectrogram::from_log_energies(data, n, self.params, self.sample_rate)
            .expect("shape preserved")
    }

    /// One row per frame, one column per band.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.n_bands()).map(|k| format!("band_{k}")).collect();
        w.write_record(&header)?;
        for i in 0..self.n_frames {
            w.write_record(self.frame(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reusable analysis state for one (params, rate) pair.
pub struct MelAnalyzer {
    params: MelParams,
    rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
    bank: MelFilterbank,
}

impl MelAnalyzer {
    pub fn new(params: MelParams, rate: u32) -> Result<Self> {
        params.validate(rate)?;
        let w = params.window_samples(rate);
        let n_fft = w.next_power_of_two();
        Ok(MelAnalyzer {
            params,
            rate,
            window: hann(w),
            fft: FftPlanner::new().plan_fft_forward(n_fft),
            n_fft,
            bank: MelFilterbank::new(&params, rate, n_fft),
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    fn frame_energies(&self, frame: &[f64], out: &mut [f64]) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for (b, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        let power: Vec<f64> = buf[..self.bank.n_bins()].iter().map(|c| c.norm_sqr()).collect();
        self.bank.apply(&power, out);
        let floor = self.params.log_floor;
        for e in out.iter_mut() {
            *e = (*e + floor).ln();
        }
    }

    pub fn compute(&self, audio: &AudioBuffer) -> Result<MelSpectrogram> {
        let x = audio.samples()?;
        if audio.sample_rate() != self.rate {
            return Err(Error::Argument(format!(
                "analyzer built for {} Hz, got {} Hz",
                self.rate,
                audio.sample_rate()
            )));
        }
        let n = frame_count(x.len(), &self.params, self.rate);
        let (w, h) = (self.window.len(), self.params.hop_samples(self.rate));
        let b = self.params.n_bands;
        let mut log_e = vec![0.0; n * b];
        log_e
            .par_chunks_mut(b)
            .enumerate()
            .for_each(|(i, out)| self.frame_energies(&x[i * h..i * h + w], out));
        MelSpectrogram::from_log_energies(log_e, n, self.params, self.rate)
    }
}

pub fn compute_mel_spectrogram(audio: &AudioBuffer, params: &MelParams) -> Result<MelSpectrogram> {
    MelAnalyzer::new(*params, audio.sample_rate())?.compute(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_edges() {
        let p = MelParams::default();
        assert_eq!(p.window_samples(48000), 2208);
        assert_eq!(p.hop_samples(48000), 1104);
        assert_eq!(frame_count(2208, &p, 48000), 1);
        assert_eq!(frame_count(2207, &p, 48000), 0);
        assert_eq!(frame_count(48000, &p, 48000), 42);
        assert_eq!(frame_count(0, &p, 48000), 0);
    }

    #[test]
    fn short_input_gives_empty_spectrogram() {
        let a = AudioBuffer::mono(48000, vec![0.1; 1000]).unwrap();
        let m = compute_mel_spectrogram(&a, &MelParams::default()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn zeros_normalize_to_zero() {
        let a = AudioBuffer::mono(48000, vec![0.0; 48000]).unwrap();
        let m = compute_mel_spectrogram(&a, &MelParams::default()).unwrap();
        assert_eq!(m.n_frames(), 42);
        assert!(m.values().iter().all(|&v| v == 0.0));
        let floor = 1e-10f64.ln();
        assert!(m.log_energies().iter().all(|&v| (v - floor).abs() < 1e-12));
    }

    #[test]
    fn param_validation() {
        let mut p = MelParams::default();
        p.f_max = 30000.0;
        assert!(p.validate(48000).is_err());
        let mut p = MelParams::default();
        p.hop = 0.05;
        assert!(p.validate(48000).is_err());
        let mut p = MelParams::default();
        p.n_bands = 1;
        assert!(p.validate(48000).is_err());
        let stereo = AudioBuffer::new(48000, vec![vec![0.0; 4000]; 2]).unwrap();
        assert!(compute_mel_spectrogram(&stereo, &MelParams::default()).is_err());
    }

    #[test]
    fn filterbank_covers_range() {
        let p = MelParams::default();
        let bank = MelFilterbank::new(&p, 48000, 4096);
        let bin_hz = 48000.0 / 4096.0;
        for k in 0..bank.n_bins() {
            let f = k as f64 * bin_hz;
            if f > p.f_min && f < p.f_max {
                let s: f64 = (0..bank.n_bands()).map(|b| bank.weight(b, k)).sum();
                assert!(s > 0.0, "bin {k} ({f} Hz) uncovered");
            }
        }
        for b in 0..bank.n_bands() {
            assert!((0..bank.n_bins()).any(|k| bank.weight(b, k) > 0.0));
        }
        // narrow bands still get a bin
        let mut tiny = p;
        tiny.n_bands = 200;
        tiny.f_max = 1000.0;
        let bank = MelFilterbank::new(&tiny, 8000, 256);
        for b in 0..bank.n_bands() {
            assert!((0..bank.n_bins()).any(|k| bank.weight(b, k) > 0.0));
        }
    }

    #[test]
    fn shifted_drops_and_pads() {
        let a = AudioBuffer::mono(
            16000,
            (0..16000).map(|i| (i as f64 * 0.37).sin() * 0.3).collect(),
        )
        .unwrap();
        let m = compute_mel_spectrogram(&a, &MelParams::default()).unwrap();
        let padded = m.shifted(3);
        assert_eq!(padded.n_frames(), m.n_frames() + 3);
        let back = padded.shifted(-3);
        let (x, y) = (m.log_energies(), back.log_energies());
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
        assert_eq!(m.shifted(-1000).n_frames(), 0);
    }
}
