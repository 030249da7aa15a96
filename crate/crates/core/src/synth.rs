//! Parametric speech-like signals for building dubbed-take fixtures.
//!
//! Every word of a 5 × 10 matrix gets a fixed sequence of voiced (harmonic
//! with two formant peaks) and fricative (band-limited noise) segments drawn
//! from a seeded generator. A sentence is rendered by concatenating its words;
//! a "take" re-renders the same words with jittered onsets and durations, a
//! different gain and a little background noise, which is what a speaker
//! dubbing along with the original produces.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::Result;
use crate::mst::{MatrixSentence, N_CATEGORIES, WORDS_PER_CATEGORY};
use crate::selection::AudioCorpus;

#[derive(Debug, Clone, Copy)]
struct Segment {
    duration: f64,
    voiced: bool,
    f0: f64,
    f0_end: f64,
    formants: [f64; 2],
    level: f64,
}

#[derive(Debug, Clone)]
struct WordSound {
    segments: Vec<Segment>,
}

/// Deterministic vocabulary of synthetic word sounds.
#[derive(Debug, Clone)]
pub struct SpeechSynth {
    sample_rate: u32,
    words: Vec<WordSound>,
}

/// Timing and level perturbations applied when rendering a take.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TakeVariation {
    /// Standard deviation of per-word onset shifts, seconds.
    pub onset_jitter: f64,
    /// Per-word duration scale is drawn from `1 ± duration_jitter`.
    pub duration_jitter: f64,
    pub gain_range: (f64, f64),
    /// RMS of added white noise.
    pub noise_level: f64,
}

impl Default for TakeVariation {
    fn default() -> Self {
        TakeVariation {
            onset_jitter: 0.008,
            duration_jitter: 0.04,
            gain_range: (0.4, 0.9),
            noise_level: 1e-3,
        }
    }
}

const LEAD_SILENCE: f64 = 0.12;
const TAIL_SILENCE: f64 = 0.15;
const WORD_GAP: f64 = 0.03;

impl SpeechSynth {
    pub fn new(sample_rate: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5EED_0000_0001);
        let words = (0..N_CATEGORIES * WORDS_PER_CATEGORY)
            .map(|_| {
                let n_seg = rng.random_range(2..=4);
                let f0 = rng.random_range(170.0..240.0);
                let segments = (0..n_seg)
                    .map(|k| {
                        let voiced = k == 0 || rng.random_bool(0.75);
                        Segment {
                            duration: rng.random_range(0.06..0.16),
                            voiced,
                            f0: f0 * rng.random_range(0.9..1.1),
                            f0_end: f0 * rng.random_range(0.85..1.1),
                            formants: if voiced {
                                [rng.random_range(300.0..900.0), rng.random_range(1000.0..2800.0)]
                            } else {
                                [rng.random_range(2500.0..4500.0), rng.random_range(4500.0..7000.0)]
                            },
                            level: rng.random_range(0.5..1.0),
                        }
                    })
                    .collect();
                WordSound { segments }
            })
            .collect();
        SpeechSynth { sample_rate, words }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn word(&self, category: usize, index: u8) -> &WordSound {
        &self.words[category * WORDS_PER_CATEGORY + index as usize]
    }

    fn render_segment(&self, seg: &Segment, duration: f64, out: &mut [f64], start: usize, rng: &mut ChaCha8Rng) {
        let rate = f64::from(self.sample_rate);
        let n = (duration * rate).round() as usize;
        let ramp = ((0.012 * rate) as usize).min(n / 2).max(1);
        let end = (start + n).min(out.len());
        if seg.voiced {
            let nyq = rate / 2.0;
            let mut phase = 0.0;
            let bw = [120.0, 200.0];
            for i in start..end {
                let t = (i - start) as f64 / n as f64;
                let f0 = seg.f0 + (seg.f0_end - seg.f0) * t;
                phase += 2.0 * PI * f0 / rate;
                let mut s = 0.0;
                let mut h = 1;
                while (h as f64) * f0 < 5000.0_f64.min(nyq) {
                    let fh = h as f64 * f0;
                    let env: f64 = seg
                        .formants
                        .iter()
                        .zip(bw)
                        .map(|(f, b)| (-((fh - f) / b).powi(2)).exp())
                        .sum::<f64>()
                        + 0.05;
                    s += env * (h as f64 * phase).sin() / (h as f64).sqrt();
                    h += 1;
                }
                out[i] += seg.level * 0.12 * s * edge_gain(i - start, n, ramp);
            }
        } else {
            // fixed random-phase partials spread across the fricative band
            let partials: Vec<(f64, f64)> = (0..24)
                .map(|_| {
                    (
                        rng.random_range(seg.formants[0]..seg.formants[1]),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            for i in start..end {
                let t = i as f64 / rate;
                let s: f64 = partials.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum();
                out[i] += seg.level * 0.04 * s * edge_gain(i - start, n, ramp);
            }
        }
    }

    /// Render a sentence. `timing` gives each word's (onset shift s, duration scale).
    fn render(&self, sentence: &MatrixSentence, timing: &[(f64, f64)], gain: f64, noise: f64, rng: &mut ChaCha8Rng) -> Result<AudioBuffer> {
        let rate = f64::from(self.sample_rate);
        let mut placements = Vec::new();
        let mut cursor = LEAD_SILENCE;
        for (cat, &idx) in sentence.words.iter().enumerate() {
            let (shift, scale) = timing[cat];
            let word = self.word(cat, idx);
            let mut t = (cursor + shift).max(0.0);
            for seg in &word.segments {
                let d = seg.duration * scale;
                placements.push((t, d, *seg));
                t += d;
            }
            let nominal: f64 = word.segments.iter().map(|s| s.duration).sum();
            cursor += nominal + WORD_GAP;
        }
        let end = placements.iter().map(|(t, d, _)| t + d).fold(0.0, f64::max) + TAIL_SILENCE;
        let mut out = vec![0.0; (end * rate).ceil() as usize];
        for (t, d, seg) in &placements {
            self.render_segment(seg, *d, &mut out, (t * rate).round() as usize, rng);
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { gain * 0.7 / peak } else { 0.0 };
        let noise_dist = Normal::new(0.0, noise.max(0.0)).expect("finite std");
        for v in &mut out {
            *v = (*v * scale + noise_dist.sample(rng)).clamp(-1.0, 1.0);
        }
        AudioBuffer::mono(self.sample_rate, out)
    }

    /// The reference rendering of a sentence.
    pub fn original(&self, sentence: &MatrixSentence) -> Result<AudioBuffer> {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(sentence.id));
        self.render(sentence, &[(0.0, 1.0); N_CATEGORIES], 1.0, 0.0, &mut rng)
    }

    /// A re-spoken take with the given perturbations, then delayed by `offset` seconds.
    pub fn take(&self, sentence: &MatrixSentence, variation: &TakeVariation, offset: f64, seed: u64) -> Result<AudioBuffer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jitter = Normal::new(0.0, variation.onset_jitter.max(0.0)).expect("finite std");
        let timing: Vec<(f64, f64)> = (0..N_CATEGORIES)
            .map(|_| {
                let dj = variation.duration_jitter.abs();
                let scale = if dj > 0.0 { rng.random_range(1.0 - dj..1.0 + dj) } else { 1.0 };
                (jitter.sample(&mut rng), scale)
            })
            .collect();
        let (g0, g1) = variation.gain_range;
        let gain = if g1 > g0 { rng.random_range(g0..g1) } else { g0 };
        // fricative partial phases follow the sentence, not the take
        let mut seg_rng = ChaCha8Rng::seed_from_u64(u64::from(sentence.id));
        let base = self.render(sentence, &timing, gain, 0.0, &mut seg_rng)?;
        let noise = Normal::new(0.0, variation.noise_level.max(0.0)).expect("finite std");
        let noisy: Vec<f64> = base
            .samples()?
            .iter()
            .map(|v| (v + noise.sample(&mut rng)).clamp(-1.0, 1.0))
            .collect();
        AudioBuffer::mono(self.sample_rate, noisy)?.delay(offset)
    }
}

fn edge_gain(i: usize, n: usize, ramp: usize) -> f64 {
    let k = i.min(n.saturating_sub(1 + i));
    if k >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * k as f64 / ramp as f64).cos()
    }
}

/// Parameters of a synthetic dubbing corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCorpusConfig {
    pub n_sentences: usize,
    pub takes_per_sentence: usize,
    pub sample_rate: u32,
    pub seed: u64,
    pub variation: TakeVariation,
    /// Sentence indices whose takes are all delayed by `outlier_offset`.
    pub outliers: Vec<usize>,
    pub outlier_offset: f64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            n_sentences: 20,
            takes_per_sentence: 4,
            sample_rate: 48000,
            seed: 2020,
            variation: TakeVariation::default(),
            outliers: vec![],
            outlier_offset: 0.150,
        }
    }
}

pub fn sentence_id(i: usize) -> String {
    format!("s{:03}", i + 1)
}

pub fn take_id(j: usize) -> String {
    format!("t{}", j + 1)
}

/// Build a corpus of originals and their takes from balanced matrix-test lists.
pub fn synth_corpus(cfg: &SynthCorpusConfig) -> Result<AudioCorpus> {
    let synth = SpeechSynth::new(cfg.sample_rate, cfg.seed);
    let n_lists = cfg.n_sentences.div_ceil(crate::mst::LIST_LENGTH).max(1);
    let lists = crate::mst::generate_lists(&crate::mst::WordMatrix::olsa(), n_lists, cfg.seed);
    let sentences: Vec<&MatrixSentence> = lists.iter().flat_map(|l| l.sentences()).take(cfg.n_sentences).collect();

    let mut corpus = AudioCorpus::default();
    for (i, s) in sentences.iter().enumerate() {
        let sid = sentence_id(i);
        corpus.originals.insert(sid.clone(), Ok(synth.original(s)?));
        let offset = if cfg.outliers.contains(&i) { cfg.outlier_offset } else { 0.0 };
        for j in 0..cfg.takes_per_sentence {
            let seed = cfg.seed.wrapping_mul(1_000_003) ^ ((i as u64) << 16 | j as u64);
            let take = synth.take(s, &cfg.variation, offset, seed)?;
            corpus.takes.insert((sid.clone(), take_id(j)), Ok(take));
        }
    }
    Ok(corpus)
}
