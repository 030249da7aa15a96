//! Simulated listeners: logistic audio intelligibility, speechreading,
//! audiovisual integration, training and retest variability.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adaptive::{Background, Condition, Modality, ResponseFormat};
use crate::error::{Error, Result};
use crate::mst::{MatrixSentence, Response, N_CATEGORIES, WORDS_PER_CATEGORY};

/// Psychometric spread matching a 15 %/dB slope at the midpoint.
pub const DEFAULT_SIGMA: f64 = 1.0 / (4.0 * 0.15);

/// Stream-id namespaces so population draws and trial draws never overlap.
const POPULATION_STREAM: u64 = 0;
const TRIAL_STREAM: u64 = 1 << 32;

/// Per-listener generator for `(seed, listener)`; independent of scheduling.
pub fn listener_rng(seed: u64, listener: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose | listener as u64);
    rng
}

pub fn trial_rng(seed: u64, listener: usize) -> ChaCha8Rng {
    listener_rng(seed, listener, TRIAL_STREAM)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionFloors {
    /// Audio-only speech detection threshold in noise, dB SNR.
    pub noise_snr: f64,
    /// Audio-only speech detection threshold in quiet, dB SPL.
    pub quiet_spl: f64,
    /// How far visual cues lower the detection thresholds, dB.
    pub av_extension: f64,
}

impl Default for DetectionFloors {
    fn default() -> Self {
        DetectionFloors {
            noise_snr: -16.9,
            quiet_spl: 3.0,
            av_extension: 3.0,
        }
    }
}

impl DetectionFloors {
    pub fn floor(&self, modality: Modality, background: Background) -> f64 {
        let base = match background {
            Background::Noise => self.noise_snr,
            Background::Quiet => self.quiet_spl,
        };
        if modality == Modality::AV {
            base - self.av_extension
        } else {
            base
        }
    }
}

/// One simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerProfile {
    pub id: usize,
    pub m50_noise: f64,
    pub m50_quiet: f64,
    pub sigma: f64,
    /// Per-word speechreading probability.
    pub v: f64,
    /// Effective-level gain per unit v in AV, dB.
    pub visual_gain: f64,
    pub training_amplitude: f64,
    pub training_tau: f64,
    pub retest_jitter: f64,
    /// Midpoint advantage of closed-set responses, dB.
    pub closed_set_advantage: f64,
    pub floors: DetectionFloors,
}

impl ListenerProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = self.sigma > 0.0
            && (0.0..=1.0).contains(&self.v)
            && self.training_amplitude >= 0.0
            && self.training_tau > 0.0
            && self.retest_jitter >= 0.0
            && self.visual_gain >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid listener profile {}", self.id)))
        }
    }

    /// Midpoint after `trial_index` prior tracks, plus a per-track offset.
    pub fn midpoint(&self, condition: Condition, trial_index: u32, jitter: f64) -> f64 {
        let base = match condition.background() {
            Background::Noise => self.m50_noise,
            Background::Quiet => self.m50_quiet,
        };
        let format = if condition.format() == ResponseFormat::Closed {
            -self.closed_set_advantage
        } else {
            0.0
        };
        base + self.training_amplitude * (-f64::from(trial_index) / self.training_tau).exp()
            + jitter
            + format
    }

    /// Probability of recognizing a single word.
    pub fn p_word(&self, level: f64, condition: Condition, trial_index: u32, jitter: f64) -> f64 {
        let modality = condition.modality();
        if modality == Modality::VO {
            return self.v;
        }
        let p_a = if level < self.floors.floor(modality, condition.background()) {
            0.0
        } else {
            let m = self.midpoint(condition, trial_index, jitter);
            let x = match modality {
                Modality::AV => level + self.visual_gain * self.v,
                _ => level,
            };
            1.0 / (1.0 + (-(x - m) / self.sigma).exp())
        };
        match modality {
            Modality::AV => self.v + p_a * (1.0 - self.v),
            _ => p_a,
        }
    }

    /// Draw a response; each word is recognized independently.
    #[allow(clippy::too_many_arguments)]
    pub fn respond<R: Rng + ?Sized>(
        &self,
        sentence: &MatrixSentence,
        level: f64,
        condition: Condition,
        trial_index: u32,
        jitter: f64,
        rng: &mut R,
    ) -> Response {
        let p = self.p_word(level, condition, trial_index, jitter);
        respond_with(sentence, p, condition.format(), rng)
    }

    /// Per-track midpoint offset.
    pub fn draw_jitter<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.retest_jitter == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.retest_jitter)
            .expect("finite jitter")
            .sample(rng)
    }
}

/// Response with per-word success probability `p`. Misses become a random
/// wrong word, or in open-set half the time no answer.
pub fn respond_with<R: Rng + ?Sized>(
    sentence: &MatrixSentence,
    p: f64,
    format: ResponseFormat,
    rng: &mut R,
) -> Response {
    let p = p.clamp(0.0, 1.0);
    let mut slots = [None; N_CATEGORIES];
    for (slot, &target) in slots.iter_mut().zip(&sentence.words) {
        *slot = if rng.random_bool(p) {
            Some(target)
        } else if format == ResponseFormat::Open && rng.random_bool(0.5) {
            None
        } else {
            let k = rng.random_range(0..WORDS_PER_CATEGORY as u8 - 1);
            Some(if k >= target { k + 1 } else { k })
        };
    }
    Response { slots }
}

/// Distribution of simulated subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub n_listeners: usize,
    pub v_mean: f64,
    pub v_std: f64,
    pub m50_noise_mean: f64,
    pub m50_noise_std: f64,
    pub m50_quiet_mean: f64,
    pub m50_quiet_std: f64,
    pub sigma: f64,
    pub visual_gain: f64,
    pub training_amplitude: f64,
    pub training_tau: f64,
    pub retest_jitter: f64,
    pub closed_set_advantage: f64,
    pub floors: DetectionFloors,
}

/// Visual gain giving a 5 dB mean AV benefit in noise for the default
/// population; output of `calibrate_visual_gain`.
pub const CALIBRATED_VISUAL_GAIN: f64 = 5.36;

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_listeners: 28,
            v_mean: 0.50,
            v_std: 0.214,
            m50_noise_mean: -9.4,
            m50_noise_std: 1.0,
            m50_quiet_mean: 15.3,
            m50_quiet_std: 2.0,
            sigma: DEFAULT_SIGMA,
            visual_gain: CALIBRATED_VISUAL_GAIN,
            training_amplitude: 4.0,
            training_tau: 2.5,
            retest_jitter: 1.4,
            closed_set_advantage: 0.0,
            floors: DetectionFloors::default(),
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_listeners >= 1
            && self.v_std >= 0.0
            && self.m50_noise_std >= 0.0
            && self.m50_quiet_std >= 0.0
            && (0.0..=1.0).contains(&self.v_mean)
            && self.sigma > 0.0
            && self.training_amplitude >= 0.0
            && self.training_tau > 0.0
            && self.retest_jitter >= 0.0
            && self.visual_gain >= 0.0
            && [self.v_std, self.m50_noise_mean, self.m50_quiet_mean, self.m50_noise_std, self.m50_quiet_std]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Argument("invalid population configuration".into()))
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PopulationConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Profile of listener `id` drawn from its own stream.
    pub fn sample_listener(&self, id: usize, seed: u64) -> ListenerProfile {
        let mut rng = listener_rng(seed, id, POPULATION_STREAM);
        let v = if self.v_std == 0.0 {
            self.v_mean
        } else {
            let d = Normal::new(self.v_mean, self.v_std).expect("valid normal");
            loop {
                let v = d.sample(&mut rng);
                if (0.0..=1.0).contains(&v) {
                    break v;
                }
            }
        };
        let m50_noise = Normal::new(self.m50_noise_mean, self.m50_noise_std)
            .expect("valid normal")
            .sample(&mut rng);
        let m50_quiet = Normal::new(self.m50_quiet_mean, self.m50_quiet_std)
            .expect("valid normal")
            .sample(&mut rng);
        ListenerProfile {
            id,
            m50_noise,
            m50_quiet,
            sigma: self.sigma,
            v,
            visual_gain: self.visual_gain,
            training_amplitude: self.training_amplitude,
            training_tau: self.training_tau,
            retest_jitter: self.retest_jitter,
            closed_set_advantage: self.closed_set_advantage,
            floors: self.floors,
        }
    }
}

pub fn sample_population(config: &PopulationConfig, seed: u64) -> Result<Vec<ListenerProfile>> {
    config.validate()?;
    Ok((0..config.n_listeners)
        .map(|i| config.sample_listener(i, seed))
        .collect())
}

pub fn write_population_csv<W: io::Write>(population: &[ListenerProfile], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "listener_id",
        "m50_noise",
        "m50_quiet",
        "v",
        "sigma",
        "visual_gain",
        "training_amplitude",
        "training_tau",
        "retest_jitter",
    ])?;
    for p in population {
        w.write_record([
            p.id.to_string(),
            p.m50_noise.to_string(),
            p.m50_quiet.to_string(),
            p.v.to_string(),
            p.sigma.to_string(),
            p.visual_gain.to_string(),
            p.training_amplitude.to_string(),
            p.training_tau.to_string(),
            p.retest_jitter.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mst::score_response;
    use proptest::prelude::*;

    fn profile(v: f64) -> ListenerProfile {
        ListenerProfile {
            id: 0,
            m50_noise: -9.4,
            m50_quiet: 15.3,
            sigma: DEFAULT_SIGMA,
            v,
            visual_gain: 0.0,
            training_amplitude: 0.0,
            training_tau: 2.5,
            retest_jitter: 0.0,
            closed_set_advantage: 0.0,
            floors: DetectionFloors::default(),
        }
    }

    fn cond(s: &str) -> Condition {
        s.parse().unwrap()
    }

    #[test]
    fn logistic_midpoint_and_vo() {
        let p = profile(0.3);
        assert!((p.p_word(-9.4, cond("AONoiseOpen"), 0, 0.0) - 0.5).abs() < 1e-12);
        assert_eq!(p.p_word(-40.0, Condition::VO, 0, 0.0), 0.3);
        assert_eq!(p.p_word(10.0, Condition::VO, 7, 0.0), 0.3);
    }

    #[test]
    fn probability_summation() {
        // choose the level so p_a = 0.6: x = m + σ ln(1.5)
        let p = profile(0.5);
        let level = -9.4 + DEFAULT_SIGMA * 1.5f64.ln();
        let pw = p.p_word(level, cond("AVNoiseClosed"), 0, 0.0);
        assert!((pw - 0.8).abs() < 1e-12);
    }

    #[test]
    fn detection_floor() {
        let p = profile(0.4);
        assert_eq!(p.p_word(-17.0, cond("AONoiseOpen"), 0, 0.0), 0.0);
        assert!(p.p_word(-16.8, cond("AONoiseOpen"), 0, 0.0) > 0.0);
        assert_eq!(p.p_word(-20.0, cond("AVNoiseOpen"), 0, 0.0), 0.4);
        assert!(p.p_word(-19.8, cond("AVNoiseOpen"), 0, 0.0) > 0.4);
        assert_eq!(p.p_word(2.9, cond("AOQuietOpen"), 0, 0.0), 0.0);
        assert_eq!(p.p_word(-0.1, cond("AVQuietOpen"), 0, 0.0), 0.4);
    }

    #[test]
    fn responses() {
        let s = MatrixSentence::new(1, [0, 9, 3, 4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in [ResponseFormat::Open, ResponseFormat::Closed] {
            for _ in 0..100 {
                assert_eq!(respond_with(&s, 1.0, f, &mut rng), Response::exact(&s));
                assert_eq!(score_response(&s, &respond_with(&s, 0.0, f, &mut rng)), 0);
            }
        }
        let n = 10_000;
        let total: u32 = (0..n)
            .map(|_| u32::from(score_response(&s, &respond_with(&s, 0.8, ResponseFormat::Closed, &mut rng))))
            .sum();
        let mean = f64::from(total) / f64::from(n);
        assert!((mean - 4.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn closed_set_misses_are_wrong_words() {
        let s = MatrixSentence::new(1, [0, 9, 3, 4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let r = respond_with(&s, 0.0, ResponseFormat::Closed, &mut rng);
            for (slot, t) in r.slots.iter().zip(&s.words) {
                let w = slot.unwrap();
                assert!(w != *t && usize::from(w) < WORDS_PER_CATEGORY);
            }
        }
    }

    #[test]
    fn population_determinism() {
        let cfg = PopulationConfig::default();
        let a = sample_population(&cfg, 5).unwrap();
        assert_eq!(a, sample_population(&cfg, 5).unwrap());
        assert_ne!(a, sample_population(&cfg, 6).unwrap());
        assert_eq!(a.len(), 28);
        let fixed = PopulationConfig {
            v_std: 0.0,
            ..cfg
        };
        assert!(sample_population(&fixed, 1).unwrap().iter().all(|p| p.v == 0.5));
    }

    #[test]
    fn population_moments() {
        let cfg = PopulationConfig {
            n_listeners: 10_000,
            ..Default::default()
        };
        let pop = sample_population(&cfg, 11).unwrap();
        let v: Vec<f64> = pop.iter().map(|p| p.v).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        assert!((mean - 0.5).abs() < 0.02);
        assert!((sd - 0.214).abs() < 0.02);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn config_json_defaults() {
        let cfg = PopulationConfig::from_json("{\"n_listeners\": 3}").unwrap();
        assert_eq!(cfg.n_listeners, 3);
        assert_eq!(cfg.v_std, 0.214);
        assert!(PopulationConfig::from_json("{\"n_listeners\": 0}").is_err());
    }

    proptest! {
        #[test]
        fn p_word_invariants(
            v in 0.0f64..=1.0, g in 0.0f64..10.0, l1 in -40.0f64..20.0, dl in 0.0f64..10.0,
            k in 0u32..20, idx in 0usize..8,
        ) {
            let p = ListenerProfile { visual_gain: g, training_amplitude: 4.0, ..profile(v) };
            let c = Condition::ALL[idx];
            let l2 = l1 + dl;
            prop_assert!(p.p_word(l2, c, k, 0.0) >= p.p_word(l1, c, k, 0.0));
            if c.modality() == Modality::AV {
                let ao = Condition::new(Modality::AO, c.background(), c.format()).unwrap();
                let av = p.p_word(l1, c, k, 0.0);
                prop_assert!(av >= p.p_word(l1, ao, k, 0.0));
                prop_assert!(av >= v);
            }
            prop_assert!(p.midpoint(c, k + 1, 0.0) <= p.midpoint(c, k, 0.0));
        }

        #[test]
        fn av_noise_floor_is_speechreading(v in 0.0f64..=1.0, level in -40.0f64..-19.91) {
            let p = ListenerProfile { visual_gain: 8.0, ..profile(v) };
            prop_assert_eq!(p.p_word(level, Condition::av_noise(ResponseFormat::Open), 0, 0.0), v);
        }
    }
}
