//! Adaptive level tracking toward the 80% speech reception threshold.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mst::{word_percentage, N_CATEGORIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    AO,
    AV,
    VO,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Background {
    Noise,
    Quiet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResponseFormat {
    Closed,
    Open,
}

impl ResponseFormat {
    pub fn other(self) -> Self {
        match self {
            ResponseFormat::Closed => ResponseFormat::Open,
            ResponseFormat::Open => ResponseFormat::Closed,
        }
    }
}

/// One of the nine test conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    modality: Modality,
    background: Background,
    format: ResponseFormat,
}

impl Condition {
    pub const ALL: [Condition; 9] = [
        Condition::c(Modality::AO, Background::Noise, ResponseFormat::Closed),
        Condition::c(Modality::AO, Background::Noise, ResponseFormat::Open),
        Condition::c(Modality::AO, Background::Quiet, ResponseFormat::Closed),
        Condition::c(Modality::AO, Background::Quiet, ResponseFormat::Open),
        Condition::c(Modality::AV, Background::Noise, ResponseFormat::Closed),
        Condition::c(Modality::AV, Background::Noise, ResponseFormat::Open),
        Condition::c(Modality::AV, Background::Quiet, ResponseFormat::Closed),
        Condition::c(Modality::AV, Background::Quiet, ResponseFormat::Open),
        Condition::c(Modality::VO, Background::Noise, ResponseFormat::Closed),
    ];

    pub const VO: Condition = Condition::c(Modality::VO, Background::Noise, ResponseFormat::Closed);

    const fn c(modality: Modality, background: Background, format: ResponseFormat) -> Self {
        Condition {
            modality,
            background,
            format,
        }
    }

    pub fn new(modality: Modality, background: Background, format: ResponseFormat) -> Result<Self> {
        if modality == Modality::VO && (background, format) != (Background::Noise, ResponseFormat::Closed) {
            return Err(Error::Argument(
                "visual-only exists only in noise with closed-set responses".into(),
            ));
        }
        Ok(Condition::c(modality, background, format))
    }

    pub fn av_noise(format: ResponseFormat) -> Self {
        Condition::c(Modality::AV, Background::Noise, format)
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn background(&self) -> Background {
        self.background
    }

    pub fn format(&self) -> ResponseFormat {
        self.format
    }

    pub fn is_adaptive(&self) -> bool {
        self.modality != Modality::VO
    }

    pub fn name(&self) -> String {
        format!("{:?}{:?}{:?}", self.modality, self.background, self.format)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .iter()
            .find(|c| c.name() == s)
            .copied()
            .ok_or_else(|| Error::Argument(format!("unknown condition '{s}'")))
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.name()
    }
}

/// Constants of the tracking rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    /// Speech level of the first sentence, dB SPL.
    pub start_speech_spl: f64,
    /// Fixed noise level, dB SPL.
    pub noise_spl: f64,
    pub target: f64,
    /// Assumed psychometric slope at the target, 1/dB.
    pub slope: f64,
    pub step_initial: f64,
    pub step_decay: f64,
    pub step_min: f64,
    pub snr_bounds: (f64, f64),
    pub spl_bounds: (f64, f64),
    pub clamp_noise_snr: f64,
    pub clamp_quiet_spl: f64,
    pub n_sentences: usize,
    /// First sentence (1-based) entering the SRT mean.
    pub srt_first_sentence: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            start_speech_spl: 60.0,
            noise_spl: 65.0,
            target: 0.8,
            slope: 0.15,
            step_initial: 1.5,
            step_decay: 1.41,
            step_min: 0.1,
            snr_bounds: (-40.0, 20.0),
            spl_bounds: (-20.0, 90.0),
            clamp_noise_snr: -20.0,
            clamp_quiet_spl: 0.0,
            n_sentences: 20,
            srt_first_sentence: 11,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.slope > 0.0
            && self.step_initial > 0.0
            && self.step_decay > 1.0
            && self.step_min > 0.0
            && self.snr_bounds.0 < self.snr_bounds.1
            && self.spl_bounds.0 < self.spl_bounds.1
            && (0.0..=1.0).contains(&self.target)
            && self.n_sentences >= 1
            && (1..=self.n_sentences + 1).contains(&self.srt_first_sentence);
        if ok {
            Ok(())
        } else {
            Err(Error::Argument("invalid adaptive configuration".into()))
        }
    }

    /// Step-size factor after `reversals` reversals.
    pub fn step_factor(&self, reversals: u32) -> f64 {
        (self.step_initial * self.step_decay.powi(-(reversals as i32))).max(self.step_min)
    }

    pub fn bounds(&self, background: Background) -> (f64, f64) {
        match background {
            Background::Noise => self.snr_bounds,
            Background::Quiet => self.spl_bounds,
        }
    }

    pub fn clamp_level(&self, background: Background) -> f64 {
        match background {
            Background::Noise => self.clamp_noise_snr,
            Background::Quiet => self.clamp_quiet_spl,
        }
    }

    pub fn start_level(&self, background: Background) -> f64 {
        match background {
            Background::Noise => self.start_speech_spl - self.noise_spl,
            Background::Quiet => self.start_speech_spl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrtEstimate {
    pub srt_raw: f64,
    pub srt_clamped: f64,
    pub clamped: bool,
}

/// Clamp a raw SRT at the floor of its background.
pub fn clamp_srt(srt_raw: f64, background: Background, config: &AdaptiveConfig) -> SrtEstimate {
    let floor = config.clamp_level(background);
    SrtEstimate {
        srt_raw,
        srt_clamped: srt_raw.max(floor),
        clamped: srt_raw < floor,
    }
}

/// Sentence-by-sentence state of one list presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTrack {
    condition: Condition,
    config: AdaptiveConfig,
    levels: Vec<f64>,
    words_correct: Vec<u8>,
    reversal_history: Vec<u32>,
    next_level: Option<f64>,
    reversals: u32,
    last_sign: f64,
}

pub fn init_track(condition: Condition, config: &AdaptiveConfig) -> AdaptiveTrack {
    AdaptiveTrack {
        condition,
        config: *config,
        levels: Vec::new(),
        words_correct: Vec::new(),
        reversal_history: Vec::new(),
        next_level: condition
            .is_adaptive()
            .then(|| config.start_level(condition.background())),
        reversals: 0,
        last_sign: 0.0,
    }
}

impl AdaptiveTrack {
    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.config
    }

    /// Level of the next sentence; `None` for visual-only tracks.
    pub fn current_level(&self) -> Option<f64> {
        self.next_level
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn words_correct(&self) -> &[u8] {
        &self.words_correct
    }

    pub fn reversals(&self) -> u32 {
        self.reversals
    }

    pub fn len(&self) -> usize {
        self.words_correct.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words_correct.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.len() >= self.config.n_sentences
    }

    fn check_response(&self, words_correct: u8) -> Result<()> {
        if usize::from(words_correct) > N_CATEGORIES {
            return Err(Error::Argument(format!("words_correct {words_correct} > 5")));
        }
        if self.is_complete() {
            return Err(Error::Usage("track already complete".into()));
        }
        Ok(())
    }

    /// Record the response to the sentence at the current level; return the next level.
    pub fn update_level(&mut self, words_correct: u8) -> Result<f64> {
        if !self.condition.is_adaptive() {
            return Err(Error::Usage("visual-only tracks have no adaptive level".into()));
        }
        self.check_response(words_correct)?;
        let level = self.next_level.expect("adaptive track has a level");
        let p = f64::from(words_correct) / N_CATEGORIES as f64;
        let direction = -(p - self.config.target);
        let sign = if direction > 0.0 {
            1.0
        } else if direction < 0.0 {
            -1.0
        } else {
            0.0
        };
        if sign != 0.0 {
            if self.last_sign != 0.0 && sign != self.last_sign {
                self.reversals += 1;
            }
            self.last_sign = sign;
        }
        let delta = self.config.step_factor(self.reversals) * direction / self.config.slope;
        let (lo, hi) = self.config.bounds(self.condition.background());
        let next = (level + delta).clamp(lo, hi);
        self.levels.push(level);
        self.words_correct.push(words_correct);
        self.reversal_history.push(self.reversals);
        self.next_level = Some(next);
        Ok(next)
    }

    /// Record a visual-only sentence score.
    pub fn record_visual_only(&mut self, words_correct: u8) -> Result<()> {
        if self.condition.is_adaptive() {
            return Err(Error::Usage("adaptive tracks must use update_level".into()));
        }
        self.check_response(words_correct)?;
        self.words_correct.push(words_correct);
        self.reversal_history.push(0);
        Ok(())
    }

    /// Mean of the levels from `srt_first_sentence` on, including the
    /// computed level that would follow the last sentence, then clamped.
    pub fn estimate_srt(&self) -> Result<SrtEstimate> {
        if !self.condition.is_adaptive() {
            return Err(Error::Usage("visual-only tracks have no SRT".into()));
        }
        if !self.is_complete() {
            return Err(Error::IncompleteTrack(format!(
                "{} of {} sentences recorded",
                self.len(),
                self.config.n_sentences
            )));
        }
        let first = self.config.srt_first_sentence - 1;
        let mut sum: f64 = self.levels[first..].iter().sum();
        sum += self.next_level.expect("adaptive track has a level");
        let srt_raw = sum / (self.levels.len() - first + 1) as f64;
        Ok(clamp_srt(srt_raw, self.condition.background(), &self.config))
    }

    pub fn vo_score(&self) -> Result<f64> {
        if self.condition.is_adaptive() {
            return Err(Error::Usage("vo_score needs a visual-only track".into()));
        }
        if !self.is_complete() {
            return Err(Error::IncompleteTrack(format!(
                "{} of {} sentences recorded",
                self.len(),
                self.config.n_sentences
            )));
        }
        word_percentage(&self.words_correct)
    }

    /// CSV `sentence_idx,level,words_correct,reversals`; level is empty for visual-only.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sentence_idx", "level", "words_correct", "reversals"])?;
        for (i, wc) in self.words_correct.iter().enumerate() {
            let level = self.levels.get(i).map(|l| l.to_string()).unwrap_or_default();
            w.write_record([
                (i + 1).to_string(),
                level,
                wc.to_string(),
                self.reversal_history[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
