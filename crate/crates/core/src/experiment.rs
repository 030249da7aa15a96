//! Test/retest session plans, simulated runs and summary reports.

use std::collections::BTreeMap;
use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{init_track, AdaptiveConfig, Background, Condition, Modality, ResponseFormat};
use crate::error::{Error, Result};
use crate::listener::{listener_rng, sample_population, trial_rng, ListenerProfile, PopulationConfig};
use crate::mst::{generate_lists, score_response, TestList, WordMatrix, LIST_LENGTH};
use crate::stats::{descriptive, mean, pearson_r, std_dev};

const PLAN_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    /// Training lists at the start of each session; its length is the session count.
    pub training_lists: Vec<usize>,
    /// Conditions tested in every session.
    pub conditions: Vec<Condition>,
    /// Share of listeners trained with closed-set responses.
    pub closed_trained_fraction: f64,
    /// Size of the list pool.
    pub n_lists: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            training_lists: vec![4, 1],
            conditions: Condition::ALL.to_vec(),
            closed_trained_fraction: 13.0 / 28.0,
            n_lists: 45,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    Training,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedTrack {
    /// 1-based session number.
    pub session: u8,
    pub kind: TrialKind,
    pub condition: Condition,
    pub list_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerPlan {
    pub listener: usize,
    pub training_format: ResponseFormat,
    pub tracks: Vec<PlannedTrack>,
}

/// Ordered track schedule for every listener.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub n_lists: usize,
    pub listeners: Vec<ListenerPlan>,
}

impl SessionPlan {
    pub fn build(config: &PlanConfig, n_listeners: usize, seed: u64) -> Result<Self> {
        if config.training_lists.is_empty() {
            return Err(Error::Plan("at least one session is required".into()));
        }
        if config.training_lists.len() > u8::MAX as usize {
            return Err(Error::Plan("too many sessions".into()));
        }
        let mut seen = config.conditions.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != config.conditions.len() {
            return Err(Error::Plan("duplicate condition in plan".into()));
        }
        if !(0.0..=1.0).contains(&config.closed_trained_fraction) {
            return Err(Error::Plan("closed_trained_fraction must lie in [0, 1]".into()));
        }
        for (s, &t) in config.training_lists.iter().enumerate() {
            let needed = t + config.conditions.len();
            if needed > config.n_lists {
                return Err(Error::Plan(format!(
                    "session {} needs {needed} lists but only {} exist",
                    s + 1,
                    config.n_lists
                )));
            }
            if needed == 0 {
                return Err(Error::Plan(format!("session {} is empty", s + 1)));
            }
        }
        let n_closed = (n_listeners as f64 * config.closed_trained_fraction).round() as usize;
        let listeners = (0..n_listeners)
            .map(|i| {
                let format = if i < n_closed {
                    ResponseFormat::Closed
                } else {
                    ResponseFormat::Open
                };
                let mut rng = listener_rng(seed, i, PLAN_STREAM);
                let mut tracks = Vec::new();
                for (s, &n_training) in config.training_lists.iter().enumerate() {
                    let session = (s + 1) as u8;
                    let mut conds = Vec::with_capacity(n_training + config.conditions.len());
                    conds.extend(std::iter::repeat_n((TrialKind::Training, Condition::av_noise(format)), n_training));
                    for f in [format, format.other()] {
                        let mut group: Vec<Condition> =
                            config.conditions.iter().copied().filter(|c| c.format() == f).collect();
                        group.shuffle(&mut rng);
                        conds.extend(group.into_iter().map(|c| (TrialKind::Test, c)));
                    }
                    let start = (i * conds.len() + s * 17) % config.n_lists;
                    tracks.extend(conds.into_iter().enumerate().map(|(j, (kind, condition))| PlannedTrack {
                        session,
                        kind,
                        condition,
                        list_index: (start + j) % config.n_lists,
                    }));
                }
                ListenerPlan {
                    listener: i,
                    training_format: format,
                    tracks,
                }
            })
            .collect();
        Ok(SessionPlan {
            n_lists: config.n_lists,
            listeners,
        })
    }

    pub fn n_tracks(&self) -> usize {
        self.listeners.iter().map(|l| l.tracks.len()).sum()
    }

    /// Tracks with an audiovisual condition, training included.
    pub fn n_av_tracks(&self) -> usize {
        self.listeners
            .iter()
            .flat_map(|l| &l.tracks)
            .filter(|t| t.condition.modality() == Modality::AV)
            .count()
    }
}

/// Everything `sim run` needs besides the seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub population: PopulationConfig,
    pub adaptive: AdaptiveConfig,
    pub plan: PlanConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        self.adaptive.validate()?;
        if self.adaptive.n_sentences != LIST_LENGTH {
            return Err(Error::Argument(format!(
                "tracks must have {LIST_LENGTH} sentences to match the lists"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub session: u8,
    pub kind: TrialKind,
    pub condition: Condition,
    pub list_id: u32,
    /// Adaptive tracks completed before this one.
    pub trial_index: u32,
    pub jitter: f64,
    pub levels: Vec<f64>,
    pub words_correct: Vec<u8>,
    pub srt_raw: Option<f64>,
    pub srt_clamped: Option<f64>,
    pub clamped: bool,
    pub vo_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListenerResult {
    pub profile: ListenerProfile,
    pub training_format: ResponseFormat,
    pub tracks: Vec<TrackRecord>,
}

/// Every track and trial of a simulated experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResults {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub listeners: Vec<ListenerResult>,
}

impl RawResults {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Simulate one listener's schedule.
pub fn run_listener(
    profile: &ListenerProfile,
    plan: &ListenerPlan,
    lists: &[TestList],
    adaptive: &AdaptiveConfig,
    seed: u64,
) -> Result<ListenerResult> {
    let mut rng = trial_rng(seed, profile.id);
    let mut trial_index = 0u32;
    let mut tracks = Vec::with_capacity(plan.tracks.len());
    for planned in &plan.tracks {
        let list = lists
            .get(planned.list_index)
            .ok_or_else(|| Error::Plan(format!("list {} does not exist", planned.list_index)))?;
        let c = planned.condition;
        let jitter = profile.draw_jitter(&mut rng);
        let mut track = init_track(c, adaptive);
        for sentence in list.sentences() {
            match track.current_level() {
                Some(level) => {
                    let r = profile.respond(sentence, level, c, trial_index, jitter, &mut rng);
                    track.update_level(score_response(sentence, &r))?;
                }
                None => {
                    let r = profile.respond(sentence, 0.0, c, trial_index, jitter, &mut rng);
                    track.record_visual_only(score_response(sentence, &r))?;
                }
            }
        }
        let (srt, vo) = if c.is_adaptive() {
            (Some(track.estimate_srt()?), None)
        } else {
            (None, Some(track.vo_score()?))
        };
        tracks.push(TrackRecord {
            session: planned.session,
            kind: planned.kind,
            condition: c,
            list_id: list.list_id(),
            trial_index,
            jitter,
            levels: track.levels().to_vec(),
            words_correct: track.words_correct().to_vec(),
            srt_raw: srt.map(|e| e.srt_raw),
            srt_clamped: srt.map(|e| e.srt_clamped),
            clamped: srt.is_some_and(|e| e.clamped),
            vo_score: vo,
        });
        if c.is_adaptive() {
            trial_index += 1;
        }
    }
    Ok(ListenerResult {
        profile: profile.clone(),
        training_format: plan.training_format,
        tracks,
    })
}

/// Run a full experiment; the output depends only on `(config, seed)`.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RawResults> {
    config.validate()?;
    let plan = SessionPlan::build(&config.plan, config.population.n_listeners, seed)?;
    let population = sample_population(&config.population, seed)?;
    run_with(config, &population, &plan, seed)
}

/// Run a given population and plan.
pub fn run_with(
    config: &ExperimentConfig,
    population: &[ListenerProfile],
    plan: &SessionPlan,
    seed: u64,
) -> Result<RawResults> {
    if population.len() != plan.listeners.len() {
        return Err(Error::Plan("population and plan sizes differ".into()));
    }
    let lists = generate_lists(&WordMatrix::olsa(), plan.n_lists, seed);
    let listeners = population
        .par_iter()
        .zip(plan.listeners.par_iter())
        .map(|(p, lp)| run_listener(p, lp, &lists, &config.adaptive, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawResults {
        seed,
        config: config.clone(),
        listeners,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Published group results kept for side-by-side comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub srt: BTreeMap<String, MeanStd>,
    pub av_benefit_noise: f64,
    pub av_benefit_quiet: f64,
    pub clamped_av_tracks: usize,
    pub total_av_tracks: usize,
    pub vo_mean: f64,
    pub vo_std: f64,
    pub vo_correlation: BTreeMap<String, f64>,
    /// Change from training trial 1 at trials 3, 5 (test) and 7 (retest), dB.
    pub training_change: BTreeMap<String, f64>,
}

impl Default for ReferenceValues {
    fn default() -> Self {
        let srt = [
            ("AONoiseClosed", -7.9, 2.5),
            ("AONoiseOpen", -8.8, 1.1),
            ("AOQuietClosed", 17.6, 3.2),
            ("AOQuietOpen", 17.8, 2.4),
            ("AVNoiseClosed", -13.4, 3.2),
            ("AVNoiseOpen", -12.9, 3.4),
            ("AVQuietClosed", 10.9, 4.4),
            ("AVQuietOpen", 10.5, 4.6),
        ]
        .into_iter()
        .map(|(k, mean, std)| (k.to_string(), MeanStd { mean, std }))
        .collect();
        let vo_correlation = [
            ("AVNoiseClosed", -0.66),
            ("AVNoiseOpen", -0.69),
            ("AVQuietClosed", -0.65),
            ("AVQuietOpen", -0.65),
        ]
        .into_iter()
        .map(|(k, r)| (k.to_string(), r))
        .collect();
        let training_change = [("trial_3", -1.6), ("test", -2.9), ("retest", -3.8)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        ReferenceValues {
            srt,
            av_benefit_noise: 5.0,
            av_benefit_quiet: 7.0,
            clamped_av_tracks: 18,
            total_av_tracks: 366,
            vo_mean: 50.0,
            vo_std: 21.4,
            vo_correlation,
            training_change,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
    /// Test minus retest, per listener.
    pub test_minus_retest_mean: Option<f64>,
    pub test_minus_retest_std: Option<f64>,
    pub n_clamped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampSummary {
    pub clamped: usize,
    pub total: usize,
    pub fraction: f64,
    /// Clamped count per condition name, with training tracks under "training".
    pub by_condition: BTreeMap<String, usize>,
    pub listeners_affected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoSummary {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: Option<f64>,
    pub retest_minus_test_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub label: String,
    pub n: usize,
    pub mean_srt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub n_listeners: usize,
    pub conditions: BTreeMap<String, ConditionSummary>,
    /// Mean over listeners and sessions of AO minus AV SRT, same background and format.
    pub av_benefit_noise: Option<f64>,
    pub av_benefit_quiet: Option<f64>,
    pub pooled_srt_std: BTreeMap<String, f64>,
    pub clamps: ClampSummary,
    pub vo: Option<VoSummary>,
    /// Pearson r of measured visual-only score vs AV SRT, per session pairs.
    pub vo_correlation: BTreeMap<String, f64>,
    /// Pearson r of the listener's speechreading probability vs AV SRT.
    pub v_correlation: BTreeMap<String, f64>,
    pub training_curve: Vec<TrainingPoint>,
    pub reference: ReferenceValues,
}

fn session_srt(l: &ListenerResult, c: Condition, session: u8) -> Option<f64> {
    l.tracks
        .iter()
        .find(|t| t.kind == TrialKind::Test && t.condition == c && t.session == session)
        .and_then(|t| t.srt_clamped)
}

fn session_vo(l: &ListenerResult, session: u8) -> Option<f64> {
    l.tracks
        .iter()
        .find(|t| t.condition == Condition::VO && t.session == session)
        .and_then(|t| t.vo_score)
}

fn sessions(raw: &RawResults) -> Vec<u8> {
    let mut s: Vec<u8> = raw
        .listeners
        .iter()
        .flat_map(|l| l.tracks.iter().map(|t| t.session))
        .collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Summary statistics; a pure function of the raw results.
pub fn summarize(raw: &RawResults) -> ExperimentReport {
    let sessions = sessions(raw);
    let mut conditions = BTreeMap::new();
    for c in Condition::ALL.iter().filter(|c| c.is_adaptive()) {
        let scores: Vec<f64> = raw
            .listeners
            .iter()
            .flat_map(|l| sessions.iter().filter_map(move |&s| session_srt(l, *c, s)))
            .collect();
        if scores.is_empty() {
            continue;
        }
        let diffs: Vec<f64> = raw
            .listeners
            .iter()
            .filter_map(|l| Some(session_srt(l, *c, 1)? - session_srt(l, *c, 2)?))
            .collect();
        let n_clamped = raw
            .listeners
            .iter()
            .flat_map(|l| &l.tracks)
            .filter(|t| t.kind == TrialKind::Test && t.condition == *c && t.clamped)
            .count();
        conditions.insert(
            c.name(),
            ConditionSummary {
                n: scores.len(),
                mean: mean(&scores).expect("non-empty"),
                std: std_dev(&scores).ok(),
                test_minus_retest_mean: mean(&diffs).ok(),
                test_minus_retest_std: std_dev(&diffs).ok(),
                n_clamped,
            },
        );
    }

    let benefit = |bg: Background| -> Option<f64> {
        let mut d = Vec::new();
        for l in &raw.listeners {
            for &s in &sessions {
                for f in [ResponseFormat::Closed, ResponseFormat::Open] {
                    let ao = Condition::new(Modality::AO, bg, f).expect("valid");
                    let av = Condition::new(Modality::AV, bg, f).expect("valid");
                    if let (Some(a), Some(b)) = (session_srt(l, ao, s), session_srt(l, av, s)) {
                        d.push(a - b);
                    }
                }
            }
        }
        mean(&d).ok()
    };

    let mut pooled_srt_std = BTreeMap::new();
    for (m, bg, name) in [
        (Modality::AO, Background::Noise, "AONoise"),
        (Modality::AO, Background::Quiet, "AOQuiet"),
        (Modality::AV, Background::Noise, "AVNoise"),
        (Modality::AV, Background::Quiet, "AVQuiet"),
    ] {
        let v: Vec<f64> = raw
            .listeners
            .iter()
            .flat_map(|l| &l.tracks)
            .filter(|t| t.kind == TrialKind::Test && t.condition.modality() == m && t.condition.background() == bg)
            .filter_map(|t| t.srt_clamped)
            .collect();
        if let Ok(sd) = std_dev(&v) {
            pooled_srt_std.insert(name.to_string(), sd);
        }
    }

    let av_tracks: Vec<&TrackRecord> = raw
        .listeners
        .iter()
        .flat_map(|l| &l.tracks)
        .filter(|t| t.condition.modality() == Modality::AV)
        .collect();
    let mut by_condition = BTreeMap::new();
    for t in av_tracks.iter().filter(|t| t.clamped) {
        let key = match t.kind {
            TrialKind::Training => "training".to_string(),
            TrialKind::Test => t.condition.name(),
        };
        *by_condition.entry(key).or_insert(0) += 1;
    }
    let clamped = av_tracks.iter().filter(|t| t.clamped).count();
    let clamps = ClampSummary {
        clamped,
        total: av_tracks.len(),
        fraction: if av_tracks.is_empty() {
            0.0
        } else {
            clamped as f64 / av_tracks.len() as f64
        },
        by_condition,
        listeners_affected: raw
            .listeners
            .iter()
            .filter(|l| l.tracks.iter().any(|t| t.clamped))
            .count(),
    };

    let vo_scores: Vec<f64> = raw
        .listeners
        .iter()
        .flat_map(|l| l.tracks.iter().filter_map(|t| t.vo_score))
        .collect();
    let vo = descriptive(&vo_scores).ok().map(|d| {
        let gains: Vec<f64> = raw
            .listeners
            .iter()
            .filter_map(|l| Some(session_vo(l, 2)? - session_vo(l, 1)?))
            .collect();
        VoSummary {
            n: d.n,
            min: d.min,
            max: d.max,
            mean: d.mean,
            std: d.sd,
            retest_minus_test_mean: mean(&gains).ok(),
        }
    });

    let mut vo_correlation = BTreeMap::new();
    let mut v_correlation = BTreeMap::new();
    for c in Condition::ALL.iter().filter(|c| c.modality() == Modality::AV) {
        let (mut xm, mut xv, mut y) = (Vec::new(), Vec::new(), Vec::new());
        let (mut xv_all, mut y_all) = (Vec::new(), Vec::new());
        for l in &raw.listeners {
            for &s in &sessions {
                if let Some(srt) = session_srt(l, *c, s) {
                    xv_all.push(l.profile.v);
                    y_all.push(srt);
                    if let Some(score) = session_vo(l, s) {
                        xm.push(score);
                        xv.push(l.profile.v);
                        y.push(srt);
                    }
                }
            }
        }
        if let Ok(r) = pearson_r(&xm, &y) {
            vo_correlation.insert(c.name(), r);
        }
        if let Ok(r) = pearson_r(&xv_all, &y_all) {
            v_correlation.insert(c.name(), r);
        }
    }

    ExperimentReport {
        seed: raw.seed,
        config: raw.config.clone(),
        n_listeners: raw.listeners.len(),
        conditions,
        av_benefit_noise: benefit(Background::Noise),
        av_benefit_quiet: benefit(Background::Quiet),
        pooled_srt_std,
        clamps,
        vo,
        vo_correlation,
        v_correlation,
        training_curve: training_curve(raw),
        reference: ReferenceValues::default(),
    }
}

/// Mean SRT over the AV-noise tracks in the training format, in schedule
/// order: each session's training lists, then its test track.
pub fn training_curve(raw: &RawResults) -> Vec<TrainingPoint> {
    let mut points: Vec<(String, Vec<f64>)> = Vec::new();
    for l in &raw.listeners {
        let trained = Condition::av_noise(l.training_format);
        let mut idx = 0;
        for &s in &sessions(raw) {
            let session_tracks = l.tracks.iter().filter(|t| t.session == s && t.condition == trained);
            let mut n_training = 0;
            for t in session_tracks {
                let label = match t.kind {
                    TrialKind::Training => {
                        n_training += 1;
                        format!("session{s}_training{n_training}")
                    }
                    TrialKind::Test => format!("session{s}_test"),
                };
                if points.len() <= idx {
                    points.push((label.clone(), Vec::new()));
                }
                if points[idx].0 == label {
                    if let Some(v) = t.srt_clamped {
                        points[idx].1.push(v);
                    }
                }
                idx += 1;
            }
        }
    }
    points
        .into_iter()
        .filter_map(|(label, v)| {
            Some(TrainingPoint {
                label,
                n: v.len(),
                mean_srt: mean(&v).ok()?,
            })
        })
        .collect()
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Per-condition CSV with reference values alongside.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "condition",
            "n",
            "mean_srt",
            "std_srt",
            "test_minus_retest_mean",
            "test_minus_retest_std",
            "n_clamped",
            "reference_mean",
            "reference_std",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (name, c) in &self.conditions {
            let r = self.reference.srt.get(name);
            w.write_record([
                name.clone(),
                c.n.to_string(),
                c.mean.to_string(),
                opt(c.std),
                opt(c.test_minus_retest_mean),
                opt(c.test_minus_retest_std),
                c.n_clamped.to_string(),
                opt(r.map(|r| r.mean)),
                opt(r.map(|r| r.std)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Change of the training curve from its first point to point `k` (1-based).
    pub fn training_change(&self, k: usize) -> Option<f64> {
        let first = self.training_curve.first()?.mean_srt;
        Some(self.training_curve.get(k.checked_sub(1)?)?.mean_srt - first)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub visual_gain: f64,
    pub av_benefit_noise: f64,
    pub target: f64,
    pub seeds: Vec<u64>,
    pub iterations: usize,
}

/// Mean AV-noise benefit over several seeds.
pub fn mean_av_noise_benefit(config: &ExperimentConfig, seeds: &[u64]) -> Result<f64> {
    let b = seeds
        .iter()
        .map(|&s| {
            summarize(&run_experiment(config, s)?)
                .av_benefit_noise
                .ok_or_else(|| Error::Plan("plan has no AO/AV noise pair".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    mean(&b)
}

/// Bisect the visual gain until the mean AV-noise benefit hits `target`.
pub fn calibrate_visual_gain(
    config: &ExperimentConfig,
    seeds: &[u64],
    target: f64,
    tolerance: f64,
) -> Result<Calibration> {
    if seeds.is_empty() {
        return Err(Error::Argument("calibration needs at least one seed".into()));
    }
    let eval = |g: f64| {
        let mut c = config.clone();
        c.population.visual_gain = g;
        mean_av_noise_benefit(&c, seeds)
    };
    let (mut lo, mut hi) = (0.0, 20.0);
    let (mut b_lo, b_hi) = (eval(lo)?, eval(hi)?);
    if !(b_lo <= target && target <= b_hi) {
        return Err(Error::DegenerateInput(format!(
            "target benefit {target} dB outside [{b_lo:.2}, {b_hi:.2}] reachable with gains in [0, 20]"
        )));
    }
    let mut iterations = 0;
    let mut g = lo;
    let mut b = b_lo;
    while iterations < 40 {
        iterations += 1;
        g = 0.5 * (lo + hi);
        b = eval(g)?;
        if (b - target).abs() <= tolerance {
            break;
        }
        if b < target {
            lo = g;
            b_lo = b;
        } else {
            hi = g;
        }
    }
    let _ = b_lo;
    Ok(Calibration {
        visual_gain: g,
        av_benefit_noise: b,
        target,
        seeds: seeds.to_vec(),
        iterations,
    })
}

/// Draw a random subset of seeds from one master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = listener_rng(master, 0, 3 << 32);
    (0..n).map(|_| rng.random()).collect()
}
