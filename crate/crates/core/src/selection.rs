//! Corpus-level scoring of dubbed takes: asynchrony matrix, best-take
//! selection, outlier correction and matched/mismatched score distributions.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_with, find_best_offset, DtwConfig, OffsetSearch};
use crate::audio::{read_wav_file, AudioBuffer};
use crate::error::{Error, Result};
use crate::mel::{MelAnalyzer, MelParams, MelSpectrogram};
use crate::stats::quantile;

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.060;

pub type SentenceId = String;
pub type TakeId = String;

/// File locations of originals and their takes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TakeCorpus {
    pub originals: BTreeMap<SentenceId, PathBuf>,
    pub takes: BTreeMap<(SentenceId, TakeId), PathBuf>,
}

impl TakeCorpus {
    pub fn new(
        originals: BTreeMap<SentenceId, PathBuf>,
        takes: BTreeMap<(SentenceId, TakeId), PathBuf>,
    ) -> Result<Self> {
        if let Some((s, t)) = takes.keys().find(|(s, _)| !originals.contains_key(s)) {
            return Err(Error::Argument(format!(
                "take '{t}' refers to unknown sentence '{s}'"
            )));
        }
        Ok(TakeCorpus { originals, takes })
    }

    /// Read a `kind,sentence_id,take_id,path` manifest; relative paths resolve
    /// against `base`.
    pub fn from_manifest<R: io::Read>(reader: R, base: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let h = r.headers()?.clone();
        if h.iter().collect::<Vec<_>>() != ["kind", "sentence_id", "take_id", "path"] {
            return Err(Error::MalformedFile(
                "manifest header must be 'kind,sentence_id,take_id,path'".into(),
            ));
        }
        let mut originals = BTreeMap::new();
        let mut takes = BTreeMap::new();
        for rec in r.records() {
            let rec = rec?;
            let path = base.join(&rec[3]);
            let sid = rec[1].to_string();
            match &rec[0] {
                "original" => {
                    if originals.insert(sid.clone(), path).is_some() {
                        return Err(Error::MalformedFile(format!("duplicate original '{sid}'")));
                    }
                }
                "take" => {
                    let key = (sid, rec[2].to_string());
                    if takes.contains_key(&key) {
                        return Err(Error::MalformedFile(format!("duplicate take {key:?}")));
                    }
                    takes.insert(key, path);
                }
                other => {
                    return Err(Error::MalformedFile(format!("unknown kind '{other}'")));
                }
            }
        }
        Self::new(originals, takes).map_err(|e| Error::MalformedFile(e.to_string()))
    }

    pub fn from_manifest_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_manifest(std::fs::File::open(path)?, base)
    }

    /// Read every file; unreadable ones become per-entry errors.
    pub fn load(&self) -> AudioCorpus {
        let load = |p: &PathBuf| read_wav_file(p).map_err(|e| format!("{}: {e}", p.display()));
        AudioCorpus {
            originals: self.originals.iter().map(|(k, p)| (k.clone(), load(p))).collect(),
            takes: self.takes.iter().map(|(k, p)| (k.clone(), load(p))).collect(),
        }
    }
}

pub fn write_manifest<W: io::Write>(corpus: &TakeCorpus, base: &Path, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["kind", "sentence_id", "take_id", "path"])?;
    let rel = |p: &PathBuf| p.strip_prefix(base).unwrap_or(p).display().to_string();
    for (s, p) in &corpus.originals {
        w.write_record(["original", s, "", &rel(p)])?;
    }
    for ((s, t), p) in &corpus.takes {
        w.write_record(["take", s, t, &rel(p)])?;
    }
    w.flush()?;
    Ok(())
}

/// Decoded audio of a corpus with per-entry load errors.
#[derive(Debug, Clone, Default)]
pub struct AudioCorpus {
    pub originals: BTreeMap<SentenceId, Result<AudioBuffer, String>>,
    pub takes: BTreeMap<(SentenceId, TakeId), Result<AudioBuffer, String>>,
}

/// Mel spectrograms of every corpus entry.
#[derive(Debug, Clone)]
pub struct CorpusFeatures {
    pub params: MelParams,
    pub dtw: DtwConfig,
    pub originals: BTreeMap<SentenceId, Result<MelSpectrogram, String>>,
    pub takes: BTreeMap<(SentenceId, TakeId), Result<MelSpectrogram, String>>,
}

impl CorpusFeatures {
    pub fn compute(corpus: &AudioCorpus, params: &MelParams, dtw: DtwConfig) -> Result<Self> {
        let mut analyzers: BTreeMap<u32, MelAnalyzer> = BTreeMap::new();
        let rates = corpus
            .originals
            .values()
            .chain(corpus.takes.values())
            .filter_map(|a| a.as_ref().ok().map(AudioBuffer::sample_rate));
        for rate in rates {
            if !analyzers.contains_key(&rate) {
                analyzers.insert(rate, MelAnalyzer::new(*params, rate)?);
            }
        }
        let mel = |a: &Result<AudioBuffer, String>| -> Result<MelSpectrogram, String> {
            let a = a.as_ref().map_err(Clone::clone)?;
            let m = analyzers[&a.sample_rate()].compute(a).map_err(|e| e.to_string())?;
            if m.is_empty() {
                return Err("shorter than one analysis window".into());
            }
            Ok(m)
        };
        let originals: BTreeMap<_, _> = corpus
            .originals
            .par_iter()
            .map(|(k, a)| (k.clone(), mel(a)))
            .collect();
        let takes = corpus
            .takes
            .par_iter()
            .map(|(k, a)| {
                let m = mel(a).and_then(|m| {
                    let orig_rate = corpus.originals.get(&k.0).and_then(|o| o.as_ref().ok()).map(AudioBuffer::sample_rate);
                    match orig_rate {
                        Some(r) if r != m.sample_rate() => Err(format!(
                            "sample rate {} differs from original's {r}",
                            m.sample_rate()
                        )),
                        _ => Ok(m),
                    }
                });
                (k.clone(), m)
            })
            .collect();
        Ok(CorpusFeatures {
            params: *params,
            dtw,
            originals,
            takes,
        })
    }

    fn pair(&self, sentence: &str, take: &(SentenceId, TakeId)) -> Result<(&MelSpectrogram, &MelSpectrogram), String> {
        let o = self
            .originals
            .get(sentence)
            .ok_or_else(|| format!("no original '{sentence}'"))?
            .as_ref()
            .map_err(|e| format!("original: {e}"))?;
        let t = self
            .takes
            .get(take)
            .ok_or_else(|| format!("no take {take:?}"))?
            .as_ref()
            .map_err(|e| format!("take: {e}"))?;
        if o.sample_rate() != t.sample_rate() {
            return Err("sample rates differ".into());
        }
        Ok((o, t))
    }

    /// Asynchrony in seconds of `take` against the original of `sentence`.
    pub fn score(&self, sentence: &str, take: &(SentenceId, TakeId)) -> Result<f64, String> {
        let (o, t) = self.pair(sentence, take)?;
        align_with(o, t, &self.dtw)
            .map(|a| a.async_seconds)
            .map_err(|e| e.to_string())
    }

    /// Score every take against its own original.
    pub fn scan(&self) -> ScoreMatrix {
        let scored: Vec<_> = self
            .takes
            .keys()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|k| ((*k).clone(), self.score(&k.0, k)))
            .collect();
        let mut entries: BTreeMap<SentenceId, BTreeMap<TakeId, ScoreEntry>> = self
            .originals
            .keys()
            .map(|s| (s.clone(), BTreeMap::new()))
            .collect();
        for ((s, t), r) in scored {
            entries.entry(s).or_default().insert(t, r.into());
        }
        ScoreMatrix { entries }
    }
}

/// A score in seconds or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreEntry {
    Score(f64),
    Error(String),
}

impl ScoreEntry {
    pub fn score(&self) -> Option<f64> {
        match self {
            ScoreEntry::Score(s) => Some(*s),
            ScoreEntry::Error(_) => None,
        }
    }
}

impl From<Result<f64, String>> for ScoreEntry {
    fn from(r: Result<f64, String>) -> Self {
        match r {
            Ok(s) => ScoreEntry::Score(s),
            Err(e) => ScoreEntry::Error(e),
        }
    }
}

/// `async[sentence][take]` in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub entries: BTreeMap<SentenceId, BTreeMap<TakeId, ScoreEntry>>,
}

impl ScoreMatrix {
    pub fn get(&self, sentence: &str, take: &str) -> Option<&ScoreEntry> {
        self.entries.get(sentence)?.get(take)
    }

    pub fn n_scores(&self) -> usize {
        self.entries
            .values()
            .flat_map(|r| r.values())
            .filter(|e| e.score().is_some())
            .count()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sentence_id", "take_id", "async_seconds", "error"])?;
        for (s, row) in &self.entries {
            for (t, e) in row {
                match e {
                    ScoreEntry::Score(v) => w.write_record([s, t, &v.to_string(), ""])?,
                    ScoreEntry::Error(msg) => w.write_record([s, t, "", msg])?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Score the corpus with the given mel settings.
pub fn scan_corpus(corpus: &AudioCorpus, params: &MelParams) -> Result<ScoreMatrix> {
    Ok(CorpusFeatures::compute(corpus, params, DtwConfig::default())?.scan())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestTake {
    pub take_id: TakeId,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best: BTreeMap<SentenceId, BestTake>,
    /// Sentences without a single valid score.
    pub unselectable: Vec<SentenceId>,
}

/// Lowest-scoring take per sentence; ties go to the smallest take id.
pub fn select_best(scores: &ScoreMatrix) -> Selection {
    let mut sel = Selection::default();
    for (s, row) in &scores.entries {
        let mut best: Option<BestTake> = None;
        for (t, e) in row {
            if let Some(v) = e.score() {
                if best.as_ref().is_none_or(|b| v < b.score) {
                    best = Some(BestTake {
                        take_id: t.clone(),
                        score: v,
                    });
                }
            }
        }
        match best {
            Some(b) => {
                sel.best.insert(s.clone(), b);
            }
            None => sel.unselectable.push(s.clone()),
        }
    }
    sel
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: SentenceId,
    pub best_take: TakeId,
    pub raw_score: f64,
    pub corrected_score: f64,
    pub offset_seconds: f64,
    /// Raw score exceeded the threshold, so an offset search ran.
    pub corrected: bool,
    /// Still above threshold after correction.
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreQuantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl ScoreQuantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(ScoreQuantiles {
            min: v[0],
            q25: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q75: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub threshold: f64,
    pub n_sentences: usize,
    pub n_corrected: usize,
    pub n_outliers: usize,
    pub raw: Option<ScoreQuantiles>,
    pub corrected: Option<ScoreQuantiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub records: Vec<SentenceRecord>,
    pub unselectable: Vec<SentenceId>,
    pub summary: SelectionSummary,
}

impl SelectionReport {
    pub fn record(&self, sentence: &str) -> Option<&SentenceRecord> {
        self.records.iter().find(|r| r.sentence_id == sentence)
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Correct selected takes whose score exceeds `threshold` by an offset search;
/// the outlier flag stays set when correction does not bring them under it.
pub fn flag_outliers(
    selection: &Selection,
    features: &CorpusFeatures,
    threshold: f64,
    search: &OffsetSearch,
) -> Result<SelectionReport> {
    let records: Vec<SentenceRecord> = selection
        .best
        .par_iter()
        .map(|(s, b)| -> Result<SentenceRecord> {
            let mut rec = SentenceRecord {
                sentence_id: s.clone(),
                best_take: b.take_id.clone(),
                raw_score: b.score,
                corrected_score: b.score,
                offset_seconds: 0.0,
                corrected: false,
                outlier: false,
            };
            if b.score > threshold {
                let key = (s.clone(), b.take_id.clone());
                let (o, t) = features.pair(s, &key).map_err(Error::DegenerateInput)?;
                let fix = find_best_offset(o, t, search, &features.dtw)?;
                rec.corrected = true;
                rec.corrected_score = fix.alignment.async_seconds.min(b.score);
                rec.offset_seconds = if fix.alignment.async_seconds < b.score {
                    fix.offset_seconds
                } else {
                    0.0
                };
                rec.outlier = rec.corrected_score > threshold;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = records.iter().map(|r| r.raw_score).collect();
    let corrected: Vec<f64> = records.iter().map(|r| r.corrected_score).collect();
    let summary = SelectionSummary {
        threshold,
        n_sentences: records.len(),
        n_corrected: records.iter().filter(|r| r.corrected).count(),
        n_outliers: records.iter().filter(|r| r.outlier).count(),
        raw: ScoreQuantiles::of(&raw),
        corrected: ScoreQuantiles::of(&corrected),
    };
    Ok(SelectionReport {
        records,
        unselectable: selection.unselectable.clone(),
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MismatchMode {
    Exact,
    /// Score a deterministic random fraction of the mismatched pairs.
    Sample(f64),
    Off,
}

impl std::str::FromStr for MismatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MismatchMode::Exact),
            "off" => Ok(MismatchMode::Off),
            _ => {
                let p = s
                    .strip_prefix("sample:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .filter(|p| *p > 0.0 && *p <= 1.0)
                    .ok_or_else(|| Error::Argument(format!("bad mismatched mode '{s}'")))?;
                Ok(MismatchMode::Sample(p))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub values: Vec<f64>,
    pub summary: Option<DistributionSummary>,
}

impl Distribution {
    pub fn new(values: Vec<f64>) -> Self {
        let summary = ScoreQuantiles::of(&values).map(|q| DistributionSummary {
            count: values.len(),
            min: q.min,
            median: q.median,
            max: q.max,
        });
        Distribution { values, summary }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn median(&self) -> Option<f64> {
        self.summary.as_ref().map(|s| s.median)
    }
}

/// Score distributions for best takes, all takes, and takes scored against
/// every other sentence's original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub matched_best: Distribution,
    pub matched_all: Distribution,
    pub mismatched: Option<Distribution>,
}

pub fn sensitivity_report(
    scores: &ScoreMatrix,
    features: &CorpusFeatures,
    mode: MismatchMode,
    seed: u64,
) -> Result<SensitivityReport> {
    if scores.entries.len() < 2 {
        return Err(Error::Argument("need at least two sentences".into()));
    }
    let selection = select_best(scores);
    let matched_best = Distribution::new(selection.best.values().map(|b| b.score).collect());
    let matched_all = Distribution::new(
        scores
            .entries
            .values()
            .flat_map(|r| r.values().filter_map(ScoreEntry::score))
            .collect(),
    );
    let mismatched = match mode {
        MismatchMode::Off => None,
        MismatchMode::Exact | MismatchMode::Sample(_) => {
            let mut pairs = Vec::new();
            for s in features.originals.keys() {
                for key in features.takes.keys().filter(|k| &k.0 != s) {
                    pairs.push((s, key));
                }
            }
            if let MismatchMode::Sample(p) = mode {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                pairs.retain(|_| rng.random_bool(p));
            }
            let values: Vec<f64> = pairs
                .par_iter()
                .filter_map(|(s, k)| features.score(s, k).ok())
                .collect();
            Some(Distribution::new(values))
        }
    };
    Ok(SensitivityReport {
        matched_best,
        matched_all,
        mismatched,
    })
}

/// Everything `sync scan` produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mel: MelParams,
    pub scores: ScoreMatrix,
    pub selection: SelectionReport,
    pub sensitivity: Option<SensitivityReport>,
}

/// Scan, select, correct outliers and optionally build the distributions.
pub fn analyze_corpus(
    corpus: &AudioCorpus,
    params: &MelParams,
    threshold: f64,
    search: &OffsetSearch,
    mode: MismatchMode,
    seed: u64,
) -> Result<CorpusReport> {
    let features = CorpusFeatures::compute(corpus, params, DtwConfig::default())?;
    let scores = features.scan();
    let selection = flag_outliers(&select_best(&scores), &features, threshold, search)?;
    let sensitivity = if features.originals.len() >= 2 {
        Some(sensitivity_report(&scores, &features, mode, seed)?)
    } else {
        None
    };
    Ok(CorpusReport {
        mel: *params,
        scores,
        selection,
        sensitivity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[(&str, &[(&str, f64)])]) -> ScoreMatrix {
        let mut m = ScoreMatrix::default();
        for (s, takes) in rows {
            let row = takes
                .iter()
                .map(|(t, v)| (t.to_string(), ScoreEntry::Score(*v)))
                .collect();
            m.entries.insert(s.to_string(), row);
        }
        m
    }

    #[test]
    fn argmin_and_ties() {
        let m = matrix(&[
            ("a", &[("t1", 0.05), ("t2", 0.03), ("t3", 0.09)]),
            ("b", &[("t1", 0.04), ("t2", 0.04)]),
            ("c", &[("t9", 0.2)]),
        ]);
        let sel = select_best(&m);
        assert_eq!(sel.best["a"].take_id, "t2");
        assert_eq!(sel.best["b"].take_id, "t1");
        assert_eq!(sel.best["c"].take_id, "t9");
    }

    #[test]
    fn sentence_without_scores_is_unselectable() {
        let mut m = matrix(&[("a", &[("t1", 0.05)])]);
        m.entries.insert(
            "b".into(),
            [("t1".to_string(), ScoreEntry::Error("unreadable".into()))].into(),
        );
        m.entries.insert("c".into(), BTreeMap::new());
        let sel = select_best(&m);
        assert_eq!(sel.unselectable, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn mismatch_mode_parsing() {
        assert_eq!("exact".parse::<MismatchMode>().unwrap(), MismatchMode::Exact);
        assert_eq!("off".parse::<MismatchMode>().unwrap(), MismatchMode::Off);
        assert_eq!("sample:0.25".parse::<MismatchMode>().unwrap(), MismatchMode::Sample(0.25));
        assert!("sample:0".parse::<MismatchMode>().is_err());
        assert!("all".parse::<MismatchMode>().is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "kind,sentence_id,take_id,path\noriginal,s1,,o1.wav\ntake,s1,t1,a.wav\ntake,s1,t2,b.wav\n";
        let c = TakeCorpus::from_manifest(text.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(c.originals["s1"], PathBuf::from("/data/o1.wav"));
        assert_eq!(c.takes.len(), 2);
        let orphan = "kind,sentence_id,take_id,path\ntake,s2,t1,a.wav\n";
        assert!(TakeCorpus::from_manifest(orphan.as_bytes(), Path::new(".")).is_err());
        let dup = "kind,sentence_id,take_id,path\noriginal,s1,,a\noriginal,s1,,b\n";
        assert!(TakeCorpus::from_manifest(dup.as_bytes(), Path::new(".")).is_err());
    }

    #[test]
    fn unreadable_files_are_per_entry_errors() {
        let c = TakeCorpus::new(
            [("s1".to_string(), PathBuf::from("/nonexistent/o.wav"))].into(),
            [(("s1".to_string(), "t1".to_string()), PathBuf::from("/nonexistent/t.wav"))].into(),
        )
        .unwrap();
        let audio = c.load();
        let m = scan_corpus(&audio, &MelParams::default()).unwrap();
        assert!(matches!(m.get("s1", "t1"), Some(ScoreEntry::Error(_))));
    }
}
