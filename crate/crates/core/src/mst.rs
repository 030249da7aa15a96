//! Matrix sentence test structure: the 5 × 10 word matrix, balanced test
//! lists and word scoring.

use std::collections::HashSet;
use std::io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_CATEGORIES: usize = 5;
pub const WORDS_PER_CATEGORY: usize = 10;
pub const LIST_LENGTH: usize = 20;

pub const CATEGORY_NAMES: [&str; N_CATEGORIES] = ["name", "verb", "numeral", "adjective", "object"];

const OLSA_WORDS: &str = include_str!("../data/olsa_words.json");

/// Ten words per category, categories in sentence order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordMatrix {
    pub name: Vec<String>,
    pub verb: Vec<String>,
    pub numeral: Vec<String>,
    pub adjective: Vec<String>,
    pub object: Vec<String>,
}

impl WordMatrix {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: WordMatrix = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// The German female OLSA matrix.
    pub fn olsa() -> Self {
        Self::from_json(OLSA_WORDS).expect("bundled word matrix is valid")
    }

    pub fn category(&self, c: usize) -> &[String] {
        match c {
            0 => &self.name,
            1 => &self.verb,
            2 => &self.numeral,
            3 => &self.adjective,
            4 => &self.object,
            _ => panic!("category {c} out of range"),
        }
    }

    pub fn word(&self, category: usize, index: u8) -> &str {
        &self.category(category)[index as usize]
    }

    pub fn index_of(&self, category: usize, word: &str) -> Option<u8> {
        self.category(category)
            .iter()
            .position(|w| w == word)
            .map(|i| i as u8)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in 0..N_CATEGORIES {
            let words = self.category(c);
            if words.len() != WORDS_PER_CATEGORY {
                return Err(Error::MalformedFile(format!(
                    "category '{}' has {} words, expected {WORDS_PER_CATEGORY}",
                    CATEGORY_NAMES[c],
                    words.len()
                )));
            }
            for w in words {
                if !seen.insert(w.as_str()) {
                    return Err(Error::MalformedFile(format!("duplicate word '{w}'")));
                }
            }
        }
        Ok(())
    }
}

/// Five word indices in name-verb-numeral-adjective-object order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatrixSentence {
    pub id: u32,
    pub words: [u8; N_CATEGORIES],
}

impl MatrixSentence {
    pub fn new(id: u32, words: [u8; N_CATEGORIES]) -> Result<Self> {
        if words.iter().any(|&w| w as usize >= WORDS_PER_CATEGORY) {
            return Err(Error::Argument(format!("word index out of range in {words:?}")));
        }
        Ok(MatrixSentence { id, words })
    }

    pub fn text(&self, matrix: &WordMatrix) -> String {
        (0..N_CATEGORIES)
            .map(|c| matrix.word(c, self.words[c]))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Twenty sentences in which every word of every category occurs exactly twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestList {
    list_id: u32,
    sentences: Vec<MatrixSentence>,
}

impl TestList {
    pub fn new(list_id: u32, sentences: Vec<MatrixSentence>) -> Result<Self> {
        if sentences.len() != LIST_LENGTH {
            return Err(Error::Argument(format!(
                "list {list_id} has {} sentences, expected {LIST_LENGTH}",
                sentences.len()
            )));
        }
        for c in 0..N_CATEGORIES {
            let h = histogram(&sentences, c);
            if h.iter().any(|&n| n != 2) {
                return Err(Error::Argument(format!(
                    "list {list_id} is unbalanced in category '{}': {h:?}",
                    CATEGORY_NAMES[c]
                )));
            }
        }
        Ok(TestList { list_id, sentences })
    }

    pub fn list_id(&self) -> u32 {
        self.list_id
    }

    pub fn sentences(&self) -> &[MatrixSentence] {
        &self.sentences
    }

    /// Occurrences of each word index of `category` in this list.
    pub fn histogram(&self, category: usize) -> [usize; WORDS_PER_CATEGORY] {
        histogram(&self.sentences, category)
    }
}

fn histogram(sentences: &[MatrixSentence], category: usize) -> [usize; WORDS_PER_CATEGORY] {
    let mut h = [0; WORDS_PER_CATEGORY];
    for s in sentences {
        h[s.words[category] as usize] += 1;
    }
    h
}

/// Generate `n_lists` balanced lists; output depends only on the arguments.
///
/// Each category column is an independent shuffle of every word twice;
/// columns are reshuffled until no sentence repeats within the list.
pub fn generate_lists(matrix: &WordMatrix, n_lists: usize, seed: u64) -> Vec<TestList> {
    // the matrix only fixes the dimensions; lists carry indices
    debug_assert!(matrix.validate().is_ok());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_lists)
        .map(|l| {
            let sentences = loop {
                let columns: Vec<Vec<u8>> = (0..N_CATEGORIES)
                    .map(|_| {
                        let mut col: Vec<u8> = (0..WORDS_PER_CATEGORY as u8)
                            .flat_map(|w| [w, w])
                            .collect();
                        col.shuffle(&mut rng);
                        col
                    })
                    .collect();
                let rows: Vec<[u8; N_CATEGORIES]> = (0..LIST_LENGTH)
                    .map(|k| std::array::from_fn(|c| columns[c][k]))
                    .collect();
                let distinct: HashSet<_> = rows.iter().collect();
                if distinct.len() == LIST_LENGTH {
                    break rows;
                }
            };
            let sentences = sentences
                .into_iter()
                .enumerate()
                .map(|(k, words)| MatrixSentence {
                    id: (l * LIST_LENGTH + k) as u32 + 1,
                    words,
                })
                .collect();
            TestList::new(l as u32 + 1, sentences).expect("construction is balanced")
        })
        .collect()
}

/// Write lists as `list_id,position,name,verb,numeral,adjective,object`.
pub fn write_lists_csv<W: io::Write>(lists: &[TestList], matrix: &WordMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["list_id", "position"];
    header.extend(CATEGORY_NAMES);
    w.write_record(&header)?;
    for list in lists {
        for (pos, s) in list.sentences.iter().enumerate() {
            let mut rec = vec![list.list_id.to_string(), (pos + 1).to_string()];
            rec.extend((0..N_CATEGORIES).map(|c| matrix.word(c, s.words[c]).to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_lists_csv<R: io::Read>(reader: R, matrix: &WordMatrix) -> Result<Vec<TestList>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows: Vec<(u32, u32, [u8; N_CATEGORIES])> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 + N_CATEGORIES {
            return Err(Error::MalformedFile(format!("expected 7 columns, got {}", rec.len())));
        }
        let num = |s: &str| -> Result<u32> {
            s.trim()
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad integer '{s}'")))
        };
        let mut words = [0u8; N_CATEGORIES];
        for (c, slot) in words.iter_mut().enumerate() {
            let w = rec[2 + c].trim();
            *slot = matrix.index_of(c, w).ok_or_else(|| {
                Error::MalformedFile(format!("'{w}' is not a {} in the matrix", CATEGORY_NAMES[c]))
            })?;
        }
        rows.push((num(&rec[0])?, num(&rec[1])?, words));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut lists = Vec::new();
    for chunk in rows.chunk_by(|a, b| a.0 == b.0) {
        let list_id = chunk[0].0;
        let sentences = chunk
            .iter()
            .enumerate()
            .map(|(k, r)| MatrixSentence {
                id: (list_id - 1) * LIST_LENGTH as u32 + k as u32 + 1,
                words: r.2,
            })
            .collect();
        lists.push(TestList::new(list_id, sentences).map_err(|e| Error::MalformedFile(e.to_string()))?);
    }
    Ok(lists)
}

/// Per-category answer; `None` is the no-answer option.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Response {
    pub slots: [Option<u8>; N_CATEGORIES],
}

impl Response {
    pub fn exact(target: &MatrixSentence) -> Self {
        Response {
            slots: target.words.map(Some),
        }
    }

    pub fn no_answer() -> Self {
        Response::default()
    }
}

/// Number of categories answered with the target word.
pub fn score_response(target: &MatrixSentence, response: &Response) -> u8 {
    target
        .words
        .iter()
        .zip(&response.slots)
        .filter(|(t, r)| **r == Some(**t))
        .count() as u8
}

/// Percentage of words correct over a list of per-sentence scores.
pub fn word_percentage(scores: &[u8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Argument("no sentences scored".into()));
    }
    let total: u32 = scores.iter().map(|&s| u32::from(s)).sum();
    Ok(100.0 * f64::from(total) / (N_CATEGORIES * scores.len()) as f64)
}
