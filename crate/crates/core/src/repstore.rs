//! Data model for representation sets, embedding tables, stimulus corpora and
//! scan series, plus bag-of-words composition.
//!
//! Every constructor validates its invariants, so a value of these types is
//! always well formed. Objects are immutable once built.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Provenance of a representation set.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RepMeta {
    pub model_name: String,
    pub layer: i64,
    pub context_length: u32,
    #[cfg_attr(feature = "serde", serde(default))]
    pub block_id: Option<i64>,
    pub stimulus_ids: Vec<String>,
}

impl RepMeta {
    /// Metadata with stimulus ids `"{prefix}{i}"` for `i in 0..n`.
    pub fn numbered(model_name: &str, prefix: &str, n: usize) -> Self {
        Self {
            model_name: model_name.to_string(),
            stimulus_ids: (0..n).map(|i| format!("{prefix}{i}")).collect(),
            ..Self::default()
        }
    }

    /// Short label such as `elmo_L1_c3`.
    pub fn label(&self) -> String {
        format!("{}_L{}_c{}", self.model_name, self.layer, self.context_length)
    }
}

/// N stimuli by D features.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    values: Matrix,
    meta: RepMeta,
}

impl RepresentationSet {
    pub fn new(values: Matrix, meta: RepMeta) -> Result<Self> {
        if values.rows() == 0 || values.cols() == 0 {
            return Err(Error::Validation(format!(
                "representation set must be non-empty, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if meta.stimulus_ids.len() != values.rows() {
            return Err(Error::Validation(format!(
                "{} stimulus ids for {} rows",
                meta.stimulus_ids.len(),
                values.rows()
            )));
        }
        check_unique(&meta.stimulus_ids, "stimulus id")?;
        Ok(Self { values, meta })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn meta(&self) -> &RepMeta {
        &self.meta
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.meta.stimulus_ids
    }

    pub fn n_stimuli(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn into_parts(self) -> (Matrix, RepMeta) {
        (self.values, self.meta)
    }

    /// Keeps the rows where `mask` is true.
    pub fn select(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.n_stimuli() {
            return Err(Error::Shape(format!("mask of length {} for {} stimuli", mask.len(), self.n_stimuli())));
        }
        let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut meta = self.meta.clone();
        meta.stimulus_ids = idx.iter().map(|&i| self.meta.stimulus_ids[i].clone()).collect();
        Self::new(self.values.select_rows(&idx), meta)
    }
}

pub(crate) fn check_unique(items: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in items {
        if !seen.insert(s.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} {s:?}")));
        }
    }
    Ok(())
}

/// Word-embedding lookup table with a shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: BTreeMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table; ragged vectors are a format error and repeated tokens a
    /// validation error.
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut dim = None;
        let mut index = BTreeMap::new();
        let mut vectors = Vec::new();
        for (n, (token, v)) in entries.into_iter().enumerate() {
            if token.is_empty() {
                return Err(Error::Validation(format!("entry {n} has an empty token")));
            }
            let d = *dim.get_or_insert(v.len());
            if v.len() != d || d == 0 {
                return Err(Error::Format(format!(
                    "token {token:?} has dimension {}, expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("token {token:?} has a non-finite component")));
            }
            if index.contains_key(&token) {
                return Err(Error::Validation(format!("duplicate token {token:?}")));
            }
            index.insert(token, n);
            vectors.extend_from_slice(&v);
        }
        let dim = dim.ok_or_else(|| Error::Format("embedding table is empty".into()))?;
        Ok(Self { dim, index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Token normalization shared by embedding lookup and lexicon matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenNormalizer {
    pub lowercase: bool,
    /// Strip leading and trailing punctuation.
    pub strip_punctuation: bool,
}

impl Default for TokenNormalizer {
    fn default() -> Self {
        Self { lowercase: true, strip_punctuation: true }
    }
}

impl TokenNormalizer {
    pub const NONE: Self = Self { lowercase: false, strip_punctuation: false };

    pub fn normalize(&self, token: &str) -> String {
        let t = if self.strip_punctuation {
            token.trim_matches(|c: char| c.is_ascii_punctuation() || is_unicode_punct(c))
        } else {
            token
        };
        if self.lowercase {
            t.to_lowercase()
        } else {
            t.to_string()
        }
    }
}

fn is_unicode_punct(c: char) -> bool {
    matches!(c, '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2013}' | '\u{2014}' | '\u{2026}')
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Word {
    pub token: String,
    pub sentence_index: usize,
    pub block_id: i64,
}

/// Words in presentation order plus a character lexicon.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusCorpus {
    words: Vec<Word>,
    lexicon: BTreeSet<String>,
}

impl StimulusCorpus {
    pub fn new(words: Vec<Word>, lexicon: BTreeSet<String>) -> Result<Self> {
        for (i, pair) in words.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if a.block_id == b.block_id && b.sentence_index < a.sentence_index {
                return Err(Error::Validation(format!(
                    "sentence index decreases at word {} within block {}",
                    i + 1,
                    a.block_id
                )));
            }
        }
        if let Some(i) = words.iter().position(|w| w.token.is_empty()) {
            return Err(Error::Validation(format!("word {i} has an empty token")));
        }
        Ok(Self { words, lexicon })
    }

    /// Builds a corpus from sentences given as whitespace-separated text.
    pub fn from_sentences(sentences: &[&str], block_id: i64) -> Result<Self> {
        let mut words = Vec::new();
        for (s, text) in sentences.iter().enumerate() {
            let before = words.len();
            words.extend(text.split_whitespace().map(|t| Word {
                token: t.to_string(),
                sentence_index: s,
                block_id,
            }));
            if words.len() == before {
                return Err(Error::Validation(format!("sentence {s} is empty")));
            }
        }
        Self::new(words, BTreeSet::new())
    }

    pub fn with_lexicon(mut self, lexicon: BTreeSet<String>) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn lexicon(&self) -> &BTreeSet<String> {
        &self.lexicon
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words of a single block, in order.
    pub fn block(&self, block_id: i64) -> Self {
        Self {
            words: self.words.iter().filter(|w| w.block_id == block_id).cloned().collect(),
            lexicon: self.lexicon.clone(),
        }
    }

    /// Half-open word ranges of each sentence, in order.
    pub fn sentence_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = 0;
        for i in 1..=self.words.len() {
            if i == self.words.len() || !same_sentence(&self.words[i - 1], &self.words[i]) {
                spans.push((start, i));
                start = i;
            }
        }
        spans
    }

    /// True when word `i` is the last word of its sentence.
    pub fn is_sentence_final(&self, i: usize) -> bool {
        i + 1 == self.words.len() || !same_sentence(&self.words[i], &self.words[i + 1])
    }
}

fn same_sentence(a: &Word, b: &Word) -> bool {
    a.block_id == b.block_id && a.sentence_index == b.sentence_index
}

/// T scans by V voxels with a voxel-to-region atlas.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSeries {
    values: Matrix,
    region_of_voxel: Vec<String>,
    pub subject_id: String,
    pub block_id: i64,
    pub scan_period_s: f64,
}

impl ScanSeries {
    pub fn new(
        values: Matrix,
        region_of_voxel: Vec<String>,
        subject_id: impl Into<String>,
        block_id: i64,
        scan_period_s: f64,
    ) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::Validation(format!("scan series needs T >= 2, got {}", values.rows())));
        }
        if values.cols() == 0 {
            return Err(Error::Validation("scan series has no voxels".into()));
        }
        if region_of_voxel.len() != values.cols() {
            return Err(Error::Validation(format!(
                "{} region labels for {} voxels",
                region_of_voxel.len(),
                values.cols()
            )));
        }
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        if !(scan_period_s > 0.0 && scan_period_s.is_finite()) {
            return Err(Error::Validation(format!("scan period must be positive, got {scan_period_s}")));
        }
        Ok(Self { values, region_of_voxel, subject_id: subject_id.into(), block_id, scan_period_s })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn region_of_voxel(&self) -> &[String] {
        &self.region_of_voxel
    }

    pub fn n_scans(&self) -> usize {
        self.values.rows()
    }

    pub fn n_voxels(&self) -> usize {
        self.values.cols()
    }

    /// Distinct region labels in first-appearance order.
    pub fn regions(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.region_of_voxel.iter().filter(|r| seen.insert(r.as_str())).cloned().collect()
    }

    /// Same metadata, new values and atlas.
    pub fn with_values(&self, values: Matrix, region_of_voxel: Vec<String>) -> Result<Self> {
        Self::new(values, region_of_voxel, self.subject_id.clone(), self.block_id, self.scan_period_s)
    }

    /// Keeps the voxel columns at `idx`, in that order.
    pub fn select_voxels(&self, idx: &[usize]) -> Result<Self> {
        let regions = idx.iter().map(|&j| self.region_of_voxel[j].clone()).collect();
        self.with_values(self.values.select_columns(idx), regions)
    }

    /// Scan rows at `scans` as a representation set with ids `scan{s}`.
    pub fn scan_representations(&self, scans: &[usize]) -> Result<RepresentationSet> {
        if let Some(&s) = scans.iter().find(|&&s| s >= self.n_scans()) {
            return Err(Error::Bounds { index: s, len: self.n_scans() });
        }
        let meta = RepMeta {
            model_name: format!("brain:{}", self.subject_id),
            layer: 0,
            context_length: 0,
            block_id: Some(self.block_id),
            stimulus_ids: scans.iter().map(|s| format!("scan{s}")).collect(),
        };
        RepresentationSet::new(self.values.select_rows(scans), meta)
    }
}

/// Unit over which bag-of-words vectors are averaged.
#[derive(Debug, Clone, Copy)]
pub enum BowUnit<'a> {
    Sentence,
    /// Half-open word ranges, one per scan window.
    Windows(&'a [crate::align::ScanWindow]),
}

/// Result of [`compose_bag_of_words`].
#[derive(Debug, Clone, PartialEq)]
pub struct BagOfWords {
    pub reps: RepresentationSet,
    /// Number of units without a single in-vocabulary token; their rows are zero.
    pub empty_units: usize,
    pub oov_tokens: usize,
}

/// Averages the embedding vectors of the in-vocabulary tokens of each unit.
///
/// Out-of-vocabulary tokens are skipped. A unit with no in-vocabulary token
/// gets a zero row and is counted in `empty_units`.
pub fn compose_bag_of_words(
    corpus: &StimulusCorpus,
    table: &EmbeddingTable,
    unit: BowUnit<'_>,
    normalizer: TokenNormalizer,
) -> Result<BagOfWords> {
    let (spans, ids): (Vec<(usize, usize)>, Vec<String>) = match unit {
        BowUnit::Sentence => corpus
            .sentence_spans()
            .into_iter()
            .map(|(a, b)| {
                let w = &corpus.words()[a];
                ((a, b), format!("b{}s{}", w.block_id, w.sentence_index))
            })
            .unzip(),
        BowUnit::Windows(ws) => ws
            .iter()
            .map(|w| ((w.start, w.end.min(corpus.len())), format!("scan{}", w.scan_index)))
            .unzip(),
    };
    if spans.is_empty() {
        return Err(Error::Data("no units to compose".into()));
    }
    let d = table.dim();
    let mut values = Matrix::zeros(spans.len(), d);
    let mut empty_units = 0;
    let mut oov_tokens = 0;
    for (u, &(a, b)) in spans.iter().enumerate() {
        let mut acc = vec![0.0; d];
        let mut hits = 0usize;
        for w in &corpus.words()[a..b.max(a)] {
            match table.get(&normalizer.normalize(&w.token)) {
                Some(v) => {
                    acc.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                    hits += 1;
                }
                None => oov_tokens += 1,
            }
        }
        if hits == 0 {
            empty_units += 1;
            continue;
        }
        let row = values.row_mut(u);
        for (r, s) in row.iter_mut().zip(&acc) {
            *r = s / hits as f64;
        }
    }
    let meta = RepMeta {
        model_name: "bow".into(),
        layer: 0,
        context_length: 0,
        block_id: corpus.words().first().map(|w| w.block_id),
        stimulus_ids: ids,
    };
    Ok(BagOfWords { reps: RepresentationSet::new(values, meta)?, empty_units, oov_tokens })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian, rng};
    use rand::Rng;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_entries(entries.iter().map(|(t, v)| (t.to_string(), v.to_vec()))).unwrap()
    }

    #[test]
    fn representation_set_rejects_bad_input() {
        let m = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(RepresentationSet::new(m.clone(), RepMeta::numbered("m", "s", 2)).is_err());
        let dup = RepMeta { stimulus_ids: vec!["a".into()], ..Default::default() };
        assert!(RepresentationSet::new(m.clone(), dup).is_ok());
        let nan = Matrix::from_rows(&[[1.0, f64::NAN]]).unwrap();
        assert!(matches!(
            RepresentationSet::new(nan, RepMeta::numbered("m", "s", 1)),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        let two = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let ids = RepMeta { stimulus_ids: vec!["a".into(), "a".into()], ..Default::default() };
        assert!(matches!(RepresentationSet::new(two, ids), Err(Error::Validation(_))));
    }

    #[test]
    fn embedding_table_dimension_checks() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(t.dim(), 2);
        let ragged = EmbeddingTable::from_entries([("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![1.0, 0.0, 0.0])]);
        assert!(matches!(ragged, Err(Error::Format(_))));
        let dup = EmbeddingTable::from_entries([("a".to_string(), vec![1.0]), ("a".to_string(), vec![2.0])]);
        assert!(matches!(dup, Err(Error::Validation(_))));
    }

    #[test]
    fn normalizer_lowercases_and_strips() {
        let n = TokenNormalizer::default();
        assert_eq!(n.normalize("Harry,"), "harry");
        assert_eq!(n.normalize("\u{201C}Malfoy's\u{201D}"), "malfoy's");
        assert_eq!(TokenNormalizer::NONE.normalize("Harry,"), "Harry,");
    }

    #[test]
    fn bow_two_point_mean() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let c = StimulusCorpus::from_sentences(&["a b", "a a", "zzz"], 1).unwrap();
        let out = compose_bag_of_words(&c, &t, BowUnit::Sentence, TokenNormalizer::default()).unwrap();
        assert_eq!(out.reps.values().row(0), &[0.5, 0.5]);
        assert_eq!(out.reps.values().row(1), &[1.0, 0.0]);
        assert_eq!(out.reps.values().row(2), &[0.0, 0.0]);
        assert_eq!(out.empty_units, 1);
        assert_eq!(out.oov_tokens, 1);
        assert_eq!(out.reps.stimulus_ids()[1], "b1s1");
    }

    #[test]
    fn bow_matches_summation_oracle() {
        let mut r = rng(11);
        let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let vecs = gaussian(&mut r, 30, 6);
        let t = EmbeddingTable::from_entries(
            vocab.iter().enumerate().map(|(i, w)| (w.clone(), vecs.row(i).to_vec())),
        )
        .unwrap();
        let mut words = Vec::new();
        for s in 0..20 {
            for _ in 0..r.random_range(1..8) {
                // ids >= 30 are out of vocabulary
                let id = r.random_range(0..34);
                words.push(Word { token: format!("w{id}"), sentence_index: s, block_id: 0 });
            }
        }
        let c = StimulusCorpus::new(words.clone(), BTreeSet::new()).unwrap();
        let out = compose_bag_of_words(&c, &t, BowUnit::Sentence, TokenNormalizer::NONE).unwrap();
        assert_eq!(out.reps.n_stimuli(), 20);
        for s in 0..20 {
            let mut total = vec![0.0; 6];
            let mut n = 0.0;
            for w in words.iter().filter(|w| w.sentence_index == s) {
                let id: usize = w.token[1..].parse().unwrap();
                if id < 30 {
                    for k in 0..6 {
                        total[k] += vecs.get(id, k);
                    }
                    n += 1.0;
                }
            }
            for k in 0..6 {
                let expect = if n > 0.0 { total[k] / n } else { 0.0 };
                assert!((out.reps.values().get(s, k) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn corpus_rejects_decreasing_sentence_index() {
        let w = |s| Word { token: "x".into(), sentence_index: s, block_id: 0 };
        assert!(StimulusCorpus::new(vec![w(1), w(0)], BTreeSet::new()).is_err());
        let ok = StimulusCorpus::new(vec![w(0), w(0), w(1)], BTreeSet::new()).unwrap();
        assert_eq!(ok.sentence_spans(), vec![(0, 2), (2, 3)]);
        assert!(ok.is_sentence_final(1));
        assert!(!ok.is_sentence_final(0));
    }

    #[test]
    fn scan_series_checks_atlas_length() {
        let m = Matrix::zeros(5, 4);
        let regions: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let s = ScanSeries::new(m.clone(), regions, "s1", 1, 2.0).unwrap();
        assert_eq!(s.region_of_voxel().len(), 4);
        assert_eq!(s.regions(), vec!["a".to_string(), "b".to_string()]);
        assert!(ScanSeries::new(m, vec!["a".into()], "s1", 1, 2.0).is_err());
    }
}
