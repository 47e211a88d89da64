//! Stimulus-side construction: context windows, word-to-scan alignment under
//! a hemodynamic delay, per-scan aggregation and story-segment masks.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repstore::{RepMeta, RepresentationSet, StimulusCorpus, TokenNormalizer};

/// Timing constants of the reading experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlignmentSpec {
    pub scan_period_s: f64,
    pub words_per_scan: usize,
    pub word_duration_s: f64,
    /// May be negative.
    pub delay_s: f64,
}

impl Default for AlignmentSpec {
    fn default() -> Self {
        Self { scan_period_s: 2.0, words_per_scan: 4, word_duration_s: 0.5, delay_s: 0.0 }
    }
}

impl AlignmentSpec {
    pub fn with_delay(self, delay_s: f64) -> Self {
        Self { delay_s, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.words_per_scan == 0 || !(self.scan_period_s > 0.0) || !(self.word_duration_s > 0.0) {
            return Err(Error::Config("timing constants must be positive".into()));
        }
        let covered = self.words_per_scan as f64 * self.word_duration_s;
        if libm::fabs(covered - self.scan_period_s) > 1e-9 * self.scan_period_s {
            return Err(Error::Config(format!(
                "{} words of {} s do not fill a {} s scan",
                self.words_per_scan, self.word_duration_s, self.scan_period_s
            )));
        }
        self.shift_scans().map(|_| ())
    }

    /// Delay expressed in whole scans.
    pub fn shift_scans(&self) -> Result<i64> {
        let k = self.delay_s / self.scan_period_s;
        let r = libm::round(k);
        if !k.is_finite() || libm::fabs(k - r) > 1e-9 {
            return Err(Error::Config(format!(
                "delay {} s is not a multiple of the {} s scan period",
                self.delay_s, self.scan_period_s
            )));
        }
        Ok(r as i64)
    }
}

/// How `c` counts sentences of context beyond the current one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ContextConvention {
    /// `c` includes the current sentence: `c >= 2` prepends `c - 1` sentences.
    #[default]
    IncludingCurrent,
    /// `c >= 2` prepends `c` previous sentences.
    PreviousSentences,
}

/// Tokens fed to a model for word `target` with `c` sentences of context.
///
/// `c = 0` is the target alone and `c = 1` the current sentence up to the
/// target. Context never crosses a block boundary.
pub fn context_window(
    corpus: &StimulusCorpus,
    target: usize,
    c: usize,
    convention: ContextConvention,
) -> Result<Vec<&str>> {
    let words = corpus.words();
    if target >= words.len() {
        return Err(Error::Bounds { index: target, len: words.len() });
    }
    if c == 0 {
        return Ok(alloc::vec![words[target].token.as_str()]);
    }
    let spans = corpus.sentence_spans();
    let si = spans.partition_point(|&(_, end)| end <= target);
    let previous = match (c, convention) {
        (1, _) => 0,
        (_, ContextConvention::IncludingCurrent) => c - 1,
        (_, ContextConvention::PreviousSentences) => c,
    };
    let block = words[target].block_id;
    let mut first = si;
    while first > 0 && si - first < previous && words[spans[first - 1].0].block_id == block {
        first -= 1;
    }
    Ok(words[spans[first].0..=target].iter().map(|w| w.token.as_str()).collect())
}

/// Words shown during one scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanWindow {
    pub scan_index: usize,
    pub start: usize,
    pub end: usize,
}

impl ScanWindow {
    pub fn word_indices(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Scan `s` covers words `[s * w, (s + 1) * w)` clipped to the corpus.
/// Trailing scans may be partial or empty.
pub fn build_scan_windows(corpus: &StimulusCorpus, spec: &AlignmentSpec, n_scans: usize) -> Result<Vec<ScanWindow>> {
    spec.validate()?;
    if n_scans == 0 {
        return Err(Error::Config("n_scans must be at least 1".into()));
    }
    let w = spec.words_per_scan;
    let n = corpus.len();
    Ok((0..n_scans)
        .map(|s| ScanWindow { scan_index: s, start: (s * w).min(n), end: ((s + 1) * w).min(n) })
        .collect())
}

/// A scan paired with the stimulus window it responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayedScan {
    pub scan_index: usize,
    pub window_index: usize,
    pub start: usize,
    pub end: usize,
}

impl DelayedScan {
    pub fn word_indices(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Associates scan `s` with window `s - delay / scan_period`.
///
/// Scans whose shifted window is out of range or holds no words are dropped.
pub fn apply_delay(windows: &[ScanWindow], spec: &AlignmentSpec) -> Result<Vec<DelayedScan>> {
    let k = spec.shift_scans()?;
    let n = windows.len() as i64;
    let mut out = Vec::new();
    for (s, _) in windows.iter().enumerate() {
        let w = s as i64 - k;
        if w < 0 || w >= n {
            continue;
        }
        let win = &windows[w as usize];
        if win.is_empty() {
            continue;
        }
        out.push(DelayedScan { scan_index: windows[s].scan_index, window_index: w as usize, start: win.start, end: win.end });
    }
    Ok(out)
}

/// How a window's word vectors become one scan vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Aggregation {
    #[default]
    Mean,
    Last,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "last" => Ok(Aggregation::Last),
            other => Err(Error::Config(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

/// Per-scan model representations and the scans they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReps {
    pub reps: RepresentationSet,
    pub scan_indices: Vec<usize>,
}

/// Aggregates word-level representations into one row per associated scan.
/// Stimulus ids are `scan{s}`, matching [`crate::ScanSeries::scan_representations`].
pub fn scan_representations(word_reps: &RepresentationSet, assoc: &[DelayedScan], mode: Aggregation) -> Result<ScanReps> {
    let d = word_reps.dim();
    let v = word_reps.values();
    let kept: Vec<&DelayedScan> = assoc.iter().filter(|a| a.end > a.start).collect();
    if let Some(a) = kept.iter().find(|a| a.end > word_reps.n_stimuli()) {
        return Err(Error::Bounds { index: a.end - 1, len: word_reps.n_stimuli() });
    }
    if kept.is_empty() {
        return Err(Error::Data("no scan has any words".into()));
    }
    let mut values = Matrix::zeros(kept.len(), d);
    for (r, a) in kept.iter().enumerate() {
        let row = values.row_mut(r);
        match mode {
            Aggregation::Last => row.copy_from_slice(v.row(a.end - 1)),
            Aggregation::Mean => {
                let n = (a.end - a.start) as f64;
                for k in 0..d {
                    let total = crate::sum::sum_by(a.end - a.start, &|i| v.get(a.start + i, k));
                    row[k] = total / n;
                }
            }
        }
    }
    let meta = RepMeta {
        stimulus_ids: kept.iter().map(|a| format!("scan{}", a.scan_index)).collect(),
        ..word_reps.meta().clone()
    };
    Ok(ScanReps { reps: RepresentationSet::new(values, meta)?, scan_indices: kept.iter().map(|a| a.scan_index).collect() })
}

/// True for windows containing a sentence-final word.
pub fn sentence_end_mask(corpus: &StimulusCorpus, windows: &[ScanWindow]) -> Vec<bool> {
    windows.iter().map(|w| w.word_indices().any(|i| corpus.is_sentence_final(i))).collect()
}

/// True for windows mentioning any lexicon token, after normalization.
pub fn lexicon_mention_mask(corpus: &StimulusCorpus, windows: &[ScanWindow], normalizer: TokenNormalizer) -> Result<Vec<bool>> {
    if corpus.lexicon().is_empty() {
        return Err(Error::Config("character lexicon is empty".into()));
    }
    let lex: BTreeSet<String> = corpus.lexicon().iter().map(|t| normalizer.normalize(t)).collect();
    Ok(windows
        .iter()
        .map(|w| w.word_indices().any(|i| lex.contains(&normalizer.normalize(&corpus.words()[i].token))))
        .collect())
}

/// Carries a per-window mask over to the scans associated under a delay.
pub fn delayed_mask(assoc: &[DelayedScan], window_mask: &[bool]) -> Vec<bool> {
    assoc.iter().map(|a| window_mask[a.window_index]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repstore::Word;
    use crate::testutil::{gaussian, rng};
    use alloc::string::ToString;
    use alloc::vec;
    use rand::Rng;

    const OPENING: &str = "Harry had never believed he would meet a boy he hated more than Dudley, but that was before he met Draco Malfoy.";

    fn corpus_of(sentences: &[&str]) -> StimulusCorpus {
        StimulusCorpus::from_sentences(sentences, 1).unwrap()
    }

    #[test]
    fn context_window_examples() {
        let c = corpus_of(&["x y", "a b c"]);
        let conv = ContextConvention::IncludingCurrent;
        assert_eq!(context_window(&c, 3, 0, conv).unwrap(), vec!["b"]);
        assert_eq!(context_window(&c, 4, 1, conv).unwrap(), vec!["a", "b", "c"]);
        assert_eq!(context_window(&c, 4, 2, conv).unwrap(), vec!["x", "y", "a", "b", "c"]);
        assert_eq!(context_window(&c, 4, 1, ContextConvention::PreviousSentences).unwrap(), vec!["a", "b", "c"]);
        assert_eq!(context_window(&c, 4, 2, ContextConvention::PreviousSentences).unwrap(), vec!["x", "y", "a", "b", "c"]);
        assert!(matches!(context_window(&c, 5, 0, conv), Err(Error::Bounds { .. })));
    }

    #[test]
    fn context_conventions_differ_by_one_sentence() {
        let c = corpus_of(&["p", "q r", "s t", "u v w"]);
        assert_eq!(context_window(&c, 7, 2, ContextConvention::IncludingCurrent).unwrap(), vec!["s", "t", "u", "v", "w"]);
        assert_eq!(
            context_window(&c, 7, 2, ContextConvention::PreviousSentences).unwrap(),
            vec!["q", "r", "s", "t", "u", "v", "w"]
        );
    }

    #[test]
    fn context_stops_at_block_boundary() {
        let mut words = vec![];
        for (b, s, t) in [(1, 0, "a"), (2, 0, "b"), (2, 1, "c")] {
            words.push(Word { token: t.into(), sentence_index: s, block_id: b });
        }
        let c = StimulusCorpus::new(words, Default::default()).unwrap();
        assert_eq!(context_window(&c, 2, 5, ContextConvention::IncludingCurrent).unwrap(), vec!["b", "c"]);
    }

    #[test]
    fn context_windows_are_suffix_extensions() {
        let mut r = rng(3);
        let sentences: Vec<String> = (0..8)
            .map(|s| (0..r.random_range(1..6)).map(|i| format!("w{s}_{i}")).collect::<Vec<_>>().join(" "))
            .collect();
        let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
        let c = corpus_of(&refs);
        for conv in [ContextConvention::IncludingCurrent, ContextConvention::PreviousSentences] {
            for t in 0..c.len() {
                for k in 0..6 {
                    let short = context_window(&c, t, k, conv).unwrap();
                    let long = context_window(&c, t, k + 1, conv).unwrap();
                    assert!(long.ends_with(&short));
                }
            }
        }
    }

    #[test]
    fn scan_windows_clip() {
        let spec = AlignmentSpec::default();
        let c8 = corpus_of(&["a b c d e f g h"]);
        let w = build_scan_windows(&c8, &spec, 2).unwrap();
        assert_eq!((w[0].word_indices(), w[1].word_indices()), (0..4, 4..8));
        let c6 = corpus_of(&["a b c d e f"]);
        let w = build_scan_windows(&c6, &spec, 3).unwrap();
        assert_eq!(w[1].word_indices().len(), 2);
        assert!(w[2].is_empty());
        let bad = AlignmentSpec { words_per_scan: 3, ..spec };
        assert!(matches!(build_scan_windows(&c6, &bad, 1), Err(Error::Config(_))));
    }

    #[test]
    fn block_one_counts_do_not_need_to_agree() {
        let tokens: Vec<String> = (0..1583).map(|i| format!("w{i}")).collect();
        let words = tokens.iter().enumerate().map(|(i, t)| Word { token: t.clone(), sentence_index: i / 12, block_id: 1 }).collect();
        let c = StimulusCorpus::new(words, BTreeSet::new()).unwrap();
        let spec = AlignmentSpec::default();
        let w = build_scan_windows(&c, &spec, 326).unwrap();
        assert_eq!(w.len(), 326);
        assert_eq!(w[325].word_indices(), 1300..1304);
        let longer = build_scan_windows(&c, &spec, 400).unwrap();
        assert_eq!(longer[395].word_indices(), 1580..1583);
        assert!(longer[396..].iter().all(ScanWindow::is_empty));
        assert_eq!(apply_delay(&longer, &spec).unwrap().len(), 396);
    }

    #[test]
    fn opening_alignment_follows_the_delay() {
        let c = corpus_of(&[OPENING]);
        let spec = AlignmentSpec::default();
        let windows = build_scan_windows(&c, &spec, 6).unwrap();
        let third_scan = |delay: f64| -> String {
            let assoc = apply_delay(&windows, &spec.with_delay(delay)).unwrap();
            let a = assoc.iter().find(|a| a.scan_index == 2).unwrap();
            c.words()[a.word_indices()].iter().map(|w| w.token.as_str()).collect::<Vec<_>>().join(" ")
        };
        assert_eq!(third_scan(0.0), "boy he hated more");
        assert_eq!(third_scan(2.0), "he would meet a");
        assert_eq!(third_scan(4.0), "Harry had never believed");
    }

    #[test]
    fn delay_shift_arithmetic() {
        let c = corpus_of(&["a b c d e f g h i j k l m n o p q r s t"]);
        let spec = AlignmentSpec::default();
        let windows = build_scan_windows(&c, &spec, 5).unwrap();
        let id = apply_delay(&windows, &spec).unwrap();
        assert!(id.iter().all(|a| a.scan_index == a.window_index));
        let neg = apply_delay(&windows, &spec.with_delay(-2.0)).unwrap();
        assert_eq!(neg.len(), 4);
        for a in &neg {
            assert_eq!(a.window_index, a.scan_index + 1);
        }
        let pos = apply_delay(&windows, &spec.with_delay(4.0)).unwrap();
        assert_eq!(pos.first().unwrap().scan_index, 2);
        assert!(matches!(apply_delay(&windows, &spec.with_delay(1.0)), Err(Error::Config(_))));

        // shifting by d then -d restores the identity on survivors
        let there = apply_delay(&windows, &spec.with_delay(4.0)).unwrap();
        let back = apply_delay(&windows, &spec.with_delay(-4.0)).unwrap();
        for a in &there {
            let b = back.iter().find(|b| b.scan_index == a.window_index).unwrap();
            assert_eq!(b.window_index, a.scan_index);
        }
    }

    #[test]
    fn aggregation_modes() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [2.0, 2.0]]).unwrap();
        let reps = RepresentationSet::new(m, RepMeta::numbered("m", "w", 4)).unwrap();
        let assoc = [
            DelayedScan { scan_index: 0, window_index: 0, start: 0, end: 2 },
            DelayedScan { scan_index: 1, window_index: 1, start: 2, end: 4 },
            DelayedScan { scan_index: 2, window_index: 2, start: 4, end: 4 },
        ];
        let mean = scan_representations(&reps, &assoc, Aggregation::Mean).unwrap();
        assert_eq!(mean.reps.values().row(0), &[0.5, 0.5]);
        assert_eq!(mean.reps.values().row(1), &[2.0, 2.0]);
        assert_eq!(mean.scan_indices, vec![0, 1]);
        let last = scan_representations(&reps, &assoc, Aggregation::Last).unwrap();
        assert_eq!(last.reps.values().row(1), &[2.0, 2.0]);
        assert_eq!(last.reps.stimulus_ids(), &["scan0".to_string(), "scan1".to_string()]);
        assert!(matches!("median".parse::<Aggregation>(), Err(Error::Config(_))));
    }

    #[test]
    fn mean_aggregation_matches_summation_and_commutes_with_linear_maps() {
        let mut r = rng(8);
        let words = gaussian(&mut r, 40, 3);
        let reps = RepresentationSet::new(words.clone(), RepMeta::numbered("m", "w", 40)).unwrap();
        let assoc: Vec<DelayedScan> =
            (0..10).map(|s| DelayedScan { scan_index: s, window_index: s, start: 4 * s, end: 4 * s + 4 }).collect();
        let out = scan_representations(&reps, &assoc, Aggregation::Mean).unwrap();
        for s in 0..10 {
            for k in 0..3 {
                let direct: f64 = (4 * s..4 * s + 4).map(|i| words.get(i, k)).sum::<f64>() / 4.0;
                assert!((out.reps.values().get(s, k) - direct).abs() <= 1e-12);
            }
        }
        let a = gaussian(&mut r, 3, 5);
        let mapped = RepresentationSet::new(words.matmul(&a).unwrap(), RepMeta::numbered("m", "w", 40)).unwrap();
        let after = scan_representations(&mapped, &assoc, Aggregation::Mean).unwrap();
        let before = out.reps.values().matmul(&a).unwrap();
        assert!(after.reps.values().max_abs_diff(&before) <= 1e-12);
    }

    #[test]
    fn sentence_end_examples() {
        let spec = AlignmentSpec::default();
        let one = corpus_of(&["a b c d"]);
        assert_eq!(sentence_end_mask(&one, &build_scan_windows(&one, &spec, 1).unwrap()), vec![true]);
        let spanning = corpus_of(&["a b c d e f"]);
        assert_eq!(sentence_end_mask(&spanning, &build_scan_windows(&spanning, &spec, 2).unwrap()), vec![false, true]);

        let mut r = rng(12);
        let sentences: Vec<String> =
            (0..15).map(|s| (0..r.random_range(1..9)).map(|i| format!("t{s}{i}")).collect::<Vec<_>>().join(" ")).collect();
        let refs: Vec<&str> = sentences.iter().map(String::as_str).collect();
        let c = corpus_of(&refs);
        let windows = build_scan_windows(&c, &spec, c.len() / 4 + 2).unwrap();
        let mask = sentence_end_mask(&c, &windows);
        for (w, m) in windows.iter().zip(&mask) {
            let oracle = w.word_indices().any(|i| i + 1 == c.len() || c.words()[i + 1].sentence_index != c.words()[i].sentence_index);
            assert_eq!(*m, oracle);
        }
    }

    #[test]
    fn lexicon_mask_examples() {
        let spec = AlignmentSpec::default();
        let c = corpus_of(&["Harry looked at the", "owl and then slept"]).with_lexicon(["harry".to_string()].into());
        let w = build_scan_windows(&c, &spec, 2).unwrap();
        assert_eq!(lexicon_mention_mask(&c, &w, TokenNormalizer::default()).unwrap(), vec![true, false]);
        let empty = corpus_of(&["a"]);
        assert!(matches!(lexicon_mention_mask(&empty, &[], TokenNormalizer::default()), Err(Error::Config(_))));
    }

    #[test]
    fn lexicon_mask_matches_oracle_and_is_monotone() {
        let mut r = rng(13);
        let names = ["harry", "ron", "hermione", "draco"];
        let tokens: Vec<String> = (0..80)
            .map(|i| if r.random_bool(0.15) { names[r.random_range(0..4)].to_string() } else { format!("w{i}") })
            .collect();
        let text = tokens.join(" ");
        let spec = AlignmentSpec::default();
        let base = corpus_of(&[text.as_str()]);
        let w = build_scan_windows(&base, &spec, 20).unwrap();
        let small = base.clone().with_lexicon(["harry".to_string()].into());
        let big = base.clone().with_lexicon(names.iter().map(|s| s.to_string()).collect());
        let ms = lexicon_mention_mask(&small, &w, TokenNormalizer::default()).unwrap();
        let mb = lexicon_mention_mask(&big, &w, TokenNormalizer::default()).unwrap();
        for (i, win) in w.iter().enumerate() {
            let oracle = tokens[win.start..win.end].iter().any(|t| names.contains(&t.as_str()));
            assert_eq!(mb[i], oracle);
            assert!(!ms[i] || mb[i]);
        }
    }
}
