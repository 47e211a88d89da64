//! End-to-end use of the public API: words to scans to RSA to an encoding score.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use repstab_core::align::{self, Aggregation, AlignmentSpec};
use repstab_core::brainprep::{self, PreprocessConfig};
use repstab_core::encode::{self, LambdaChoice};
use repstab_core::resta;
use repstab_core::{rsa, Matrix, RepMeta, RepresentationSet, ScanSeries, StimulusCorpus, Word};

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

struct Setup {
    corpus: StimulusCorpus,
    words: RepresentationSet,
    brain: ScanSeries,
}

/// 120 scans; voxels 0..12 follow the scan-level model two scans late, 12..24 are noise.
fn setup(seed: u64) -> Setup {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (t, d) = (120, 8);
    let words: Vec<Word> = (0..t * 4).map(|i| Word { token: format!("w{i}"), sentence_index: i / 6, block_id: 3 }).collect();
    let corpus = StimulusCorpus::new(words, BTreeSet::new()).unwrap();
    let wr = RepresentationSet::new(gaussian(&mut r, t * 4, d), RepMeta::numbered("toy", "w", t * 4)).unwrap();
    let spec = AlignmentSpec::default();
    let windows = align::build_scan_windows(&corpus, &spec, t).unwrap();
    let assoc = align::apply_delay(&windows, &spec).unwrap();
    let scans = align::scan_representations(&wr, &assoc, Aggregation::Mean).unwrap().reps;
    let map = gaussian(&mut r, d, 12);
    let noise = gaussian(&mut r, t, 24);
    let values = Matrix::from_fn(t, 24, |i, j| {
        let signal = if j < 12 && i >= 2 { (0..d).map(|k| scans.values().get(i - 2, k) * map.get(k, j)).sum() } else { 0.0 };
        signal + 0.05 * noise.get(i, j)
    });
    let atlas = (0..24).map(|j| if j < 12 { "language".to_string() } else { "other".to_string() }).collect();
    let brain = ScanSeries::new(values, atlas, "sub1", 3, 2.0).unwrap();
    Setup { corpus, words: wr, brain }
}

#[test]
fn delay_of_four_seconds_wins_in_the_signal_region() {
    let s = setup(17);
    let (clean, mask) = brainprep::preprocess(&s.brain, &PreprocessConfig::default()).unwrap();
    assert_eq!(mask.count(), 24);
    let lang = brainprep::slice_region(&clean, "language").unwrap();
    let spec = AlignmentSpec::default();
    let windows = align::build_scan_windows(&s.corpus, &spec, s.brain.n_scans()).unwrap();
    let scores: Vec<f64> = [0.0, 2.0, 4.0, 6.0]
        .iter()
        .map(|&delay| {
            let assoc = align::apply_delay(&windows, &spec.with_delay(delay)).unwrap();
            let model = align::scan_representations(&s.words, &assoc, Aggregation::Mean).unwrap();
            rsa(&model.reps, &lang.scan_representations(&model.scan_indices).unwrap()).unwrap().value
        })
        .collect();
    let best = (0..4).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    assert_eq!(best, 2, "{scores:?}");
}

#[test]
fn encoding_prefers_the_right_delay() {
    let s = setup(23);
    let spec = AlignmentSpec::default();
    let windows = align::build_scan_windows(&s.corpus, &spec, s.brain.n_scans()).unwrap();
    let ev = |delay: f64| {
        let assoc = align::apply_delay(&windows, &spec.with_delay(delay)).unwrap();
        let model = align::scan_representations(&s.words, &assoc, Aggregation::Mean).unwrap();
        let y = s.brain.values().select_rows(&model.scan_indices);
        let lang: Vec<usize> = (0..12).collect();
        let y = y.select_columns(&lang);
        let xb = encode::split_blocks(model.reps.values(), 4).unwrap();
        let yb = encode::split_blocks(&y, 4).unwrap();
        encode::block_cv(&xb, &yb, &LambdaChoice::default(), None).unwrap().mean_ev
    };
    let (good, bad) = (ev(4.0), ev(0.0));
    assert!(good > 0.9, "{good}");
    assert!(good > bad + 0.5, "{good} vs {bad}");
}

#[test]
fn stability_of_a_slowly_drifting_space_decreases_with_gap() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let base = gaussian(&mut r, 30, 10);
    let drift = gaussian(&mut r, 30, 10);
    let series: Vec<RepresentationSet> = (0..6)
        .map(|c| {
            let mut meta = RepMeta::numbered("toy", "s", 30);
            meta.context_length = c;
            let v = Matrix::from_fn(30, 10, |i, j| base.get(i, j) + 0.15 * c as f64 * drift.get(i, j));
            RepresentationSet::new(v, meta).unwrap()
        })
        .collect();
    let g1 = resta::stability_curve(&series, 1).unwrap();
    let g3 = resta::stability_curve(&series, 3).unwrap();
    assert_eq!(g1.points.len(), 5);
    assert_eq!(g3.points.len(), 3);
    for (a, b) in g1.values().iter().zip(g3.values()) {
        assert!(b < *a);
    }
}
