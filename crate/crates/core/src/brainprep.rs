//! fMRI cleaning and voxel selection.
//!
//! The canonical cleaning order is: drop constant voxels, center, remove the
//! linear trend, remove DCT drift below the high-pass cutoff, standardize.
//! Every step works column by column, one voxel at a time.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::Matrix;
use crate::repstore::{RepMeta, RepresentationSet, ScanSeries};
use crate::simcore::{self, cosine_similarity_matrix};
use crate::sum;

pub const DEFAULT_HIGHPASS_HZ: f64 = 0.005;
pub const DEFAULT_TOP_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PreprocessConfig {
    pub center: bool,
    pub detrend: bool,
    /// 0 disables the filter.
    pub highpass_cutoff_hz: f64,
    pub standardize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { center: true, detrend: true, highpass_cutoff_hz: DEFAULT_HIGHPASS_HZ, standardize: true }
    }
}

impl PreprocessConfig {
    /// Per-voxel mean subtraction only.
    pub fn simple() -> Self {
        Self { center: true, detrend: false, highpass_cutoff_hz: 0.0, standardize: false }
    }

    pub fn validate(&self, scan_period_s: f64) -> Result<()> {
        check_cutoff(self.highpass_cutoff_hz, scan_period_s)
    }
}

fn check_cutoff(cutoff_hz: f64, scan_period_s: f64) -> Result<()> {
    let nyquist = 1.0 / (2.0 * scan_period_s);
    if !(cutoff_hz >= 0.0) || !cutoff_hz.is_finite() {
        return Err(Error::Config(format!("high-pass cutoff must be >= 0, got {cutoff_hz}")));
    }
    if cutoff_hz >= nyquist {
        return Err(Error::Config(format!("high-pass cutoff {cutoff_hz} Hz is not below Nyquist {nyquist} Hz")));
    }
    Ok(())
}

/// Which voxels survived a selection step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMask {
    pub keep: Vec<bool>,
    pub provenance: String,
}

impl VoxelMask {
    pub fn count(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }
}

/// Applies `f` to each voxel column.
fn map_columns(series: &ScanSeries, mut f: impl FnMut(usize, &mut [f64]) -> Result<()>) -> Result<ScanSeries> {
    let mut cols = series.values().transpose();
    for j in 0..cols.rows() {
        f(j, cols.row_mut(j))?;
    }
    series.with_values(cols.transpose(), series.region_of_voxel().to_vec())
}

fn mean(xs: &[f64]) -> f64 {
    sum::sum(xs) / xs.len() as f64
}

/// Subtracts the per-voxel mean.
pub fn center(series: &ScanSeries) -> Result<ScanSeries> {
    map_columns(series, |_, col| {
        let m = mean(col);
        col.iter_mut().for_each(|v| *v -= m);
        Ok(())
    })
}

/// Removes the least-squares line over scan index from each voxel.
pub fn detrend_linear(series: &ScanSeries) -> Result<ScanSeries> {
    let t = series.n_scans();
    if t < 3 {
        return Err(Error::Data(format!("detrending needs T >= 3, got {t}")));
    }
    let tbar = (t as f64 - 1.0) / 2.0;
    let tc: Vec<f64> = (0..t).map(|i| i as f64 - tbar).collect();
    let stt = sum::dot(&tc, &tc);
    map_columns(series, |_, col| {
        let m = mean(col);
        col.iter_mut().for_each(|v| *v -= m);
        let slope = sum::dot(&tc, col) / stt;
        col.iter_mut().zip(&tc).for_each(|(v, x)| *v -= slope * x);
        // second pass removes the rounding residue of the first
        let m = mean(col);
        col.iter_mut().for_each(|v| *v -= m);
        Ok(())
    })
}

/// Orthonormal DCT-II drift basis with every component below `cutoff_hz`.
///
/// Component `k` over `t` samples of period `p` has frequency `k / (2 t p)`.
/// The constant (k = 0) is always included for a positive cutoff.
pub fn dct_drift_basis(t: usize, scan_period_s: f64, cutoff_hz: f64) -> Vec<Vec<f64>> {
    let total = t as f64 * scan_period_s;
    let n = (0..t).take_while(|&k| k as f64 / (2.0 * total) < cutoff_hz).count();
    let raw = Matrix::from_fn(t, n, |i, k| {
        libm::cos(core::f64::consts::PI * k as f64 * (i as f64 + 0.5) / t as f64)
    });
    let q = linalg::orthonormal_columns(&raw).expect("DCT-II columns are linearly independent");
    (0..n).map(|k| q.column(k)).collect()
}

/// High-pass filter by least-squares removal of the DCT drift below `cutoff_hz`.
pub fn highpass_dct(series: &ScanSeries, cutoff_hz: f64) -> Result<ScanSeries> {
    check_cutoff(cutoff_hz, series.scan_period_s)?;
    if cutoff_hz == 0.0 {
        return Ok(series.clone());
    }
    let t = series.n_scans();
    if t < 4 {
        return Err(Error::Data(format!("high-pass filtering needs T >= 4, got {t}")));
    }
    let basis = dct_drift_basis(t, series.scan_period_s, cutoff_hz);
    map_columns(series, |_, col| {
        for b in &basis {
            let c = sum::dot(b, col);
            col.iter_mut().zip(b).for_each(|(v, q)| *v -= c * q);
        }
        Ok(())
    })
}

/// Zero mean and unit population standard deviation per voxel.
pub fn standardize(series: &ScanSeries) -> Result<ScanSeries> {
    let mut bad = Vec::new();
    let out = map_columns(series, |j, col| {
        let scale = col.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        let m = mean(col);
        col.iter_mut().for_each(|v| *v -= m);
        let sd = libm::sqrt(sum::dot(col, col) / col.len() as f64);
        if sd == 0.0 || sd <= 1e-12 * scale {
            bad.push(j);
            return Ok(());
        }
        col.iter_mut().for_each(|v| *v /= sd);
        Ok(())
    })?;
    if !bad.is_empty() {
        return Err(Error::ZeroVariance(bad));
    }
    Ok(out)
}

/// Removes voxels whose values never change.
pub fn drop_constant_voxels(series: &ScanSeries) -> Result<(ScanSeries, VoxelMask)> {
    let v = series.values();
    let keep: Vec<bool> = (0..series.n_voxels())
        .map(|j| {
            let first = v.get(0, j);
            (1..v.rows()).any(|i| v.get(i, j) != first)
        })
        .collect();
    let mask = VoxelMask { keep, provenance: "non-constant voxels".into() };
    if mask.count() == 0 {
        return Err(Error::EmptySeries);
    }
    Ok((series.select_voxels(&mask.indices())?, mask))
}

/// Runs the enabled cleaning steps in canonical order.
pub fn preprocess(series: &ScanSeries, cfg: &PreprocessConfig) -> Result<(ScanSeries, VoxelMask)> {
    cfg.validate(series.scan_period_s)?;
    let (mut s, mask) = drop_constant_voxels(series)?;
    if cfg.center {
        s = center(&s)?;
    }
    if cfg.detrend {
        s = detrend_linear(&s)?;
    }
    if cfg.highpass_cutoff_hz > 0.0 {
        s = highpass_dct(&s, cfg.highpass_cutoff_hz)?;
    }
    if cfg.standardize {
        s = standardize(&s)?;
    }
    Ok((s, mask))
}

/// Columns of one region, order preserved.
pub fn slice_region(series: &ScanSeries, region_label: &str) -> Result<ScanSeries> {
    let idx: Vec<usize> = series
        .region_of_voxel()
        .iter()
        .enumerate()
        .filter(|(_, r)| *r == region_label)
        .map(|(j, _)| j)
        .collect();
    if idx.is_empty() {
        return Err(Error::UnknownRegion(region_label.to_string()));
    }
    series.select_voxels(&idx)
}

/// Keeps the voxels selected by `mask`.
pub fn apply_mask(series: &ScanSeries, mask: &VoxelMask) -> Result<ScanSeries> {
    if mask.keep.len() != series.n_voxels() {
        return Err(Error::Shape(format!("mask of length {} for {} voxels", mask.keep.len(), series.n_voxels())));
    }
    if mask.count() == 0 {
        return Err(Error::EmptySeries);
    }
    series.select_voxels(&mask.indices())
}

/// All scans of a series as a representation set over scans.
pub fn scans_as_reps(series: &ScanSeries) -> Result<RepresentationSet> {
    let meta = RepMeta {
        model_name: format!("brain:{}", series.subject_id),
        block_id: Some(series.block_id),
        ..RepMeta::numbered("", "scan", series.n_scans())
    };
    RepresentationSet::new(series.values().clone(), meta)
}

/// RSA between region `region_a` of `a` and region `region_b` of `b`, with
/// scans as stimuli. Covers both within-subject and across-subject contrasts.
pub fn region_rsa(a: &ScanSeries, region_a: &str, b: &ScanSeries, region_b: &str) -> Result<f64> {
    if a.n_scans() != b.n_scans() {
        return Err(Error::Alignment(format!("{} vs {} scans", a.n_scans(), b.n_scans())));
    }
    let ra = scans_as_reps(&slice_region(a, region_a)?)?;
    let rb = scans_as_reps(&slice_region(b, region_b)?)?;
    Ok(simcore::rsa(&ra, &rb)?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRegion {
    pub label: String,
    pub reason: String,
}

/// Regions ordered by mean cross-subject RSA, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRanking {
    pub entries: Vec<(String, f64)>,
    pub k: usize,
    pub skipped: Vec<SkippedRegion>,
}

/// Scores every region by the mean RSA over all unordered subject pairs of
/// the region-restricted scan similarity matrices, then sorts descending.
///
/// Regions missing from some subject, or whose similarity matrix is
/// degenerate for some subject, are skipped and reported in `skipped`.
pub fn rank_regions_cross_subject(subjects: &[ScanSeries]) -> Result<RegionRanking> {
    if subjects.len() < 2 {
        return Err(Error::Config(format!("region ranking needs at least 2 subjects, got {}", subjects.len())));
    }
    let t = subjects[0].n_scans();
    if let Some(s) = subjects.iter().find(|s| s.n_scans() != t) {
        return Err(Error::Alignment(format!("subject {} has {} scans, expected {t}", s.subject_id, s.n_scans())));
    }
    let mut labels = Vec::new();
    let mut seen = BTreeSet::new();
    for s in subjects {
        for r in s.regions() {
            if seen.insert(r.clone()) {
                labels.push(r);
            }
        }
    }
    let atlases: Vec<BTreeSet<String>> = subjects.iter().map(|s| s.regions().into_iter().collect()).collect();
    if !labels.iter().any(|l| atlases.iter().all(|a| a.contains(l))) {
        return Err(Error::Alignment("subjects share no region label".into()));
    }

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    'regions: for label in labels {
        if let Some(s) = subjects.iter().zip(&atlases).find(|(_, a)| !a.contains(&label)).map(|(s, _)| s) {
            skipped.push(SkippedRegion { label, reason: format!("no voxels in subject {}", s.subject_id) });
            continue;
        }
        let mut tris = Vec::with_capacity(subjects.len());
        for s in subjects {
            let reps = scans_as_reps(&slice_region(s, &label)?)?;
            match cosine_similarity_matrix(&reps).and_then(|m| simcore::upper_triangle(&m)) {
                Ok(t) => tris.push(t),
                Err(e) => {
                    skipped.push(SkippedRegion { label, reason: format!("subject {}: {e}", s.subject_id) });
                    continue 'regions;
                }
            }
        }
        let mut scores = Vec::new();
        for i in 0..tris.len() {
            for j in i + 1..tris.len() {
                match simcore::pearson(&tris[i], &tris[j]) {
                    Ok(v) => scores.push(v),
                    Err(e) => {
                        skipped.push(SkippedRegion { label, reason: e.to_string() });
                        continue 'regions;
                    }
                }
            }
        }
        entries.push((label, sum::sum(&scores) / scores.len() as f64));
    }
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(RegionRanking { entries, k: DEFAULT_TOP_K, skipped })
}

/// Mask keeping the voxels of the `k` best-ranked regions.
pub fn select_top_k(ranking: &RegionRanking, region_of_voxel: &[String], k: usize) -> Result<VoxelMask> {
    if k == 0 || k > ranking.entries.len() {
        return Err(Error::Config(format!("k = {k} outside 1..={}", ranking.entries.len())));
    }
    let top: BTreeSet<&str> = ranking.entries[..k].iter().map(|(l, _)| l.as_str()).collect();
    let keep: Vec<bool> = region_of_voxel.iter().map(|r| top.contains(r.as_str())).collect();
    if !keep.iter().any(|k| *k) {
        return Err(Error::EmptySeries);
    }
    Ok(VoxelMask { keep, provenance: format!("top {k} regions by cross-subject rsa") })
}
