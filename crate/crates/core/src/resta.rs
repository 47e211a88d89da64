//! Representational stability analysis: RSA between versions of one space
//! as a single input condition (context length) changes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repstore::RepresentationSet;
use crate::simcore::{self, check_ids, cosine_similarity_matrix, pearson, SimilarityMatrix, Space};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub context_length: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveMeta {
    pub model_name: String,
    pub layer: i64,
    pub block_id: Option<i64>,
}

/// RSA scores indexed by strictly increasing context length.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StabilityCurve {
    pub points: Vec<CurvePoint>,
    pub gap: usize,
    pub meta: CurveMeta,
}

impl StabilityCurve {
    pub fn new(points: Vec<CurvePoint>, gap: usize, meta: CurveMeta) -> Result<Self> {
        if gap == 0 {
            return Err(Error::Config("gap must be at least 1".into()));
        }
        if points.windows(2).any(|w| w[1].context_length <= w[0].context_length) {
            return Err(Error::Validation("context lengths must be strictly increasing".into()));
        }
        Ok(Self { points, gap, meta })
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    pub fn context_lengths(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.context_length).collect()
    }
}

fn check_series(series: &[RepresentationSet]) -> Result<()> {
    let Some(first) = series.first() else {
        return Err(Error::SeriesInconsistent("empty series".into()));
    };
    for (i, s) in series.iter().enumerate().skip(1) {
        let (a, b) = (first.meta(), s.meta());
        if a.model_name != b.model_name || a.layer != b.layer {
            return Err(Error::SeriesInconsistent(format!(
                "set {i} is {}/L{}, expected {}/L{}",
                b.model_name, b.layer, a.model_name, a.layer
            )));
        }
        if s.stimulus_ids() != first.stimulus_ids() {
            return Err(Error::SeriesInconsistent(format!("set {i} has different stimulus ids")));
        }
        if b.context_length <= series[i - 1].meta().context_length {
            return Err(Error::SeriesInconsistent(format!("context length not increasing at set {i}")));
        }
    }
    Ok(())
}

/// `value(c_i) = rsa(set[c_i], set[c_{i+gap}])` over one model layer.
pub fn stability_curve(series: &[RepresentationSet], gap: usize) -> Result<StabilityCurve> {
    check_series(series)?;
    let sims = series.iter().map(cosine_similarity_matrix).collect::<Result<Vec<_>>>()?;
    stability_curve_from_sims(series, &sims, gap)
}

/// [`stability_curve`] with precomputed similarity matrices, one per set.
pub fn stability_curve_from_sims(series: &[RepresentationSet], sims: &[SimilarityMatrix], gap: usize) -> Result<StabilityCurve> {
    check_series(series)?;
    if gap == 0 {
        return Err(Error::Config("gap must be at least 1".into()));
    }
    if sims.len() != series.len() {
        return Err(Error::Shape(format!("{} similarity matrices for {} sets", sims.len(), series.len())));
    }
    let tris = sims.iter().map(simcore::upper_triangle).collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for i in 0..series.len().saturating_sub(gap) {
        points.push(CurvePoint {
            context_length: series[i].meta().context_length,
            value: pearson(&tris[i], &tris[i + gap])?,
        });
    }
    let m = series[0].meta();
    StabilityCurve::new(points, gap, CurveMeta { model_name: m.model_name.clone(), layer: m.layer, block_id: m.block_id })
}

/// Successive differences `value(c_{i+1}) - value(c_i)`.
pub fn delta_curve(curve: &StabilityCurve) -> Result<StabilityCurve> {
    if curve.points.len() < 2 {
        return Err(Error::TooShort { needed: 2, found: curve.points.len() });
    }
    let points = curve
        .points
        .windows(2)
        .map(|w| CurvePoint { context_length: w[0].context_length, value: w[1].value - w[0].value })
        .collect();
    StabilityCurve::new(points, curve.gap, curve.meta.clone())
}

/// `value(c_i) = rsa(lower[c_i], upper[c_i])`, e.g. adjacent layers at equal context.
pub fn layer_similarity_curve(lower: &[RepresentationSet], upper: &[RepresentationSet]) -> Result<StabilityCurve> {
    if lower.len() != upper.len() {
        return Err(Error::Alignment(format!("{} vs {} context lengths", lower.len(), upper.len())));
    }
    let mut points = Vec::with_capacity(lower.len());
    for (l, u) in lower.iter().zip(upper) {
        let c = l.meta().context_length;
        if u.meta().context_length != c {
            return Err(Error::Alignment(format!("context length {c} paired with {}", u.meta().context_length)));
        }
        points.push(CurvePoint { context_length: c, value: simcore::rsa(l, u)?.value });
    }
    let m = lower.first().map(|l| l.meta().clone()).unwrap_or_default();
    StabilityCurve::new(points, 1, CurveMeta { model_name: m.model_name, layer: m.layer, block_id: m.block_id })
}

/// M×M matrix of pairwise RSA scores between spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct RsaGrid {
    pub labels: Vec<String>,
    pub values: Matrix,
}

/// RSA between every pair of spaces. Each unordered pair is computed once and
/// mirrored, and the diagonal is exactly 1.
pub fn rsa_grid(spaces: &[Space<'_>]) -> Result<RsaGrid> {
    if spaces.len() < 2 {
        return Err(Error::Config(format!("rsa grid needs at least 2 spaces, got {}", spaces.len())));
    }
    for s in &spaces[1..] {
        check_ids(spaces[0].stimulus_ids(), s.stimulus_ids())?;
    }
    let tris = spaces.iter().map(Space::upper_triangle).collect::<Result<Vec<_>>>()?;
    rsa_grid_from_triangles(spaces.iter().map(Space::label).collect(), &tris)
}

/// [`rsa_grid`] over already flattened upper triangles.
pub fn rsa_grid_from_triangles(labels: Vec<String>, tris: &[Vec<f64>]) -> Result<RsaGrid> {
    let m = tris.len();
    let mut values = Matrix::identity(m);
    for i in 0..m {
        for j in i + 1..m {
            let v = pearson(&tris[i], &tris[j])?;
            values.set(i, j, v);
            values.set(j, i, v);
        }
    }
    Ok(RsaGrid { labels, values })
}

/// Pointwise mean and population standard deviation across blocks.
pub fn block_average(curves: &[StabilityCurve]) -> Result<(StabilityCurve, StabilityCurve)> {
    let Some(first) = curves.first() else {
        return Err(Error::Alignment("no curves to average".into()));
    };
    let index = first.context_lengths();
    for c in &curves[1..] {
        if c.context_lengths() != index || c.gap != first.gap {
            return Err(Error::Alignment("curves differ in context-length index or gap".into()));
        }
    }
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(index.len());
    let mut std = Vec::with_capacity(index.len());
    for (p, &c) in index.iter().enumerate() {
        let vals: Vec<f64> = curves.iter().map(|cv| cv.points[p].value).collect();
        let mu = crate::sum::sum(&vals) / k;
        let dev: Vec<f64> = vals.iter().map(|v| (v - mu) * (v - mu)).collect();
        mean.push(CurvePoint { context_length: c, value: mu });
        std.push(CurvePoint { context_length: c, value: libm::sqrt(crate::sum::sum(&dev) / k) });
    }
    let mut meta = first.meta.clone();
    meta.block_id = None;
    Ok((StabilityCurve::new(mean, first.gap, meta.clone())?, StabilityCurve::new(std, first.gap, meta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repstore::RepMeta;
    use crate::simcore::oracle;
    use crate::testutil::{gaussian, orthogonal, rng};
    use alloc::vec;

    fn set(m: Matrix, c: u32) -> RepresentationSet {
        let n = m.rows();
        let mut meta = RepMeta::numbered("m", "w", n);
        meta.context_length = c;
        RepresentationSet::new(m, meta).unwrap()
    }

    fn curve(vals: &[f64]) -> StabilityCurve {
        let pts = vals.iter().enumerate().map(|(i, &v)| CurvePoint { context_length: i as u32, value: v }).collect();
        StabilityCurve::new(pts, 1, CurveMeta::default()).unwrap()
    }

    #[test]
    fn identical_series_is_flat_one() {
        let mut r = rng(1);
        let x = gaussian(&mut r, 10, 4);
        let series: Vec<_> = (0..4).map(|c| set(x.clone(), c)).collect();
        let c = stability_curve(&series, 1).unwrap();
        assert_eq!(c.values(), vec![1.0; 3]);
        assert_eq!(c.context_lengths(), vec![0, 1, 2]);
        assert_eq!(stability_curve(&series, 2).unwrap().points.len(), 2);
    }

    #[test]
    fn rotated_then_random() {
        let mut r = rng(2);
        let x = gaussian(&mut r, 10, 4);
        let q = orthogonal(&mut r, 4);
        let xq = x.matmul(&q).unwrap();
        let y = gaussian(&mut r, 10, 4);
        let series = vec![set(x, 0), set(xq.clone(), 1), set(y.clone(), 2)];
        let c = stability_curve(&series, 1).unwrap();
        assert!(c.points[0].value >= 1.0 - 1e-8);
        assert!((c.points[1].value - oracle::rsa(&xq, &y)).abs() <= 1e-12);
    }

    #[test]
    fn perturbation_series_matches_pointwise_rsa() {
        let mut r = rng(3);
        let x = gaussian(&mut r, 15, 6);
        let e = gaussian(&mut r, 15, 6);
        let series: Vec<_> = (0..5u32)
            .map(|c| set(Matrix::from_fn(15, 6, |i, j| x.get(i, j) + c as f64 * 0.3 * e.get(i, j)), c))
            .collect();
        let cv = stability_curve(&series, 1).unwrap();
        for (i, p) in cv.points.iter().enumerate() {
            let direct = simcore::rsa(&series[i], &series[i + 1]).unwrap().value;
            assert_eq!(p.value, direct);
        }
    }

    #[test]
    fn series_metadata_must_agree() {
        let mut r = rng(4);
        let x = gaussian(&mut r, 5, 2);
        let mut other = RepMeta::numbered("other", "w", 5);
        other.context_length = 1;
        let series = vec![set(x.clone(), 0), RepresentationSet::new(x, other).unwrap()];
        assert!(matches!(stability_curve(&series, 1), Err(Error::SeriesInconsistent(_))));
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_curve(&curve(&[1.0, 1.0, 1.0])).unwrap().values(), vec![0.0, 0.0]);
        let d = delta_curve(&curve(&[0.5, 0.8, 0.9])).unwrap().values();
        assert!((d[0] - 0.3).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15);
        assert!(matches!(delta_curve(&curve(&[1.0])), Err(Error::TooShort { .. })));
        let vals = [0.9, 0.7, 0.75, 0.1, -0.2, 0.33, 0.5, 0.52];
        let d = delta_curve(&curve(&vals)).unwrap().values();
        for i in 0..7 {
            assert_eq!(d[i], vals[i + 1] - vals[i]);
        }
    }

    #[test]
    fn layer_curve_examples() {
        let mut r = rng(5);
        let lower: Vec<_> = (0..4).map(|c| set(gaussian(&mut r, 9, 3), c)).collect();
        let same = layer_similarity_curve(&lower, &lower).unwrap();
        assert_eq!(same.values(), vec![1.0; 4]);
        let rotated: Vec<_> = lower
            .iter()
            .map(|s| set(s.values().matmul(&orthogonal(&mut r, 3)).unwrap(), s.meta().context_length))
            .collect();
        assert!(layer_similarity_curve(&lower, &rotated).unwrap().values().iter().all(|v| *v >= 1.0 - 1e-8));
        let upper: Vec<_> = (0..4).map(|c| set(gaussian(&mut r, 9, 5), c)).collect();
        let lc = layer_similarity_curve(&lower, &upper).unwrap();
        for c in 0..4 {
            let o = oracle::rsa(lower[c].values(), upper[c].values());
            assert!((lc.points[c].value - o).abs() <= 1e-12);
        }
        assert!(matches!(layer_similarity_curve(&lower, &upper[..3]), Err(Error::Alignment(_))));
    }

    #[test]
    fn grid_examples() {
        let mut r = rng(6);
        let x = set(gaussian(&mut r, 8, 3), 0);
        let g = rsa_grid(&[(&x).into(), (&x).into()]).unwrap();
        assert_eq!(g.values.as_slice(), &[1.0; 4]);
        let xq = set(x.values().matmul(&orthogonal(&mut r, 3)).unwrap(), 0);
        let y = set(gaussian(&mut r, 8, 3), 0);
        let g = rsa_grid(&[(&x).into(), (&xq).into(), (&y).into()]).unwrap();
        assert!(g.values.get(0, 1) >= 1.0 - 1e-8);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.values.get(i, j), g.values.get(j, i));
            }
        }
    }

    #[test]
    fn block_average_examples() {
        let c = curve(&[0.3, 0.5]);
        let (m, s) = block_average(&[c.clone(), c.clone()]).unwrap();
        assert_eq!(m.values(), c.values());
        assert_eq!(s.values(), vec![0.0, 0.0]);
        let (m, s) = block_average(&[curve(&[0.2]), curve(&[0.4])]).unwrap();
        assert!((m.values()[0] - 0.3).abs() < 1e-15);
        assert!((s.values()[0] - 0.1).abs() < 1e-15);
        assert!(block_average(&[curve(&[0.2]), curve(&[0.4, 0.1])]).is_err());
    }

    #[test]
    fn block_average_matches_direct_formula() {
        let raw = [
            [0.1, 0.5, 0.9, 0.2],
            [0.3, 0.45, 0.7, 0.25],
            [0.15, 0.52, 0.8, 0.4],
            [0.05, 0.6, 0.95, 0.3],
        ];
        let curves: Vec<_> = raw.iter().map(|r| curve(r)).collect();
        let (m, s) = block_average(&curves).unwrap();
        for p in 0..4 {
            let mu = raw.iter().map(|r| r[p]).sum::<f64>() / 4.0;
            let var = raw.iter().map(|r| (r[p] - mu) * (r[p] - mu)).sum::<f64>() / 4.0;
            assert!((m.values()[p] - mu).abs() <= 1e-12);
            assert!((s.values()[p] - var.sqrt()).abs() <= 1e-12);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn delta_telescopes(vals in proptest::collection::vec(-1.0f64..1.0, 2..12)) {
            let pts = vals.iter().enumerate().map(|(i, &v)| CurvePoint { context_length: i as u32, value: v }).collect();
            let c = StabilityCurve::new(pts, 1, CurveMeta::default()).unwrap();
            let d = delta_curve(&c).unwrap();
            let total: f64 = crate::sum::sum(&d.values());
            prop_assert!((total - (vals[vals.len() - 1] - vals[0])).abs() <= 1e-12);
        }

        #[test]
        fn delta_of_monotone_has_uniform_sign(mut vals in proptest::collection::vec(-1.0f64..1.0, 2..12)) {
            vals.sort_by(f64::total_cmp);
            let pts = vals.iter().enumerate().map(|(i, &v)| CurvePoint { context_length: i as u32, value: v }).collect();
            let d = delta_curve(&StabilityCurve::new(pts, 1, CurveMeta::default()).unwrap()).unwrap();
            prop_assert!(d.values().iter().all(|v| *v >= 0.0));
        }
    }
}
