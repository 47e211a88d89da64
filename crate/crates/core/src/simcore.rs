//! Cosine similarity matrices, strict upper-triangle flattening, Pearson
//! correlation and the RSA score between two representational spaces.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::repstore::{RepMeta, RepresentationSet};
use crate::sum;

/// Symmetric tolerance used when validating deserialized matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// N×N intra-space cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Matrix,
    stimulus_ids: Vec<String>,
    source_meta: RepMeta,
    masks: Vec<String>,
}

impl SimilarityMatrix {
    /// Wraps an existing matrix after checking symmetry, unit diagonal and
    /// the `[-1, 1]` range.
    pub fn from_parts(values: Matrix, stimulus_ids: Vec<String>, mut source_meta: RepMeta, masks: Vec<String>) -> Result<Self> {
        let n = values.rows();
        if values.cols() != n {
            return Err(Error::Shape(format!("similarity matrix must be square, got {}x{}", n, values.cols())));
        }
        if stimulus_ids.len() != n {
            return Err(Error::Validation(format!("{} stimulus ids for {n} rows", stimulus_ids.len())));
        }
        crate::repstore::check_unique(&stimulus_ids, "stimulus id")?;
        if let Some((row, col)) = values.first_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        for i in 0..n {
            if libm::fabs(values.get(i, i) - 1.0) > SYMMETRY_TOL {
                return Err(Error::Validation(format!("diagonal entry {i} is {}", values.get(i, i))));
            }
            for j in i + 1..n {
                let (a, b) = (values.get(i, j), values.get(j, i));
                if libm::fabs(a - b) > SYMMETRY_TOL {
                    return Err(Error::Validation(format!("asymmetric at ({i}, {j})")));
                }
                if libm::fabs(a) > 1.0 + SYMMETRY_TOL {
                    return Err(Error::Validation(format!("entry ({i}, {j}) = {a} outside [-1, 1]")));
                }
            }
        }
        source_meta.stimulus_ids.clear();
        Ok(Self { values, stimulus_ids, source_meta, masks })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn stimulus_ids(&self) -> &[String] {
        &self.stimulus_ids
    }

    /// Provenance of the originating space. Its `stimulus_ids` is empty.
    pub fn source_meta(&self) -> &RepMeta {
        &self.source_meta
    }

    /// Names of the masks applied by [`subset`], oldest first.
    pub fn masks(&self) -> &[String] {
        &self.masks
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    /// Flattened strict upper triangle of the dissimilarity matrix `1 - S`.
    pub fn dissimilarity_upper_triangle(&self) -> Result<Vec<f64>> {
        Ok(upper_triangle(self)?.into_iter().map(|s| 1.0 - s).collect())
    }
}

/// Row norms and the per-pair kernel behind [`cosine_similarity_matrix`].
///
/// Each row of the upper triangle can be computed independently, so callers
/// may distribute rows across threads and still get identical bits.
pub struct CosineKernel<'a> {
    reps: &'a RepresentationSet,
    norms: Vec<f64>,
}

impl<'a> CosineKernel<'a> {
    pub fn new(reps: &'a RepresentationSet) -> Result<Self> {
        let v = reps.values();
        let norms: Vec<f64> = v.row_iter().map(|r| libm::sqrt(sum::dot(r, r))).collect();
        let bad: Vec<String> = norms
            .iter()
            .zip(reps.stimulus_ids())
            .filter(|(n, _)| **n == 0.0)
            .map(|(_, id)| id.clone())
            .collect();
        if !bad.is_empty() {
            return Err(Error::DegenerateRows(bad));
        }
        Ok(Self { reps, norms })
    }

    pub fn n(&self) -> usize {
        self.norms.len()
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let v = self.reps.values();
        let c = sum::dot(v.row(i), v.row(j)) / (self.norms[i] * self.norms[j]);
        c.clamp(-1.0, 1.0)
    }

    /// Entries `(i, j)` for `j > i`.
    pub fn row_upper(&self, i: usize) -> Vec<f64> {
        (i + 1..self.n()).map(|j| self.entry(i, j)).collect()
    }

    /// Assembles the full matrix from the output of [`row_upper`](Self::row_upper)
    /// for every row in order.
    pub fn assemble(self, upper_rows: Vec<Vec<f64>>) -> SimilarityMatrix {
        let n = self.n();
        debug_assert_eq!(upper_rows.len(), n);
        let mut m = Matrix::identity(n);
        for (i, row) in upper_rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                let j = i + 1 + k;
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let mut source_meta = self.reps.meta().clone();
        source_meta.stimulus_ids.clear();
        SimilarityMatrix {
            values: m,
            stimulus_ids: self.reps.stimulus_ids().to_vec(),
            source_meta,
            masks: Vec::new(),
        }
    }
}

/// Pairwise cosine similarities between the rows of `reps`.
///
/// The diagonal is exactly 1 and entries are clamped to `[-1, 1]`.
pub fn cosine_similarity_matrix(reps: &RepresentationSet) -> Result<SimilarityMatrix> {
    let k = CosineKernel::new(reps)?;
    let rows = (0..k.n()).map(|i| k.row_upper(i)).collect();
    Ok(k.assemble(rows))
}

/// Strict upper triangle in row-major order `(0,1), (0,2), …, (N-2,N-1)`.
pub fn upper_triangle(sim: &SimilarityMatrix) -> Result<Vec<f64>> {
    upper_triangle_of(&sim.values)
}

pub(crate) fn upper_triangle_of(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows();
    if n < 3 {
        return Err(Error::TooFewStimuli { needed: 3, found: n });
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        out.extend_from_slice(&m.row(i)[i + 1..]);
    }
    Ok(out)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson inputs have lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::TooFewStimuli { needed: 3, found: x.len() });
    }
    let n = x.len() as f64;
    let mx = sum::sum(x) / n;
    let my = sum::sum(y) / n;
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sxx = sum::dot(&dx, &dx);
    let syy = sum::dot(&dy, &dy);
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    let sxy = sum::dot(&dx, &dy);
    // |sxy| = sqrt(sxx * syy) exactly when one input is an affine copy of the other
    if sxx == syy && libm::fabs(sxy) == sxx {
        return Ok(libm::copysign(1.0, sxy));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Either side of an RSA comparison.
#[derive(Debug, Clone, Copy)]
pub enum Space<'a> {
    Reps(&'a RepresentationSet),
    Sim(&'a SimilarityMatrix),
}

impl<'a> From<&'a RepresentationSet> for Space<'a> {
    fn from(r: &'a RepresentationSet) -> Self {
        Space::Reps(r)
    }
}

impl<'a> From<&'a SimilarityMatrix> for Space<'a> {
    fn from(s: &'a SimilarityMatrix) -> Self {
        Space::Sim(s)
    }
}

impl Space<'_> {
    pub fn stimulus_ids(&self) -> &[String] {
        match self {
            Space::Reps(r) => r.stimulus_ids(),
            Space::Sim(s) => s.stimulus_ids(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Space::Reps(r) => r.meta().label(),
            Space::Sim(s) => s.source_meta().label(),
        }
    }

    /// Upper triangle of the similarity matrix, computing it if needed.
    pub fn upper_triangle(&self) -> Result<Vec<f64>> {
        match self {
            Space::Reps(r) => upper_triangle(&cosine_similarity_matrix(r)?),
            Space::Sim(s) => upper_triangle(s),
        }
    }
}

/// Similarity of two similarity structures.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RsaScore {
    pub value: f64,
    pub n_stimuli: usize,
    pub pair_count: usize,
}

impl RsaScore {
    fn new(value: f64, n: usize) -> Self {
        Self { value, n_stimuli: n, pair_count: n * (n - 1) / 2 }
    }
}

pub(crate) fn check_ids(a: &[String], b: &[String]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Alignment(format!("{} stimuli vs {}", a.len(), b.len())));
    }
    if let Some(i) = (0..a.len()).find(|&i| a[i] != b[i]) {
        return Err(Error::Alignment(format!("stimulus {i} differs: {:?} vs {:?}", a[i], b[i])));
    }
    Ok(())
}

/// Pearson correlation of the flattened similarity matrices of `a` and `b`.
///
/// Raw representation sets go through [`cosine_similarity_matrix`] first.
/// Both sides must list the same stimuli in the same order.
pub fn rsa<'a, 'b>(a: impl Into<Space<'a>>, b: impl Into<Space<'b>>) -> Result<RsaScore> {
    let (a, b) = (a.into(), b.into());
    check_ids(a.stimulus_ids(), b.stimulus_ids())?;
    let n = a.stimulus_ids().len();
    let value = pearson(&a.upper_triangle()?, &b.upper_triangle()?)?;
    Ok(RsaScore::new(value, n))
}

/// RSA computed on dissimilarity matrices `1 - S`.
pub fn rsa_dissimilarity(a: &SimilarityMatrix, b: &SimilarityMatrix) -> Result<RsaScore> {
    check_ids(a.stimulus_ids(), b.stimulus_ids())?;
    let value = pearson(&a.dissimilarity_upper_triangle()?, &b.dissimilarity_upper_triangle()?)?;
    Ok(RsaScore::new(value, a.n()))
}

/// Keeps the rows and columns where `mask` is true.
pub fn subset(sim: &SimilarityMatrix, mask: &[bool], mask_name: &str) -> Result<SimilarityMatrix> {
    if mask.len() != sim.n() {
        return Err(Error::Shape(format!("mask of length {} for {} stimuli", mask.len(), sim.n())));
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.len() < 3 {
        return Err(Error::TooFewStimuli { needed: 3, found: idx.len() });
    }
    let values = Matrix::from_fn(idx.len(), idx.len(), |i, j| sim.values.get(idx[i], idx[j]));
    let mut masks = sim.masks.clone();
    masks.push(mask_name.into());
    Ok(SimilarityMatrix {
        values,
        stimulus_ids: idx.iter().map(|&i| sim.stimulus_ids[i].clone()).collect(),
        source_meta: sim.source_meta.clone(),
        masks,
    })
}



#[cfg(test)]
mod props {
    use super::*;
    use crate::testutil::{gaussian, orthogonal, rng};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn invariances_hold(seed in any::<u64>(), n in 3usize..24, d in 2usize..16) {
            let mut r = rng(seed);
            let x = gaussian(&mut r, n, d);
            let y = gaussian(&mut r, n, d + 1);
            let xs = RepresentationSet::new(x.clone(), RepMeta::numbered("x", "s", n)).unwrap();
            let ys = RepresentationSet::new(y, RepMeta::numbered("y", "s", n)).unwrap();
            let base = rsa(&xs, &ys).unwrap().value;
            prop_assert_eq!(base, rsa(&ys, &xs).unwrap().value);

            let mut scaled = x.clone();
            for i in 0..n {
                let s = 0.01 + (i as f64 * 1.7) % 9.0;
                scaled.row_mut(i).iter_mut().for_each(|v| *v *= s);
            }
            let ss = RepresentationSet::new(scaled, RepMeta::numbered("x", "s", n)).unwrap();
            let sx = cosine_similarity_matrix(&xs).unwrap();
            let sxs = cosine_similarity_matrix(&ss).unwrap();
            prop_assert!(sx.values().max_abs_diff(sxs.values()) <= 1e-10);
            prop_assert!((rsa(&ss, &ys).unwrap().value - base).abs() <= 1e-10);

            let q = orthogonal(&mut r, d);
            let xq = RepresentationSet::new(x.matmul(&q).unwrap(), RepMeta::numbered("x", "s", n)).unwrap();
            prop_assert!(rsa(&xs, &xq).unwrap().value >= 1.0 - 1e-8);

            let sy = cosine_similarity_matrix(&ys).unwrap();
            prop_assert!((rsa_dissimilarity(&sx, &sy).unwrap().value - base).abs() <= 1e-12);

            for i in 0..n {
                prop_assert_eq!(sx.values().get(i, i), 1.0);
                for j in 0..n {
                    prop_assert_eq!(sx.values().get(i, j), sx.values().get(j, i));
                    prop_assert!(sx.values().get(i, j).abs() <= 1.0);
                }
            }
            prop_assert!(sx.values().max_abs_diff(&oracle::cosine(&x)) <= 1e-12);
        }
    }
}
