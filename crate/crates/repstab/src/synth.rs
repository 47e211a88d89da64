//! Deterministic synthetic fixtures: representation sets, context series,
//! rotated copies, word-level corpora and multi-subject scan series with a
//! known stimulus lag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use repstab_core::linalg;
use repstab_core::{Matrix, RepMeta, RepresentationSet, ScanSeries};

use crate::error::{Error, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(r))
}

/// Orthogonal factor of a seeded Gaussian matrix.
pub fn random_orthogonal(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    loop {
        if let Some(q) = linalg::orthonormal_columns(&gaussian(r, n, n)) {
            return q;
        }
    }
}

fn set(values: Matrix, model: &str, context_length: u32) -> Result<RepresentationSet> {
    let mut meta = RepMeta::numbered(model, "s", values.rows());
    meta.context_length = context_length;
    Ok(RepresentationSet::new(values, meta)?)
}

/// Gaussian `n × d` representation set.
pub fn synth_reps(n: usize, d: usize, seed: u64) -> Result<RepresentationSet> {
    if n == 0 || d == 0 {
        return Err(Error::Usage("n and d must be positive".into()));
    }
    set(gaussian(&mut rng(seed), n, d), "synth", 0)
}

/// `m` sets where set `c` is `base + c · eps · E` for a fixed perturbation `E`.
pub fn context_series(base: &RepresentationSet, m: usize, eps: f64, seed: u64) -> Result<Vec<RepresentationSet>> {
    let mut r = rng(seed ^ 0x5eed_c0de);
    let e = gaussian(&mut r, base.n_stimuli(), base.dim());
    (0..m)
        .map(|c| {
            let b = base.values();
            let vals = Matrix::from_fn(b.rows(), b.cols(), |i, j| b.get(i, j) + c as f64 * eps * e.get(i, j));
            set(vals, &base.meta().model_name, c as u32)
        })
        .collect()
}

/// `base · Q` for a seeded orthogonal `Q`.
pub fn rotated(base: &RepresentationSet, seed: u64) -> Result<RepresentationSet> {
    let q = random_orthogonal(&mut rng(seed ^ 0x07a7e), base.dim());
    let meta = RepMeta { model_name: format!("{}_rot", base.meta().model_name), ..base.meta().clone() };
    Ok(RepresentationSet::new(base.values().matmul(&q)?, meta)?)
}

/// Parameters of [`synth_brain`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BrainSpec {
    pub lag_scans: usize,
    pub noise: f64,
    pub regions: usize,
    pub voxels_per_region: usize,
    /// Regions carrying the stimulus-locked signal; the rest are pure noise.
    pub signal_regions: Vec<usize>,
    pub subjects: usize,
    /// Use the identity as the region map (requires `voxels_per_region == d`).
    pub identity_map: bool,
    pub scan_period_s: f64,
    pub seed: u64,
}

impl Default for BrainSpec {
    fn default() -> Self {
        Self {
            lag_scans: 0,
            noise: 0.1,
            regions: 4,
            voxels_per_region: 8,
            signal_regions: vec![0, 1, 2, 3],
            subjects: 2,
            identity_map: false,
            scan_period_s: 2.0,
            seed: 0,
        }
    }
}

/// Scan series whose row `t` in a signal region is `reps[t − lag] · M_r`
/// plus i.i.d. Gaussian noise of scale `noise`; rows before the lag carry
/// noise only. `M_r` is shared across subjects and scaled so each signal
/// voxel has roughly unit variance. Noise regions hold unit-variance noise.
pub fn synth_brain(reps: &RepresentationSet, spec: &BrainSpec) -> Result<Vec<ScanSeries>> {
    let (t, d) = (reps.n_stimuli(), reps.dim());
    let v = spec.voxels_per_region;
    if spec.regions == 0 || v == 0 || spec.subjects == 0 {
        return Err(Error::Usage("regions, voxels per region and subjects must be positive".into()));
    }
    if spec.identity_map && v != d {
        return Err(Error::Usage(format!("identity map needs {d} voxels per region, got {v}")));
    }
    if let Some(&r) = spec.signal_regions.iter().find(|&&r| r >= spec.regions) {
        return Err(Error::Usage(format!("signal region {r} out of range 0..{}", spec.regions)));
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::Usage("noise must be >= 0".into()));
    }
    let mut r = rng(spec.seed);
    let maps: Vec<Matrix> = (0..spec.regions)
        .map(|_| {
            if spec.identity_map {
                Matrix::identity(d)
            } else {
                let mut m = gaussian(&mut r, d, v);
                m.scale(1.0 / (d as f64).sqrt());
                m
            }
        })
        .collect();
    let locked: Vec<Option<Matrix>> = (0..spec.regions)
        .map(|g| {
            spec.signal_regions.contains(&g).then(|| {
                let shifted = Matrix::from_fn(t, d, |i, k| if i >= spec.lag_scans { reps.values().get(i - spec.lag_scans, k) } else { 0.0 });
                shifted.matmul(&maps[g]).expect("shapes agree")
            })
        })
        .collect();
    let atlas: Vec<String> = (0..spec.regions * v).map(|j| format!("region{}", j / v)).collect();
    (0..spec.subjects)
        .map(|s| {
            let mut m = Matrix::zeros(t, spec.regions * v);
            for (g, lk) in locked.iter().enumerate() {
                for i in 0..t {
                    for k in 0..v {
                        let noise: f64 = StandardNormal.sample(&mut r);
                        let val = match lk {
                            Some(l) => l.get(i, k) + spec.noise * noise,
                            None => noise,
                        };
                        m.set(i, g * v + k, val);
                    }
                }
            }
            Ok(ScanSeries::new(m, atlas.clone(), format!("sub{}", s + 1), 1, spec.scan_period_s)?)
        })
        .collect()
}
