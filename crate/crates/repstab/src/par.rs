//! Data-parallel drivers over the core kernels.
//!
//! Work is split per similarity-matrix row or per space; every value is
//! produced by the same core kernel regardless of the split, so results are
//! bit-identical for any thread count.

use rayon::prelude::*;
use repstab_core::resta::{self, RsaGrid, StabilityCurve};
use repstab_core::simcore::{self, CosineKernel};
use repstab_core::{RepresentationSet, SimilarityMatrix};

use crate::error::{Error, Result};

/// Runs `f` on a pool with `threads` workers, or rayon's default when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn cosine_similarity_matrix(reps: &RepresentationSet) -> Result<SimilarityMatrix> {
    let k = CosineKernel::new(reps)?;
    let rows: Vec<Vec<f64>> = (0..k.n()).into_par_iter().map(|i| k.row_upper(i)).collect();
    Ok(k.assemble(rows))
}

pub fn similarity_matrices(sets: &[RepresentationSet]) -> Result<Vec<SimilarityMatrix>> {
    sets.iter().map(cosine_similarity_matrix).collect()
}

pub fn stability_curve(series: &[RepresentationSet], gap: usize) -> Result<StabilityCurve> {
    let sims = similarity_matrices(series)?;
    Ok(resta::stability_curve_from_sims(series, &sims, gap)?)
}

pub fn rsa_grid(labels: Vec<String>, sims: &[SimilarityMatrix]) -> Result<RsaGrid> {
    if sims.len() < 2 {
        return Err(repstab_core::Error::Config(format!("rsa grid needs at least 2 spaces, got {}", sims.len())).into());
    }
    let spaces: Vec<simcore::Space<'_>> = sims.iter().map(Into::into).collect();
    for s in &spaces[1..] {
        if s.stimulus_ids() != spaces[0].stimulus_ids() {
            return Err(repstab_core::Error::Alignment(format!("{} lists different stimuli", s.label())).into());
        }
    }
    let tris = sims.iter().map(simcore::upper_triangle).collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(resta::rsa_grid_from_triangles(labels, &tris)?)
}
