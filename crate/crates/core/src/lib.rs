//! Representational similarity analysis (RSA) and representational stability
//! analysis (ReStA) between model activations and fMRI scan series.
//!
//! This crate is `no_std` (it needs `alloc`) and holds only the numerical
//! core. File formats, parallel kernels, synthetic fixtures and the CLI live
//! in the `repstab` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod align;
pub mod brainprep;
pub mod encode;
mod error;
pub mod linalg;
mod matrix;
pub mod repstore;
pub mod resta;
pub mod simcore;
pub mod sum;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use repstore::{
    EmbeddingTable, RepMeta, RepresentationSet, ScanSeries, StimulusCorpus, TokenNormalizer, Word,
};
pub use simcore::{rsa, RsaScore, SimilarityMatrix, Space};
