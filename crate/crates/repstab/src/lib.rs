//! File formats, parallel kernels, synthetic fixtures, run manifests and the
//! `repstab` command line on top of [`repstab_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bxm1;
pub mod cli;
mod error;
pub mod manifest;
pub mod par;
pub mod synth;
pub mod tables;
pub mod text;

pub use error::{Error, Result};
pub use repstab_core as core;
