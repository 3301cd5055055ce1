//! Certification of two-qubit entangled sources.
//!
//! A source meant to emit `cos t|00> + sin t|11>` is assessed two ways:
//!
//! * by state tomography, which reconstructs the density matrix from nine
//!   Pauli bases and reports its fidelity `f_t` with the target;
//! * by self-testing, which uses only the statistics of a tilted-CHSH
//!   experiment. Raw frequencies are first projected onto a level of the NPA
//!   hierarchy (the NQA2 step), then the SWAP method gives a certified lower
//!   bound `f_s` on the fidelity, valid without any model of the devices.
//!
//! The modules follow the data flow: [`bell`] holds behaviors and the Bell
//! functional, [`quantum`] simulates sources and counts, [`tomography`]
//! reconstructs states, [`moments`] builds the moment and localizing matrices,
//! [`sdp`] solves the resulting semidefinite programs, [`certify`] ties them
//! into fidelity certificates, and [`pipeline`] runs batches and writes reports.

// Probability tables are indexed by setting and outcome throughout, and
// `!(x >= 0.0)` style tests are used so that NaN is rejected too.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod certify;
pub mod error;
pub mod moments;
pub mod pipeline;
pub mod quantum;
pub mod sdp;
pub mod tomography;

pub use bell::{Behavior, CorrelatorForm, CountingMode, CountsRecord};
pub use certify::{
    certify_pipeline, nqa2_regularize, robust_curve, swap_fidelity, CertifyOptions, FidelityCertificate, Nqa2Result,
};
pub use error::{Error, Result};
pub use quantum::{DensityMatrix, NoiseModel};
