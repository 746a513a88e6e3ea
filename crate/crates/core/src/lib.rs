//! Multi-fidelity neural-network surrogate modeling for turbulent flame
//! observables.
//!
//! The crate combines dense low-fidelity trend models with sparse
//! high-fidelity measurements through a three-network correction
//! architecture: a low-fidelity network learns the structured trend, and a
//! pair of linear/nonlinear branches map the trend (plus the raw inputs)
//! onto the high-fidelity response. Training minimizes a compound loss over
//! both fidelity levels with weight decay on the learned branches, first
//! with Adam under a warmup-cosine schedule, then refined with L-BFGS.
//!
//! Modules:
//! - [`net`] — minimal dense feed-forward networks with analytic gradients
//! - [`optim`] — Adam (warmup-cosine, clipping, plateau stop) and L-BFGS
//! - [`lofi`] — low-fidelity trend construction: log-quadratic temporal
//!   fits, coefficient surfaces, thermodynamic corrections, dense grids
//! - [`model`] — the three-branch multi-fidelity model and its training loop
//! - [`signal`] — pressure-trace processing: Savitzky-Golay smoothing and
//!   the closed-form burning-velocity/radius thermodynamics
//! - [`dataset`] — case registry, trace ingestion, replicate averaging,
//!   hold-out masking, normalization statistics
//! - [`synth`] — synthetic benchmark generators with known ground truth

pub mod bench;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod lofi;
pub mod model;
pub mod net;
pub mod optim;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};

/// Lowercase-hex SHA-256 digest, used wherever artifacts need a stable
/// reproducibility fingerprint.
pub fn digest_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    use std::fmt::Write as _;
    let hash = Sha256::digest(bytes);
    hash.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
