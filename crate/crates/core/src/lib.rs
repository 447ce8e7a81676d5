//! Exact temperature dynamics of a trapped-ion chain whose ions are coupled
//! to independent Markovian thermal baths.
//!
//! The transverse motion obeys the linear Langevin equations
//! `ẋ_i = p_i`, `ṗ_i = −Σ_j A_ij x_j − γ_i p_i + √(2γ_i) ζ_i(t)`, with
//! `⟨ζ_i(t)ζ_j(t')⟩ = ω_i (T_i^B + ½) δ_ij δ(t − t')`. Temperatures are mean
//! phonon numbers `T_i = ½(ω_i⟨x_i²⟩ + ⟨p_i²⟩/ω_i − 1)`.

pub mod bath;
pub mod chain;
pub mod error;
pub mod experiments;
pub mod io;
pub mod oracle;
pub mod spectral;
pub mod validation;

pub use error::{Error, Result};

/// Run dense linear algebra on the calling thread.
///
/// Results then depend only on the inputs, never on the size of the worker
/// pool used for sweeps and trajectories.
pub fn use_sequential_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}
