//! Distributed coding of correlated sparse sources with joint recovery.
//!
//! Each encoder sees only its own sparse source `x_j`. It sends a coarse
//! "prior" measurement vector with a lossless entropy coder and a fine
//! measurement vector as Slepian–Wolf syndromes. The joint decoder recovers
//! side information from all priors (JSM or RAMIS), decodes the syndromes
//! against Laplacian soft inputs, dequantizes with a multi-hypothesis
//! estimator and runs a final joint sparse recovery.
//!
//! Modules follow the data flow:
//!
//! * [`sensing`]: synthetic JSM ensembles, histogram ingestion, seeded Gaussian matrices
//! * [`quantization`]: uniform quantizer, bit-planes, multi-hypothesis dequantization
//! * [`entropy`]: adaptive arithmetic coder and plug-in entropy estimates
//! * [`slepian_wolf`]: rate-adaptive LDPC-accumulate syndrome coding
//! * [`correlation`]: Laplacian residual models, mixtures and bit-plane LLRs
//! * [`solvers`]: FISTA for plain and stacked (JSM) ℓ1 recovery
//! * [`ramis`]: sequential recovery with multiple incremental side information
//! * [`rate_control`]: Intra/Prior mode decision and prior-projection search
//! * [`pipeline`]: encoder, decoder, wire format and Monte-Carlo experiments

pub mod config;
pub mod correlation;
pub mod entropy;
mod error;
pub mod par;
pub mod pipeline;
pub mod quantization;
pub mod ramis;
pub mod rate_control;
pub mod selftest;
pub mod sensing;
pub mod slepian_wolf;
pub mod solvers;

pub use error::{Error, Result};
