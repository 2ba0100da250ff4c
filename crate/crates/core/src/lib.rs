//! 8-bit Muon optimizer family.
//!
//! This crate implements the Muon optimizer (momentum orthogonalized by
//! Newton-Schulz iteration) together with AdamW and SGD-with-momentum, with
//! optimizer state stored either in full precision or as blockwise 8-bit
//! codes (linear or dynamic codebooks). Alongside the optimizers it ships:
//!
//! - a minimal dense linear algebra layer ([`linalg`]): thin SVD, exact
//!   polar factor, Newton-Schulz orthogonalizer;
//! - blockwise 8-bit quantization ([`quant`]): codebooks, tensor round
//!   trips, error analytics, and a binary serialization format;
//! - the optimizer variants ([`optim`]) and the model parameter partition
//!   between Muon-managed matrices and AdamW-managed parameters;
//! - executable verifiers ([`bounds`]) for the quantization-error bounds of
//!   Adam, SGD and exact-polar Muon, including the adversarial gradient
//!   construction that breaks linearly quantized Adam;
//! - desk-scale training problems with analytic gradients ([`testbed`]);
//! - an analytic optimizer-state memory accountant ([`memory`]).

pub mod error;
pub mod linalg;
pub mod quant;
pub mod rng;

pub use error::{MuonError, Result};
pub use linalg::{Matrix, SvdResult};
pub use quant::{Codebook, CodebookMode, QuantizedBuffer};
