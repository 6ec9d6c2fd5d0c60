//! CKKS approximate homomorphic encryption, restricted to what encrypted
//! federated averaging needs: batched real-valued encoding, public-key
//! encryption, ciphertext addition, plaintext-scalar multiplication with one
//! rescale per level, and decryption.
//!
//! Ciphertexts live in `Z_Q[X]/(X^N + 1)` with `Q` an RNS product of
//! NTT-friendly primes. Relinearization, rotations and bootstrapping are not
//! provided.

pub mod arith;
mod bundle;
mod ciphertext;
pub mod encoding;
mod keys;
pub mod ntt;
mod params;

pub use bundle::{
    chunk_count, ciphertext_size_for_batch, ciphertext_size_model, decrypt_values, encrypt_values,
    weighted_aggregate, CiphertextBundle, SizeReport,
};
pub use ciphertext::{add, add_assign, decrypt, encrypt, mul_scalar, rescale, Ciphertext};
pub use keys::{keygen, KeyPair, PublicKey, SecretKey};
pub use params::{Context, SchemeParams};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CkksError {
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
    #[error("value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("value {value} at index {index} exceeds the plaintext bound {bound}")]
    ValueOutOfRange { index: usize, value: f64, bound: f64 },
    #[error("{got} values do not fit in {slots} slots")]
    TooManyValues { got: usize, slots: usize },
    #[error("scalar {0} outside [-1, 1]")]
    ScalarOutOfRange(f64),
    #[error("ciphertext was produced under a different key")]
    KeyMismatch,
    #[error("ciphertext and key use different scheme parameters")]
    ParamsMismatch,
    #[error("multiplicative depth exhausted")]
    DepthExceeded,
    #[error("ciphertext must be rescaled before this operation")]
    PendingRescale,
    #[error("no multiplication to rescale")]
    NothingToRescale,
    #[error("ciphertext levels differ")]
    LevelMismatch,
    #[error("ciphertext scales differ")]
    ScaleMismatch,
    #[error("bundles are not compatible: {0}")]
    BundleMismatch(String),
    #[error("aggregation weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("aggregation weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("nothing to encrypt or aggregate")]
    Empty,
    #[error("malformed ciphertext bundle: {0}")]
    Malformed(String),
}
