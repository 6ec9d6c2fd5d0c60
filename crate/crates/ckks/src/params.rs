use std::sync::Arc;

use crate::arith::ntt_primes_below;
use crate::encoding::Encoder;
use crate::ntt::NttTable;
use crate::CkksError;

/// Public scheme parameters.
///
/// The modulus chain is derived deterministically: one base prime of
/// `scale_bits + 9` bits (capped at 61) followed by `depth` primes just below
/// `2^scale_bits`, all congruent to 1 modulo `2N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemeParams {
    pub ring_dim: usize,
    pub scale_bits: u32,
    pub depth: usize,
    /// Informational only; no lattice estimator is run.
    pub security_bits: u32,
}

impl Default for SchemeParams {
    /// N = 8192 (4096 slots), 52-bit scale, depth 1, nominal 128-bit security.
    fn default() -> Self {
        Self {
            ring_dim: 8192,
            scale_bits: 52,
            depth: 1,
            security_bits: 128,
        }
    }
}

impl SchemeParams {
    /// Fast preset for tests and desk-scale runs. Not secure.
    pub fn toy() -> Self {
        Self {
            ring_dim: 1024,
            security_bits: 0,
            ..Self::default()
        }
    }

    pub fn slots(&self) -> usize {
        self.ring_dim / 2
    }

    pub fn base_bits(&self) -> u32 {
        (self.scale_bits + 9).min(61)
    }

    /// Plaintext values must satisfy `|x| < value_bound()` to decrypt correctly.
    pub fn value_bound(&self) -> f64 {
        2f64.powi((self.base_bits() - self.scale_bits - 2) as i32)
    }

    pub fn validate(&self) -> Result<(), CkksError> {
        if !self.ring_dim.is_power_of_two() || !(16..=65536).contains(&self.ring_dim) {
            return Err(CkksError::InvalidParams(format!(
                "ring dimension {} must be a power of two in [16, 65536]",
                self.ring_dim
            )));
        }
        if !(20..=56).contains(&self.scale_bits) {
            return Err(CkksError::InvalidParams(format!(
                "scale bits {} outside [20, 56]",
                self.scale_bits
            )));
        }
        if !(1..=8).contains(&self.depth) {
            return Err(CkksError::InvalidParams(format!(
                "multiplicative depth {} outside [1, 8]",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Precomputed tables shared by keys and ciphertexts of one parameter set.
#[derive(Debug)]
pub struct Context {
    pub params: SchemeParams,
    /// `moduli[0]` is the base prime; `moduli[l]` is dropped by the rescale at level `l`.
    pub moduli: Vec<u64>,
    pub tables: Vec<NttTable>,
    pub encoder: Encoder,
}

impl Context {
    pub fn new(params: SchemeParams) -> Result<Arc<Self>, CkksError> {
        params.validate()?;
        let n = params.ring_dim;
        let base = ntt_primes_below(params.base_bits(), n, 1, &[]);
        let scale_primes = ntt_primes_below(params.scale_bits, n, params.depth, &base);
        if base.len() != 1 || scale_primes.len() != params.depth {
            return Err(CkksError::InvalidParams(
                "not enough NTT-friendly primes for these parameters".into(),
            ));
        }
        let moduli: Vec<u64> = base.into_iter().chain(scale_primes).collect();
        let tables = moduli.iter().map(|&q| NttTable::new(n, q)).collect();
        Ok(Arc::new(Self {
            params,
            moduli,
            tables,
            encoder: Encoder::new(n),
        }))
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.params.scale_bits as i32)
    }

    pub fn top_level(&self) -> usize {
        self.params.depth
    }
}
