//! Multi-ciphertext bundles encoding one flat model, the encrypted weighted
//! aggregation used by the controller, serialization and size accounting.
//!
//! # Wire layout
//!
//! All integers little-endian.
//!
//! ```text
//! magic          8 bytes  "FSCKKS\0\x01"
//! header_len     u32      byte length of the params header that follows
//!   ring_dim     u32
//!   scale_bits   u32
//!   depth        u32
//!   security     u32
//!   n_moduli     u32
//!   moduli       u64 * n_moduli
//! key_id         u64
//! plaintext_len  u64      number of meaningful values (M)
//! chunk_count    u64      ceil(M / slots)
//! per chunk:
//!   chunk_len    u64      byte length of the chunk body
//!   level        u32
//!   pending      u8       1 if a rescale is outstanding
//!   scale        f64
//!   c0, c1       (level + 1) * ring_dim u64 coefficients each, modulus-major
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::ciphertext::{self, add_assign_unchecked, Ciphertext};
use crate::keys::{PublicKey, SecretKey};
use crate::params::{Context, SchemeParams};
use crate::CkksError;

const MAGIC: &[u8; 8] = b"FSCKKS\0\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct CiphertextBundle {
    params: SchemeParams,
    key_id: u64,
    plaintext_len: usize,
    chunks: Vec<Ciphertext>,
}

pub fn chunk_count(m: usize, slots: usize) -> usize {
    m.div_ceil(slots)
}

impl CiphertextBundle {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn plaintext_len(&self) -> usize {
        self.plaintext_len
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunks(&self) -> &[Ciphertext] {
        &self.chunks
    }

    /// Serialized size in bits.
    pub fn size_bits(&self) -> u64 {
        8 * (bundle_header_bytes(&self.params)
            + self
                .chunks
                .iter()
                .map(|c| 8 + chunk_body_bytes(self.params.ring_dim, c.level))
                .sum::<usize>()) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let ctx_moduli = moduli_for(&self.params);
        let mut out = Vec::with_capacity(self.size_bits() as usize / 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(params_header_bytes(&self.params) as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.ring_dim as u32).to_le_bytes());
        out.extend_from_slice(&self.params.scale_bits.to_le_bytes());
        out.extend_from_slice(&(self.params.depth as u32).to_le_bytes());
        out.extend_from_slice(&self.params.security_bits.to_le_bytes());
        out.extend_from_slice(&(ctx_moduli.len() as u32).to_le_bytes());
        for q in &ctx_moduli {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&self.key_id.to_le_bytes());
        out.extend_from_slice(&(self.plaintext_len as u64).to_le_bytes());
        out.extend_from_slice(&(self.chunks.len() as u64).to_le_bytes());
        for ct in &self.chunks {
            let body = chunk_body_bytes(self.params.ring_dim, ct.level);
            out.extend_from_slice(&(body as u64).to_le_bytes());
            out.extend_from_slice(&(ct.level as u32).to_le_bytes());
            out.push(ct.pending_rescale as u8);
            out.extend_from_slice(&ct.scale.to_le_bytes());
            for poly in [&ct.c0, &ct.c1] {
                for limb in poly.iter() {
                    for c in limb {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CkksError::Malformed("bad magic".into()));
        }
        let header_len = r.u32()? as usize;
        let header_start = r.pos;
        let params = SchemeParams {
            ring_dim: r.u32()? as usize,
            scale_bits: r.u32()?,
            depth: r.u32()? as usize,
            security_bits: r.u32()?,
        };
        params.validate()?;
        let n_moduli = r.u32()? as usize;
        if n_moduli != params.depth + 1 {
            return Err(CkksError::Malformed("modulus count does not match depth".into()));
        }
        let moduli: Vec<u64> = (0..n_moduli).map(|_| r.u64()).collect::<Result<_, _>>()?;
        if r.pos - header_start != header_len {
            return Err(CkksError::Malformed("params header length".into()));
        }
        if moduli != moduli_for(&params) {
            return Err(CkksError::Malformed("modulus chain does not match params".into()));
        }
        let key_id = r.u64()?;
        let plaintext_len = r.u64()? as usize;
        let count = r.u64()? as usize;
        if count != chunk_count(plaintext_len, params.slots()) {
            return Err(CkksError::Malformed("chunk count".into()));
        }
        let n = params.ring_dim;
        let mut chunks = Vec::with_capacity(count);
        for _ in 0..count {
            let body_len = r.u64()? as usize;
            let body_start = r.pos;
            let level = r.u32()? as usize;
            if level > params.depth {
                return Err(CkksError::Malformed("chunk level above depth".into()));
            }
            let pending_rescale = match r.take(1)?[0] {
                0 => false,
                1 => true,
                _ => return Err(CkksError::Malformed("pending flag".into())),
            };
            let scale = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            let mut polys = Vec::with_capacity(2);
            for _ in 0..2 {
                let mut limbs = Vec::with_capacity(level + 1);
                for &q in moduli.iter().take(level + 1) {
                    let limb: Vec<u64> = (0..n).map(|_| r.u64()).collect::<Result<_, _>>()?;
                    if limb.iter().any(|&c| c >= q) {
                        return Err(CkksError::Malformed("coefficient not reduced".into()));
                    }
                    limbs.push(limb);
                }
                polys.push(limbs);
            }
            if r.pos - body_start != body_len {
                return Err(CkksError::Malformed("chunk length".into()));
            }
            let c1 = polys.pop().expect("two components");
            let c0 = polys.pop().expect("two components");
            chunks.push(Ciphertext {
                c0,
                c1,
                level,
                scale,
                pending_rescale,
                key_id,
            });
        }
        if r.pos != bytes.len() {
            return Err(CkksError::Malformed("trailing bytes".into()));
        }
        Ok(Self {
            params,
            key_id,
            plaintext_len,
            chunks,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CkksError::Malformed("unexpected end of input".into())),
        }
    }

    fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CkksError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn moduli_for(params: &SchemeParams) -> Vec<u64> {
    let base = crate::arith::ntt_primes_below(params.base_bits(), params.ring_dim, 1, &[]);
    let rest = crate::arith::ntt_primes_below(params.scale_bits, params.ring_dim, params.depth, &base);
    base.into_iter().chain(rest).collect()
}

fn params_header_bytes(params: &SchemeParams) -> usize {
    5 * 4 + 8 * (params.depth + 1)
}

fn bundle_header_bytes(params: &SchemeParams) -> usize {
    8 + 4 + params_header_bytes(params) + 3 * 8
}

fn chunk_body_bytes(ring_dim: usize, level: usize) -> usize {
    4 + 1 + 8 + 2 * (level + 1) * ring_dim * 8
}

/// Encrypts a flat parameter sequence in `ceil(M / slots)` chunks, the last
/// one zero-padded. Chunk `i` draws its randomness from stream `i` of
/// `seed`, so the result does not depend on processing order.
pub fn encrypt_values(values: &[f64], pk: &PublicKey, seed: u64) -> Result<CiphertextBundle, CkksError> {
    if values.is_empty() {
        return Err(CkksError::Empty);
    }
    let slots = pk.params().slots();
    let chunks = values
        .par_chunks(slots)
        .enumerate()
        .map(|(i, chunk)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            ciphertext::encrypt(chunk, pk, &mut rng).map_err(|e| match e {
                CkksError::NonFinite { index } => CkksError::NonFinite { index: i * slots + index },
                CkksError::ValueOutOfRange { index, value, bound } => CkksError::ValueOutOfRange {
                    index: i * slots + index,
                    value,
                    bound,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CiphertextBundle {
        params: *pk.params(),
        key_id: pk.key_id(),
        plaintext_len: values.len(),
        chunks,
    })
}

/// Recovers exactly `plaintext_len` values; padding slots are discarded.
pub fn decrypt_values(bundle: &CiphertextBundle, sk: &SecretKey) -> Result<Vec<f64>, CkksError> {
    if bundle.params != *sk.params() {
        return Err(CkksError::ParamsMismatch);
    }
    if bundle.key_id != sk.key_id() {
        return Err(CkksError::KeyMismatch);
    }
    let decoded = bundle
        .chunks
        .par_iter()
        .map(|ct| ciphertext::decrypt(ct, sk))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out: Vec<f64> = decoded.into_iter().flatten().collect();
    out.truncate(bundle.plaintext_len);
    Ok(out)
}

/// Computes `sum_k w_k * E(x_k)` chunk by chunk: one scalar multiplication
/// per input ciphertext, additions, then a single rescale of the sum. Needs
/// only public material.
pub fn weighted_aggregate(
    bundles: &[&CiphertextBundle],
    weights: &[f64],
    pk: &PublicKey,
) -> Result<CiphertextBundle, CkksError> {
    let first = bundles.first().ok_or(CkksError::Empty)?;
    if bundles.len() != weights.len() {
        return Err(CkksError::BundleMismatch(format!(
            "{} bundles but {} weights",
            bundles.len(),
            weights.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(CkksError::InvalidWeight(w));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CkksError::WeightsNotNormalized(total));
    }
    for b in bundles {
        if b.params != *pk.params() {
            return Err(CkksError::ParamsMismatch);
        }
        if b.key_id != pk.key_id() {
            return Err(CkksError::KeyMismatch);
        }
        if b.plaintext_len != first.plaintext_len || b.chunks.len() != first.chunks.len() {
            return Err(CkksError::BundleMismatch("chunk layout differs".into()));
        }
    }
    let ctx: &Context = pk.context();
    let chunks = (0..first.chunks.len())
        .into_par_iter()
        .map(|c| {
            let mut acc: Option<Ciphertext> = None;
            for (b, &w) in bundles.iter().zip(weights) {
                let term = ciphertext::mul_scalar(ctx, &b.chunks[c], w)?;
                match acc.as_mut() {
                    None => acc = Some(term),
                    Some(a) => {
                        if a.level != term.level || (a.scale - term.scale).abs() > 1e-12 * a.scale {
                            return Err(CkksError::LevelMismatch);
                        }
                        add_assign_unchecked(ctx, a, &term);
                    }
                }
            }
            ciphertext::rescale(ctx, &acc.expect("at least one bundle"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CiphertextBundle {
        params: first.params,
        key_id: first.key_id,
        plaintext_len: first.plaintext_len,
        chunks,
    })
}

/// Size of an encrypted model under the plaintext-bit conventions and the
/// actual serialized ciphertext layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub parameters: u64,
    pub chunk_count: u64,
    /// Serialized bundle of fresh (top-level) ciphertexts.
    pub ciphertext_bits: u64,
    /// 32 bits per parameter.
    pub plaintext_bits: u64,
    /// 64 bits per parameter: the cost charged for encrypted exchanges.
    pub encrypted_convention_bits: u64,
}

/// Size of `m` parameters packed `batch_size` per ciphertext under a fixed
/// ring dimension (sparse packing when `batch_size < slots`).
pub fn ciphertext_size_for_batch(m: usize, params: &SchemeParams, batch_size: usize) -> Result<SizeReport, CkksError> {
    params.validate()?;
    if m == 0 {
        return Err(CkksError::Empty);
    }
    if batch_size == 0 || batch_size > params.slots() {
        return Err(CkksError::InvalidParams(format!(
            "batch size {batch_size} outside [1, {}]",
            params.slots()
        )));
    }
    let chunks = chunk_count(m, batch_size);
    let per_chunk = 8 + chunk_body_bytes(params.ring_dim, params.depth);
    let bytes = bundle_header_bytes(params) + chunks * per_chunk;
    Ok(SizeReport {
        parameters: m as u64,
        chunk_count: chunks as u64,
        ciphertext_bits: 8 * bytes as u64,
        plaintext_bits: 32 * m as u64,
        encrypted_convention_bits: 64 * m as u64,
    })
}

pub fn ciphertext_size_model(m: usize, params: &SchemeParams) -> Result<SizeReport, CkksError> {
    ciphertext_size_for_batch(m, params, params.slots())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::keygen;

    #[test]
    fn chunking_and_padding() {
        let keys = keygen(&SchemeParams::toy(), 3).unwrap();
        let vals: Vec<f64> = (0..1300).map(|i| (i as f64).sin()).collect();
        let bundle = encrypt_values(&vals, &keys.public, 11).unwrap();
        assert_eq!(bundle.chunk_count(), 3);
        let out = decrypt_values(&bundle, &keys.secret).unwrap();
        assert_eq!(out.len(), 1300);
        let err = vals.iter().zip(&out).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9);
    }

    #[test]
    fn serialization_roundtrip_and_size() {
        let keys = keygen(&SchemeParams::toy(), 3).unwrap();
        let vals: Vec<f64> = (0..700).map(|i| i as f64 / 100.0).collect();
        let bundle = encrypt_values(&vals, &keys.public, 1).unwrap();
        let bytes = bundle.to_bytes();
        assert_eq!(bytes.len() as u64 * 8, bundle.size_bits());
        assert_eq!(
            bundle.size_bits(),
            ciphertext_size_model(700, &SchemeParams::toy()).unwrap().ciphertext_bits
        );
        let back = CiphertextBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, bundle);

        let agg = weighted_aggregate(&[&bundle], &[1.0], &keys.public).unwrap();
        let back = CiphertextBundle::from_bytes(&agg.to_bytes()).unwrap();
        assert_eq!(back, agg);
    }

    #[test]
    fn truncated_input_is_malformed() {
        let keys = keygen(&SchemeParams::toy(), 3).unwrap();
        let bundle = encrypt_values(&[1.0, 2.0], &keys.public, 1).unwrap();
        let bytes = bundle.to_bytes();
        assert!(matches!(
            CiphertextBundle::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CkksError::Malformed(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(CiphertextBundle::from_bytes(&bad).is_err());
    }

    #[test]
    fn aggregate_rejects_bad_weights() {
        let keys = keygen(&SchemeParams::toy(), 3).unwrap();
        let b = encrypt_values(&[1.0], &keys.public, 1).unwrap();
        assert_eq!(
            weighted_aggregate(&[&b, &b], &[0.5, 0.6], &keys.public),
            Err(CkksError::WeightsNotNormalized(1.1))
        );
        assert_eq!(
            weighted_aggregate(&[&b, &b], &[1.5, -0.5], &keys.public),
            Err(CkksError::InvalidWeight(-0.5))
        );
        let c = encrypt_values(&[1.0; 600], &keys.public, 1).unwrap();
        assert!(matches!(
            weighted_aggregate(&[&b, &c], &[0.5, 0.5], &keys.public),
            Err(CkksError::BundleMismatch(_))
        ));
    }

    #[test]
    fn params_mismatch_on_decrypt() {
        let toy = keygen(&SchemeParams::toy(), 3).unwrap();
        let small = keygen(
            &SchemeParams {
                ring_dim: 512,
                ..SchemeParams::toy()
            },
            3,
        )
        .unwrap();
        let b = encrypt_values(&[1.0], &toy.public, 1).unwrap();
        assert_eq!(decrypt_values(&b, &small.secret), Err(CkksError::ParamsMismatch));
    }
}
