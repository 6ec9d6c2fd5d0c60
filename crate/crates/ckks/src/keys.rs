use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::arith::{from_signed, mul_mod, sub_mod};
use crate::params::{Context, SchemeParams};
use crate::CkksError;

pub(crate) const ERROR_STD: f64 = 3.2;

pub(crate) fn sample_ternary<R: Rng>(rng: &mut R, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

pub(crate) fn sample_error<R: Rng>(rng: &mut R, n: usize) -> Vec<i64> {
    let normal = Normal::new(0.0, ERROR_STD).expect("valid std");
    (0..n).map(|_| normal.sample(rng).round() as i64).collect()
}

/// Lifts a small signed polynomial into NTT form under each of the first `count` moduli.
pub(crate) fn to_ntt(ctx: &Context, poly: &[i64], count: usize) -> Vec<Vec<u64>> {
    (0..count)
        .map(|i| {
            let q = ctx.moduli[i];
            let mut r: Vec<u64> = poly.iter().map(|&c| from_signed(c as i128, q)).collect();
            ctx.tables[i].forward(&mut r);
            r
        })
        .collect()
}

/// Ternary secret `s`, kept in NTT form under every modulus.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) ctx: Arc<Context>,
    pub(crate) s_ntt: Vec<Vec<u64>>,
    pub(crate) key_id: u64,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey")
            .field("params", &self.ctx.params)
            .field("key_id", &format_args!("{:016x}", self.key_id))
            .finish_non_exhaustive()
    }
}

/// `(b, a) = (-a*s + e, a)` in NTT form.
#[derive(Clone)]
pub struct PublicKey {
    pub(crate) ctx: Arc<Context>,
    pub(crate) b_ntt: Vec<Vec<u64>>,
    pub(crate) a_ntt: Vec<Vec<u64>>,
    pub(crate) key_id: u64,
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("params", &self.ctx.params)
            .field("key_id", &format_args!("{:016x}", self.key_id))
            .finish_non_exhaustive()
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.ctx.params == other.ctx.params && self.b_ntt == other.b_ntt && self.a_ntt == other.a_ntt
    }
}

impl PublicKey {
    pub fn params(&self) -> &SchemeParams {
        &self.ctx.params
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }

    pub fn context(&self) -> &Arc<Context> {
        &self.ctx
    }
}

impl SecretKey {
    pub fn params(&self) -> &SchemeParams {
        &self.ctx.params
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

#[derive(Debug, Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

fn fingerprint(b_ntt: &[Vec<u64>]) -> u64 {
    let mut hasher = Sha256::new();
    for limb in b_ntt {
        for c in limb {
            hasher.update(c.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Generates a key pair; identical `(params, seed)` yield identical keys.
pub fn keygen(params: &SchemeParams, seed: u64) -> Result<KeyPair, CkksError> {
    let ctx = Context::new(*params)?;
    let n = params.ring_dim;
    let levels = ctx.moduli.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let s = sample_ternary(&mut rng, n);
    let e = sample_error(&mut rng, n);
    let s_ntt = to_ntt(&ctx, &s, levels);
    let e_ntt = to_ntt(&ctx, &e, levels);

    let mut a_ntt = Vec::with_capacity(levels);
    let mut b_ntt = Vec::with_capacity(levels);
    for i in 0..levels {
        let q = ctx.moduli[i];
        // Uniform a is sampled directly in the evaluation domain.
        let a: Vec<u64> = (0..n).map(|_| rng.random_range(0..q)).collect();
        let b: Vec<u64> = a
            .iter()
            .zip(&s_ntt[i])
            .zip(&e_ntt[i])
            .map(|((&a, &s), &e)| sub_mod(e, mul_mod(a, s, q), q))
            .collect();
        a_ntt.push(a);
        b_ntt.push(b);
    }
    let key_id = fingerprint(&b_ntt);
    Ok(KeyPair {
        public: PublicKey {
            ctx: ctx.clone(),
            b_ntt,
            a_ntt,
            key_id,
        },
        secret: SecretKey { ctx, s_ntt, key_id },
    })
}
