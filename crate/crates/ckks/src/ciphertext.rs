//! Single-ciphertext operations: encryption of one slot vector, decryption,
//! addition, plaintext-scalar multiplication and rescaling.

use rand::Rng;

use crate::arith::{add_mod, from_signed, inv_mod, mul_mod, sub_mod, to_centered};
use crate::keys::{sample_error, sample_ternary, to_ntt, PublicKey, SecretKey};
use crate::params::Context;
use crate::CkksError;

/// A two-component ciphertext in coefficient form.
///
/// `level` counts the rescales still available; it starts at the scheme depth
/// and every scalar multiplication must be followed by a rescale that
/// consumes one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub(crate) c0: Vec<Vec<u64>>,
    pub(crate) c1: Vec<Vec<u64>>,
    pub(crate) level: usize,
    pub(crate) scale: f64,
    pub(crate) pending_rescale: bool,
    pub(crate) key_id: u64,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn pending_rescale(&self) -> bool {
        self.pending_rescale
    }

    pub fn key_id(&self) -> u64 {
        self.key_id
    }
}

pub fn encrypt<R: Rng>(values: &[f64], pk: &PublicKey, rng: &mut R) -> Result<Ciphertext, CkksError> {
    let ctx = &pk.ctx;
    let params = &ctx.params;
    if values.len() > params.slots() {
        return Err(CkksError::TooManyValues {
            got: values.len(),
            slots: params.slots(),
        });
    }
    let bound = params.value_bound();
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(CkksError::NonFinite { index });
        }
        if value.abs() >= bound {
            return Err(CkksError::ValueOutOfRange { index, value, bound });
        }
    }
    let n = params.ring_dim;
    let levels = ctx.moduli.len();
    let m = ctx.encoder.encode(values, ctx.scale());
    let v = sample_ternary(rng, n);
    let e0 = sample_error(rng, n);
    let e1 = sample_error(rng, n);
    let v_ntt = to_ntt(ctx, &v, levels);

    let mut c0 = Vec::with_capacity(levels);
    let mut c1 = Vec::with_capacity(levels);
    for i in 0..levels {
        let q = ctx.moduli[i];
        let table = &ctx.tables[i];
        let mut vb: Vec<u64> = v_ntt[i].iter().zip(&pk.b_ntt[i]).map(|(&x, &y)| mul_mod(x, y, q)).collect();
        let mut va: Vec<u64> = v_ntt[i].iter().zip(&pk.a_ntt[i]).map(|(&x, &y)| mul_mod(x, y, q)).collect();
        table.inverse(&mut vb);
        table.inverse(&mut va);
        for k in 0..n {
            let noise_and_msg = from_signed(e0[k] as i128 + m[k] as i128, q);
            vb[k] = add_mod(vb[k], noise_and_msg, q);
            va[k] = add_mod(va[k], from_signed(e1[k] as i128, q), q);
        }
        c0.push(vb);
        c1.push(va);
    }
    Ok(Ciphertext {
        c0,
        c1,
        level: ctx.top_level(),
        scale: ctx.scale(),
        pending_rescale: false,
        key_id: pk.key_id,
    })
}

/// Decrypts all `N/2` slots. Only the base-prime residue is needed because
/// `|m + e| < q_0 / 2` whenever values respect the plaintext bound.
pub fn decrypt(ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<f64>, CkksError> {
    if ct.key_id != sk.key_id {
        return Err(CkksError::KeyMismatch);
    }
    if ct.pending_rescale {
        return Err(CkksError::PendingRescale);
    }
    let ctx = &sk.ctx;
    let q = ctx.moduli[0];
    let table = &ctx.tables[0];
    let mut c1s = ct.c1[0].clone();
    table.forward(&mut c1s);
    for (x, &s) in c1s.iter_mut().zip(&sk.s_ntt[0]) {
        *x = mul_mod(*x, s, q);
    }
    table.inverse(&mut c1s);
    let coeffs: Vec<i64> = ct.c0[0]
        .iter()
        .zip(&c1s)
        .map(|(&a, &b)| to_centered(add_mod(a, b, q), q))
        .collect();
    Ok(ctx.encoder.decode(&coeffs, ct.scale))
}

fn check_compatible(a: &Ciphertext, b: &Ciphertext) -> Result<(), CkksError> {
    if a.key_id != b.key_id {
        return Err(CkksError::KeyMismatch);
    }
    if a.level != b.level || a.pending_rescale != b.pending_rescale {
        return Err(CkksError::LevelMismatch);
    }
    if (a.scale - b.scale).abs() > 1e-12 * a.scale.abs() {
        return Err(CkksError::ScaleMismatch);
    }
    Ok(())
}

pub fn add(ctx: &Context, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
    check_compatible(a, b)?;
    let mut out = a.clone();
    add_assign_unchecked(ctx, &mut out, b);
    Ok(out)
}

pub(crate) fn add_assign_unchecked(ctx: &Context, acc: &mut Ciphertext, b: &Ciphertext) {
    for i in 0..=acc.level {
        let q = ctx.moduli[i];
        for (x, &y) in acc.c0[i].iter_mut().zip(&b.c0[i]) {
            *x = add_mod(*x, y, q);
        }
        for (x, &y) in acc.c1[i].iter_mut().zip(&b.c1[i]) {
            *x = add_mod(*x, y, q);
        }
    }
}

pub fn add_assign(ctx: &Context, acc: &mut Ciphertext, b: &Ciphertext) -> Result<(), CkksError> {
    check_compatible(acc, b)?;
    add_assign_unchecked(ctx, acc, b);
    Ok(())
}

/// Multiplies by a real constant `|c| <= 1`, encoded as `round(c * q_top)`.
///
/// Consumes the multiplicative budget of the current level: a second
/// multiplication before [`rescale`], or any multiplication at level 0,
/// fails with [`CkksError::DepthExceeded`].
pub fn mul_scalar(ctx: &Context, ct: &Ciphertext, c: f64) -> Result<Ciphertext, CkksError> {
    if ct.pending_rescale || ct.level == 0 {
        return Err(CkksError::DepthExceeded);
    }
    if !c.is_finite() || c.abs() > 1.0 {
        return Err(CkksError::ScalarOutOfRange(c));
    }
    let q_top = ctx.moduli[ct.level];
    let encoded = (c * q_top as f64).round() as i128;
    let mut out = ct.clone();
    for i in 0..=ct.level {
        let q = ctx.moduli[i];
        let k = from_signed(encoded, q);
        for x in out.c0[i].iter_mut().chain(out.c1[i].iter_mut()) {
            *x = mul_mod(*x, k, q);
        }
    }
    out.scale = ct.scale * q_top as f64;
    out.pending_rescale = true;
    Ok(out)
}

/// Divides by the top prime and drops it, returning the scale to its
/// pre-multiplication value.
pub fn rescale(ctx: &Context, ct: &Ciphertext) -> Result<Ciphertext, CkksError> {
    if !ct.pending_rescale {
        return Err(CkksError::NothingToRescale);
    }
    let top = ct.level;
    let q_top = ctx.moduli[top];
    let rescale_poly = |poly: &[Vec<u64>]| -> Vec<Vec<u64>> {
        (0..top)
            .map(|i| {
                let q = ctx.moduli[i];
                let q_top_inv = inv_mod(q_top % q, q);
                poly[i]
                    .iter()
                    .zip(&poly[top])
                    .map(|(&x, &r)| {
                        let r = from_signed(to_centered(r, q_top) as i128, q);
                        mul_mod(sub_mod(x, r, q), q_top_inv, q)
                    })
                    .collect()
            })
            .collect()
    };
    Ok(Ciphertext {
        c0: rescale_poly(&ct.c0),
        c1: rescale_poly(&ct.c1),
        level: top - 1,
        scale: ct.scale / q_top as f64,
        pending_rescale: false,
        key_id: ct.key_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::keygen;
    use crate::params::SchemeParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn encrypt_decrypt_small_ring() {
        let params = SchemeParams {
            ring_dim: 64,
            ..SchemeParams::toy()
        };
        let keys = keygen(&params, 1).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..32).map(|i| i as f64 * 0.37 - 5.0).collect();
        let ct = encrypt(&vals, &keys.public, &mut rng).unwrap();
        let out = decrypt(&ct, &keys.secret).unwrap();
        assert!(max_err(&vals, &out) < 1e-9);
    }

    #[test]
    fn scalar_then_rescale() {
        let keys = keygen(&SchemeParams::toy(), 5).unwrap();
        let ctx = keys.public.context().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let vals: Vec<f64> = (0..512).map(|i| ((i * 7) % 41) as f64 - 20.0).collect();
        let ct = encrypt(&vals, &keys.public, &mut rng).unwrap();
        let prod = mul_scalar(&ctx, &ct, 0.3).unwrap();
        assert!(matches!(decrypt(&prod, &keys.secret), Err(CkksError::PendingRescale)));
        let rs = rescale(&ctx, &prod).unwrap();
        assert_eq!(rs.level(), 0);
        assert_eq!(rs.scale(), ctx.scale());
        let out = decrypt(&rs, &keys.secret).unwrap();
        let want: Vec<f64> = vals.iter().map(|v| v * 0.3).collect();
        assert!(max_err(&want, &out) < 1e-8);
    }

    #[test]
    fn depth_is_enforced() {
        let keys = keygen(&SchemeParams::toy(), 5).unwrap();
        let ctx = keys.public.context().clone();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let ct = encrypt(&[1.0], &keys.public, &mut rng).unwrap();
        let once = mul_scalar(&ctx, &ct, 0.5).unwrap();
        assert_eq!(mul_scalar(&ctx, &once, 0.5), Err(CkksError::DepthExceeded));
        let rescaled = rescale(&ctx, &once).unwrap();
        assert_eq!(mul_scalar(&ctx, &rescaled, 0.5), Err(CkksError::DepthExceeded));
        assert_eq!(rescale(&ctx, &rescaled), Err(CkksError::NothingToRescale));
    }

    #[test]
    fn rejects_out_of_range_and_non_finite() {
        let keys = keygen(&SchemeParams::toy(), 5).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        assert!(matches!(
            encrypt(&[0.0, f64::NAN], &keys.public, &mut rng),
            Err(CkksError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            encrypt(&[1e6], &keys.public, &mut rng),
            Err(CkksError::ValueOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn wrong_key_is_rejected() {
        let a = keygen(&SchemeParams::toy(), 1).unwrap();
        let b = keygen(&SchemeParams::toy(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let ct = encrypt(&[1.0, 2.0], &a.public, &mut rng).unwrap();
        assert_eq!(decrypt(&ct, &b.secret), Err(CkksError::KeyMismatch));
    }

    #[test]
    fn wrong_secret_yields_garbage() {
        let a = keygen(&SchemeParams::toy(), 1).unwrap();
        let b = keygen(&SchemeParams::toy(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let vals = vec![1.0; 512];
        let mut ct = encrypt(&vals, &a.public, &mut rng).unwrap();
        // Bypass the key-id guard to see what the algebra does.
        ct.key_id = b.secret.key_id();
        let out = decrypt(&ct, &b.secret).unwrap();
        assert!(max_err(&vals, &out) > 1.0);
    }
}
