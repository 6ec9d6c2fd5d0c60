use fedsim_ckks::{
    add, chunk_count, ciphertext_size_for_batch, ciphertext_size_model, decrypt, decrypt_values, encrypt,
    encrypt_values, keygen, mul_scalar, rescale, weighted_aggregate, KeyPair, SchemeParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::sync::OnceLock;

fn toy_keys() -> &'static KeyPair {
    static KEYS: OnceLock<KeyPair> = OnceLock::new();
    KEYS.get_or_init(|| keygen(&SchemeParams::toy(), 2024).unwrap())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip(vals in prop::collection::vec(-10.0f64..10.0, 1..512), seed in any::<u64>()) {
        let keys = toy_keys();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ct = encrypt(&vals, &keys.public, &mut rng).unwrap();
        let out = decrypt(&ct, &keys.secret).unwrap();
        prop_assert!(max_abs_diff(&vals, &out) <= 1e-4);
        prop_assert!(out[vals.len()..].iter().all(|v| v.abs() <= 1e-4));
    }

    #[test]
    fn additive(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..512), seed in any::<u64>()) {
        let keys = toy_keys();
        let ctx = keys.public.context();
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ca = encrypt(&a, &keys.public, &mut rng).unwrap();
        let cb = encrypt(&b, &keys.public, &mut rng).unwrap();
        let out = decrypt(&add(ctx, &ca, &cb).unwrap(), &keys.secret).unwrap();
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        prop_assert!(max_abs_diff(&want, &out) <= 1e-4);
    }

    #[test]
    fn scalar(a in prop::collection::vec(-10.0f64..10.0, 1..512), c in 0.0f64..=1.0, seed in any::<u64>()) {
        let keys = toy_keys();
        let ctx = keys.public.context();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ct = encrypt(&a, &keys.public, &mut rng).unwrap();
        let prod = rescale(ctx, &mul_scalar(ctx, &ct, c).unwrap()).unwrap();
        let out = decrypt(&prod, &keys.secret).unwrap();
        let want: Vec<f64> = a.iter().map(|x| c * x).collect();
        prop_assert!(max_abs_diff(&want, &out) <= 1e-4);
    }

    #[test]
    fn chunk_count_law(m in 1usize..5_000_000, log_slots in 3u32..13) {
        let slots = 1usize << log_slots;
        prop_assert_eq!(chunk_count(m, slots), (m + slots - 1) / slots);
        let params = SchemeParams { ring_dim: 2 * slots, ..SchemeParams::toy() };
        prop_assert_eq!(ciphertext_size_model(m, &params).unwrap().chunk_count as usize, m.div_ceil(slots));
    }
}

#[test]
fn reference_model_chunk_count() {
    let params = SchemeParams::default();
    assert_eq!(ciphertext_size_model(2_950_401, &params).unwrap().chunk_count, 721);
    assert_eq!(ciphertext_size_model(4096, &params).unwrap().chunk_count, 1);
    assert_eq!(ciphertext_size_model(1, &params).unwrap().chunk_count, 1);
}

#[test]
fn size_decreases_with_batch_size() {
    let params = SchemeParams::default();
    let sizes: Vec<u64> = [256, 512, 1024, 2048, 4096]
        .iter()
        .map(|&b| ciphertext_size_for_batch(2_950_401, &params, b).unwrap().ciphertext_bits)
        .collect();
    assert!(sizes.windows(2).all(|w| w[1] < w[0]), "{sizes:?}");
    let report = ciphertext_size_model(2_950_401, &params).unwrap();
    assert_eq!(report.encrypted_convention_bits, 2 * report.plaintext_bits);
}

#[test]
fn keygen_is_deterministic() {
    let a = keygen(&SchemeParams::toy(), 77).unwrap();
    let b = keygen(&SchemeParams::toy(), 77).unwrap();
    let c = keygen(&SchemeParams::toy(), 78).unwrap();
    assert_eq!(a.public, b.public);
    assert_eq!(a.secret.key_id(), b.secret.key_id());
    assert_ne!(a.public, c.public);
}

#[test]
fn zero_vector_roundtrip() {
    let keys = toy_keys();
    let zeros = vec![0.0; 1500];
    let out = decrypt_values(&encrypt_values(&zeros, &keys.public, 4).unwrap(), &keys.secret).unwrap();
    assert_eq!(out.len(), 1500);
    assert!(out.iter().all(|v| v.abs() <= 1e-4));
}

#[test]
fn aggregate_matches_plaintext_weighted_mean() {
    let keys = toy_keys();
    let w1: Vec<f64> = (0..2000).map(|i| ((i * 13) % 97) as f64 / 9.7 - 5.0).collect();
    let w2: Vec<f64> = (0..2000).map(|i| ((i * 31) % 89) as f64 / 8.9 - 5.0).collect();
    let e1 = encrypt_values(&w1, &keys.public, 1).unwrap();
    let e2 = encrypt_values(&w2, &keys.public, 2).unwrap();
    let agg = weighted_aggregate(&[&e1, &e2], &[0.25, 0.75], &keys.public).unwrap();
    let out = decrypt_values(&agg, &keys.secret).unwrap();
    let want: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| 0.25 * a + 0.75 * b).collect();
    assert!(max_abs_diff(&want, &out) <= 1e-3);

    let same = weighted_aggregate(&[&e1, &e1, &e1], &[0.2, 0.3, 0.5], &keys.public).unwrap();
    assert!(max_abs_diff(&w1, &decrypt_values(&same, &keys.secret).unwrap()) <= 1e-4);

    let single = weighted_aggregate(&[&e2], &[1.0], &keys.public).unwrap();
    assert!(max_abs_diff(&w2, &decrypt_values(&single, &keys.secret).unwrap()) <= 1e-4);
}

#[test]
fn encryption_is_order_independent() {
    // Chunk randomness is keyed by chunk index, so two encryptions with the
    // same seed are identical regardless of rayon scheduling.
    let keys = toy_keys();
    let vals: Vec<f64> = (0..5000).map(|i| (i as f64 * 0.01).cos()).collect();
    let a = encrypt_values(&vals, &keys.public, 9).unwrap();
    let b = encrypt_values(&vals, &keys.public, 9).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
}

#[test]
fn default_preset_roundtrip_error() {
    let keys = keygen(&SchemeParams::default(), 5).unwrap();
    let vals: Vec<f64> = (0..10_000).map(|i| ((i * 7919) % 2001) as f64 / 100.0 - 10.0).collect();
    let bundle = encrypt_values(&vals, &keys.public, 3).unwrap();
    assert_eq!(bundle.chunk_count(), 3);
    let out = decrypt_values(&bundle, &keys.secret).unwrap();
    let err = max_abs_diff(&vals, &out);
    assert!(err <= 1e-4, "roundtrip error {err:e}");
    let agg = weighted_aggregate(&[&bundle, &bundle], &[0.5, 0.5], &keys.public).unwrap();
    let err = max_abs_diff(&vals, &decrypt_values(&agg, &keys.secret).unwrap());
    assert!(err <= 1e-4, "aggregate error {err:e}");
}
