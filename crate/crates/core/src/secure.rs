//! Encrypted federated averaging. Learners hold the key pair; the
//! controller only ever sees the public key and ciphertext bundles, and
//! aggregates them with plaintext weights `p_k / P`.

use fedsim_ckks::{self as ckks, CiphertextBundle, KeyPair, PublicKey, SecretKey};

use crate::error::Result;
use crate::federation::{CommLedger, Federation, Job};
use crate::param::{Layout, ParameterVector};
use crate::rng::subseed;

/// Bits charged per exchanged parameter when models travel encrypted.
pub const ENCRYPTED_BITS_PER_PARAMETER: u32 = 64;

/// Encrypts the flat parameter sequence in `slots`-sized chunks.
pub fn encrypt_model(model: &ParameterVector, pk: &PublicKey, seed: u64) -> Result<CiphertextBundle> {
    Ok(ckks::encrypt_values(model.values(), pk, seed)?)
}

pub fn decrypt_model(bundle: &CiphertextBundle, sk: &SecretKey, layout: &Layout) -> Result<ParameterVector> {
    let values = ckks::decrypt_values(bundle, sk)?;
    ParameterVector::new(values, layout.clone())
}

/// Per-chunk `sum_k weight_k * chunk_k`; weights must already sum to one.
pub fn encrypted_weighted_aggregate(bundles: &[&CiphertextBundle], weights: &[f64], pk: &PublicKey) -> Result<CiphertextBundle> {
    Ok(ckks::weighted_aggregate(bundles, weights, pk)?)
}

/// Controller-side state of an encrypted run. It holds no secret key and
/// no plaintext model.
#[derive(Debug, Clone)]
pub struct EncryptedController {
    pub public_key: PublicKey,
    pub global: CiphertextBundle,
    pub ledger: CommLedger,
    pub round: usize,
    pub clock: f64,
    pub train_runs: Vec<u64>,
}

impl EncryptedController {
    /// Starts from an initial global model encrypted by a learner.
    pub fn new(fed: &Federation, initial: &ParameterVector, keys: &KeyPair) -> Result<Self> {
        let global = encrypt_model(initial, &keys.public, subseed(fed.seed, "he-encrypt-init", &[]))?;
        Ok(Self {
            public_key: keys.public.clone(),
            global,
            ledger: CommLedger::new(fed.learners.len(), ENCRYPTED_BITS_PER_PARAMETER)?,
            round: 0,
            clock: 0.0,
            train_runs: vec![0; fed.learners.len()],
        })
    }
}

/// One synchronous round with encrypted exchange: learners decrypt the
/// global bundle, train exactly as in the plaintext round, and return
/// encrypted local models; the controller aggregates ciphertexts.
pub fn run_encrypted_sync_round(fed: &Federation, controller: &mut EncryptedController, keys: &KeyPair) -> Result<()> {
    // Decryption is deterministic, so one decryption stands in for every
    // learner's identical copy.
    let start = decrypt_model(&controller.global, &keys.secret, &fed.spec.layout())?;
    let n = fed.learners.len();
    let jobs: Vec<Job> = (0..n).map(|k| (k, fed.epoch_steps(k))).collect();
    let elapsed = jobs
        .iter()
        .map(|&(k, s)| fed.learners[k].duration(s))
        .fold(0.0, f64::max);
    let trained = fed.run_jobs(&mut controller.train_runs, &start, &jobs)?;
    let uploads: Vec<CiphertextBundle> = trained
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let seed = subseed(fed.seed, "he-encrypt", &[k as u64, controller.round as u64]);
            encrypt_model(&t.model, &keys.public, seed)
        })
        .collect::<Result<_>>()?;

    let total: f64 = fed.weights().iter().sum();
    let weights: Vec<f64> = fed.weights().iter().map(|w| w / total).collect();
    let refs: Vec<&CiphertextBundle> = uploads.iter().collect();
    controller.global = encrypted_weighted_aggregate(&refs, &weights, &controller.public_key)?;
    controller.ledger.record_round(fed.parameter_count());
    controller.round += 1;
    controller.clock += elapsed;
    Ok(())
}
