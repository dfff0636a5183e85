//! Commit-reveal coin flipping between two parties.
//!
//! `x` commits to `SHA-256(seed_x || nonce)`, `y` replies with `seed_y` in
//! the clear, `x` opens. The coins are the hash PRG over
//! `seed_x XOR seed_y`, so neither side can bias them alone.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::authvalue::Fp;
use crate::zkcircuit::hash_prg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoinCommitment(#[serde(with = "hex")] pub [u8; 32]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoinError {
    #[error("coin commitment opening does not match; the committing party aborted the flip")]
    BadOpening,
}

/// The committing side of a flip.
#[derive(Clone)]
pub struct CoinParty {
    seed: [u8; 32],
    nonce: [u8; 32],
}

impl CoinParty {
    pub fn new(seed: [u8; 32], nonce: [u8; 32]) -> Self {
        CoinParty { seed, nonce }
    }

    pub fn random<R: RngCore>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        let mut nonce = [0u8; 32];
        rng.fill_bytes(&mut seed);
        rng.fill_bytes(&mut nonce);
        CoinParty { seed, nonce }
    }

    pub fn commit(&self) -> CoinCommitment {
        commitment(&self.seed, &self.nonce)
    }

    pub fn opening(&self) -> ([u8; 32], [u8; 32]) {
        (self.seed, self.nonce)
    }
}

fn commitment(seed: &[u8; 32], nonce: &[u8; 32]) -> CoinCommitment {
    CoinCommitment(
        Sha256::new()
            .chain_update(b"oath-coin")
            .chain_update(seed)
            .chain_update(nonce)
            .finalize()
            .into(),
    )
}

/// Expands the combined seed into `n` field elements.
pub fn coins_from_seeds(seed_x: &[u8; 32], seed_y: &[u8; 32], n: usize) -> Vec<Fp> {
    let joint: Vec<Fp> = seed_x
        .iter()
        .zip(seed_y)
        .map(|(a, b)| a ^ b)
        .collect::<Vec<u8>>()
        .chunks(8)
        .map(|c| Fp::new(u64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    hash_prg(&joint, n)
}

/// `y`'s final step: check `x`'s opening and derive the coins.
pub fn finish_flip(
    commitment_x: &CoinCommitment,
    opened_seed: &[u8; 32],
    opened_nonce: &[u8; 32],
    seed_y: &[u8; 32],
    n: usize,
) -> Result<Vec<Fp>, CoinError> {
    if commitment(opened_seed, opened_nonce) != *commitment_x {
        return Err(CoinError::BadOpening);
    }
    Ok(coins_from_seeds(opened_seed, seed_y, n))
}

/// An honest run of the whole flip.
pub fn coin_flip(x: &CoinParty, seed_y: &[u8; 32], n: usize) -> Result<Vec<Fp>, CoinError> {
    let c = x.commit();
    let (seed, nonce) = x.opening();
    finish_flip(&c, &seed, &nonce, seed_y, n)
}
