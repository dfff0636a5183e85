//! MiMC block cipher in Miyaguchi-Preneel mode over GF(2^61 - 1).
//!
//! `h_0 = IV`, `h_{i+1} = E_{h_i}(m_i) + h_i + m_i`, where
//! `E_k(x)` runs `x <- (x + k + c_r)^17` for each round constant and then
//! adds `k`. The exponent must be coprime to `p - 1` for the round function
//! to be a permutation; 3, 5, 7, 11 and 13 all divide `p - 1`, 17 is the
//! smallest odd exponent that does not.

use std::sync::OnceLock;

use sha2::{Digest, Sha256};

use crate::authvalue::{AuthValue, Fp, Session, MODULUS};

pub const MIMC_EXPONENT: u64 = 17;

/// `2 * ceil(61 / log2(17))`.
pub const MIMC_ROUNDS: usize = 30;

const fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

const _: () = assert!(gcd(MIMC_EXPONENT, MODULUS - 1) == 1);

struct Constants {
    iv: Fp,
    rounds: [Fp; MIMC_ROUNDS],
}

fn constants() -> &'static Constants {
    static C: OnceLock<Constants> = OnceLock::new();
    C.get_or_init(|| {
        let derive = |label: &[u8], i: u64| {
            let d = Sha256::new()
                .chain_update(b"oath-mimc-v1")
                .chain_update(label)
                .chain_update(i.to_le_bytes())
                .finalize();
            Fp::from_digest(&d)
        };
        let mut rounds = [Fp::ZERO; MIMC_ROUNDS];
        for (i, c) in rounds.iter_mut().enumerate() {
            *c = derive(b"round", i as u64);
        }
        Constants {
            iv: derive(b"iv", 0),
            rounds,
        }
    })
}

/// Hash of the empty sequence.
pub fn mimc_iv() -> Fp {
    constants().iv
}

#[inline]
fn pow17(x: Fp) -> Fp {
    let x2 = x * x;
    let x4 = x2 * x2;
    let x8 = x4 * x4;
    x8 * x8 * x
}

/// The keyed MiMC permutation.
pub fn mimc_encrypt(key: Fp, mut x: Fp) -> Fp {
    for &c in &constants().rounds {
        x = pow17(x + key + c);
    }
    x + key
}

/// Incremental hasher state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MimcHasher {
    state: Fp,
}

impl Default for MimcHasher {
    fn default() -> Self {
        MimcHasher { state: mimc_iv() }
    }
}

impl MimcHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, m: Fp) {
        self.state = mimc_encrypt(self.state, m) + self.state + m;
    }

    pub fn finish(&self) -> Fp {
        self.state
    }
}

pub fn mimc_hash(inputs: &[Fp]) -> Fp {
    let mut h = MimcHasher::new();
    for &m in inputs {
        h.update(m);
    }
    h.finish()
}

fn pow17_circuit(s: &mut Session, x: AuthValue) -> AuthValue {
    let x2 = s.mul(x, x);
    let x4 = s.mul(x2, x2);
    let x8 = s.mul(x4, x4);
    let x16 = s.mul(x8, x8);
    s.mul(x16, x)
}

/// The same hash over authenticated inputs; 150 multiplications per input.
pub fn mimc_hash_circuit(s: &mut Session, inputs: &[AuthValue]) -> AuthValue {
    let mut h = s.constant(mimc_iv());
    for &m in inputs {
        let mut x = m;
        for &c in &constants().rounds {
            let y = s.add_const(x + h, c);
            x = pow17_circuit(s, y);
        }
        h = x + h + h + m;
    }
    h
}

/// Counter-mode expansion of a seed into `n` field elements.
pub fn hash_prg(seed: &[Fp], n: usize) -> Vec<Fp> {
    let mut base = MimcHasher::new();
    for &m in seed {
        base.update(m);
    }
    (0..n as u64)
        .map(|i| {
            let mut h = base;
            h.update(Fp::new(i));
            h.finish()
        })
        .collect()
}
