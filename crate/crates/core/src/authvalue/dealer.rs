use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::{AuthValue, Fp, ProverShare, VerifierKey};

/// Identifies the dealer (and therefore the global key) a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DealerId(pub u64);

/// Trusted source of correlated randomness: the global MAC key and
/// authenticated Beaver triples. Everything derives from the 32-byte seed.
#[derive(Clone, Debug)]
pub struct Dealer {
    seed: [u8; 32],
    id: DealerId,
    delta: Fp,
    rng: ChaCha20Rng,
    issued_triples: u64,
}

/// An authenticated multiplication triple with `c = a * b`.
#[derive(Clone, Copy, Debug)]
pub struct Triple {
    pub a: AuthValue,
    pub b: AuthValue,
    pub c: AuthValue,
}

impl Dealer {
    pub fn setup(seed: [u8; 32]) -> Self {
        let digest = Sha256::new()
            .chain_update(b"oath-dealer-id")
            .chain_update(seed)
            .finalize();
        let mut id = [0u8; 8];
        id.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha20Rng::from_seed(seed);
        let delta = Fp::random_nonzero(&mut rng);
        Dealer {
            seed,
            id: DealerId(u64::from_le_bytes(id)),
            delta,
            rng,
            issued_triples: 0,
        }
    }

    /// Convenience constructor from a small integer seed.
    pub fn from_u64(seed: u64) -> Self {
        Dealer::setup(seed_bytes(seed))
    }

    pub fn id(&self) -> DealerId {
        self.id
    }

    pub fn seed(&self) -> [u8; 32] {
        self.seed
    }

    pub fn issued_triples(&self) -> u64 {
        self.issued_triples
    }

    /// The global MAC key. Only the verifier side and the dealer may use it.
    pub(crate) fn delta(&self) -> Fp {
        self.delta
    }

    /// Checks the MAC relation of a value directly. A testing aid: real
    /// verifiers only check values that have been opened to them.
    pub fn check(&self, a: &AuthValue) -> bool {
        a.dealer_id() == self.id
            && a.prover_share().mac == a.verifier_key().0 + self.delta * a.value()
    }

    /// Serialized dealer state; equal for dealers that will behave identically.
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend_from_slice(&self.seed);
        out.extend_from_slice(&self.id.0.to_le_bytes());
        out.extend_from_slice(&self.delta.to_le_bytes());
        out.extend_from_slice(&self.issued_triples.to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        out
    }

    #[inline]
    pub(crate) fn random_field(&mut self) -> Fp {
        Fp::random(&mut self.rng)
    }

    /// Authenticates `x` with a freshly sampled key.
    #[inline]
    pub(crate) fn authenticate_with_fresh_key(&mut self, x: Fp) -> AuthValue {
        let key = self.random_field();
        AuthValue::from_parts(
            self.id,
            ProverShare {
                value: x,
                mac: key + self.delta * x,
            },
            VerifierKey(key),
        )
    }

    /// A uniformly random authenticated value, the VOLE output a prover masks
    /// its inputs with.
    #[inline]
    pub(crate) fn random_authenticated(&mut self) -> AuthValue {
        let x = self.random_field();
        self.authenticate_with_fresh_key(x)
    }

    pub fn triple(&mut self) -> Triple {
        let a = self.random_field();
        let b = self.random_field();
        self.issued_triples += 1;
        Triple {
            a: self.authenticate_with_fresh_key(a),
            b: self.authenticate_with_fresh_key(b),
            c: self.authenticate_with_fresh_key(a * b),
        }
    }
}

/// Expands a `u64` into a 32-byte seed.
pub fn seed_bytes(seed: u64) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"oath-seed")
        .chain_update(seed.to_le_bytes())
        .finalize()
        .into()
}
