//! Information-theoretic MAC authenticated values over GF(2^61 - 1).
//!
//! An authenticated value `[x]` is split between two roles. The prover holds
//! `(x, m)` and the verifier holds a key `k`, with `m = k + delta * x` for a
//! global `delta` known only to the verifier. Linear operations are local to
//! both sides; multiplication consumes a dealer-issued Beaver triple.
//!
//! The correlated randomness is produced by a [`Dealer`] seeded from 32 bytes.
//! This stands in for the VOLE preprocessing a production backend would run:
//! it is sound against a cheating prover and hiding toward the verifier only
//! as long as the dealer is honest. It is a protocol simulator, not a
//! deployable proof system.
//!
//! Inside one process both halves of a value travel together in
//! [`AuthValue`], but they are kept in separate types: protocol code on the
//! verifier side only reads [`VerifierKey`]s and the [`ProverShare`]s it is
//! explicitly sent.

mod dealer;
mod field;
mod session;
mod transcript;

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

pub use dealer::{seed_bytes, Dealer, DealerId, Triple};
pub use field::{Fp, MODULUS, MODULUS_BITS};
pub use session::{HonestProver, ProverStrategy, Session, SessionStats, WitnessKind, FLUSH_THRESHOLD};
pub use transcript::TranscriptSummary;

/// What the prover holds for an authenticated value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProverShare {
    pub value: Fp,
    pub mac: Fp,
}

/// What the verifier holds for an authenticated value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifierKey(pub Fp);

/// A value authenticated under one dealer's global key.
#[derive(Clone, Copy, Debug)]
pub struct AuthValue {
    dealer: DealerId,
    share: ProverShare,
    key: VerifierKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("operands were authenticated under different dealers ({0:?} vs {1:?})")]
    MixedDealer(DealerId, DealerId),
}

/// A verifier-side rejection: the prover failed a check.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("MAC check failed on an opened value")]
    MacMismatch,
    #[error("batched MAC check failed over {count} openings")]
    BatchMacMismatch { count: usize },
    #[error("constraint violated: {0}")]
    Constraint(&'static str),
    #[error("opened value does not match the expected public value: {0}")]
    UnexpectedOpening(&'static str),
}

impl AuthValue {
    pub(crate) fn from_parts(dealer: DealerId, share: ProverShare, key: VerifierKey) -> Self {
        AuthValue { dealer, share, key }
    }

    pub fn dealer_id(&self) -> DealerId {
        self.dealer
    }

    /// Prover-side plaintext.
    #[inline]
    pub fn value(&self) -> Fp {
        self.share.value
    }

    pub fn prover_share(&self) -> ProverShare {
        self.share
    }

    pub fn verifier_key(&self) -> VerifierKey {
        self.key
    }

    /// Fallible addition that reports operands from different dealers.
    pub fn checked_add(&self, rhs: &AuthValue) -> Result<AuthValue, AuthError> {
        self.same_dealer(rhs)?;
        Ok(self.add_unchecked(rhs))
    }

    pub fn checked_sub(&self, rhs: &AuthValue) -> Result<AuthValue, AuthError> {
        self.same_dealer(rhs)?;
        Ok(self.add_unchecked(&-*rhs))
    }

    /// Multiplication by a public constant.
    #[inline]
    pub fn scale(&self, c: Fp) -> AuthValue {
        AuthValue {
            dealer: self.dealer,
            share: ProverShare {
                value: self.share.value * c,
                mac: self.share.mac * c,
            },
            key: VerifierKey(self.key.0 * c),
        }
    }

    fn same_dealer(&self, rhs: &AuthValue) -> Result<(), AuthError> {
        if self.dealer == rhs.dealer {
            Ok(())
        } else {
            Err(AuthError::MixedDealer(self.dealer, rhs.dealer))
        }
    }

    #[inline(always)]
    fn add_unchecked(&self, rhs: &AuthValue) -> AuthValue {
        AuthValue {
            dealer: self.dealer,
            share: ProverShare {
                value: self.share.value + rhs.share.value,
                mac: self.share.mac + rhs.share.mac,
            },
            key: VerifierKey(self.key.0 + rhs.key.0),
        }
    }
}

impl Add for AuthValue {
    type Output = AuthValue;
    /// Panics when the operands belong to different dealers; use
    /// [`AuthValue::checked_add`] to handle that case.
    #[inline]
    fn add(self, rhs: AuthValue) -> AuthValue {
        assert_eq!(self.dealer, rhs.dealer, "mixed-dealer authenticated values");
        self.add_unchecked(&rhs)
    }
}

impl Sub for AuthValue {
    type Output = AuthValue;
    #[inline]
    fn sub(self, rhs: AuthValue) -> AuthValue {
        self + (-rhs)
    }
}

impl Neg for AuthValue {
    type Output = AuthValue;
    #[inline]
    fn neg(self) -> AuthValue {
        AuthValue {
            dealer: self.dealer,
            share: ProverShare {
                value: -self.share.value,
                mac: -self.share.mac,
            },
            key: VerifierKey(-self.key.0),
        }
    }
}

impl Mul<Fp> for AuthValue {
    type Output = AuthValue;
    #[inline]
    fn mul(self, rhs: Fp) -> AuthValue {
        self.scale(rhs)
    }
}
