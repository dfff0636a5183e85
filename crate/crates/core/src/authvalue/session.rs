use serde::{Deserialize, Serialize};

use super::transcript::Transcript;
use super::{AuthValue, Dealer, Fp, ProofError, ProverShare, TranscriptSummary, VerifierKey};

/// Pending openings are folded into one random-linear-combination check
/// once this many accumulate.
pub const FLUSH_THRESHOLD: usize = 1 << 15;

/// Labels for prover-supplied witness values, so a cheating strategy can
/// target a specific kind of input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WitnessKind {
    /// A committed datum: model parameter, dataset entry, query field.
    Value,
    /// A committed protocol output such as a recorded model decision.
    Output,
    /// One bit of a bit decomposition.
    DecompositionBit,
    /// A group/equality indicator bit.
    Indicator,
    /// The sign bit of an absolute-value gadget.
    SignBit,
    /// Quotient of a fixed-point truncation.
    Quotient,
    /// Remainder of a fixed-point truncation.
    Remainder,
    /// A value read from a verified RAM.
    RamValue,
    /// A field inverse supplied for a lookup argument.
    Inverse,
    /// A read multiplicity for a lookup argument.
    Multiplicity,
}

/// Hooks through which a prover may deviate from the protocol. The honest
/// prover is the identity on both.
pub trait ProverStrategy: Send {
    /// Called on every witness the prover commits to.
    fn witness(&mut self, _kind: WitnessKind, honest: Fp) -> Fp {
        honest
    }

    /// Called on every share the prover sends when a value is opened.
    fn open(&mut self, share: ProverShare) -> ProverShare {
        share
    }
}

/// The honest prover.
#[derive(Clone, Copy, Debug, Default)]
pub struct HonestProver;

impl ProverStrategy for HonestProver {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStats {
    pub inputs: u64,
    pub openings: u64,
    pub multiplications: u64,
    pub batch_checks: u64,
}

#[derive(Clone, Copy)]
struct PendingOpen {
    value: Fp,
    mac: Fp,
    key: Fp,
}

/// One prover/verifier proof session over a single dealer.
///
/// Openings are checked lazily: each one is recorded and the whole batch is
/// verified with a single random linear combination whose coefficient is a
/// hash of the transcript. A batch failure is sticky and surfaces from the
/// next [`Session::flush`].
pub struct Session {
    dealer: Dealer,
    transcript: Transcript,
    pending: Vec<PendingOpen>,
    strategy: Option<Box<dyn ProverStrategy>>,
    stats: SessionStats,
    failure: Option<ProofError>,
}

impl Session {
    pub fn new(dealer: Dealer) -> Self {
        Session {
            dealer,
            transcript: Transcript::new(b"session"),
            pending: Vec::new(),
            strategy: None,
            stats: SessionStats::default(),
            failure: None,
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Session::new(Dealer::setup(seed))
    }

    pub fn with_strategy(mut self, strategy: Box<dyn ProverStrategy>) -> Self {
        self.strategy = Some(strategy);
        self
    }

    pub fn dealer(&self) -> &Dealer {
        &self.dealer
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    /// Prover commits to a witness. The verifier sees only `x - u` for a
    /// dealer-random `u`, and derives its key from `u`'s key.
    pub fn input(&mut self, kind: WitnessKind, honest: Fp) -> AuthValue {
        let x = match self.strategy.as_mut() {
            Some(s) => s.witness(kind, honest),
            None => honest,
        };
        let mask = self.dealer.random_authenticated();
        let masked = x - mask.value();
        self.transcript.input(masked);
        self.stats.inputs += 1;
        let delta = self.dealer.delta();
        AuthValue::from_parts(
            self.dealer.id(),
            ProverShare {
                value: x,
                mac: mask.prover_share().mac,
            },
            VerifierKey(mask.verifier_key().0 - delta * masked),
        )
    }

    /// Commits to a plain datum.
    pub fn authenticate(&mut self, x: Fp) -> AuthValue {
        self.input(WitnessKind::Value, x)
    }

    /// A public constant as an authenticated value; needs no interaction.
    pub fn constant(&self, c: Fp) -> AuthValue {
        AuthValue::from_parts(
            self.dealer.id(),
            ProverShare {
                value: c,
                mac: Fp::ZERO,
            },
            VerifierKey(-(self.dealer.delta() * c)),
        )
    }

    /// `[a + c]` for public `c`: the prover shifts its value, the verifier
    /// shifts its key by `-delta * c`.
    pub fn add_const(&self, a: AuthValue, c: Fp) -> AuthValue {
        a + self.constant(c)
    }

    /// Beaver multiplication with one dealer triple and two openings.
    pub fn mul(&mut self, x: AuthValue, y: AuthValue) -> AuthValue {
        let t = self.dealer.triple();
        self.stats.multiplications += 1;
        let d = self.open(x - t.a);
        let e = self.open(y - t.b);
        t.c + t.b.scale(d) + t.a.scale(e) + self.constant(d * e)
    }

    /// Opens a value to the verifier, deferring its MAC check to the batch.
    /// Returns the value the prover sent.
    pub fn open(&mut self, a: AuthValue) -> Fp {
        assert_eq!(a.dealer_id(), self.dealer.id(), "value opened in the wrong session");
        let sent = self.outgoing(a.prover_share());
        self.transcript.open(sent.value, sent.mac);
        self.stats.openings += 1;
        self.pending.push(PendingOpen {
            value: sent.value,
            mac: sent.mac,
            key: a.verifier_key().0,
        });
        if self.pending.len() >= FLUSH_THRESHOLD {
            if let Err(e) = self.check_pending() {
                self.failure.get_or_insert(e);
            }
        }
        sent.value
    }

    /// Opens and checks the MAC immediately.
    pub fn open_and_verify(&mut self, a: AuthValue) -> Result<Fp, ProofError> {
        let sent = self.outgoing(a.prover_share());
        self.transcript.open(sent.value, sent.mac);
        self.stats.openings += 1;
        self.verify_share(a.verifier_key(), sent)
    }

    /// The verifier's check on a received share.
    pub fn verify_share(&self, key: VerifierKey, sent: ProverShare) -> Result<Fp, ProofError> {
        if sent.mac == key.0 + self.dealer.delta() * sent.value {
            Ok(sent.value)
        } else {
            Err(ProofError::MacMismatch)
        }
    }

    /// Opens `a` and requires it to be zero.
    pub fn assert_zero(&mut self, a: AuthValue, what: &'static str) -> Result<(), ProofError> {
        if self.open(a).is_zero() {
            Ok(())
        } else {
            Err(ProofError::Constraint(what))
        }
    }

    /// Opens `a` and requires it to equal the public `expected`.
    pub fn assert_public(&mut self, a: AuthValue, expected: Fp, what: &'static str) -> Result<(), ProofError> {
        if self.open(a) == expected {
            Ok(())
        } else {
            Err(ProofError::UnexpectedOpening(what))
        }
    }

    /// A public challenge derived from the transcript so far.
    pub fn challenge(&mut self, label: &[u8]) -> Fp {
        self.transcript.challenge(label)
    }

    /// Runs the batched MAC check on all pending openings.
    pub fn flush(&mut self) -> Result<(), ProofError> {
        if let Some(e) = self.failure.clone() {
            return Err(e);
        }
        let result = self.check_pending();
        if let Err(e) = &result {
            self.failure = Some(e.clone());
        }
        result
    }

    /// Flushes and returns the transcript digest.
    pub fn finish(&mut self) -> Result<TranscriptSummary, ProofError> {
        self.flush()?;
        Ok(self.transcript.summary())
    }

    /// Transcript digest without checking.
    pub fn summary(&self) -> TranscriptSummary {
        self.transcript.summary()
    }

    fn outgoing(&mut self, share: ProverShare) -> ProverShare {
        match self.strategy.as_mut() {
            Some(s) => s.open(share),
            None => share,
        }
    }

    fn check_pending(&mut self) -> Result<(), ProofError> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let count = self.pending.len();
        self.transcript.batch_check(count);
        let chi = self.transcript.challenge(b"mac-batch");
        let delta = self.dealer.delta();
        let mut acc = Fp::ZERO;
        for p in &self.pending {
            acc = acc * chi + (p.mac - p.key - delta * p.value);
        }
        self.pending.clear();
        self.stats.batch_checks += 1;
        if acc.is_zero() {
            Ok(())
        } else {
            Err(ProofError::BatchMacMismatch { count })
        }
    }
}
