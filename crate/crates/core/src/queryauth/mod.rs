//! Authenticated query answering.
//!
//! Each query runs a coin flip for the public randomness `r`, then the
//! client signs `q || r`, the provider checks that signature, answers `o`
//! and signs `q || r || o`. The client checks the answer signature and sends
//! `C = H(q || r || o)` to the verifier's [`CommitmentStore`]. The provider
//! logs the full tuple with both signatures so any later dispute over
//! index `j` can be settled by [`blame_attestation`].

mod coin;
mod record;
mod sign;
mod store;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub use coin::{coin_flip, coins_from_seeds, finish_flip, CoinCommitment, CoinError, CoinParty};
pub use record::{
    answer_message, commitment, commitment_elements, decode_log, encode_log, query_message, ClientReceipt, LogError,
    Query, QueryRecord, LOG_MAGIC, RECORD_TAG,
};
pub use sign::{verify, Ed25519Signer, PublicKey, Signature, Signer};
pub use store::{CommitmentStore, StoreEntry, StoreError};
pub(crate) use store::fp_hex;

use crate::authvalue::Fp;
use crate::models::{ModelError, ThresholdedModel};

/// Number of public random field elements per query.
pub const R_LEN: usize = 2;

/// How the provider turns a query into an answer. The honest strategy runs
/// the certified model.
pub trait AnswerStrategy: Send {
    fn answer(&mut self, index: u64, model: &ThresholdedModel, q: &Query, r: &[Fp]) -> Result<bool, ModelError> {
        let _ = index;
        model.predict(&q.features, q.group, r)
    }
}

pub struct HonestAnswers;

impl AnswerStrategy for HonestAnswers {}

pub struct Client {
    pub id: u64,
    signer: Box<dyn Signer>,
    rng: ChaCha20Rng,
}

impl Client {
    pub fn new(id: u64, signer: Box<dyn Signer>, seed: u64) -> Self {
        Client {
            id,
            signer,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn from_seed(id: u64, key_seed: [u8; 32]) -> Self {
        let rng_seed = u64::from_le_bytes(key_seed[..8].try_into().unwrap()) ^ 0x636c_6965_6e74;
        Client::new(id, Box::new(Ed25519Signer::from_seed(key_seed)), rng_seed)
    }

    pub fn public_key(&self) -> PublicKey {
        self.signer.public_key()
    }
}

pub struct Provider {
    signer: Box<dyn Signer>,
    model: ThresholdedModel,
    strategy: Box<dyn AnswerStrategy>,
    rng: ChaCha20Rng,
    log: Vec<QueryRecord>,
}

impl Provider {
    pub fn new(model: ThresholdedModel, signer: Box<dyn Signer>, seed: u64) -> Self {
        Provider {
            signer,
            model,
            strategy: Box::new(HonestAnswers),
            rng: ChaCha20Rng::seed_from_u64(seed),
            log: Vec::new(),
        }
    }

    pub fn with_strategy(mut self, strategy: Box<dyn AnswerStrategy>) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn public_key(&self) -> PublicKey {
        self.signer.public_key()
    }

    pub fn model(&self) -> &ThresholdedModel {
        &self.model
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn into_log(self) -> Vec<QueryRecord> {
        self.log
    }
}

#[derive(Debug, Error)]
pub enum QueryAbort {
    #[error("provider rejected the client's signature on q || r")]
    BadClientSignature,
    #[error("client rejected the provider's signature on q || r || o")]
    BadProviderSignature,
    #[error(transparent)]
    Coin(#[from] CoinError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Runs one query end to end. On success the provider's log, the client's
/// receipt and the verifier's store have each grown by one entry.
pub fn answer_query(
    client: &mut Client,
    provider: &mut Provider,
    store: &mut CommitmentStore,
    query: Query,
) -> Result<ClientReceipt, QueryAbort> {
    let client_pk = client.public_key();
    answer_query_with(client, provider, store, query, &client_pk)
}

/// As [`answer_query`], but the provider checks the client's signature
/// against `registered_pk` rather than the client's actual key.
pub fn answer_query_with(
    client: &mut Client,
    provider: &mut Provider,
    store: &mut CommitmentStore,
    query: Query,
    registered_pk: &PublicKey,
) -> Result<ClientReceipt, QueryAbort> {
    // Coin flip: provider commits, client replies, provider opens.
    let x = CoinParty::random(&mut provider.rng);
    let cx = x.commit();
    let mut seed_y = [0u8; 32];
    rand::RngCore::fill_bytes(&mut client.rng, &mut seed_y);
    let (sx, nx) = x.opening();
    let r = finish_flip(&cx, &sx, &nx, &seed_y, R_LEN)?;

    let sig_p = client.signer.sign(&query_message(&query, &r));

    if !verify(registered_pk, &query_message(&query, &r), &sig_p) {
        return Err(QueryAbort::BadClientSignature);
    }
    let index = store.len() as u64;
    let o = provider.strategy.answer(index, &provider.model, &query, &r)?;
    let sig_c = provider.signer.sign(&answer_message(&query, &r, o));
    let c = commitment(&query, &r, o);

    if !verify(&provider.public_key(), &answer_message(&query, &r, o), &sig_c) {
        return Err(QueryAbort::BadProviderSignature);
    }
    let stored = store.append(c, client.id);
    debug_assert_eq!(stored, index);
    provider.log.push(QueryRecord {
        index,
        client_id: client.id,
        query: query.clone(),
        r: r.clone(),
        o,
        sig_p,
        sig_c,
        commitment: c,
    });
    Ok(ClientReceipt {
        index,
        client_id: client.id,
        query,
        r,
        o,
        sig_c,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Party {
    Client,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlameError {
    #[error("provider log, client receipt and stored commitment are mutually consistent")]
    NoContradiction,
}

/// Settles a dispute over one index. The provider opens its log record
/// (which carries the client's `sig_P`), the client opens its receipt
/// (which carries the provider's `sig_C`), and both are checked against the
/// commitment in the verifier's store.
pub fn blame_attestation(
    log: &QueryRecord,
    receipt: &ClientReceipt,
    stored: Fp,
    client_pk: &PublicKey,
    provider_pk: &PublicKey,
) -> Result<Party, BlameError> {
    // The provider cannot show the client asked this.
    if !verify(client_pk, &query_message(&log.query, &log.r), &log.sig_p) {
        return Ok(Party::Provider);
    }
    // The client cannot show the provider answered this.
    if !verify(provider_pk, &answer_message(&receipt.query, &receipt.r, receipt.o), &receipt.sig_c) {
        return Ok(Party::Client);
    }
    // Both signatures hold but name different queries: the client signed two.
    if log.query != receipt.query || log.r != receipt.r {
        return Ok(Party::Client);
    }
    // The provider's log contradicts the answer it signed.
    if log.o != receipt.o {
        return Ok(Party::Provider);
    }
    if commitment(&receipt.query, &receipt.r, receipt.o) != stored {
        return Ok(Party::Client);
    }
    Err(BlameError::NoContradiction)
}

/// Why a provider log record does not stand on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LogDefect {
    /// The record's index is not its position.
    Index,
    UnknownClient,
    ClientSignature,
    ProviderSignature,
    /// The recorded commitment is not the hash of the record.
    Commitment,
}

/// Checks every record of a provider log against the parties' keys and
/// returns the first defect of each bad record. An honest log has none, so
/// any edit to a log file surfaces here or fails to decode.
pub fn verify_log(log: &[QueryRecord], client_keys: &[PublicKey], provider_pk: &PublicKey) -> Vec<(u64, LogDefect)> {
    let mut out = Vec::new();
    for (i, rec) in log.iter().enumerate() {
        let defect = if rec.index != i as u64 {
            Some(LogDefect::Index)
        } else if let Some(pk) = client_keys.get(rec.client_id as usize) {
            if !verify(pk, &query_message(&rec.query, &rec.r), &rec.sig_p) {
                Some(LogDefect::ClientSignature)
            } else if !verify(provider_pk, &answer_message(&rec.query, &rec.r, rec.o), &rec.sig_c) {
                Some(LogDefect::ProviderSignature)
            } else if commitment(&rec.query, &rec.r, rec.o) != rec.commitment {
                Some(LogDefect::Commitment)
            } else {
                None
            }
        } else {
            Some(LogDefect::UnknownClient)
        };
        if let Some(d) = defect {
            out.push((i as u64, d));
        }
    }
    out
}

#[cfg(test)]
mod tests;
