//! Canonical encodings of queries, answers and provider log records.
//!
//! A query is its quantized features followed by the group code, all as
//! field elements. Signed messages are
//!
//! ```text
//! "OATHREC1" | kind u8 | len_q u32 | q (u64 LE each) | len_r u32 | r | [o u64]
//! ```
//!
//! with kind `Q` for the client's signature over `q || r` and `A` for the
//! provider's signature over `q || r || o`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sign::Signature;
use crate::authvalue::Fp;
use crate::fairness::Group;
use crate::zkcircuit::mimc_hash;

pub const RECORD_TAG: &[u8; 8] = b"OATHREC1";
pub const LOG_MAGIC: &[u8; 8] = b"OATHLOG1";

/// A client query in quantized form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub features: Vec<i64>,
    pub group: Group,
}

impl Query {
    pub fn to_field(&self) -> Vec<Fp> {
        let mut q: Vec<Fp> = self.features.iter().map(|&v| Fp::from_i64(v)).collect();
        q.push(Fp::new(self.group.code()));
        q
    }
}

fn message(kind: u8, q: &[Fp], r: &[Fp], o: Option<bool>) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * (q.len() + r.len() + 1));
    out.extend_from_slice(RECORD_TAG);
    out.push(kind);
    out.extend_from_slice(&(q.len() as u32).to_le_bytes());
    for v in q {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(r.len() as u32).to_le_bytes());
    for v in r {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(o) = o {
        out.extend_from_slice(&Fp::from(o).to_le_bytes());
    }
    out
}

/// What the client signs.
pub fn query_message(q: &Query, r: &[Fp]) -> Vec<u8> {
    message(b'Q', &q.to_field(), r, None)
}

/// What the provider signs.
pub fn answer_message(q: &Query, r: &[Fp], o: bool) -> Vec<u8> {
    message(b'A', &q.to_field(), r, Some(o))
}

/// Field elements hashed into the commitment: `len_q, q, len_r, r, o`.
pub fn commitment_elements(q: &Query, r: &[Fp], o: bool) -> Vec<Fp> {
    let qf = q.to_field();
    let mut v = Vec::with_capacity(qf.len() + r.len() + 3);
    v.push(Fp::new(qf.len() as u64));
    v.extend(qf);
    v.push(Fp::new(r.len() as u64));
    v.extend_from_slice(r);
    v.push(Fp::from(o));
    v
}

/// `C = H(q || r || o)`.
pub fn commitment(q: &Query, r: &[Fp], o: bool) -> Fp {
    mimc_hash(&commitment_elements(q, r, o))
}

/// One answered query as retained by the provider.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub index: u64,
    pub client_id: u64,
    pub query: Query,
    pub r: Vec<Fp>,
    pub o: bool,
    /// Client's signature over `q || r`.
    pub sig_p: Signature,
    /// Provider's signature over `q || r || o`.
    pub sig_c: Signature,
    pub commitment: Fp,
}

/// What the client keeps after a query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientReceipt {
    pub index: u64,
    pub client_id: u64,
    pub query: Query,
    pub r: Vec<Fp>,
    pub o: bool,
    pub sig_c: Signature,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("not a provider log (bad magic)")]
    BadMagic,
    #[error("provider log truncated")]
    Truncated,
    #[error("bad group code {0} in record {1}")]
    BadGroup(u8, u64),
    #[error("non-canonical field element in record {0}")]
    BadField(u64),
}

fn push_record(out: &mut Vec<u8>, rec: &QueryRecord) {
    out.extend_from_slice(&rec.index.to_le_bytes());
    out.extend_from_slice(&rec.client_id.to_le_bytes());
    out.extend_from_slice(&(rec.query.features.len() as u32).to_le_bytes());
    for v in &rec.query.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(rec.query.group.code() as u8);
    out.extend_from_slice(&(rec.r.len() as u32).to_le_bytes());
    for v in &rec.r {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(rec.o as u8);
    out.extend_from_slice(&rec.sig_p.0);
    out.extend_from_slice(&rec.sig_c.0);
    out.extend_from_slice(&rec.commitment.to_le_bytes());
}

/// `OATHLOG1 | version u32 | count u64 | records`.
pub fn encode_log(records: &[QueryRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(LOG_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for r in records {
        push_record(&mut out, r);
    }
    out
}

struct Cursor<'a>(&'a [u8]);

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], LogError> {
        if self.0.len() < N {
            return Err(LogError::Truncated);
        }
        let (h, t) = self.0.split_at(N);
        self.0 = t;
        Ok(h.try_into().unwrap())
    }

    fn u64(&mut self) -> Result<u64, LogError> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32, LogError> {
        self.take::<4>().map(u32::from_le_bytes)
    }
}

pub fn decode_log(buf: &[u8]) -> Result<Vec<QueryRecord>, LogError> {
    let mut c = Cursor(buf);
    if &c.take::<8>()? != LOG_MAGIC || c.u32()? != 1 {
        return Err(LogError::BadMagic);
    }
    let n = c.u64()?;
    let mut out = Vec::with_capacity(n.min(1 << 20) as usize);
    for _ in 0..n {
        let index = c.u64()?;
        let client_id = c.u64()?;
        let nq = c.u32()? as usize;
        if nq > c.0.len() / 8 {
            return Err(LogError::Truncated);
        }
        let features = (0..nq).map(|_| c.take::<8>().map(i64::from_le_bytes)).collect::<Result<_, _>>()?;
        let g = c.take::<1>()?[0];
        let group = Group::from_code(g as u64).ok_or(LogError::BadGroup(g, index))?;
        let nr = c.u32()? as usize;
        if nr > c.0.len() / 8 {
            return Err(LogError::Truncated);
        }
        let r = (0..nr)
            .map(|_| c.take::<8>().and_then(|b| Fp::from_le_bytes(b).ok_or(LogError::BadField(index))))
            .collect::<Result<_, _>>()?;
        let o = match c.take::<1>()?[0] {
            0 => false,
            1 => true,
            _ => return Err(LogError::BadField(index)),
        };
        let sig_p = Signature(c.take::<64>()?);
        let sig_c = Signature(c.take::<64>()?);
        let commitment = Fp::from_le_bytes(c.take::<8>()?).ok_or(LogError::BadField(index))?;
        out.push(QueryRecord {
            index,
            client_id,
            query: Query { features, group },
            r,
            o,
            sig_p,
            sig_c,
            commitment,
        });
    }
    if !c.0.is_empty() {
        return Err(LogError::Truncated);
    }
    Ok(out)
}
