use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::authvalue::Fp;

const STORE_FORMAT: &str = "oath-commitment-store";
const STORE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub index: u64,
    #[serde(with = "fp_hex")]
    pub commitment: Fp,
    pub client_id: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// The verifier's append-only list of query commitments.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CommitmentStore {
    entries: Vec<StoreEntry>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("store header missing or wrong version")]
    Header,
    #[error("store indices are not dense: expected {expected}, found {found}")]
    NotDense { expected: u64, found: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CommitmentStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a commitment at the next index and returns that index.
    pub fn append(&mut self, commitment: Fp, client_id: u64) -> u64 {
        let index = self.entries.len() as u64;
        self.entries.push(StoreEntry {
            index,
            commitment,
            client_id,
        });
        index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&StoreEntry> {
        self.entries.get(index)
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    /// Overwrites an entry in place. Only for simulating a misbehaving
    /// client in tests and attack runs.
    pub fn overwrite(&mut self, index: usize, commitment: Fp) {
        self.entries[index].commitment = commitment;
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), StoreError> {
        let header = Header {
            format: STORE_FORMAT.into(),
            version: STORE_VERSION,
        };
        writeln!(w, "{}", serde_json::to_string(&header).unwrap())?;
        for e in &self.entries {
            writeln!(w, "{}", serde_json::to_string(e).unwrap())?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, StoreError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(StoreError::Header)??;
        let header: Header = serde_json::from_str(&first).map_err(|_| StoreError::Header)?;
        if header.format != STORE_FORMAT || header.version != STORE_VERSION {
            return Err(StoreError::Header);
        }
        let mut store = CommitmentStore::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: StoreEntry = serde_json::from_str(&line).map_err(|source| StoreError::Json { line: i + 2, source })?;
            if e.index != store.len() as u64 {
                return Err(StoreError::NotDense {
                    expected: store.len() as u64,
                    found: e.index,
                });
            }
            store.entries.push(e);
        }
        Ok(store)
    }
}

pub(crate) mod fp_hex {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::authvalue::Fp;

    pub fn serialize<S: Serializer>(v: &Fp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:016x}", v.value()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fp, D::Error> {
        let s = String::deserialize(d)?;
        let v = u64::from_str_radix(&s, 16).map_err(D::Error::custom)?;
        Fp::from_canonical(v).ok_or_else(|| D::Error::custom("non-canonical field element"))
    }
}
