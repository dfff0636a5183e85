use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Fp;

const BUFFER_FLUSH: usize = 1 << 13;

/// Message kinds the verifier receives. The schedule hash depends only on
/// the sequence of kinds, never on message contents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum MessageKind {
    Input = 1,
    Open = 2,
    Challenge = 3,
    BatchCheck = 4,
}

/// Running record of everything sent from prover to verifier.
#[derive(Clone)]
pub(crate) struct Transcript {
    hasher: Sha256,
    buffer: Vec<u8>,
    schedule: u64,
    messages: u64,
    elements: u64,
}

/// Digest of a finished session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptSummary {
    /// SHA-256 over message contents.
    pub content_digest: String,
    /// Rolling hash over message kinds only.
    pub schedule_digest: String,
    pub messages: u64,
    pub field_elements: u64,
}

impl Transcript {
    pub(crate) fn new(label: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"oath-transcript-v1");
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label);
        Transcript {
            hasher,
            buffer: Vec::with_capacity(BUFFER_FLUSH + 64),
            schedule: 0xcbf2_9ce4_8422_2325,
            messages: 0,
            elements: 0,
        }
    }

    #[inline]
    fn note(&mut self, kind: MessageKind, elements: u64) {
        self.schedule = (self.schedule ^ kind as u64).wrapping_mul(0x0000_0100_0000_01b3);
        self.messages += 1;
        self.elements += elements;
    }

    #[inline]
    fn spill(&mut self) {
        if self.buffer.len() >= BUFFER_FLUSH {
            self.hasher.update(&self.buffer);
            self.buffer.clear();
        }
    }

    #[inline]
    pub(crate) fn input(&mut self, masked: Fp) {
        self.note(MessageKind::Input, 1);
        self.buffer.push(MessageKind::Input as u8);
        self.buffer.extend_from_slice(&masked.to_le_bytes());
        self.spill();
    }

    #[inline]
    pub(crate) fn open(&mut self, value: Fp, mac: Fp) {
        self.note(MessageKind::Open, 2);
        self.buffer.push(MessageKind::Open as u8);
        self.buffer.extend_from_slice(&value.to_le_bytes());
        self.buffer.extend_from_slice(&mac.to_le_bytes());
        self.spill();
    }

    pub(crate) fn batch_check(&mut self, count: usize) {
        self.note(MessageKind::BatchCheck, 0);
        self.buffer.push(MessageKind::BatchCheck as u8);
        self.buffer.extend_from_slice(&(count as u64).to_le_bytes());
    }

    /// Fiat-Shamir challenge bound to everything sent so far.
    pub(crate) fn challenge(&mut self, label: &[u8]) -> Fp {
        self.hasher.update(&self.buffer);
        self.buffer.clear();
        self.note(MessageKind::Challenge, 0);
        self.hasher.update([MessageKind::Challenge as u8]);
        self.hasher.update(label);
        let snapshot = self.hasher.clone().finalize();
        self.hasher.update(snapshot);
        Fp::from_digest(&snapshot)
    }

    pub(crate) fn summary(&self) -> TranscriptSummary {
        let mut h = self.hasher.clone();
        h.update(&self.buffer);
        TranscriptSummary {
            content_digest: hex::encode(h.finalize()),
            schedule_digest: format!("{:016x}", self.schedule),
            messages: self.messages,
            field_elements: self.elements,
        }
    }
}
