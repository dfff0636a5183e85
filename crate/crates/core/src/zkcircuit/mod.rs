//! Gadgets over authenticated values: bits, comparisons, equality
//! indicators, a read-only RAM and the algebraic hash.
//!
//! Every gadget runs both roles at once. The prover-side witness is computed
//! from plaintext values; the verifier only sees masked inputs and openings
//! that must be zero or otherwise public.

mod bits;
mod hash;
mod ram;

pub use bits::{
    bit, bit_decompose, constrain_bit, eq_indicator, eq_indicators, leq, mux, not, or, range_check, truncate, AuthBit,
};
pub use hash::{hash_prg, mimc_encrypt, mimc_hash, mimc_hash_circuit, mimc_iv, MimcHasher, MIMC_EXPONENT, MIMC_ROUNDS};
pub use ram::{RamMode, ZkRam};
