//! Group-balanced uniform sampling over committed records.
//!
//! The verifier draws a uniform permutation of each group's ranks and the
//! prover, in one pass over the records, reads for the `k`-th member of
//! group `g` the entry `pi_g[k]` from a public read-only RAM. Index 0 of
//! each RAM holds a sentinel that is never below `nu`, and records outside
//! the group read index 0. A record is selected iff its rank in its own
//! group's permutation is below `nu`, so exactly `nu` records per group are
//! selected and they form a uniform `nu`-subset of that group.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::authvalue::{Fp, ProofError, Session};
use crate::fairness::Group;
use crate::zkcircuit::{leq, or, AuthBit, RamMode, ZkRam};

/// RAM sentinel for "not in this group"; above any rank or `nu`.
pub const SENTINEL: u64 = 1 << 20;
const RANK_BITS: u32 = 21;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("cannot sample {nu} per group: group sizes are {n_a} and {n_b}")]
    Infeasible { nu: u64, n_a: u64, n_b: u64 },
    #[error(transparent)]
    Proof(#[from] ProofError),
}

/// The verifier's permutations of `0..n_a` and `0..n_b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutations {
    pub a: Vec<u64>,
    pub b: Vec<u64>,
}

impl Permutations {
    pub fn draw(seed: u64, n_a: u64, n_b: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut a: Vec<u64> = (0..n_a).collect();
        let mut b: Vec<u64> = (0..n_b).collect();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        Permutations { a, b }
    }
}

/// The selection bits and the positions they opened to.
#[derive(Clone, Debug)]
pub struct SampleArray {
    pub bits: Vec<AuthBit>,
    /// Ascending indices with `S[i] = 1`.
    pub selected: Vec<usize>,
}

fn check_feasible(nu: u64, n_a: u64, n_b: u64) -> Result<(), SampleError> {
    if nu > n_a || nu > n_b || n_a.max(n_b) >= SENTINEL {
        return Err(SampleError::Infeasible { nu, n_a, n_b });
    }
    Ok(())
}

/// The circuit sampler. `in_a[i]` is the proven group-a indicator of
/// record `i`; `n_a` is the revealed group-a count.
pub fn balanced_sample(
    s: &mut Session,
    in_a: &[AuthBit],
    n_a: u64,
    nu: u64,
    perms: &Permutations,
    mode: RamMode,
) -> Result<SampleArray, SampleError> {
    let n = in_a.len() as u64;
    let n_b = n - n_a;
    check_feasible(nu, n_a, n_b)?;
    assert_eq!((perms.a.len() as u64, perms.b.len() as u64), (n_a, n_b));

    let table = |s: &Session, p: &[u64]| {
        let mut t = vec![s.constant(Fp::new(SENTINEL))];
        t.extend(p.iter().map(|&v| s.constant(Fp::new(v))));
        ZkRam::new(t)
    };
    let ram = [table(s, &perms.a), table(s, &perms.b)];

    // Running 1-based position of each record within its group; the read
    // index is that position for the record's own group and 0 otherwise.
    let mut idx: [Vec<_>; 2] = [Vec::with_capacity(in_a.len()), Vec::with_capacity(in_a.len())];
    let mut counter = [s.constant(Fp::ONE), s.constant(Fp::ONE)];
    for &b in in_a {
        let ind = [b.value(), s.constant(Fp::ONE) - b.value()];
        for g in 0..2 {
            idx[g].push(s.mul(ind[g], counter[g]));
            counter[g] = counter[g] + ind[g];
        }
    }
    let ranks = [
        ram[0].read_many(s, &idx[0], mode)?,
        ram[1].read_many(s, &idx[1], mode)?,
    ];

    let nu_v = s.constant(Fp::new(nu));
    let mut bits = Vec::with_capacity(in_a.len());
    let mut selected = Vec::new();
    for (i, (&ra, &rb)) in ranks[0].iter().zip(&ranks[1]).enumerate() {
        let next = [s.add_const(ra, Fp::ONE), s.add_const(rb, Fp::ONE)];
        let sel_a = leq(s, next[0], nu_v, RANK_BITS)?;
        let sel_b = leq(s, next[1], nu_v, RANK_BITS)?;
        let b = or(s, sel_a, sel_b);
        if s.open(b.value()) == Fp::ONE {
            selected.push(i);
        }
        bits.push(b);
    }
    if selected.len() as u64 != 2 * nu {
        return Err(ProofError::Constraint("sample does not have 2 nu entries").into());
    }
    Ok(SampleArray { bits, selected })
}

/// The same selection computed in the clear.
pub fn balanced_sample_clear(groups: &[Group], nu: u64, perms: &Permutations) -> Result<Vec<usize>, SampleError> {
    let n_a = groups.iter().filter(|&&g| g == Group::A).count() as u64;
    let n_b = groups.len() as u64 - n_a;
    check_feasible(nu, n_a, n_b)?;
    let mut pos = [0usize; 2];
    let mut out = Vec::with_capacity(2 * nu as usize);
    for (i, g) in groups.iter().enumerate() {
        let table = if *g == Group::A { &perms.a } else { &perms.b };
        let rank = table[pos[g.index()]];
        pos[g.index()] += 1;
        if rank < nu {
            out.push(i);
        }
    }
    Ok(out)
}
