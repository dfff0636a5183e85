use crate::authvalue::{AuthValue, Fp, ProofError, Session, WitnessKind};

use super::bits::eq_indicators;

/// How a batch of reads is proven.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RamMode {
    /// One equality indicator per entry per read. O(entries) per read.
    LinearScan,
    /// A single logarithmic-derivative lookup over all reads. O(entries + reads).
    #[default]
    Batched,
}

/// Read-only memory of authenticated entries addressed by secret indices.
#[derive(Clone, Debug)]
pub struct ZkRam {
    entries: Vec<AuthValue>,
}

impl ZkRam {
    pub fn new(entries: Vec<AuthValue>) -> Self {
        ZkRam { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `entries[index]` by linear scan.
    pub fn read(&self, s: &mut Session, index: AuthValue) -> Result<AuthValue, ProofError> {
        let codes: Vec<Fp> = (0..self.entries.len() as u64).map(Fp::new).collect();
        let ind = eq_indicators(s, index, &codes)?;
        let mut out = s.constant(Fp::ZERO);
        for (b, &e) in ind.iter().zip(&self.entries) {
            out = out + s.mul(b.value(), e);
        }
        Ok(out)
    }

    pub fn read_many(&self, s: &mut Session, indices: &[AuthValue], mode: RamMode) -> Result<Vec<AuthValue>, ProofError> {
        match mode {
            RamMode::LinearScan => indices.iter().map(|&i| self.read(s, i)).collect(),
            RamMode::Batched => self.read_batch(s, indices),
        }
    }

    /// All reads at once. The prover commits the read values and per-entry
    /// multiplicities, then shows
    /// `sum_j 1/(X - i_j - B v_j) = sum_k m_k/(X - k - B T_k)`
    /// for transcript-derived `X`, `B`.
    pub fn read_batch(&self, s: &mut Session, indices: &[AuthValue]) -> Result<Vec<AuthValue>, ProofError> {
        let n = self.entries.len();
        let mut mult = vec![0u64; n];
        let mut values = Vec::with_capacity(indices.len());
        for idx in indices {
            let i = idx.value().value() as usize;
            let honest = if i < n {
                mult[i] += 1;
                self.entries[i].value()
            } else {
                Fp::ZERO
            };
            values.push(s.input(WitnessKind::RamValue, honest));
        }
        let mults: Vec<AuthValue> = mult
            .iter()
            .map(|&m| s.input(WitnessKind::Multiplicity, Fp::new(m)))
            .collect();

        let x = s.challenge(b"ram-lookup-x");
        let beta = s.challenge(b"ram-lookup-beta");

        let mut lhs = s.constant(Fp::ZERO);
        for (&idx, &v) in indices.iter().zip(&values) {
            let d = s.add_const(-(idx + v.scale(beta)), x);
            let inv = s.input(WitnessKind::Inverse, d.value().inverse().unwrap_or(Fp::ZERO));
            let p = s.mul(inv, d);
            s.assert_zero(s.add_const(p, -Fp::ONE), "lookup inverse")?;
            lhs = lhs + inv;
        }
        let mut rhs = s.constant(Fp::ZERO);
        for (k, (&t, &m)) in self.entries.iter().zip(&mults).enumerate() {
            let e = s.add_const(-t.scale(beta), x - Fp::new(k as u64));
            let honest = e.value().inverse().unwrap_or(Fp::ZERO) * m.value();
            let w = s.input(WitnessKind::Inverse, honest);
            let p = s.mul(w, e);
            s.assert_zero(p - m, "lookup table term")?;
            rhs = rhs + w;
        }
        s.assert_zero(lhs - rhs, "lookup sums differ")?;
        Ok(values)
    }
}
