use crate::authvalue::{AuthValue, Fp, ProofError, Session, WitnessKind};

/// An authenticated value proven to lie in {0, 1}.
#[derive(Clone, Copy, Debug)]
pub struct AuthBit(AuthValue);

impl AuthBit {
    pub fn value(&self) -> AuthValue {
        self.0
    }

    /// Prover-side plaintext.
    pub fn get(&self) -> bool {
        self.0.value() == Fp::ONE
    }

    /// Wraps a value that is boolean by construction, such as a sum of
    /// bits masked by mutually exclusive indicators.
    pub(crate) fn assume_boolean(v: AuthValue) -> Self {
        AuthBit(v)
    }
}

impl From<AuthBit> for AuthValue {
    fn from(b: AuthBit) -> AuthValue {
        b.0
    }
}

/// Proves `b * (b - 1) = 0` for an already committed value.
pub fn constrain_bit(s: &mut Session, b: AuthValue) -> Result<AuthBit, ProofError> {
    let b_minus_one = s.add_const(b, -Fp::ONE);
    let p = s.mul(b, b_minus_one);
    s.assert_zero(p, "bit constraint")?;
    Ok(AuthBit(b))
}

/// Commits a prover bit and proves it boolean.
pub fn bit(s: &mut Session, kind: WitnessKind, honest: bool) -> Result<AuthBit, ProofError> {
    let b = s.input(kind, Fp::from(honest));
    constrain_bit(s, b)
}

/// Little-endian decomposition of `a` into `n_bits` proven bits.
pub fn bit_decompose(s: &mut Session, a: AuthValue, n_bits: u32) -> Result<Vec<AuthBit>, ProofError> {
    assert!(n_bits < 61);
    let v = a.value().value();
    let mut bits = Vec::with_capacity(n_bits as usize);
    let mut recomposed = s.constant(Fp::ZERO);
    for i in 0..n_bits {
        let b = bit(s, WitnessKind::DecompositionBit, (v >> i) & 1 == 1)?;
        recomposed = recomposed + b.value().scale(Fp::new(1 << i));
        bits.push(b);
    }
    s.assert_zero(recomposed - a, "bit recomposition")?;
    Ok(bits)
}

/// Proves `0 <= a < 2^n_bits`.
pub fn range_check(s: &mut Session, a: AuthValue, n_bits: u32) -> Result<(), ProofError> {
    bit_decompose(s, a, n_bits).map(|_| ())
}

/// `[a <= b]`, valid whenever `|b - a| < 2^n_bits` in the signed lift.
pub fn leq(s: &mut Session, a: AuthValue, b: AuthValue, n_bits: u32) -> Result<AuthBit, ProofError> {
    let shifted = s.add_const(b - a, Fp::new(1 << n_bits));
    let bits = bit_decompose(s, shifted, n_bits + 1)?;
    Ok(bits[n_bits as usize])
}

/// One indicator bit per public code, with exactly one of them set.
/// Fails if `a` is not one of the codes.
pub fn eq_indicators(s: &mut Session, a: AuthValue, codes: &[Fp]) -> Result<Vec<AuthBit>, ProofError> {
    let v = a.value();
    let mut out = Vec::with_capacity(codes.len());
    let mut total = s.constant(Fp::ZERO);
    for &c in codes {
        let b = bit(s, WitnessKind::Indicator, v == c)?;
        let diff = s.add_const(a, -c);
        let p = s.mul(b.value(), diff);
        s.assert_zero(p, "indicator mismatch")?;
        total = total + b.value();
        out.push(b);
    }
    let total = s.add_const(total, -Fp::ONE);
    s.assert_zero(total, "indicators do not sum to one")?;
    Ok(out)
}

/// `[a == code]` where `a` is known to lie in `codes`.
pub fn eq_indicator(s: &mut Session, a: AuthValue, code: Fp, codes: &[Fp]) -> Result<AuthBit, ProofError> {
    let pos = codes.iter().position(|&c| c == code).expect("code not in code set");
    Ok(eq_indicators(s, a, codes)?[pos])
}

/// `b ? x : y`.
pub fn mux(s: &mut Session, b: AuthBit, x: AuthValue, y: AuthValue) -> AuthValue {
    y + s.mul(b.value(), x - y)
}

pub fn not(s: &Session, b: AuthBit) -> AuthBit {
    AuthBit(s.add_const(-b.value(), Fp::ONE))
}

pub fn or(s: &mut Session, x: AuthBit, y: AuthBit) -> AuthBit {
    let xy = s.mul(x.value(), y.value());
    AuthBit(x.value() + y.value() - xy)
}

/// Floor division of a signed fixed-point accumulator by `2^shift`. The
/// quotient must fit in `out_bits` signed bits.
pub fn truncate(s: &mut Session, acc: AuthValue, shift: u32, out_bits: u32) -> Result<AuthValue, ProofError> {
    let v = acc.value().to_signed();
    let q = s.input(WitnessKind::Quotient, Fp::from_i64(v.div_euclid(1 << shift)));
    let r = s.input(WitnessKind::Remainder, Fp::from_i64(v.rem_euclid(1 << shift)));
    range_check(s, r, shift)?;
    let q_offset = s.add_const(q, Fp::new(1 << (out_bits - 1)));
    range_check(s, q_offset, out_bits).map_err(|_| ProofError::Constraint("fixed-point overflow"))?;
    s.assert_zero(acc - q.scale(Fp::new(1 << shift)) - r, "truncation")?;
    Ok(q)
}
