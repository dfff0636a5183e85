//! Authenticated per-group counters and the cross-multiplied fairness
//! inequality, shared by certification and audit.

use serde::{Deserialize, Serialize};

use crate::authvalue::{AuthValue, Fp, ProofError, Session, WitnessKind};
use crate::fairness::{Metric, Theta};
use crate::zkcircuit::{bit, leq, range_check, AuthBit};

/// Records per proof are capped so every count fits in 20 bits and every
/// cross product in 40.
pub const MAX_RECORDS: usize = 1 << 20;

const COUNT_BITS: u32 = 21;
const ABS_BITS: u32 = 48;
const SLACK_BITS: u32 = 57;

/// What one record contributes: membership in group a, the decision, and
/// the true label when the metric needs one.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RecordBits {
    pub in_a: AuthBit,
    pub o: AuthBit,
    pub y: Option<AuthBit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FairnessOutcome {
    Fair,
    Unfair,
    /// Some rate has an empty denominator in one group.
    EmptyGroup,
}

#[derive(Clone, Copy)]
struct Term {
    num_a: AuthValue,
    num_all: AuthValue,
    den_a: AuthValue,
    den_all: AuthValue,
}

pub(crate) struct Counters {
    metric: Metric,
    terms: Vec<Term>,
    n_a: AuthValue,
    n: u64,
}

impl Counters {
    pub fn new(s: &Session, metric: Metric) -> Self {
        let z = s.constant(Fp::ZERO);
        let k = if metric == Metric::EqualizedOdds { 2 } else { 1 };
        Counters {
            metric,
            terms: vec![
                Term {
                    num_a: z,
                    num_all: z,
                    den_a: z,
                    den_all: z,
                };
                k
            ],
            n_a: z,
            n: 0,
        }
    }

    pub fn add(&mut self, s: &mut Session, r: RecordBits) {
        let in_a = r.in_a.value();
        let o = r.o.value();
        let one = s.constant(Fp::ONE);
        // Per-term (numerator, denominator) contributions of this record.
        // `None` for the denominator means it counts every record.
        let parts: Vec<(AuthValue, Option<AuthValue>)> = match self.metric {
            Metric::DemographicParity => vec![(o, None)],
            _ => {
                let y = r.y.expect("metric needs labels").value();
                let oy = s.mul(o, y);
                match self.metric {
                    Metric::EqualizedOdds => vec![(o - oy, None), (y - oy, None)],
                    Metric::EqualOpportunity => vec![(oy, Some(y))],
                    Metric::PredictiveEquality => vec![(o - oy, Some(one - y))],
                    Metric::DemographicParity => unreachable!(),
                }
            }
        };
        for (t, (num, den)) in self.terms.iter_mut().zip(parts) {
            t.num_a = t.num_a + s.mul(in_a, num);
            t.num_all = t.num_all + num;
            match den {
                None => {
                    t.den_a = t.den_a + in_a;
                    t.den_all = t.den_all + one;
                }
                Some(d) => {
                    t.den_a = t.den_a + s.mul(in_a, d);
                    t.den_all = t.den_all + d;
                }
            }
        }
        self.n_a = self.n_a + in_a;
        self.n += 1;
    }

    /// Authenticated size of group a.
    pub fn n_a(&self) -> AuthValue {
        self.n_a
    }

    /// Proves every term's inequality. Opens one non-emptiness bit per
    /// group per term and one fairness bit per term, nothing else.
    pub fn prove(&self, s: &mut Session, theta: Theta) -> Result<FairnessOutcome, ProofError> {
        assert!(self.n as usize <= MAX_RECORDS);
        let mut outcome = FairnessOutcome::Fair;
        for t in &self.terms {
            let a = (t.num_a, t.den_a);
            let b = (t.num_all - t.num_a, t.den_all - t.den_a);
            match prove_term(s, theta, a, b)? {
                FairnessOutcome::Fair => {}
                FairnessOutcome::EmptyGroup => return Ok(FairnessOutcome::EmptyGroup),
                FairnessOutcome::Unfair => outcome = FairnessOutcome::Unfair,
            }
        }
        Ok(outcome)
    }
}

/// `theta_num * d_a * d_b >= theta_den * |n_a d_b - n_b d_a|` for
/// counts below `2^20`.
pub(crate) fn prove_term(
    s: &mut Session,
    theta: Theta,
    (n_a, d_a): (AuthValue, AuthValue),
    (n_b, d_b): (AuthValue, AuthValue),
) -> Result<FairnessOutcome, ProofError> {
    let one = s.constant(Fp::ONE);
    let nonempty_a = leq(s, one, d_a, COUNT_BITS)?;
    let nonempty_b = leq(s, one, d_b, COUNT_BITS)?;
    let both = s.mul(nonempty_a.value(), nonempty_b.value());
    if s.open(both) != Fp::ONE {
        return Ok(FairnessOutcome::EmptyGroup);
    }

    let prod = s.mul(d_a, d_b);
    let cross = s.mul(n_a, d_b) - s.mul(n_b, d_a);
    let sigma = bit(s, WitnessKind::SignBit, cross.value().to_signed() >= 0)?;
    // (2 sigma - 1) * cross is |cross| only for the right sign bit; the
    // wrong one wraps to a huge field element and fails the range check.
    let sign = s.add_const(sigma.value().scale(Fp::new(2)), -Fp::ONE);
    let abs = s.mul(sign, cross);
    range_check(s, abs, ABS_BITS)?;

    let lhs = abs.scale(Fp::new(theta.den));
    let rhs = prod.scale(Fp::new(theta.num));
    let fair = leq(s, lhs, rhs, SLACK_BITS)?;
    Ok(if s.open(fair.value()) == Fp::ONE {
        FairnessOutcome::Fair
    } else {
        FairnessOutcome::Unfair
    })
}
