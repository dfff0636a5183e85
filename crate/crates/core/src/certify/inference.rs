use crate::authvalue::{AuthValue, Fp, ProofError, Session, WitnessKind};
use crate::fairness::Group;
use crate::models::{circuit_score, CommittedParams, ThresholdedModel, THRESHOLD_INF};
use crate::queryauth::Query;
use crate::zkcircuit::{eq_indicators, leq, AuthBit};

/// A thresholded model whose parameters are authenticated and whose digest
/// has been opened.
#[derive(Clone, Debug)]
pub struct CommittedModel {
    pub params: CommittedParams,
    /// Public MiMC digest of shape, parameters and thresholds.
    pub digest: Fp,
}

impl CommittedModel {
    pub fn commit(s: &mut Session, m: &ThresholdedModel) -> Self {
        let params = CommittedParams::commit(s, m);
        let d = params.digest(s);
        let digest = s.open(d);
        CommittedModel { params, digest }
    }
}

/// Authenticated quantized features and group code of one query.
#[derive(Clone, Debug)]
pub struct CommittedQuery {
    pub features: Vec<AuthValue>,
    pub group: AuthValue,
}

impl CommittedQuery {
    pub fn commit(s: &mut Session, q: &Query) -> Self {
        CommittedQuery {
            features: q.features.iter().map(|&v| s.input(WitnessKind::Value, Fp::from_i64(v))).collect(),
            group: s.input(WitnessKind::Value, Fp::new(q.group.code())),
        }
    }

    /// Features then group code, matching [`Query::to_field`].
    pub fn to_field(&self) -> Vec<AuthValue> {
        let mut v = self.features.clone();
        v.push(self.group);
        v
    }
}

/// Thresholded inference on a committed query. Also returns the proven
/// group indicators `[in_a, in_b]`.
pub(crate) fn pp_inference_with_groups(
    s: &mut Session,
    m: &CommittedParams,
    q: &CommittedQuery,
    _r: &[Fp],
) -> Result<(AuthBit, [AuthBit; 2]), ProofError> {
    let score = circuit_score(s, m, &q.features)?;
    let ind = eq_indicators(s, q.group, &Group::codes())?;
    // Thresholds lie within +-THRESHOLD_INF = 2^30, scores well inside that.
    let bits = THRESHOLD_INF.ilog2() + 1;
    let mut o = s.constant(Fp::ZERO);
    for g in Group::ALL {
        let above = leq(s, m.thresholds[g.index()], score, bits)?;
        o = o + s.mul(ind[g.index()].value(), above.value());
    }
    Ok((AuthBit::assume_boolean(o), [ind[0], ind[1]]))
}

/// `[o] = M_tau([q], r)`: the score is compared against every group's
/// threshold and the comparison for the query's own group is selected by
/// the group indicators, so exactly one term of the sum is live.
pub fn zk_pp_inference(s: &mut Session, m: &CommittedModel, q: &CommittedQuery, r: &[Fp]) -> Result<AuthBit, ProofError> {
    pp_inference_with_groups(s, &m.params, q, r).map(|(o, _)| o)
}
