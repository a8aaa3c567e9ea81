//! Topological sign classifier and the trust gate it drives.
//!
//! For an ordered node pair (i, j), 23 integer features describe the pair's
//! signed degrees and the sign/direction configuration of every common
//! neighbor. A logistic regression over these features predicts the edge
//! sign; an inferred ego-network sign is *trustworthy* when the classifier is
//! confident past a threshold AND agrees with the parity-inferred sign.
//! Direct edges carry actual signs and are trustworthy by definition.

use crate::egonet::EgoNet;
use crate::graph::{flags, FlagAdj, NodeId, Sign, SignedEdge};
use crate::logreg::{self, DenseMatrix, LogReg, LogRegConfig};
use crate::{Error, Result};

pub const FEATURE_COUNT: usize = 23;

/// Raw (unstandardized) feature vector for one ordered pair.
pub type Features = [f64; FEATURE_COUNT];

#[inline]
fn dir_sign_bit(sign_pos: bool, outgoing: bool) -> u8 {
    match (outgoing, sign_pos) {
        (true, true) => flags::OUT_POS,
        (true, false) => flags::OUT_NEG,
        (false, true) => flags::IN_POS,
        (false, false) => flags::IN_NEG,
    }
}

/// Sign blocks in feature order: (sign of i-z edge, sign of j-z edge).
const SIGN_BLOCKS: [(bool, bool); 4] = [(true, true), (true, false), (false, true), (false, false)];
/// Direction combos in feature order, as (edge i-z outgoing from i, edge j-z
/// outgoing from j): i->z & z->j, i->z & j->z, z->i & z->j, z->i & j->z.
const DIR_COMBOS: [(bool, bool); 4] = [(true, false), (true, true), (false, false), (false, true)];

/// Extracts the 23 features for ordered pair (i, j):
/// 1..4: positive/negative edge counts of i and j (both directions);
/// 5..6: total degrees; 7: distinct common neighbors (any sign/direction);
/// 8..23: per common neighbor, the 4 sign blocks x 4 direction combos.
pub fn extract_features(fa: &FlagAdj, i: NodeId, j: NodeId) -> Result<Features> {
    if i == j {
        return Err(Error::InvalidArg(format!("feature pair ({i},{i}) is degenerate")));
    }
    let mut f = [0.0f64; FEATURE_COUNT];
    f[0] = fa.pos_deg[i as usize] as f64;
    f[1] = fa.pos_deg[j as usize] as f64;
    f[2] = fa.neg_deg[i as usize] as f64;
    f[3] = fa.neg_deg[j as usize] as f64;
    f[4] = f[0] + f[2];
    f[5] = f[1] + f[3];

    let (li, lj) = (fa.neighbors(i), fa.neighbors(j));
    let (mut a, mut b) = (0, 0);
    while a < li.len() && b < lj.len() {
        let (za, zb) = (li[a].0, lj[b].0);
        if za < zb {
            a += 1;
        } else if zb < za {
            b += 1;
        } else {
            let (fi, fj) = (li[a].1, lj[b].1);
            f[6] += 1.0;
            let mut k = 7;
            for (si, sj) in SIGN_BLOCKS {
                for (oi, oj) in DIR_COMBOS {
                    if fi & dir_sign_bit(si, oi) != 0 && fj & dir_sign_bit(sj, oj) != 0 {
                        f[k] += 1.0;
                    }
                    k += 1;
                }
            }
            a += 1;
            b += 1;
        }
    }
    Ok(f)
}

/// Fits the sign classifier on the training edges (label 1 = positive).
pub fn train_fextra(
    fa: &FlagAdj,
    train_edges: &[SignedEdge],
    cfg: &LogRegConfig,
) -> Result<LogReg<f64>> {
    let mut x = DenseMatrix::zeros(train_edges.len(), FEATURE_COUNT);
    let mut y = Vec::with_capacity(train_edges.len());
    for (r, e) in train_edges.iter().enumerate() {
        let fv = extract_features(fa, e.src, e.dst)?;
        x.row_mut(r).copy_from_slice(&fv);
        y.push(e.sign == Sign::Pos);
    }
    logreg::fit(&x, &y, cfg)
}

/// Predicted sign and its confidence. Ties (P = 0.5) predict positive, the
/// majority class; trust is the winning-class probability.
pub fn predict_sign(model: &LogReg<f64>, fv: &Features) -> (Sign, f64) {
    let p = model.predict_proba(fv);
    if p >= 0.5 {
        (Sign::Pos, p)
    } else {
        (Sign::Neg, 1.0 - p)
    }
}

/// Outcome of the trust gate for one inferred edge.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TrustDecision {
    pub s_hat: Sign,
    pub trust: f64,
    pub trustworthy: bool,
}

/// Trustworthy iff confidence strictly exceeds `beta` and the prediction
/// agrees with the inferred sign. Applies to indirect edges only; direct
/// edges bypass the gate.
pub fn decide_trust(s_ij: Sign, s_hat: Sign, trust: f64, beta: f64) -> TrustDecision {
    TrustDecision { s_hat, trust, trustworthy: trust > beta && s_hat == s_ij }
}

/// Which of the four partition sets an edge falls in.
pub const SET_T_POS: usize = 0;
pub const SET_T_NEG: usize = 1;
pub const SET_U_POS: usize = 2;
pub const SET_U_NEG: usize = 3;
pub const SET_NAMES: [&str; 4] = ["T+", "T-", "U+", "U-"];

#[inline]
pub fn set_index(trusted: bool, sign: Sign) -> usize {
    match (trusted, sign) {
        (true, Sign::Pos) => SET_T_POS,
        (true, Sign::Neg) => SET_T_NEG,
        (false, Sign::Pos) => SET_U_POS,
        (false, Sign::Neg) => SET_U_NEG,
    }
}

/// Ego-edge groups of one partition set, with cumulative multiplicities so a
/// uniform index over the underlying edge multiset maps to its group by
/// binary search.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroupedSet {
    keys: Vec<u64>, // (neighbor << 8) | path_len
    cum: Vec<u64>,
}

impl GroupedSet {
    pub fn push(&mut self, neighbor: NodeId, path_len: u8, count: u32) {
        debug_assert!(count > 0);
        let prev = self.total();
        self.keys.push(((neighbor as u64) << 8) | path_len as u64);
        self.cum.push(prev + count as u64);
    }

    /// Total edge multiplicity across all groups.
    #[inline]
    pub fn total(&self) -> u64 {
        self.cum.last().copied().unwrap_or(0)
    }

    #[inline]
    pub fn group_count(&self) -> usize {
        self.keys.len()
    }

    #[inline]
    pub fn get(&self, g: usize) -> (NodeId, u8, u32) {
        let key = self.keys[g];
        let below = if g == 0 { 0 } else { self.cum[g - 1] };
        ((key >> 8) as NodeId, (key & 0xff) as u8, (self.cum[g] - below) as u32)
    }

    /// Group containing the `index`-th edge of the multiset.
    #[inline]
    pub fn locate(&self, index: u64) -> usize {
        self.cum.partition_point(|&c| c <= index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u8, u32)> + '_ {
        (0..self.keys.len()).map(move |g| self.get(g))
    }
}

/// A center's ego-edges split into (trusted | untrusted) x (+ | -) sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrustPartition {
    pub center: NodeId,
    pub sets: [GroupedSet; 4],
}

impl TrustPartition {
    pub fn total(&self) -> u64 {
        self.sets.iter().map(|s| s.total()).sum()
    }

    /// (total indirect multiplicity, untrusted indirect multiplicity).
    /// Untrusted edges are indirect by construction.
    pub fn indirect_stats(&self) -> (u64, u64) {
        let mut total = 0;
        let mut untrusted = 0;
        for (idx, set) in self.sets.iter().enumerate() {
            for (_, len, count) in set.iter() {
                if len >= 2 {
                    total += count as u64;
                    if idx == SET_U_POS || idx == SET_U_NEG {
                        untrusted += count as u64;
                    }
                }
            }
        }
        (total, untrusted)
    }
}

/// How indirect ego-edges are assigned to sets.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    /// Gate each inferred sign on classifier confidence and agreement.
    Standard,
    /// Treat every edge as trusted with its parity sign (disables the
    /// untrusted branch downstream).
    AllTrustedActual,
    /// Treat every edge as trusted but relabel indirect edges with the
    /// classifier's predicted sign.
    AllTrustedPredicted,
}

/// Assigns every ego-edge group to exactly one set. The classifier may be
/// omitted when no indirect edge can pass the gate (`beta >= 1` makes the
/// strict confidence test unsatisfiable) or when the mode never consults it.
pub fn partition_egonet(
    ego: &EgoNet,
    model: Option<&LogReg<f64>>,
    fa: &FlagAdj,
    beta: f64,
    mode: PartitionMode,
) -> Result<TrustPartition> {
    let needs_model = match mode {
        PartitionMode::Standard => beta < 1.0,
        PartitionMode::AllTrustedActual => false,
        PartitionMode::AllTrustedPredicted => true,
    };
    if needs_model && model.is_none() {
        return Err(Error::InvalidArg("partition mode requires the sign classifier".into()));
    }
    let mut part = TrustPartition { center: ego.center, ..Default::default() };
    let mut cached: Option<(NodeId, (Sign, f64))> = None;
    let mut predict = |w: NodeId| -> Result<(Sign, f64)> {
        if let Some((n, p)) = cached {
            if n == w {
                return Ok(p);
            }
        }
        let fv = extract_features(fa, ego.center, w)?;
        let p = predict_sign(model.unwrap(), &fv);
        cached = Some((w, p));
        Ok(p)
    };
    for e in &ego.edges {
        let idx = if e.is_direct() {
            set_index(true, e.sign)
        } else {
            match mode {
                PartitionMode::Standard => {
                    if beta >= 1.0 {
                        set_index(false, e.sign)
                    } else {
                        let (s_hat, trust) = predict(e.neighbor)?;
                        let d = decide_trust(e.sign, s_hat, trust, beta);
                        set_index(d.trustworthy, e.sign)
                    }
                }
                PartitionMode::AllTrustedActual => set_index(true, e.sign),
                PartitionMode::AllTrustedPredicted => {
                    let (s_hat, _) = predict(e.neighbor)?;
                    set_index(true, s_hat)
                }
            }
        };
        part.sets[idx].push(e.neighbor, e.path_len, e.count);
    }
    Ok(part)
}
