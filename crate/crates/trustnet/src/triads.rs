//! Triangle census over the undirected projection and the posterior-sign
//! ratios it induces.
//!
//! A triangle is classified by how many of its three edges are negative.
//! Given an unordered pair of known ("prior") signs, the ratio of triangles
//! closing with a positive versus negative third ("posterior") sign is what
//! the untrusted propagation branch uses to split embeddings across
//! polarities. Each triangle is counted once per sign-multiset split, not
//! once per edge: a triangle with signs {+,+,-} testifies once for prior
//! (+,+) closing '-' and once for prior (+,-) closing '+'.
//!
//! Direction is ignored. When a node pair carries opposite-direction edges
//! with conflicting signs, the pair contributes every sign combination, so
//! such a triangle is counted under each assignment.

use serde_json::{Map, Value};

use crate::graph::{Sign, SignedDigraph};

/// Triangle counts indexed by number of negative edges (0..=3).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriadStats {
    pub census: [u64; 4],
}

fn neg_count(signs: &[Sign]) -> usize {
    signs.iter().filter(|&&s| s == Sign::Neg).count()
}

impl TriadStats {
    /// Enumerates all undirected triangles by sorted-adjacency intersection.
    pub fn compute(graph: &SignedDigraph) -> TriadStats {
        let masks = graph.flag_adj().sign_masks();
        let mut census = [0u64; 4];
        for a in 0..masks.len() {
            for &(b, mask_ab) in &masks[a] {
                let b = b as usize;
                if b <= a {
                    continue;
                }
                // common neighbors c with a < b < c close a triangle once
                let (mut i, mut j) = (0, 0);
                let (la, lb) = (&masks[a], &masks[b]);
                while i < la.len() && j < lb.len() {
                    let (ca, cb) = (la[i].0 as usize, lb[j].0 as usize);
                    if ca < cb {
                        i += 1;
                    } else if cb < ca {
                        j += 1;
                    } else {
                        if ca > b {
                            add_combinations(&mut census, mask_ab, la[i].1, lb[j].1);
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        TriadStats { census }
    }

    /// Triangles whose sign multiset is {a, b, c}.
    pub fn count(&self, a: Sign, b: Sign, c: Sign) -> u64 {
        self.census[neg_count(&[a, b, c])]
    }

    /// Fraction of prior-(a,b) triangles closing with posterior c; pairs with
    /// no triangles default to 0.5 (see [`TriadStats::is_defaulted`]).
    pub fn ratio(&self, a: Sign, b: Sign, c: Sign) -> f64 {
        let k = neg_count(&[a, b]);
        let den = self.census[k] + self.census[k + 1];
        if den == 0 {
            return 0.5;
        }
        let num = if c == Sign::Pos { self.census[k] } else { self.census[k + 1] };
        num as f64 / den as f64
    }

    /// True when the (a,b) prior pair closed no triangles and its ratios are
    /// the uninformative 0.5 default.
    pub fn is_defaulted(&self, a: Sign, b: Sign) -> bool {
        let k = neg_count(&[a, b]);
        self.census[k] + self.census[k + 1] == 0
    }

    /// Flat report: `r_{ab}{c}` ratios, `count_{ab}{c}` totals, `defaulted_{ab}`
    /// flags, and `balanced_{abc}` labels (even number of negatives).
    pub fn report(&self) -> Value {
        let mut map = Map::new();
        let pairs = [(Sign::Pos, Sign::Pos), (Sign::Pos, Sign::Neg), (Sign::Neg, Sign::Neg)];
        for (a, b) in pairs {
            for c in [Sign::Pos, Sign::Neg] {
                let key = format!("{}{}{}", a.symbol(), b.symbol(), c.symbol());
                map.insert(format!("r_{key}"), Value::from(self.ratio(a, b, c)));
                map.insert(format!("count_{key}"), Value::from(self.count(a, b, c)));
                map.insert(
                    format!("balanced_{key}"),
                    Value::from(neg_count(&[a, b, c]) % 2 == 0),
                );
            }
            map.insert(
                format!("defaulted_{}{}", a.symbol(), b.symbol()),
                Value::from(self.is_defaulted(a, b)),
            );
        }
        Value::Object(map)
    }
}

fn add_combinations(census: &mut [u64; 4], m1: u8, m2: u8, m3: u8) {
    for s1 in mask_signs(m1) {
        for s2 in mask_signs(m2) {
            for s3 in mask_signs(m3) {
                let k = (s1 == Sign::Neg) as usize
                    + (s2 == Sign::Neg) as usize
                    + (s3 == Sign::Neg) as usize;
                census[k] += 1;
            }
        }
    }
}

fn mask_signs(mask: u8) -> impl Iterator<Item = Sign> {
    let pos = mask & 0b01 != 0;
    let neg = mask & 0b10 != 0;
    [Sign::Pos, Sign::Neg]
        .into_iter()
        .filter(move |&s| (s == Sign::Pos && pos) || (s == Sign::Neg && neg))
}

/// Materialized propagation ratios: `pos_posterior[k]` is the probability a
/// prior pair with `k` negative signs closes positive. Decoupled from
/// [`TriadStats`] so ablation variants can substitute synthetic tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioTable {
    pub pos_posterior: [f64; 3],
}

impl RatioTable {
    pub fn from_stats(stats: &TriadStats) -> RatioTable {
        RatioTable {
            pos_posterior: [
                stats.ratio(Sign::Pos, Sign::Pos, Sign::Pos),
                stats.ratio(Sign::Pos, Sign::Neg, Sign::Pos),
                stats.ratio(Sign::Neg, Sign::Neg, Sign::Pos),
            ],
        }
    }

    /// Every split 50/50.
    pub fn uniform() -> RatioTable {
        RatioTable { pos_posterior: [0.5; 3] }
    }

    /// Complement of every split.
    pub fn reversed(&self) -> RatioTable {
        let p = self.pos_posterior;
        RatioTable { pos_posterior: [1.0 - p[0], 1.0 - p[1], 1.0 - p[2]] }
    }

    /// 1 when the posterior equals the parity product of the priors, else 0;
    /// reduces the untrusted branch to trusted-style polarity routing.
    pub fn parity() -> RatioTable {
        RatioTable { pos_posterior: [1.0, 0.0, 1.0] }
    }

    #[inline]
    pub fn r(&self, a: Sign, b: Sign, c: Sign) -> f64 {
        let k = (a == Sign::Neg) as usize + (b == Sign::Neg) as usize;
        let p = self.pos_posterior[k];
        if c == Sign::Pos {
            p
        } else {
            1.0 - p
        }
    }
}
