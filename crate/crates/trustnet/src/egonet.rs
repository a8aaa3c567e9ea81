//! Extended ego-networks: every simple path of bounded length from a center
//! node, collapsed to (neighbor, inferred sign, path length) labels.
//!
//! Paths run over the undirected projection. A path's sign is the parity
//! product of its edge signs (an even number of negatives closes positive).
//! The result is a multigraph: several paths to the same neighbor with the
//! same label are one record with a multiplicity count. When the center has a
//! direct edge to a neighbor, the actual sign wins and all longer paths to
//! that neighbor are discarded.

use crate::graph::{NodeId, Sign, SignedDigraph};
use crate::{Error, Result};

/// Longest supported path length. Deeper enumeration is combinatorially
/// explosive and unused.
pub const MAX_HOPS: u8 = 4;

/// One labeled connection in an ego-network. `count` is the number of
/// distinct simple paths producing this exact (neighbor, sign, length) label.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EgoEdge {
    pub neighbor: NodeId,
    pub sign: Sign,
    pub path_len: u8,
    pub count: u32,
}

impl EgoEdge {
    /// Length-1 records are actual graph edges and carry the actual sign.
    #[inline]
    pub fn is_direct(&self) -> bool {
        self.path_len == 1
    }
}

/// A center node's labeled neighborhood, sorted by (neighbor, path length,
/// sign).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EgoNet {
    pub center: NodeId,
    pub hop_bound: u8,
    pub edges: Vec<EgoEdge>,
}

impl EgoNet {
    /// Total number of underlying path records (edges counted with
    /// multiplicity).
    pub fn total_multiplicity(&self) -> u64 {
        self.edges.iter().map(|e| e.count as u64).sum()
    }
}

/// Parity product of a sign sequence: positive iff the number of negative
/// entries is even.
pub fn infer_path_sign(signs: &[Sign]) -> Result<Sign> {
    if signs.is_empty() {
        return Err(Error::InvalidArg("empty sign sequence".into()));
    }
    let negs = signs.iter().filter(|&&s| s == Sign::Neg).count();
    Ok(if negs % 2 == 0 { Sign::Pos } else { Sign::Neg })
}

/// Reusable builder: owns the undirected projection and per-center scratch so
/// iterating all centers allocates nothing per node.
pub struct EgoNetBuilder {
    masks: Vec<Vec<(NodeId, u8)>>,
    n: u8,
    // per-node path counts, indexed [ (depth-1) * 2 + parity ]
    counts: Vec<[u32; (MAX_HOPS as usize) * 2]>,
    touched: Vec<NodeId>,
    seen: Vec<bool>,
    on_path: Vec<bool>,
}

impl EgoNetBuilder {
    pub fn new(graph: &SignedDigraph, n: u8) -> Result<EgoNetBuilder> {
        if n == 0 || n > MAX_HOPS {
            return Err(Error::InvalidArg(format!(
                "hop bound {n} outside [1, {MAX_HOPS}]"
            )));
        }
        let l = graph.node_count();
        Ok(EgoNetBuilder {
            masks: graph.flag_adj().sign_masks(),
            n,
            counts: vec![[0; (MAX_HOPS as usize) * 2]; l],
            touched: Vec::new(),
            seen: vec![false; l],
            on_path: vec![false; l],
        })
    }

    pub fn hop_bound(&self) -> u8 {
        self.n
    }

    /// Builds the ego-network of one center.
    pub fn build(&mut self, center: NodeId) -> Result<EgoNet> {
        if (center as usize) >= self.masks.len() {
            return Err(Error::InvalidArg(format!("node {center} out of range")));
        }
        self.on_path[center as usize] = true;
        self.walk(center, [1, 0], 1);
        self.on_path[center as usize] = false;

        let mut edges = Vec::new();
        self.touched.sort_unstable();
        for &w in &self.touched {
            let slot = &mut self.counts[w as usize];
            // direct-edge override: length-1 records silence longer paths
            let has_direct = slot[0] > 0 || slot[1] > 0;
            let depths = if has_direct { 1..2usize } else { 2..(self.n as usize + 1) };
            for depth in depths {
                for parity in 0..2usize {
                    let c = slot[(depth - 1) * 2 + parity];
                    if c > 0 {
                        edges.push(EgoEdge {
                            neighbor: w,
                            sign: if parity == 0 { Sign::Pos } else { Sign::Neg },
                            path_len: depth as u8,
                            count: c,
                        });
                    }
                }
            }
            *slot = [0; (MAX_HOPS as usize) * 2];
            self.seen[w as usize] = false;
        }
        self.touched.clear();
        edges.sort_unstable_by_key(|e| (e.neighbor, e.path_len, e.sign));
        Ok(EgoNet { center, hop_bound: self.n, edges })
    }

    /// Extends every simple path counted in `arriving` (split by parity) from
    /// node `u` one more hop. A pair with conflicting signs forks the parity
    /// without re-walking the node sequence.
    fn walk(&mut self, u: NodeId, arriving: [u32; 2], depth: u8) {
        let list = std::mem::take(&mut self.masks[u as usize]);
        for &(w, mask) in &list {
            if self.on_path[w as usize] {
                continue;
            }
            let mut next = [0u32; 2];
            if mask & 0b01 != 0 {
                next[0] += arriving[0];
                next[1] += arriving[1];
            }
            if mask & 0b10 != 0 {
                next[0] += arriving[1];
                next[1] += arriving[0];
            }
            let slot = &mut self.counts[w as usize];
            slot[(depth - 1) as usize * 2] += next[0];
            slot[(depth - 1) as usize * 2 + 1] += next[1];
            if !self.seen[w as usize] {
                self.seen[w as usize] = true;
                self.touched.push(w);
            }
            if depth < self.n {
                self.on_path[w as usize] = true;
                self.walk(w, next, depth + 1);
                self.on_path[w as usize] = false;
            }
        }
        self.masks[u as usize] = list;
    }
}

/// One-off construction for a single center.
pub fn build_egonet(graph: &SignedDigraph, center: NodeId, n: u8) -> Result<EgoNet> {
    EgoNetBuilder::new(graph, n)?.build(center)
}

/// Ego-networks for every node, indexed by center id.
pub fn build_all_egonets(graph: &SignedDigraph, n: u8) -> Result<Vec<EgoNet>> {
    let mut out = Vec::with_capacity(graph.node_count());
    for_each_egonet(graph, n, |ego| out.push(ego))?;
    Ok(out)
}

/// Streams ego-networks center by center without keeping them all in memory.
pub fn for_each_egonet(
    graph: &SignedDigraph,
    n: u8,
    mut f: impl FnMut(EgoNet),
) -> Result<()> {
    let mut builder = EgoNetBuilder::new(graph, n)?;
    for center in 0..graph.node_count() as NodeId {
        f(builder.build(center)?);
    }
    Ok(())
}
